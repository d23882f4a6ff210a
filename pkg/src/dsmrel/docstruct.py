"""Parse templated markup into a block-level document model and annotate
entity mentions with their structural position.

Markup dialect (line oriented)::

    # Title                 first '#' line; later '#' lines are level-1 headings
    ## Heading              levels 1..6
    - item                  contiguous bullet lines form one list
    {{infobox               key = value lines, closed by '}}'
    }}
    [^ footnote text ]      may span lines until a line ending in ']'
    text with (bracketed) and *emphasized* spans

Backslash escapes any character inside text.
"""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

from .errors import GazetteerError, MalformedMarkup

MAX_HEADING_LEVEL = 6


class SpanKind(str, enum.Enum):
    PLAIN = "Plain"
    BRACKETED = "Bracketed"
    EMPHASIZED = "Emphasized"


class Position(str, enum.Enum):
    PRECEDING_TEXT = "PrecedingText"
    BULLET_ITEM = "BulletItem"
    TITLE = "Title"
    SECTION_HEADING = "SectionHeading"
    INFOBOX_KEY = "InfoboxKey"
    INFOBOX_VALUE = "InfoboxValue"
    FOOTNOTE = "Footnote"
    BODY_TEXT = "BodyText"


@dataclass(frozen=True)
class Span:
    kind: SpanKind
    text: str


@dataclass(frozen=True)
class Title:
    text: str
    section: str = ""


@dataclass(frozen=True)
class Heading:
    level: int
    text: str
    id: str
    section: str = ""


@dataclass(frozen=True)
class Paragraph:
    spans: tuple[Span, ...]
    section: str = ""

    @property
    def text(self) -> str:
        return "".join(s.text for s in self.spans)


@dataclass(frozen=True)
class BulletList:
    items: tuple[str, ...]
    section: str = ""


@dataclass(frozen=True)
class Infobox:
    pairs: tuple[tuple[str, str], ...]
    section: str = ""


@dataclass(frozen=True)
class Footnote:
    text: str
    section: str = ""


Block = Title | Heading | Paragraph | BulletList | Infobox | Footnote


@dataclass(frozen=True)
class Document:
    id: str
    title: str
    blocks: tuple[Block, ...]
    # set by corpusindex.enrich_units: heading context joins every unit
    enriched: bool = False


# ---------------------------------------------------------------------------
# inline spans


def parse_inline(text: str) -> tuple[Span, ...]:
    """Split ``text`` into Plain / Bracketed / Emphasized spans.

    Unmatched or empty markers are literal. Markers do not nest.
    """
    spans: list[Span] = []
    buf: list[str] = []

    def flush():
        if buf:
            spans.append(Span(SpanKind.PLAIN, "".join(buf)))
            buf.clear()

    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch == "\\" and i + 1 < n:
            buf.append(text[i + 1])
            i += 2
            continue
        if ch in "(*":
            close = ")" if ch == "(" else "*"
            inner, j = _scan_until(text, i + 1, close)
            if j is not None and inner:
                flush()
                kind = SpanKind.BRACKETED if ch == "(" else SpanKind.EMPHASIZED
                spans.append(Span(kind, inner))
                i = j + 1
                continue
        buf.append(ch)
        i += 1
    flush()
    return tuple(spans)


def _scan_until(text, start, close):
    out = []
    i = start
    while i < len(text):
        ch = text[i]
        if ch == "\\" and i + 1 < len(text):
            out.append(text[i + 1])
            i += 2
            continue
        if ch == close:
            return "".join(out), i
        out.append(ch)
        i += 1
    return None, None


def _escape(text: str) -> str:
    return re.sub(r"([\\()*])", r"\\\1", text)


def serialize_inline(spans: Sequence[Span]) -> str:
    parts = []
    for span in spans:
        body = _escape(span.text)
        if span.kind is SpanKind.BRACKETED:
            body = f"({body})"
        elif span.kind is SpanKind.EMPHASIZED:
            body = f"*{body}*"
        parts.append(body)
    return "".join(parts)


def _trim_spans(spans: tuple[Span, ...]) -> tuple[Span, ...]:
    spans = list(spans)
    while spans and not spans[0].text.strip():
        spans.pop(0)
    while spans and not spans[-1].text.strip():
        spans.pop()
    if spans:
        spans[0] = replace(spans[0], text=spans[0].text.lstrip())
        spans[-1] = replace(spans[-1], text=spans[-1].text.rstrip())
    return tuple(spans)


def _merge_plain(spans: Iterable[Span]) -> tuple[Span, ...]:
    out: list[Span] = []
    for s in spans:
        if out and out[-1].kind is SpanKind.PLAIN and s.kind is SpanKind.PLAIN:
            out[-1] = Span(SpanKind.PLAIN, out[-1].text + s.text)
        elif s.text:
            out.append(s)
    return tuple(out)


# ---------------------------------------------------------------------------
# block parsing

_HEADING = re.compile(r"^(#+)\s+(\S.*)$")
_BULLET = re.compile(r"^-\s+(\S.*)$")


def _classify(line: str) -> str:
    if not line:
        return "blank"
    if line.startswith("\\"):
        return "para"
    if _HEADING.match(line):
        return "heading"
    if _BULLET.match(line):
        return "bullet"
    if line.lower() == "{{infobox":
        return "infobox"
    if line.startswith("[^"):
        return "footnote"
    return "para"


def parse_document(source: str, doc_id: str | None = None) -> Document:
    lines = [ln.strip() for ln in source.splitlines()]
    blocks: list[Block] = []
    title: str | None = None
    # (level, id) of enclosing headings
    stack: list[tuple[int, str]] = []
    para_lines: list[str] = []
    bullets: list[str] = []
    n_headings = 0

    def section() -> str:
        return stack[-1][1] if stack else ""

    def flush_para():
        if para_lines:
            spans = _merge_plain(_trim_spans(parse_inline(" ".join(para_lines))))
            if spans:
                blocks.append(Paragraph(spans, section()))
            para_lines.clear()

    def flush_bullets():
        if bullets:
            blocks.append(BulletList(tuple(bullets), section()))
            bullets.clear()

    i = 0
    while i < len(lines):
        line = lines[i]
        kind = _classify(line)
        lineno = i + 1
        if title is None and kind != "blank":
            if kind != "heading" or len(_HEADING.match(line).group(1)) != 1:
                raise MalformedMarkup("document must start with a '# title' line", lineno)
        if kind != "para":
            flush_para()
        if kind != "bullet":
            flush_bullets()

        if kind == "blank":
            pass
        elif kind == "heading":
            m = _HEADING.match(line)
            level, text = len(m.group(1)), m.group(2).strip()
            if level > MAX_HEADING_LEVEL:
                raise MalformedMarkup(f"heading level {level} exceeds {MAX_HEADING_LEVEL}", lineno)
            if title is None:
                title = text
                blocks.append(Title(text))
            else:
                while stack and stack[-1][0] >= level:
                    stack.pop()
                n_headings += 1
                hid = f"sec-{n_headings}"
                blocks.append(Heading(level, text, hid, section()))
                stack.append((level, hid))
        elif kind == "bullet":
            bullets.append(_BULLET.match(line).group(1).strip())
        elif kind == "infobox":
            pairs = []
            j = i + 1
            while j < len(lines) and lines[j] != "}}":
                entry = lines[j]
                if entry:
                    key, eq, value = entry.partition("=")
                    if not eq or not key.strip():
                        raise MalformedMarkup(f"infobox entry {entry!r} is not 'key = value'", j + 1)
                    pairs.append((key.strip(), value.strip()))
                j += 1
            if j == len(lines):
                raise MalformedMarkup("unterminated infobox", lineno)
            if not pairs:
                raise MalformedMarkup("empty infobox", lineno)
            blocks.append(Infobox(tuple(pairs), section()))
            i = j
        elif kind == "footnote":
            parts = [line[2:]]
            j = i
            while not parts[-1].endswith("]"):
                j += 1
                if j == len(lines):
                    raise MalformedMarkup("unterminated footnote", lineno)
                parts.append(lines[j])
            parts[-1] = parts[-1][:-1]
            text = " ".join(p.strip() for p in parts if p.strip())
            blocks.append(Footnote(text, section()))
            i = j
        else:
            para_lines.append(line)
        i += 1
    flush_para()
    flush_bullets()
    if title is None:
        raise MalformedMarkup("document has no title", 1)
    return Document(doc_id if doc_id is not None else title, title, tuple(blocks))


def serialize_document(doc: Document) -> str:
    """Canonical markup for ``doc``; ``parse_document`` of it yields ``doc``
    back (modulo the id when none is given)."""
    out = []
    for block in doc.blocks:
        if isinstance(block, Title):
            out.append(f"# {block.text}")
        elif isinstance(block, Heading):
            out.append(f"{'#' * block.level} {block.text}")
        elif isinstance(block, Paragraph):
            line = serialize_inline(block.spans)
            if _classify(line) != "para":
                line = "\\" + line
            out.append(line)
        elif isinstance(block, BulletList):
            out.append("\n".join(f"- {item}" for item in block.items))
        elif isinstance(block, Infobox):
            body = "\n".join(f"{k} = {v}" for k, v in block.pairs)
            out.append(f"{{{{infobox\n{body}\n}}}}")
        elif isinstance(block, Footnote):
            out.append(f"[^ {block.text} ]")
    return "\n\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# paragraph units


@dataclass(frozen=True)
class ParagraphUnit:
    doc_id: str
    unit_index: int
    kind: str  # title | heading | body | infobox | footnote
    heading_path: tuple[str, ...]
    preceding_text: str = ""
    bullets: tuple[str, ...] = ()
    features_present: frozenset[str] = frozenset()
    # unit indexes of the title and enclosing headings
    context_units: tuple[int, ...] = ()
    block_indexes: tuple[int, ...] = ()
    # for footnotes: the body unit the note hangs off
    anchor: int | None = None


def split_units(doc: Document) -> list[ParagraphUnit]:
    units: list[ParagraphUnit] = []
    stack: list[tuple[int, str, int]] = []  # (level, text, unit index)
    title_unit: int | None = None
    last_body: int | None = None
    blocks = doc.blocks
    i = 0

    def context():
        path = (doc.title,) + tuple(t for _, t, _ in stack)
        ctx = ((title_unit,) if title_unit is not None else ()) + tuple(u for _, _, u in stack)
        return path, ctx

    while i < len(blocks):
        block = blocks[i]
        idx = len(units)
        path, ctx = context()
        if isinstance(block, Title):
            units.append(ParagraphUnit(doc.id, idx, "title", (doc.title,),
                                       features_present=frozenset({"title"}), block_indexes=(i,)))
            title_unit = idx
        elif isinstance(block, Heading):
            while stack and stack[-1][0] >= block.level:
                stack.pop()
            path, ctx = context()
            units.append(ParagraphUnit(doc.id, idx, "heading", path,
                                       features_present=frozenset({"section"}),
                                       context_units=ctx, block_indexes=(i,)))
            stack.append((block.level, block.text, idx))
        elif isinstance(block, Paragraph):
            nxt = blocks[i + 1] if i + 1 < len(blocks) else None
            if isinstance(nxt, BulletList):
                units.append(ParagraphUnit(doc.id, idx, "body", path, block.text, nxt.items,
                                           frozenset({"bullets"}), ctx, (i, i + 1)))
                i += 1
            else:
                units.append(ParagraphUnit(doc.id, idx, "body", path, block.text,
                                           context_units=ctx, block_indexes=(i,)))
            last_body = idx
        elif isinstance(block, BulletList):
            units.append(ParagraphUnit(doc.id, idx, "body", path, "", block.items,
                                       frozenset({"bullets"}), ctx, (i,)))
            last_body = idx
        elif isinstance(block, Infobox):
            units.append(ParagraphUnit(doc.id, idx, "infobox", path,
                                       features_present=frozenset({"infobox"}),
                                       context_units=ctx, block_indexes=(i,)))
        elif isinstance(block, Footnote):
            units.append(ParagraphUnit(doc.id, idx, "footnote", path,
                                       features_present=frozenset({"footnote"}),
                                       context_units=ctx, block_indexes=(i,), anchor=last_body))
        i += 1
    if doc.enriched:
        # heading context joins every unit, so title (and section, under a
        # heading) become present wherever that context reaches
        units = [replace(u, features_present=u.features_present | {"title"}
                         | ({"section"} if len(u.context_units) > 1 or u.kind == "heading" else set()))
                 for u in units]
    return units


def introduction_units(units: Sequence[ParagraphUnit]) -> list[ParagraphUnit]:
    """Units before the first section heading, title excluded."""
    out = []
    for u in units:
        if u.kind == "heading":
            break
        if u.kind != "title":
            out.append(u)
    return out


# ---------------------------------------------------------------------------
# gazetteers and annotation


def normalize_surface(text: str) -> str:
    return " ".join(text.casefold().split())


@dataclass
class Gazetteer:
    entity_type: str
    surface_forms: dict[str, str] = field(default_factory=dict)

    def add(self, surface: str, entity_id: str) -> None:
        key = normalize_surface(surface)
        if not key:
            raise GazetteerError("empty surface form")
        prev = self.surface_forms.get(key)
        if prev is None or entity_id < prev:
            self.surface_forms[key] = entity_id

    def lookup(self, surface: str) -> str | None:
        return self.surface_forms.get(normalize_surface(surface))


def load_gazetteers(path: str | Path) -> list[Gazetteer]:
    """Read ``entity_type<TAB>surface_form<TAB>entity_id`` lines, one
    gazetteer per entity type, in order of first appearance."""
    by_type: dict[str, Gazetteer] = {}
    owner: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise GazetteerError(f"line {lineno}: expected 3 tab-separated fields")
            etype, surface, eid = (p.strip() for p in parts)
            if owner.setdefault(eid, etype) != etype:
                raise GazetteerError(f"line {lineno}: entity {eid!r} listed under two types")
            by_type.setdefault(etype, Gazetteer(etype)).add(surface, eid)
    return list(by_type.values())


def save_gazetteers(gazetteers: Sequence[Gazetteer], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for g in gazetteers:
            for surface, eid in g.surface_forms.items():
                fh.write(f"{g.entity_type}\t{surface}\t{eid}\n")


@dataclass(frozen=True)
class Mention:
    entity_id: str
    entity_type: str
    doc_id: str
    unit_index: int
    position: Position
    span_kind: SpanKind = SpanKind.PLAIN


def _is_word(ch: str) -> bool:
    return ch.isalnum() or ch == "_"


class Matcher:
    """Whole-token, case-insensitive longest-match lookup over several
    gazetteers. Ties on surface form go to the smallest entity id."""

    def __init__(self, gazetteers: Sequence[Gazetteer]):
        table: dict[str, tuple[str, str]] = {}
        for g in gazetteers:
            for surface, eid in g.surface_forms.items():
                prev = table.get(surface)
                if prev is None or eid < prev[0]:
                    table[surface] = (eid, g.entity_type)
        self.table = table
        self.lengths = sorted({len(s) for s in table}, reverse=True)

    def find(self, spans: Sequence[Span]) -> list[tuple[str, str, SpanKind]]:
        chars: list[str] = []
        kinds: list[SpanKind] = []
        for span in spans:
            for ch in span.text:
                for c in ch.casefold():
                    if c.isspace():
                        if not chars or chars[-1] == " ":
                            continue
                        c = " "
                    chars.append(c)
                    kinds.append(span.kind)
        while chars and chars[-1] == " ":
            chars.pop()
            kinds.pop()
        text = "".join(chars)
        n = len(text)
        hits = []
        p = 0
        while p < n:
            if p > 0 and _is_word(text[p - 1]) and _is_word(text[p]) or text[p] == " ":
                p += 1
                continue
            for length in self.lengths:
                e = p + length
                if e > n:
                    continue
                if e < n and _is_word(text[e - 1]) and _is_word(text[e]):
                    continue
                entry = self.table.get(text[p:e])
                if entry is not None:
                    hits.append((entry[0], entry[1], kinds[p]))
                    p = e
                    break
            else:
                p += 1
        return hits


def _regions(doc: Document, unit: ParagraphUnit):
    """Yield (position, spans) for every text region of ``unit``."""
    blocks = [doc.blocks[i] for i in unit.block_indexes]
    for block in blocks:
        if isinstance(block, Title):
            yield Position.TITLE, parse_inline(block.text)
        elif isinstance(block, Heading):
            yield Position.SECTION_HEADING, parse_inline(block.text)
        elif isinstance(block, Paragraph):
            pos = Position.PRECEDING_TEXT if unit.bullets else Position.BODY_TEXT
            yield pos, block.spans
        elif isinstance(block, BulletList):
            for item in block.items:
                yield Position.BULLET_ITEM, parse_inline(item)
        elif isinstance(block, Infobox):
            for key, value in block.pairs:
                yield Position.INFOBOX_KEY, parse_inline(key)
                yield Position.INFOBOX_VALUE, parse_inline(value)
        elif isinstance(block, Footnote):
            yield Position.FOOTNOTE, parse_inline(block.text)


def annotate(doc: Document, gazetteers: Sequence[Gazetteer] | Matcher) -> list[Mention]:
    matcher = gazetteers if isinstance(gazetteers, Matcher) else Matcher(gazetteers)
    mentions = []
    for unit in split_units(doc):
        for position, spans in _regions(doc, unit):
            for eid, etype, kind in matcher.find(spans):
                mentions.append(Mention(eid, etype, doc.id, unit.unit_index, position, kind))
    return mentions


# ---------------------------------------------------------------------------
# JSON forms


def document_to_dict(doc: Document) -> dict:
    blocks = []
    for b in doc.blocks:
        if isinstance(b, Title):
            blocks.append({"kind": "Title", "text": b.text})
        elif isinstance(b, Heading):
            blocks.append({"kind": "SectionHeading", "level": b.level, "text": b.text,
                           "id": b.id, "section": b.section})
        elif isinstance(b, Paragraph):
            blocks.append({"kind": "Paragraph", "section": b.section,
                           "spans": [[s.kind.value, s.text] for s in b.spans]})
        elif isinstance(b, BulletList):
            blocks.append({"kind": "BulletList", "section": b.section, "items": list(b.items)})
        elif isinstance(b, Infobox):
            blocks.append({"kind": "Infobox", "section": b.section,
                           "pairs": [list(p) for p in b.pairs]})
        elif isinstance(b, Footnote):
            blocks.append({"kind": "Footnote", "section": b.section, "text": b.text})
    return {"id": doc.id, "title": doc.title, "enriched": doc.enriched, "blocks": blocks}


def document_from_dict(data: dict) -> Document:
    blocks: list[Block] = []
    for b in data["blocks"]:
        kind = b["kind"]
        sec = b.get("section", "")
        if kind == "Title":
            blocks.append(Title(b["text"]))
        elif kind == "SectionHeading":
            blocks.append(Heading(b["level"], b["text"], b["id"], sec))
        elif kind == "Paragraph":
            blocks.append(Paragraph(tuple(Span(SpanKind(k), t) for k, t in b["spans"]), sec))
        elif kind == "BulletList":
            blocks.append(BulletList(tuple(b["items"]), sec))
        elif kind == "Infobox":
            blocks.append(Infobox(tuple((k, v) for k, v in b["pairs"]), sec))
        elif kind == "Footnote":
            blocks.append(Footnote(b["text"], sec))
        else:
            raise ValueError(f"unknown block kind {kind!r}")
    return Document(data["id"], data["title"], tuple(blocks), data.get("enriched", False))


def mention_to_dict(m: Mention) -> dict:
    return {"entity_id": m.entity_id, "entity_type": m.entity_type, "doc_id": m.doc_id,
            "unit_index": m.unit_index, "position": m.position.value,
            "span_kind": m.span_kind.value}


def mention_from_dict(d: dict) -> Mention:
    return Mention(d["entity_id"], d["entity_type"], d["doc_id"], d["unit_index"],
                   Position(d["position"]), SpanKind(d["span_kind"]))
