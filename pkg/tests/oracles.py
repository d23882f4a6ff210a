"""Independent reference computations used by the tests.

The DSM oracle rescans paragraph units for every query and derives unit
context, feature presence and role occupancy straight from the document
blocks and the mention list, without touching the index code.
"""
from __future__ import annotations

from collections import defaultdict

from dsmrel.docstruct import (BulletList, Footnote, Heading, Infobox, Position, SpanKind,
                              Title, split_units)

BODY = {Position.PRECEDING_TEXT, Position.BULLET_ITEM, Position.BODY_TEXT,
        Position.INFOBOX_KEY, Position.INFOBOX_VALUE, Position.FOOTNOTE}

# feature name -> (role A, role B)
ROLES = {
    "bullets": ({Position.PRECEDING_TEXT}, {Position.BULLET_ITEM}),
    "footnote": ({Position.BODY_TEXT}, {Position.FOOTNOTE}),
    "title": ({Position.TITLE}, BODY),
    "section": ({Position.SECTION_HEADING}, BODY),
    "infobox": ({Position.INFOBOX_KEY, Position.TITLE}, {Position.INFOBOX_VALUE}),
}


def _unit_view(doc, mentions):
    """Per unit: (set of present feature names, list of (position, entity))."""
    units = split_units(doc)
    own = defaultdict(list)
    for m in mentions:
        own[m.unit_index].append((m.position, m.entity_id))

    # enclosing headings from levels, walked independently of the splitter
    enclosing = {}
    open_headings = []  # (level, unit index)
    last_body = None
    anchors = {}
    for u in units:
        blocks = [doc.blocks[i] for i in u.block_indexes]
        first = blocks[0]
        if isinstance(first, Heading):
            open_headings = [(lv, ix) for lv, ix in open_headings if lv < first.level]
            enclosing[u.unit_index] = [ix for _, ix in open_headings]
            open_headings.append((first.level, u.unit_index))
        else:
            enclosing[u.unit_index] = [ix for _, ix in open_headings]
        if isinstance(first, Footnote):
            anchors[u.unit_index] = last_body
        elif u.kind == "body":
            last_body = u.unit_index

    view = {}
    for u in units:
        blocks = [doc.blocks[i] for i in u.block_indexes]
        present = set()
        if any(isinstance(b, BulletList) for b in blocks):
            present.add("bullets")
        if any(isinstance(b, Infobox) for b in blocks):
            present.add("infobox")
        if any(isinstance(b, Footnote) for b in blocks):
            present.add("footnote")
        if any(isinstance(b, Title) for b in blocks):
            present.add("title")
        if any(isinstance(b, Heading) for b in blocks):
            present.add("section")
        occ = list(own[u.unit_index])
        if doc.enriched:
            present.add("title")
            if enclosing[u.unit_index]:
                present.add("section")
            context = [0] + enclosing[u.unit_index] if u.unit_index != 0 else []
            for c in context:
                occ += [(p, e) for p, e in own[c] if p in (Position.TITLE, Position.SECTION_HEADING)]
        anchor = anchors.get(u.unit_index)
        if anchor is not None:
            occ += [(Position.BODY_TEXT, e) for p, e in own[anchor]
                    if p in (Position.PRECEDING_TEXT, Position.BODY_TEXT, Position.BULLET_ITEM)]
        view[u.unit_index] = (present, occ)
    return view


class BruteDsm:
    """Answers rho_k, counts and rho_agg by scanning every unit per query."""

    def __init__(self, docs, mentions):
        by_doc = defaultdict(list)
        for m in mentions:
            by_doc[m.doc_id].append(m)
        self.units = []
        for doc in docs:
            self.units.extend(_unit_view(doc, by_doc[doc.id]).values())
        self.mentions = list(mentions)

    def pair(self, x, y, feature):
        role_a, role_b = ROLES[feature]
        num = den = 0
        for present, occ in self.units:
            if feature not in present:
                continue
            a = {e for p, e in occ if p in role_a}
            if x not in a:
                continue
            den += 1
            if y in {e for p, e in occ if p in role_b}:
                num += 1
        return num, den

    def rho(self, x, y, feature):
        num, den = self.pair(x, y, feature)
        return num / den if den else 0.0

    def n_x(self, x):
        return sum(sum(1 for _, e in occ if e == x) for _, occ in self.units)

    def n_kx(self, x, feature):
        return self.pair(x, x, feature)[1]

    def absolute(self, y):
        mine = [m for m in self.mentions if m.entity_id == y]
        if not mine:
            return 0.0
        marked = sum(1 for m in mine if m.span_kind in (SpanKind.BRACKETED, SpanKind.EMPHASIZED)
                     or m.position is Position.FOOTNOTE)
        return marked / len(mine)

    def rho_agg(self, x, y, weights, absolute_weight=0.0):
        n = self.n_x(x)
        total = 0.0
        for feature, w in weights.items():
            total += w * (self.n_kx(x, feature) / max(n, 1)) * self.rho(x, y, feature)
        return total + absolute_weight * self.absolute(y)
