"""M-ary trees over ADD, MUL, MULNEG and ADDINV.

Serialization format (used by golden tests and the CLI)::

    tree  := "(" OP ["@" k] " " node (" " node)* ")"
    node  := tree | leaf
    leaf  := FORM VALUE ["#" occurrence]

``OP`` is one of ``+``, ``×``, ``×-``, ``+/``. ``FORM`` is empty for v, ``-``
for -v, ``/`` for 1/v and ``-/`` for -1/v. ``VALUE`` is the canonical literal
(``3``, ``0.25``, ``1/3``, ``pi``). ``@k`` numbers same-operator siblings.
Example: ``(+ 4 5 (× 2 3))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Optional, Tuple, Union

from .errors import DivisionByZero
from .expr import Constant, Number
from .normalizer import (
    ADD, ADDINV, MUL, MULNEG, NEG, NEGRECIP, RECIP, V,
    BLeaf, BTree, apply_operator_conversion, expand,
)

FORM_PREFIX = {V: "", NEG: "-", RECIP: "/", NEGRECIP: "-/"}
_FORM_RANK = {V: 0, NEG: 1, RECIP: 2, NEGRECIP: 3}
_OP_RANK = {ADD: 0, MUL: 1, MULNEG: 2, ADDINV: 3}

# (parent, child) -> parent operator after absorbing the child
MERGES = {
    (ADD, ADD): ADD,
    (MUL, MUL): MUL,
    (ADDINV, ADD): ADDINV,
    (MULNEG, MUL): MULNEG,
    (MUL, MULNEG): MULNEG,
    (MULNEG, MULNEG): MUL,
}


@dataclass(frozen=True)
class Leaf:
    form: str
    text: str
    value: float
    occurrence: Optional[int] = None


@dataclass(frozen=True)
class Internal:
    op: str
    children: Tuple["MNode", ...]
    dis: Optional[int] = None


MNode = Union[Leaf, Internal]


@dataclass(frozen=True)
class MTree:
    root: Internal

    def serialize(self, occurrences=True) -> str:
        return serialize(self.root, occurrences)

    def __str__(self):
        return self.serialize()


# --------------------------------------------------------------------------
# construction

def leaf_from_literal(form, lit: Union[Number, Constant], pi=math.pi) -> Leaf:
    if isinstance(lit, Number):
        value = lit.value
    else:
        value = pi if lit.name == "pi" else float(lit.name)
    return Leaf(form, lit.text, value, lit.occurrence)


def _from_btree(b: BTree, pi):
    if isinstance(b, BLeaf):
        return leaf_from_literal(b.form, b.base, pi)
    return Internal(b.op, tuple(_from_btree(c, pi) for c in b.children))


def _saturate(node: Internal) -> Internal:
    op = node.op
    children = list(node.children)
    changed = True
    while changed:
        changed = False
        merged = []
        for c in children:
            if isinstance(c, Internal) and (op, c.op) in MERGES:
                op = MERGES[op, c.op]
                merged.extend(c.children)
                changed = True
            else:
                merged.append(c)
        children = merged
    # absorbing children never creates a new merge with this node's parent,
    # so the descent can proceed strictly top-down
    return Internal(op, tuple(_saturate(c) if isinstance(c, Internal) else c for c in children))


def wrap_root(b: BTree, pi=math.pi) -> MTree:
    """The converted binary tree under an ADD root, without any merging."""
    return MTree(Internal(ADD, (_from_btree(b, pi),)))


def to_mtree(b: BTree, pi=math.pi) -> MTree:
    """Wrap under an ADD root and apply the merge rules top-down to saturation."""
    return MTree(_saturate(wrap_root(b, pi).root))


# --------------------------------------------------------------------------
# canonical order

def value_key(text: str):
    try:
        return (0, Fraction(text), "")
    except (ValueError, ZeroDivisionError):
        return (1, Fraction(0), text)


def serialize(node: MNode, occurrences=True, disambiguators=True) -> str:
    if isinstance(node, Leaf):
        s = FORM_PREFIX[node.form] + node.text
        if occurrences and node.occurrence is not None:
            s += f"#{node.occurrence}"
        return s
    head = node.op
    if disambiguators and node.dis is not None:
        head += f"@{node.dis}"
    return "(" + head + " " + " ".join(serialize(c, occurrences, disambiguators) for c in node.children) + ")"


def _min_occurrence(node: MNode) -> int:
    if isinstance(node, Leaf):
        return -1 if node.occurrence is None else node.occurrence
    return min(_min_occurrence(c) for c in node.children)


def sort_key(node: MNode):
    if isinstance(node, Leaf):
        occ = -1 if node.occurrence is None else node.occurrence
        return (0, _FORM_RANK[node.form], value_key(node.text), occ, "")
    return (
        1,
        _OP_RANK[node.op],
        serialize(node, occurrences=False, disambiguators=False),
        _min_occurrence(node),
        serialize(node),
    )


def _canonical(node: Internal) -> Internal:
    children = [_canonical(c) if isinstance(c, Internal) else c for c in node.children]
    children.sort(key=sort_key)
    counts = {}
    for c in children:
        if isinstance(c, Internal):
            counts[c.op] = counts.get(c.op, 0) + 1
    seen = {}
    out = []
    for c in children:
        if isinstance(c, Internal):
            dis = None
            if counts[c.op] >= 2:
                seen[c.op] = seen.get(c.op, 0) + 1
                dis = seen[c.op]
            c = replace(c, dis=dis)
        out.append(c)
    return Internal(node.op, tuple(out), node.dis)


def canonicalize(t: MTree) -> MTree:
    """Sort siblings into canonical order and number same-operator siblings."""
    return MTree(_canonical(t.root))


def from_expression(e, pi=math.pi) -> MTree:
    """expand -> operator conversion -> merge -> canonical order."""
    return canonicalize(to_mtree(apply_operator_conversion(expand(e)), pi))


# --------------------------------------------------------------------------
# evaluation and structural checks

def _eval(node: MNode, path: str) -> float:
    if isinstance(node, Leaf):
        v = node.value
        if node.form in (RECIP, NEGRECIP):
            if v == 0:
                raise DivisionByZero(f"{path}/{serialize(node)}")
            v = 1.0 / v
        return -v if node.form in (NEG, NEGRECIP) else v
    here = f"{path}/{node.op}" + (f"@{node.dis}" if node.dis else "")
    vals = [_eval(c, here) for c in node.children]
    if node.op in (ADD, ADDINV):
        s = math.fsum(vals)
        if node.op == ADD:
            return s
        if s == 0:
            raise DivisionByZero(here)
        return 1.0 / s
    p = 1.0
    for v in vals:
        p *= v
    return -p if node.op == MULNEG else p


def eval_mtree(t: Union[MTree, MNode]) -> float:
    root = t.root if isinstance(t, MTree) else t
    return _eval(root, "")


def iter_nodes(node: MNode, parent=None):
    """Yield ``(parent, node)`` pairs in pre-order."""
    yield parent, node
    if isinstance(node, Internal):
        for c in node.children:
            yield from iter_nodes(c, node)


def mergeable_pairs(t: MTree):
    """Every (parent op, child op) pair that a merge rule would still rewrite."""
    return [
        (p.op, n.op)
        for p, n in iter_nodes(t.root)
        if p is not None and isinstance(n, Internal) and (p.op, n.op) in MERGES
    ]


def leaves(node: MNode):
    return [n for _, n in iter_nodes(node) if isinstance(n, Leaf)]


def height(node: MNode) -> int:
    if isinstance(node, Leaf):
        return 0
    return 1 + max(height(c) for c in node.children)
