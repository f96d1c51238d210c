"""Bracket removal and rewriting onto the four order-free operators.

``expand`` turns an expression into a flat sum of signed products. Sums met in
numerator position are distributed; sums met in denominator position are kept
as an :class:`InvGroup` factor (the reciprocal of a sum). Small integer powers
become repeated factors.

``apply_operator_conversion`` then builds a binary tree whose internal nodes
are ADD, MUL, MULNEG (negated product) and ADDINV (reciprocal of a sum) and
whose leaves carry one of four forms: v, -v, 1/v, -1/v.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Tuple, Union

from .errors import UnsupportedExponent
from .expr import (
    DIVIDE, MINUS, PLUS, POWER, TIMES,
    Binary, Constant, Expr, Negate, Number, unparse,
)

MAX_EXPONENT = 12

ADD, MUL, MULNEG, ADDINV = "+", "×", "×-", "+/"
OPERATORS = (ADD, MUL, MULNEG, ADDINV)

# leaf forms, indexed by (sign bit, reciprocal bit)
V, NEG, RECIP, NEGRECIP = "V", "NEG", "RECIP", "NEGRECIP"
FORMS = (V, NEG, RECIP, NEGRECIP)
FORM_BITS = {V: (0, 0), NEG: (1, 0), RECIP: (0, 1), NEGRECIP: (1, 1)}
BITS_FORM = {bits: form for form, bits in FORM_BITS.items()}


@dataclass(frozen=True)
class InvGroup:
    terms: Tuple["Term", ...]


@dataclass(frozen=True)
class SignedFactor:
    sign: int
    recip: bool
    base: Union[Number, Constant, InvGroup]


@dataclass(frozen=True)
class Term:
    sign: int
    factors: Tuple[SignedFactor, ...]


def _atom(base) -> list:
    return [Term(1, (SignedFactor(1, False, base),))]


def _negate(terms):
    return [Term(-t.sign, t.factors) for t in terms]


def _multiply(left, right):
    # left-to-right distribution keeps the term order deterministic
    return [Term(a.sign * b.sign, a.factors + b.factors) for a in left for b in right]


def _reciprocal(term: Term) -> list:
    """1/term as a sum of terms; inverting an InvGroup exposes its sum."""
    sign = term.sign
    simple = []
    sums = []
    for f in term.factors:
        if isinstance(f.base, InvGroup):
            sign *= f.sign
            sums.append(list(f.base.terms))
        else:
            simple.append(SignedFactor(f.sign, not f.recip, f.base))
    result = [Term(sign, tuple(simple))]
    for s in sums:
        result = _multiply(result, s)
    return result


def expand(e: Expr) -> list:
    """Flatten ``e`` into a list of :class:`Term` (their sum equals ``e``)."""
    if isinstance(e, (Number, Constant)):
        return _atom(e)
    if isinstance(e, Negate):
        return _negate(expand(e.child))
    if e.op == PLUS:
        return expand(e.left) + expand(e.right)
    if e.op == MINUS:
        return expand(e.left) + _negate(expand(e.right))
    if e.op == TIMES:
        return _multiply(expand(e.left), expand(e.right))
    if e.op == DIVIDE:
        num = expand(e.left)
        den = expand(e.right)
        if len(den) == 1:
            return _multiply(num, _reciprocal(den[0]))
        return _multiply(num, [Term(1, (SignedFactor(1, False, InvGroup(tuple(den))),))])
    if e.op == POWER:
        k = e.right.exact if isinstance(e.right, Number) else None
        if k is None or k.denominator != 1 or k < 0 or k > MAX_EXPONENT:
            raise UnsupportedExponent(unparse(e.right))
        if k == 0:
            warnings.warn(f"{unparse(e)} expanded to 1", stacklevel=2)
            return _atom(Constant("1"))
        base = expand(e.left)
        result = base
        for _ in range(int(k) - 1):
            result = _multiply(result, base)
        return result
    raise ValueError(f"unknown operator {e.op!r}")


def terms_to_expr(terms) -> Expr:
    """Rebuild a plain expression from terms (used for printing and round trips)."""
    out = None
    for t in terms:
        prod = None
        for f in t.factors:
            if isinstance(f.base, InvGroup):
                node = Binary(DIVIDE, Number(1), terms_to_expr(f.base.terms))
            elif f.recip:
                node = Binary(DIVIDE, Number(1), f.base)
            else:
                node = f.base
            if f.sign < 0:
                node = Negate(node)
            prod = node if prod is None else Binary(TIMES, prod, node)
        if out is None:
            out = Negate(prod) if t.sign < 0 else prod
        else:
            out = Binary(MINUS if t.sign < 0 else PLUS, out, prod)
    return out


# --------------------------------------------------------------------------
# operator conversion

@dataclass(frozen=True)
class BLeaf:
    form: str
    base: Union[Number, Constant]


@dataclass(frozen=True)
class BNode:
    op: str
    children: tuple  # one or two entries


BTree = Union[BLeaf, BNode]


def _form(sign, recip):
    return BITS_FORM[(1 if sign < 0 else 0, 1 if recip else 0)]


def _factor_tree(f: SignedFactor, sign=1) -> BTree:
    if isinstance(f.base, InvGroup):
        inner = _sum_tree(f.base.terms)
        node = BNode(ADDINV, (inner,)) if isinstance(inner, BLeaf) or inner.op != ADD else BNode(ADDINV, inner.children)
        if f.sign * sign < 0:
            return BNode(MULNEG, (node,))
        return node
    return BLeaf(_form(f.sign * sign, f.recip), f.base)


def _left_deep(op, nodes):
    tree = nodes[0]
    for n in nodes[1:]:
        tree = BNode(op, (tree, n))
    return tree


def _term_tree(t: Term) -> BTree:
    if len(t.factors) == 1:
        return _factor_tree(t.factors[0], t.sign)
    nodes = [_factor_tree(f) for f in t.factors]
    if t.sign > 0:
        return _left_deep(MUL, nodes)
    head = _left_deep(MUL, nodes[:-1])
    return BNode(MULNEG, (head, nodes[-1]))


def _sum_tree(terms) -> BTree:
    return _left_deep(ADD, [_term_tree(t) for t in terms])


def apply_operator_conversion(terms) -> BTree:
    """Binary tree over ADD/MUL/MULNEG/ADDINV with signed/reciprocal leaves."""
    return _sum_tree(terms)


def eval_btree(t: BTree, values=None) -> float:
    """Evaluate a converted tree; ``values`` maps a literal to its number."""
    if isinstance(t, BLeaf):
        v = values(t.base) if values else _literal_value(t.base)
        if t.form in (RECIP, NEGRECIP):
            v = 1.0 / v
        return -v if t.form in (NEG, NEGRECIP) else v
    vals = [eval_btree(c, values) for c in t.children]
    if t.op in (ADD, ADDINV):
        s = sum(vals)
        return 1.0 / s if t.op == ADDINV else s
    p = 1.0
    for v in vals:
        p *= v
    return -p if t.op == MULNEG else p


def _literal_value(lit):
    if isinstance(lit, Number):
        return lit.value
    return math.pi if lit.name == "pi" else float(lit.name)
