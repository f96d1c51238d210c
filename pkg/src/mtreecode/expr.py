"""Solution-expression AST: parsing, evaluation and a minimal-bracket printer.

Grammar (loosest to tightest binding)::

    sum     := product (('+' | '-') product)*
    product := unary (('*' | '/') unary)*
    unary   := '-' unary | '+' unary | power
    power   := atom ('^' unary)?
    atom    := NUMBER | 'pi' | '(' sum ')'

``^`` is right associative, but the exponent must reduce to a number literal
(an optional leading minus is folded into it).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Iterator, Optional, Union

from .errors import DivisionByZero, EmptyInput, ExprSyntaxError, NonNumericExponent

PLUS, MINUS, TIMES, DIVIDE, POWER = "+", "-", "*", "/", "^"
BINARY_OPS = (PLUS, MINUS, TIMES, DIVIDE, POWER)


def format_fraction(q: Fraction) -> str:
    """Canonical text of an exact value: integer, terminating decimal, or ``p/q``."""
    if q.denominator == 1:
        return str(q.numerator)
    den = q.denominator
    twos = fives = 0
    while den % 2 == 0:
        den //= 2
        twos += 1
    while den % 5 == 0:
        den //= 5
        fives += 1
    if den != 1:
        return f"{q.numerator}/{q.denominator}"
    places = max(twos, fives)
    scaled = abs(q) * 10**places
    digits = str(scaled.numerator).rjust(places + 1, "0")
    sign = "-" if q < 0 else ""
    return f"{sign}{digits[:-places]}.{digits[-places:]}"


@dataclass(frozen=True)
class Number:
    exact: Fraction
    occurrence: Optional[int] = None

    @property
    def text(self) -> str:
        return format_fraction(self.exact)

    @property
    def value(self) -> float:
        return float(self.exact)


@dataclass(frozen=True)
class Constant:
    name: str  # "pi" or "1"
    occurrence: Optional[int] = None

    @property
    def text(self) -> str:
        return self.name


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Negate:
    child: "Expr"


Expr = Union[Number, Constant, Binary, Negate]
Literal = Union[Number, Constant]


def number(x, occurrence=None) -> Number:
    return Number(Fraction(str(x)) if isinstance(x, float) else Fraction(x), occurrence)


# --------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+\.?\d*|\.\d+)|(?P<name>pi|π)|(?P<op>\*\*|[-+*/^()×÷−]))"
)
_SYNONYMS = {"×": TIMES, "÷": DIVIDE, "−": MINUS, "**": POWER}
_UNKNOWN_PREFIX = re.compile(r"^\s*[A-Za-z]\s*=")


def _tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(text, pos)
        if not m:
            raise ExprSyntaxError(pos, "number, 'pi', operator or bracket", text)
        start = m.start(m.lastgroup)
        kind = m.lastgroup
        tok = m.group(kind)
        if kind == "op":
            tok = _SYNONYMS.get(tok, tok)
        tokens.append((kind, tok, start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, expected):
        raise ExprSyntaxError(self.peek()[2], expected, self.text)

    def parse(self):
        if self.peek()[0] == "end":
            raise EmptyInput("blank expression")
        e = self.sum()
        if self.peek()[0] != "end":
            self.fail("operator or end of input")
        return e

    def sum(self):
        left = self.product()
        while self.peek()[1] in (PLUS, MINUS) and self.peek()[0] == "op":
            op = self.take()[1]
            left = Binary(op, left, self.product())
        return left

    def product(self):
        left = self.unary()
        while self.peek()[1] in (TIMES, DIVIDE) and self.peek()[0] == "op":
            op = self.take()[1]
            left = Binary(op, left, self.unary())
        return left

    def unary(self):
        kind, tok, _ = self.peek()
        if kind == "op" and tok == MINUS:
            self.take()
            return Negate(self.unary())
        if kind == "op" and tok == PLUS:
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[1] == POWER and self.peek()[0] == "op":
            self.take()
            pos = self.peek()[2]
            exponent = self.unary()
            if isinstance(exponent, Negate) and isinstance(exponent.child, Number):
                exponent = Number(-exponent.child.exact)
            if not isinstance(exponent, Number):
                raise ExprSyntaxError(pos, "number literal exponent", self.text)
            return Binary(POWER, base, exponent)
        return base

    def atom(self):
        kind, tok, _ = self.peek()
        if kind == "num":
            self.take()
            return Number(Fraction(tok))
        if kind == "name":
            self.take()
            return Constant("pi")
        if kind == "op" and tok == "(":
            self.take()
            e = self.sum()
            if self.peek()[1] != ")":
                self.fail("')'")
            self.take()
            return e
        self.fail("number, 'pi' or '('")


def parse_expression(text: str) -> Expr:
    """Parse an infix solution expression; a leading ``x=`` is stripped."""
    if text is None or not text.strip():
        raise EmptyInput("blank expression")
    m = _UNKNOWN_PREFIX.match(text)
    if m:
        text = text[m.end():]
    return _Parser(text).parse()


# --------------------------------------------------------------------------
# evaluation

def eval_expr(e: Expr, pi: float = math.pi) -> float:
    if isinstance(e, Number):
        return e.value
    if isinstance(e, Constant):
        return pi if e.name == "pi" else float(e.name)
    if isinstance(e, Negate):
        return -eval_expr(e.child, pi)
    a = eval_expr(e.left, pi)
    if e.op == POWER:
        if not isinstance(e.right, Number):
            raise NonNumericExponent(unparse(e.right))
        if a == 0 and e.right.exact < 0:
            raise DivisionByZero(unparse(e))
        return a ** e.right.value
    b = eval_expr(e.right, pi)
    if e.op == PLUS:
        return a + b
    if e.op == MINUS:
        return a - b
    if e.op == TIMES:
        return a * b
    if b == 0:
        raise DivisionByZero(unparse(e))
    return a / b


# --------------------------------------------------------------------------
# printing

_PREC = {PLUS: 1, MINUS: 1, TIMES: 2, DIVIDE: 2}
_UNARY, _POWER, _ATOM = 3, 4, 5


def _prec(e):
    if isinstance(e, Binary):
        return _POWER if e.op == POWER else _PREC[e.op]
    if isinstance(e, Negate):
        return _UNARY
    if isinstance(e, Number) and "/" in e.text:
        return _PREC[DIVIDE]
    return _ATOM


def _wrap(e, min_prec):
    s = unparse(e)
    return s if _prec(e) >= min_prec else f"({s})"


def unparse(e: Expr) -> str:
    """ASCII rendering with the fewest brackets that parse back to ``e``."""
    if isinstance(e, (Number, Constant)):
        return e.text
    if isinstance(e, Negate):
        return "-" + _wrap(e.child, _UNARY)
    if e.op == POWER:
        return f"{_wrap(e.left, _ATOM)}^{e.right.text}"
    p = _PREC[e.op]
    return f"{_wrap(e.left, p)}{e.op}{_wrap(e.right, p + 1)}"


# --------------------------------------------------------------------------
# traversal helpers

def literals(e: Expr) -> Iterator[Literal]:
    """Number and Constant nodes in left-to-right order (exponents excluded)."""
    if isinstance(e, (Number, Constant)):
        yield e
    elif isinstance(e, Negate):
        yield from literals(e.child)
    else:
        yield from literals(e.left)
        if e.op != POWER:
            yield from literals(e.right)


def map_literals(e: Expr, fn) -> Expr:
    """Rebuild ``e`` with every operand literal replaced by ``fn(literal)``."""
    if isinstance(e, (Number, Constant)):
        return fn(e)
    if isinstance(e, Negate):
        return Negate(map_literals(e.child, fn))
    left = map_literals(e.left, fn)  # left first: binding order depends on it
    right = e.right if e.op == POWER else map_literals(e.right, fn)
    return replace(e, left=left, right=right)


def depth(e: Expr) -> int:
    if isinstance(e, Negate):
        return 1 + depth(e.child)
    if isinstance(e, Binary):
        return 1 + max(depth(e.left), depth(e.right))
    return 0
