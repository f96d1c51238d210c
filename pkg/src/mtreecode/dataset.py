"""Corpus ingestion and supervision targets.

Records are JSON objects with an id, problem text, a solution equation and
an answer. Three layouts are accepted, as a JSON array, JSON lines, or
concatenated objects:

* ``math23k-json``: ``id``, ``segmented_text`` / ``original_text``, ``equation``, ``ans``
* ``mawps-json``: the above, or ``iIndex``, ``sQuestion``, ``lEquations``, ``lSolutions``
* ``synthetic-json``: ``id``, ``text``, ``equation``, ``ans`` (see :mod:`.synthetic`)

Every problem gets the constants ``1`` and ``pi`` as its first two values,
masked as ``NUM_0`` and ``NUM_1`` at the front of the token sequence. Text
numbers follow as ``NUM_2``, ``NUM_3``, ... in reading order.
"""

from __future__ import annotations

import json
import logging
import math
import os
import random
import re
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Optional

import numpy as np

from . import codec
from .errors import MTreeError, SchemaError, UnboundLiteral, UnknownCode
from .expr import (
    DIVIDE, PLUS, Binary, Constant, Expr, Negate, Number, format_fraction,
    map_literals, parse_expression,
)
from .mtree import MTree, eval_mtree, from_expression
from .normalizer import apply_operator_conversion, expand

log = logging.getLogger(__name__)

CONSTANTS = ("1", "pi")
PI_ALIASES = (Fraction("3.14"),)
FORMATS = ("math23k-json", "mawps-json", "synthetic-json")
DATA_DIR_ENV = "MTREE_DATA_DIR"

REL_TOL = 1e-4
ABS_TOL = 1e-4


def mask_token(i: int) -> str:
    return f"NUM_{i}"


def answers_match(pred: float, gold: float) -> bool:
    """Relative 1e-4, or absolute 1e-4 when the gold answer is below 1 in magnitude."""
    if pred is None or not math.isfinite(pred):
        return False
    if abs(gold) < 1:
        return abs(pred - gold) <= ABS_TOL
    return abs(pred - gold) <= REL_TOL * abs(gold)


# --------------------------------------------------------------------------
# number tokens

_NUMBER = re.compile(
    r"(?P<mixed>\d+\(\d+/\d+\))"
    r"|(?P<pfrac>\(\d+/\d+\))"
    r"|(?P<frac>\d+/\d+)"
    r"|(?P<pct>\d+(?:\.\d+)?%)"
    r"|(?P<dec>\d*\.\d+|\d+)"
)
_WORD = re.compile(r"\w+|[^\w\s]")


@dataclass(frozen=True)
class TextNumber:
    raw: str
    kind: str  # mixed | frac | pct | dec
    exact: Fraction
    parts: tuple  # literal pieces the equation uses to spell this value


def parse_number_token(raw: str) -> TextNumber:
    m = _NUMBER.fullmatch(raw.strip())
    if not m:
        raise ValueError(f"not a number token: {raw!r}")
    kind = m.lastgroup
    s = m.group(kind)
    if kind == "mixed":
        whole, rest = s.split("(")
        num, den = rest.rstrip(")").split("/")
        return TextNumber(s, "mixed", Fraction(whole) + Fraction(int(num), int(den)), (whole, num, den))
    if kind in ("pfrac", "frac"):
        num, den = s.strip("()").split("/")
        return TextNumber(s, "frac", Fraction(int(num), int(den)), (num, den))
    if kind == "pct":
        return TextNumber(s, "pct", Fraction(s[:-1]) / 100, (s[:-1],))
    return TextNumber(s, "dec", Fraction(s), (s,))


def parse_answer(ans) -> float:
    if isinstance(ans, (int, float)):
        return float(ans)
    s = str(ans).strip()
    try:
        return float(s)
    except ValueError:
        return float(parse_number_token(s).exact)


def tokenize(text: str):
    """Split into word tokens and number tokens; returns (tokens, numbers)."""
    tokens, numbers = [], []
    for chunk in text.split():
        pos = 0
        for m in _NUMBER.finditer(chunk):
            tokens.extend(_WORD.findall(chunk[pos:m.start()]))
            numbers.append((len(tokens), parse_number_token(m.group())))
            tokens.append(m.group())
            pos = m.end()
        tokens.extend(_WORD.findall(chunk[pos:]))
    return tokens, numbers


# --------------------------------------------------------------------------
# problems

@dataclass
class Problem:
    id: str
    text: str
    tokens: List[str]  # masked input sequence X, constants first
    value_texts: List[str]  # canonical literal of each value, "pi" for the constant
    values: List[float]
    positions: List[int]  # Q
    equation: str
    answer: float
    raw_numbers: List[str] = field(default_factory=list)
    pi_value: float = math.pi
    expr: Optional[Expr] = None  # gold expression bound to value occurrences
    mtree: Optional[MTree] = None
    codes: Optional[List[List[str]]] = None

    @property
    def m(self) -> int:
        return len(self.values)

    def value_pairs(self):
        return list(zip(self.value_texts, self.values))

    def unmask(self) -> List[str]:
        """Tokens with the text numbers written back in place of their masks."""
        out = list(self.tokens)
        for i, q in enumerate(self.positions):
            if i >= len(CONSTANTS):
                out[q] = self.raw_numbers[i - len(CONSTANTS)]
        return out


def make_problem(pid, text, equation, answer, pi_value=math.pi) -> Problem:
    words, numbers = tokenize(text)
    tokens = [mask_token(i) for i in range(len(CONSTANTS))]
    positions = list(range(len(CONSTANTS)))
    value_texts = list(CONSTANTS)
    values = [1.0, pi_value]
    raw = []
    number_at = dict(numbers)
    for j, w in enumerate(words):
        if j in number_at:
            n = number_at[j]
            positions.append(len(tokens))
            tokens.append(mask_token(len(value_texts)))
            value_texts.append(format_fraction(n.exact))
            values.append(float(n.exact))
            raw.append(n.raw)
        else:
            tokens.append(w)
    return Problem(str(pid), text, tokens, value_texts, values, positions,
                   equation, answer, raw, pi_value)


_PCT_EQ = re.compile(r"(\d+(?:\.\d+)?)%")
_MIXED_EQ = re.compile(r"(\d+)\((\d+)/(\d+)\)")


def _rewrite_equation(eq: str) -> str:
    eq = eq.replace("[", "(").replace("]", ")")
    eq = _MIXED_EQ.sub(r"(\1+\2/\3)", eq)
    return _PCT_EQ.sub(r"(\1/100)", eq)


def _is_num(e, text):
    return isinstance(e, Number) and e.occurrence is None and e.exact == Fraction(text)


def _fold_special(e: Expr, specials) -> Expr:
    """Collapse sub-expressions that spell a fraction, percent or mixed number of the text."""
    if isinstance(e, Binary):
        for n in specials:
            if n.kind == "mixed" and e.op == PLUS and _is_num(e.left, n.parts[0]):
                r = e.right
                if isinstance(r, Binary) and r.op == DIVIDE and _is_num(r.left, n.parts[1]) and _is_num(r.right, n.parts[2]):
                    return Number(n.exact)
            if e.op == DIVIDE and n.kind == "frac" and _is_num(e.left, n.parts[0]) and _is_num(e.right, n.parts[1]):
                return Number(n.exact)
            if e.op == DIVIDE and n.kind == "pct" and _is_num(e.left, n.parts[0]) and _is_num(e.right, "100"):
                return Number(n.exact)
        return Binary(e.op, _fold_special(e.left, specials), _fold_special(e.right, specials))
    if isinstance(e, Negate):
        return Negate(_fold_special(e.child, specials))
    return e


def bind_expression(p: Problem, e: Expr) -> Expr:
    """Attach every operand literal of ``e`` to a value occurrence of ``p``.

    Text values are matched by exact value, earliest unused occurrence first;
    surplus uses fall back to the first matching occurrence. Literals with no
    text match bind to the constants (``1``; ``pi`` and its aliases).
    """
    exact = []
    for t in p.value_texts:
        try:
            exact.append(Fraction(t))
        except ValueError:
            exact.append(None)
    used = set()
    first = len(CONSTANTS)

    def bind(lit):
        if isinstance(lit, Constant):
            return Constant(lit.name, CONSTANTS.index(lit.name))
        matches = [i for i in range(first, p.m) if exact[i] == lit.exact]
        if matches:
            free = [i for i in matches if i not in used]
            i = free[0] if free else matches[0]
            used.add(i)
            return Number(lit.exact, i)
        if lit.exact == 1:
            return Number(lit.exact, 0)
        if lit.exact in PI_ALIASES:
            return Constant("pi", 1)
        raise UnboundLiteral(format_fraction(lit.exact))

    return map_literals(e, bind)


def _parse_bound(p: Problem) -> Expr:
    e = parse_expression(_rewrite_equation(p.equation))
    specials = [parse_number_token(r) for r in p.raw_numbers]
    specials = [n for n in specials if n.kind != "dec"]
    if specials:
        e = _fold_special(e, specials)
    return bind_expression(p, e)


def prepare(p: Problem) -> Problem:
    """Parse, bind and canonicalize the gold equation; fills expr, mtree and codes."""
    p.expr = _parse_bound(p)
    p.mtree = from_expression(p.expr, p.pi_value)
    p.codes = codec.encode(p.mtree, p.m)
    return p


def check_answer(p: Problem) -> bool:
    """The gold M-tree, decoded from its own codes, reproduces the gold answer."""
    tree = codec.decode(p.codes, p.value_pairs())
    return answers_match(eval_mtree(tree), p.answer)


# --------------------------------------------------------------------------
# corpus loading

def _iter_json_records(text: str):
    text = text.strip()
    if not text:
        return []
    if text[0] == "[":
        return json.loads(text)
    dec = json.JSONDecoder()
    out, pos = [], 0
    while pos < len(text):
        obj, end = dec.raw_decode(text, pos)
        out.append(obj)
        pos = end
        while pos < len(text) and text[pos].isspace():
            pos += 1
    return out


def _field(rec, names, rid):
    for n in names:
        if n in rec and rec[n] not in (None, ""):
            v = rec[n]
            if isinstance(v, list):
                if not v:
                    continue
                v = v[0]
            return v
    raise SchemaError(rid, names[0])


def resolve_path(path) -> str:
    """Relative paths that do not exist locally are looked up under $MTREE_DATA_DIR."""
    path = os.fspath(path)
    if os.path.exists(path) or os.path.isabs(path):
        return path
    root = os.environ.get(DATA_DIR_ENV)
    if root and os.path.exists(os.path.join(root, path)):
        return os.path.join(root, path)
    return path


def _convert(item):
    rec, fmt, pi_value, i = item
    rid = rec.get("id", rec.get("iIndex", i))
    if fmt == "math23k-json":
        text = _field(rec, ("segmented_text", "original_text", "text"), rid)
    else:
        text = _field(rec, ("text", "segmented_text", "original_text", "sQuestion"), rid)
    equation = _field(rec, ("equation", "lEquations", "Equation"), rid)
    ans = _field(rec, ("ans", "lSolutions", "answer"), rid)
    try:
        answer = parse_answer(ans)
    except (ValueError, ZeroDivisionError):
        return rid, None, "bad_answer"
    p = make_problem(rid, str(text), str(equation), answer, pi_value)
    try:
        prepare(p)
    except UnboundLiteral:
        return rid, None, "unbound_literal"
    except MTreeError as exc:
        return rid, None, type(exc).__name__
    try:
        ok = check_answer(p)
    except MTreeError as exc:
        return rid, None, type(exc).__name__
    if not ok:
        return rid, None, "answer_mismatch"
    return rid, p, None


def read_corpus(path, fmt="synthetic-json", pi_value=None, workers=0):
    """Load, tokenize, mask and encode a corpus.

    Returns ``(problems, dropped)`` where ``dropped`` lists ``{"id", "reason"}``
    for records whose equation could not be bound or did not reproduce the
    answer. Output order follows the input file.
    """
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    if pi_value is None:
        pi_value = 3.14 if fmt == "math23k-json" else math.pi
    with open(resolve_path(path), encoding="utf-8") as f:
        records = _iter_json_records(f.read())
    items = [(rec, fmt, pi_value, i) for i, rec in enumerate(records)]
    if workers and workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_convert, items, chunksize=64))
    else:
        results = [_convert(it) for it in items]
    problems, dropped = [], []
    for rid, p, reason in results:
        if p is None:
            log.info("dropped %s: %s", rid, reason)
            dropped.append({"id": str(rid), "reason": reason})
        else:
            problems.append(p)
    return problems, dropped


def load_corpus(path, fmt="synthetic-json", **kw) -> List[Problem]:
    return read_corpus(path, fmt, **kw)[0]


# --------------------------------------------------------------------------
# supervision and statistics

@dataclass
class Supervision:
    vocab: codec.CodeVocab
    problems: List[Problem]
    vectors: List[np.ndarray]  # aligned with problems, each (m, l)
    stats: dict

    def records(self):
        return [
            codec.codes_record(p.id, p.value_texts, p.codes, self.vocab)
            for p in self.problems
        ]


def operand_count(p: Problem) -> int:
    return sum(codes != [codec.NONE] for codes in p.codes)


def operand_histogram(problems) -> dict:
    hist = Counter(operand_count(p) for p in problems)
    return {str(k): hist[k] for k in sorted(hist)}


def binary_codes(p: Problem) -> List[List[str]]:
    return codec.binary_tree_codes(apply_operator_conversion(expand(p.expr)), p.m, p.pi_value)


def make_supervision(train: List[Problem], test: Optional[List[Problem]] = None, dropped=()) -> Supervision:
    """Vocabulary from ``train``, target count vectors and corpus statistics.

    Test problems with codes outside the vocabulary count against coverage
    and get no vectors (they keep their codes).
    """
    test = list(test or [])
    vocab = codec.build_vocab(p.codes for p in train)
    problems, vectors, uncovered = [], [], []
    for p in train + test:
        try:
            vectors.append(codec.vectorize(p.codes, vocab))
            problems.append(p)
        except UnknownCode as exc:
            uncovered.append({"id": p.id, "code": exc.code})
    l, coverage = codec.code_statistics([p.codes for p in train], [p.codes for p in test])
    bl, bcoverage = codec.code_statistics([binary_codes(p) for p in train], [binary_codes(p) for p in test])
    stats = {
        "vocab_size": l,
        "coverage_pct": coverage,
        "binary_tree_vocab_size": bl,
        "binary_tree_coverage_pct": bcoverage,
        "n_train": len(train),
        "n_test": len(test),
        "dropped": list(dropped),
        "uncovered": uncovered,
        "operand_histogram": operand_histogram(train + test),
    }
    return Supervision(vocab, problems, vectors, stats)


def split(problems, test_fraction=0.1, seed=0):
    """Shuffled train/test split; deterministic in ``seed``."""
    idx = list(range(len(problems)))
    random.Random(seed).shuffle(idx)
    n_test = int(round(len(idx) * test_fraction))
    test_idx = set(idx[:n_test])
    train = [p for i, p in enumerate(problems) if i not in test_idx]
    test = [p for i, p in enumerate(problems) if i in test_idx]
    return train, test


def subsample_manifest(ids, sizes, seed=0) -> dict:
    """Nested low-resource training subsets: ``{size: [ids]}``."""
    order = list(ids)
    random.Random(seed).shuffle(order)
    return {int(n): sorted(order[:n]) for n in sizes if n <= len(order)}


def fold_manifest(ids, k=5, seed=0) -> list:
    order = list(ids)
    random.Random(seed).shuffle(order)
    folds = [order[i::k] for i in range(k)]
    return [
        {"fold": i, "test": sorted(f), "train": sorted(x for j, g in enumerate(folds) if j != i for x in g)}
        for i, f in enumerate(folds)
    ]
