"""Templated synthetic word problems for desk-scale training and CI.

Each problem is a random arithmetic expression over 2-5 operands, spelled
out in prefix-style English ("the sum of 3 and the product of 4 and 7"),
optionally wrapped in a short story with distractor numbers. Operands are
distinct, never equal to 1, and every denominator is nonzero (checked with
exact arithmetic). Expressions whose M-tree has a root-to-leaf path of more
than three operators, or more than two same-operator siblings, are redrawn;
this keeps the code inventory small enough that any 90% split of a few
thousand problems covers it.
"""

from __future__ import annotations

import json
import math
import random
from fractions import Fraction

from .codec import leaf_codes
from .expr import DIVIDE, MINUS, PLUS, POWER, TIMES, Binary, Constant, Number, eval_expr, unparse
from .mtree import from_expression

NAMES = ["Mike", "Anna", "Tom", "Lily", "Sam", "Nora", "Ben", "Eva", "Jack", "Mia"]
OBJECTS = ["apples", "pages", "candies", "books", "coins", "stamps", "pencils", "marbles"]

PREFIX = {
    PLUS: [("the sum of", "and"), ("the total of", "and")],
    MINUS: [("the difference of", "and"), ("the difference between", "and")],
    TIMES: [("the product of", "and")],
    DIVIDE: [("the quotient of", "and"), ("the ratio of", "to")],
}
# only used when both operands are plain numbers; "{r}" marks reversed order
INFIX = {
    PLUS: ["plus", "added to"],
    MINUS: ["minus", "{r}subtracted from"],
    TIMES: ["times", "multiplied by"],
    DIVIDE: ["divided by"],
}
QUESTIONS = ["what is {e} ?", "compute {e} .", "find {e} .", "{name} wants to know {e} ."]
DISTRACTORS = [
    "{name} has {d} {obj} .",
    "there are {d} {obj} in the box .",
    "{name} is {d} years old .",
]

OPERAND_WEIGHTS = {2: 0.3, 3: 0.35, 4: 0.25, 5: 0.1}
DISTRACTOR_WEIGHTS = {0: 0.5, 1: 0.35, 2: 0.15}
MAX_TEXT_NUMBERS = 6
MAX_PATH = 3
MAX_SAME_OP_SIBLINGS = 2


def _draw(rng, weights):
    keys = list(weights)
    return rng.choices(keys, [weights[k] for k in keys])[0]


def _number(rng, taken):
    while True:
        if rng.random() < 0.15:
            v = Fraction(rng.randint(11, 99), 10)
        else:
            v = Fraction(rng.randint(2, 60))
        if v not in taken and v != 1:
            taken.add(v)
            return v


def _fmt(v: Fraction) -> str:
    return str(v.numerator) if v.denominator == 1 else str(float(v))


def _leaf(rng, taken):
    r = rng.random()
    if r < 0.05:
        return ("one",)
    if r < 0.10:
        return ("circle", _number(rng, taken))
    return ("num", _number(rng, taken))


def _tree(rng, leaves):
    if len(leaves) == 1:
        return leaves[0]
    k = rng.randint(1, len(leaves) - 1)
    op = rng.choices([PLUS, MINUS, TIMES, DIVIDE], [0.3, 0.25, 0.25, 0.2])[0]
    return ("op", op, _tree(rng, leaves[:k]), _tree(rng, leaves[k:]))


def _to_expr(node):
    kind = node[0]
    if kind == "num":
        return Number(node[1])
    if kind == "one":
        return Number(1)
    if kind == "circle":
        return Binary(TIMES, Constant("pi"), Binary(POWER, Number(node[1]), Number(2)))
    return Binary(node[1], _to_expr(node[2]), _to_expr(node[3]))


def _exact(node):
    """Exact value, or None when some denominator is zero."""
    kind = node[0]
    if kind == "num":
        return node[1]
    if kind == "one":
        return Fraction(1)
    if kind == "circle":
        return Fraction(math.pi) * node[1] ** 2
    a, b = _exact(node[2]), _exact(node[3])
    if a is None or b is None:
        return None
    op = node[1]
    if op == DIVIDE:
        return None if b == 0 else a / b
    return a + b if op == PLUS else a - b if op == MINUS else a * b


def _small_code_space(expr) -> bool:
    for _, code in leaf_codes(from_expression(expr)):
        if len(code.path) > MAX_PATH or any((dis or 0) > MAX_SAME_OP_SIBLINGS for _, dis in code.path):
            return False
    return True


def _words(rng, node):
    kind = node[0]
    if kind == "num":
        return _fmt(node[1])
    if kind == "one":
        return "one"
    if kind == "circle":
        return f"the area of a circle with radius {_fmt(node[1])}"
    _, op, left, right = node
    a, b = _words(rng, left), _words(rng, right)
    if left[0] == right[0] == "num" and rng.random() < 0.5:
        word = rng.choice(INFIX[op])
        if word.startswith("{r}"):
            return f"{b} {word[3:]} {a}"
        return f"{a} {word} {b}"
    head, sep = rng.choice(PREFIX[op])
    return f"{head} {a} {sep} {b}"


def generate_problem(rng: random.Random, pid) -> dict:
    while True:
        taken = set()
        k = _draw(rng, OPERAND_WEIGHTS)
        leaves = [_leaf(rng, taken) for _ in range(k)]
        tree = _tree(rng, leaves)
        value = _exact(tree)
        if value is None or abs(value) > 1e7:
            continue
        expr = _to_expr(tree)
        if not _small_code_space(expr):
            continue
        text_numbers = sum(leaf[0] != "one" for leaf in leaves)
        n_distract = min(_draw(rng, DISTRACTOR_WEIGHTS), MAX_TEXT_NUMBERS - text_numbers)
        if text_numbers + n_distract < 2:
            n_distract = 2 - text_numbers
        name = rng.choice(NAMES)
        question = rng.choice(QUESTIONS).format(e=_words(rng, tree), name=name)
        sentences = [question]
        for _ in range(n_distract):
            d = _fmt(_number(rng, taken))
            s = rng.choice(DISTRACTORS).format(name=rng.choice(NAMES), d=d, obj=rng.choice(OBJECTS))
            sentences.insert(rng.randint(0, len(sentences)), s)
        return {
            "id": pid,
            "text": " ".join(sentences),
            "equation": "x=" + unparse(expr),
            "ans": eval_expr(expr),
        }


def generate_corpus(n: int, seed: int = 0) -> list:
    rng = random.Random(seed)
    return [generate_problem(rng, f"syn-{i:05d}") for i in range(n)]


def write_corpus(path, n: int, seed: int = 0):
    with open(path, "w", encoding="utf-8") as f:
        for rec in generate_corpus(n, seed):
            f.write(json.dumps(rec) + "\n")
