"""M-tree codes: per-leaf strings, count vectors over a code vocabulary, and
reconstruction of the tree from them.

A code string is ``sign_recip_op1_op2...`` where the bits give the leaf form
and the ops are the internal nodes from the root down to the leaf's parent,
e.g. ``1_0_+`` or ``0_0_+_×_+/``. Same-operator siblings carry ``@k``
(``0_0_+_×@2``). A value that does not appear in the tree has the single code
``None``.

Files
-----
codes file (JSON lines), one record per problem::

    {"id": ..., "values": ["1", "pi", "2", ...], "codes": [["None"], ["0_0_+"], ...],
     "vector_dim": l, "vectors": [[1, 0, ...], ...]}

vocabulary file: a JSON array of code strings, ``"None"`` first.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, replace
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import EmptyTree, InconsistentPath, InvalidRoot, UnknownCode
from .mtree import MERGES, Internal, Leaf, MTree, MNode, canonicalize, wrap_root
from .normalizer import ADD, BITS_FORM, FORM_BITS, OPERATORS, BTree

NONE = "None"


@dataclass(frozen=True)
class MTreeCode:
    sign: int
    recip: int
    path: Tuple[Tuple[str, Optional[int]], ...]

    def __str__(self):
        ops = "_".join(op + (f"@{dis}" if dis else "") for op, dis in self.path)
        return f"{self.sign}_{self.recip}_{ops}"

    @property
    def form(self):
        return BITS_FORM[self.sign, self.recip]

    @property
    def second_part(self):
        return str(self).split("_", 2)[2]


def parse_code(text: str) -> Optional[MTreeCode]:
    """Inverse of ``str(MTreeCode)``; returns None for the ``None`` code."""
    if text == NONE:
        return None
    parts = text.split("_")
    if len(parts) < 3 or parts[0] not in "01" or parts[1] not in "01":
        raise ValueError(f"malformed code {text!r}")
    path = []
    for p in parts[2:]:
        op, _, dis = p.partition("@")
        if op not in OPERATORS:
            raise ValueError(f"malformed code {text!r}: unknown operator {op!r}")
        path.append((op, int(dis) if dis else None))
    return MTreeCode(int(parts[0]), int(parts[1]), tuple(path))


# --------------------------------------------------------------------------
# tree -> codes

def leaf_codes(t: MTree):
    """``(leaf, code)`` for every leaf, in tree order."""
    out = []

    def walk(node, path):
        here = path + ((node.op, node.dis),)
        for c in node.children:
            if isinstance(c, Leaf):
                sign, recip = FORM_BITS[c.form]
                out.append((c, MTreeCode(sign, recip, here)))
            else:
                walk(c, here)

    walk(t.root, ())
    return out


def encode(t: MTree, m: int) -> List[List[str]]:
    """Code multiset (a sorted list) for each of the ``m`` value occurrences."""
    sets = [[] for _ in range(m)]
    for leaf, code in leaf_codes(t):
        if leaf.occurrence is None or not 0 <= leaf.occurrence < m:
            raise ValueError(f"leaf {leaf.text} has occurrence {leaf.occurrence}, expected 0..{m - 1}")
        sets[leaf.occurrence].append(str(code))
    return [sorted(s) if s else [NONE] for s in sets]


# --------------------------------------------------------------------------
# vocabulary and vectors

@dataclass(frozen=True)
class CodeVocab:
    codes: Tuple[str, ...]

    def __post_init__(self):
        if not self.codes or self.codes[0] != NONE:
            raise ValueError("vocabulary must start with 'None'")
        if len(set(self.codes)) != len(self.codes):
            raise ValueError("duplicate codes in vocabulary")
        object.__setattr__(self, "_index", {c: i for i, c in enumerate(self.codes)})

    def __len__(self):
        return len(self.codes)

    def __contains__(self, code):
        return code in self._index

    def index(self, code: str) -> int:
        return self._index[code]

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            json.dump(list(self.codes), f, ensure_ascii=False)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as f:
            return cls(tuple(json.load(f)))


def build_vocab(corpus_codesets: Iterable[Sequence[Sequence[str]]]) -> CodeVocab:
    """``None`` followed by every distinct code of the corpus, sorted."""
    seen = set()
    for codesets in corpus_codesets:
        for codes in codesets:
            seen.update(codes)
    seen.discard(NONE)
    return CodeVocab((NONE,) + tuple(sorted(seen)))


def vectorize(codesets: Sequence[Sequence[str]], vocab: CodeVocab) -> np.ndarray:
    """Count matrix of shape (m, l); raises UnknownCode on vocabulary misses."""
    out = np.zeros((len(codesets), len(vocab)), dtype=np.int64)
    for i, codes in enumerate(codesets):
        for code in codes:
            if code not in vocab:
                raise UnknownCode(code, i)
            out[i, vocab.index(code)] += 1
    return out


def round_counts(x) -> np.ndarray:
    """Nearest nonnegative integer count, halves rounded away from zero."""
    x = np.asarray(x, dtype=float)
    return np.floor(np.maximum(x, 0.0) + 0.5).astype(np.int64)


def vectors_to_codesets(vectors, vocab: CodeVocab) -> List[List[str]]:
    counts = np.asarray(vectors)
    if counts.ndim != 2 or counts.shape[1] != len(vocab):
        raise ValueError(f"expected vectors of width {len(vocab)}, got shape {counts.shape}")
    out = []
    for row in counts:
        codes = []
        for k in np.flatnonzero(row):
            codes.extend([vocab.codes[k]] * int(row[k]))
        out.append(sorted(codes) if codes else [NONE])
    return out


# --------------------------------------------------------------------------
# codes -> tree

def decode(codesets: Sequence[Sequence[str]], values: Sequence[Tuple[str, float]]) -> MTree:
    """Rebuild the canonical M-tree from per-occurrence codes.

    ``values[i]`` is ``(text, numeric value)`` of occurrence ``i``. Every
    distinct path prefix becomes one internal node; leaves hang off the node
    named by their full path.
    """
    children = {}
    leaves_at = {}
    root = None
    for occ, codes in enumerate(codesets):
        for text in codes:
            code = parse_code(text) if isinstance(text, str) else text
            if code is None:
                continue
            if code.path[0][0] != ADD:
                raise InvalidRoot(str(code))
            if root is None:
                root = code.path[:1]
            elif code.path[:1] != root:
                raise InconsistentPath(f"two different roots: {root} and {code.path[:1]}")
            for k in range(1, len(code.path)):
                parent, child = code.path[k - 1][0], code.path[k][0]
                if (parent, child) in MERGES:
                    raise InconsistentPath(f"{code}: {child} directly under {parent}")
                key = code.path[: k + 1]
                siblings = children.setdefault(code.path[:k], [])
                if key not in siblings:
                    siblings.append(key)
            vtext, value = values[occ]
            leaves_at.setdefault(code.path, []).append(Leaf(code.form, vtext, value, occ))
    if root is None:
        raise EmptyTree("every occurrence is coded None")

    def build(key) -> Internal:
        kids: List[MNode] = list(leaves_at.get(key, []))
        kids.extend(build(k) for k in children.get(key, []))
        return Internal(key[-1][0], tuple(kids))

    return canonicalize(MTree(build(root)))


def decode_vectors(vectors, vocab: CodeVocab, values) -> MTree:
    return decode(vectors_to_codesets(round_counts(vectors), vocab), values)


# --------------------------------------------------------------------------
# binary-tree ablation statistic

def _positional(node: Internal) -> Internal:
    counts = Counter(c.op for c in node.children if isinstance(c, Internal))
    seen = Counter()
    kids = []
    for c in node.children:
        if isinstance(c, Internal):
            c = _positional(c)
            if counts[c.op] >= 2:
                seen[c.op] += 1
                c = replace(c, dis=seen[c.op])
        kids.append(c)
    return Internal(node.op, tuple(kids), node.dis)


def binary_tree_codes(b: BTree, m: int, pi=math.pi) -> List[List[str]]:
    """Codes of the unmerged, order-preserving binary tree under an ADD root."""
    return encode(MTree(_positional(wrap_root(b, pi).root)), m)


def code_statistics(train_codesets, test_codesets):
    """``(code set size l, test coverage %)``.

    Coverage is the share of test problems all of whose codes occur in the
    vocabulary built from the training problems.
    """
    vocab = build_vocab(train_codesets)
    test = list(test_codesets)
    if not test:
        return len(vocab), 100.0
    covered = sum(all(c in vocab for codes in cs for c in codes) for cs in test)
    return len(vocab), 100.0 * covered / len(test)


def binary_tree_code_count(train_btrees, test_btrees):
    """Code statistics when each problem keeps its converted binary tree.

    Both arguments are sequences of ``(binary tree, m)`` pairs.
    """
    train = [binary_tree_codes(b, m) for b, m in train_btrees]
    test = [binary_tree_codes(b, m) for b, m in test_btrees]
    return code_statistics(train, test)


# --------------------------------------------------------------------------
# codes file

def codes_record(pid, value_texts, codesets, vocab: Optional[CodeVocab] = None) -> dict:
    rec = {"id": pid, "values": list(value_texts), "codes": [list(c) for c in codesets]}
    if vocab is not None:
        rec["vector_dim"] = len(vocab)
        rec["vectors"] = vectorize(codesets, vocab).tolist()
    return rec


def write_jsonl(records, path_or_file):
    def dump(f):
        for r in records:
            f.write(json.dumps(r, ensure_ascii=False) + "\n")

    if hasattr(path_or_file, "write"):
        dump(path_or_file)
    else:
        with open(path_or_file, "w", encoding="utf-8") as f:
            dump(f)


def read_jsonl(path_or_file):
    f = path_or_file if hasattr(path_or_file, "read") else open(path_or_file, encoding="utf-8")
    try:
        return [json.loads(line) for line in f if line.strip()]
    finally:
        if f is not path_or_file:
            f.close()
