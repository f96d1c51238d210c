"""Structure-unified M-trees for math word problem solutions."""

from .expr import eval_expr, parse_expression, unparse
from .mtree import MTree, canonicalize, eval_mtree, from_expression, to_mtree
from .normalizer import apply_operator_conversion, expand
from .codec import CodeVocab, build_vocab, decode, encode, vectorize

__all__ = [
    "parse_expression", "eval_expr", "unparse",
    "expand", "apply_operator_conversion",
    "MTree", "to_mtree", "canonicalize", "eval_mtree", "from_expression",
    "CodeVocab", "build_vocab", "encode", "decode", "vectorize",
]
