"""Walk one expression through parsing, expansion, operator conversion and merging.

Run: python3 demos/canonical_forms.py
"""
from mtreecode.expr import parse_expression, unparse
from mtreecode.mtree import canonicalize, eval_mtree, from_expression, to_mtree, wrap_root
from mtreecode.normalizer import apply_operator_conversion, expand, terms_to_expr

# %% Several spellings of the same computation
spellings = ["2*3+4+5", "5+3*2+4", "x=(4+5)+2*3", "4+(5+3*2)"]
for s in spellings:
    print(f"{s:>14}  ->  {from_expression(parse_expression(s)).serialize()}")

# %% The intermediate stages for something with subtraction and division
e = parse_expression("1/(3+1)*2-8")
print("\nparsed      ", unparse(e))
terms = expand(e)
print("expanded    ", unparse(terms_to_expr(terms)))
b = apply_operator_conversion(terms)
print("binary      ", wrap_root(b).serialize())  # below the root wrapper every node has two children
t = to_mtree(b)
print("merged      ", t.serialize())
print("canonical   ", canonicalize(t).serialize())
print("value       ", eval_mtree(t))

# %% Siblings with the same operator get a stable disambiguator
print("\n2*3+4*5     ", from_expression(parse_expression("2*3+4*5")).serialize())
