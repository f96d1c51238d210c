"""From a word problem to per-number codes, count vectors and back to an answer.

Run: python3 demos/codes_and_vectors.py
"""
import numpy as np

from mtreecode import codec
from mtreecode.dataset import make_problem, make_supervision, prepare
from mtreecode.mtree import eval_mtree

text = ("Mike read 2 pages an hour for 3 hours on the first day , 4 pages on the second day "
        "and 5 pages on the third day . How many pages has Mike read so far ?")
p = prepare(make_problem("mike", text, "x=2*3+4+5", 15))

# %% Numbers are masked; the constants 1 and pi sit in front
print(" ".join(p.tokens[:12]), "...")
for v, codes in zip(p.value_texts, p.codes):
    print(f"  {v:>4}  {codes}")

# %% A second problem widens the code vocabulary
q = prepare(make_problem("cake", "a cake costs 12 and a pie 3 less , buy one of each", "x=12+(12-3)", 21))
sup = make_supervision([p, q])
print("\nvocabulary", sup.vocab.codes)
np.set_printoptions(linewidth=120)
print("vectors for the cake problem\n", sup.vectors[1])

# %% Decoding needs nothing but the vectors, the vocabulary and the values
tree = codec.decode_vectors(sup.vectors[1], sup.vocab, q.value_pairs())
print("\ndecoded", tree.serialize(), "=", eval_mtree(tree))

# %% A noisy prediction still decodes once rounded to counts
noisy = sup.vectors[0] + np.random.default_rng(0).normal(0, 0.2, sup.vectors[0].shape)
tree = codec.decode_vectors(noisy, sup.vocab, p.value_pairs())
print("from noisy vectors", tree.serialize(), "=", eval_mtree(tree))
