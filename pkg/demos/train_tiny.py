"""Train a small model on generated problems and inspect a few predictions.

Run: python3 demos/train_tiny.py  (about a minute on one core)
"""
import logging

from mtreecode import dataset
from mtreecode.model import TrainConfig, answer_accuracy, predict_answer, train
from mtreecode.synthetic import generate_corpus

logging.basicConfig(level=logging.INFO, format="%(message)s")

# %% 1,500 generated problems, held-out tenth for evaluation
problems = [dataset.prepare(dataset.make_problem(r["id"], r["text"], r["equation"], r["ans"]))
            for r in generate_corpus(1500, seed=3)]
train_set, test_set = dataset.split(problems, 0.1, seed=0)
sup = dataset.make_supervision(train_set, test_set)
print(f"{len(train_set)} train / {len(test_set)} test, l = {sup.stats['vocab_size']}, "
      f"coverage {sup.stats['coverage_pct']:.1f}%")

# %% Training
cfg = TrainConfig(embed_dim=32, hidden=64, ffn=(128, 64), epochs=15, batch_size=32, log_timing=False)
model, log = train(train_set, sup.vocab, cfg, dev=test_set)
print("held-out accuracy", answer_accuracy(model, test_set))

# %% A few predictions next to the gold
for p in test_set[:5]:
    answer, diag = predict_answer(model, p)
    print(f"{p.text[:60]:<60}  gold {p.answer:<10g} got {answer}  {diag.get('mtree') or diag['error']}")
