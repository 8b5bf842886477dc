"""Train the multi-label linear head with BCE-with-logits.

Three independent logistic outputs over any fixed input representation:
s = h @ W + b, y = sigmoid(s), loss summed per label. The demo trains on
planted vectors and writes a probability interchange file, the format
every base learner (in-repo or external) uses to talk to the stacker.
"""

import io

import numpy as np

from piostack.base_learner import (
    TrainConfig,
    predict,
    predict_proba,
    train,
    write_probability_file,
)
from piostack.metrics import build_report
from piostack.synthetic import generate_labeled_corpus

corpus = generate_labeled_corpus(600, seed=7)
ids = [s.seq_id for s in corpus.sequences]
H = corpus.planted_matrix(ids)
T = corpus.targets(ids)
print(f"{len(ids)} instances, input dim {H.shape[1]}, "
      f"positives per label: {T.sum(axis=0).astype(int)}")

head = train((H, T), TrainConfig(learning_rate=0.5, epochs=30, seed=7))
losses = head.loss_history
print("\ntraining loss trajectory (every 5 epochs):")
for k in range(0, len(losses), 5):
    bar = "#" * int(losses[k] * 30)
    print(f"  epoch {k:>2}  {losses[k]:.4f}  {bar}")

probs = predict_proba(head, H)
report = build_report(probs, T)
print(f"\ntraining-set macro ROC_AUC: {report.macro_auc:.4f}")
print("note: the planted vectors encode P and I but not O, so O stays near chance:")
for name in ("P", "I", "O"):
    print(f"  AUC_{name} = {report.auc[name]:.4f}")

buf = io.StringIO()
write_probability_file(predict(head, H[:3], ids[:3], "linear-demo"), buf)
print("\nprobability interchange format (first rows):")
print(buf.getvalue())
