"""Evaluation surface: per-label ROC_AUC with macro average, F1, confusion.

AUC is the Mann-Whitney statistic, (concordant pairs + 0.5 * tied pairs) /
(pos * neg), computed in O(n log n) with midrank tie handling, so it is
exact under arbitrary ties. A single-class label makes AUC undefined and
raises instead of silently defaulting, since a silent default would
corrupt the macro average.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import UndefinedMetricError

LABELS = ("P", "I", "O")


def _midranks(sorted_values: np.ndarray) -> np.ndarray:
    """1-based ranks where tied values share the mean of their rank range."""
    _, inverse, counts = np.unique(sorted_values, return_inverse=True, return_counts=True)
    last_rank = np.cumsum(counts).astype(np.float64)
    midrank = last_rank - (counts - 1) / 2.0
    return midrank[inverse]


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Probability a random positive outranks a random negative (ties half)."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("scores and labels must be equal-length 1-d sequences")
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == 0))
    if n_pos + n_neg != len(y):
        raise ValueError("labels must be 0 or 1")
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError(
            f"AUC undefined with {n_pos} positives and {n_neg} negatives"
        )
    order = np.argsort(s, kind="stable")
    ranks = _midranks(s[order])
    pos_rank_sum = float(np.sum(ranks[y[order] == 1]))
    u = pos_rank_sum - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def macro_roc_auc(scores: np.ndarray, targets: np.ndarray) -> float:
    """Arithmetic mean of the three per-label AUCs; columns are P, I, O."""
    scores = np.asarray(scores, dtype=np.float64)
    targets = np.asarray(targets)
    if scores.shape != targets.shape or scores.ndim != 2 or scores.shape[1] != len(LABELS):
        raise ValueError(f"expected (n, {len(LABELS)}) score and target arrays")
    aucs = [roc_auc(scores[:, k], targets[:, k]) for k in range(len(LABELS))]
    return float(np.mean(aucs))


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def as_dict(self) -> dict[str, int]:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn}


def confusion(
    probabilities: np.ndarray, targets: np.ndarray, threshold: float = 0.5
) -> dict[str, ConfusionMatrix]:
    """Per-label 2x2 matrices at ``probability >= threshold``."""
    p = np.asarray(probabilities, dtype=np.float64)
    t = np.asarray(targets)
    if p.shape != t.shape or p.ndim != 2 or p.shape[1] != len(LABELS):
        raise ValueError(f"expected (n, {len(LABELS)}) probability and target arrays")
    pred = p >= threshold
    actual = t == 1
    out = {}
    for k, name in enumerate(LABELS):
        out[name] = ConfusionMatrix(
            tp=int(np.sum(pred[:, k] & actual[:, k])),
            fp=int(np.sum(pred[:, k] & ~actual[:, k])),
            fn=int(np.sum(~pred[:, k] & actual[:, k])),
            tn=int(np.sum(~pred[:, k] & ~actual[:, k])),
        )
    return out


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def f1_at_threshold(
    probabilities: np.ndarray, targets: np.ndarray, threshold: float = 0.5
) -> tuple[dict[str, float], float]:
    """Per-label F1 (0/0 -> 0 by convention) and micro-F1 pooling all decisions."""
    matrices = confusion(probabilities, targets, threshold)
    per_label = {name: _prf(m.tp, m.fp, m.fn)[2] for name, m in matrices.items()}
    tp = sum(m.tp for m in matrices.values())
    fp = sum(m.fp for m in matrices.values())
    fn = sum(m.fn for m in matrices.values())
    return per_label, _prf(tp, fp, fn)[2]


@dataclass
class EvalReport:
    auc: dict[str, float]
    macro_auc: float
    precision: dict[str, float]
    recall: dict[str, float]
    f1: dict[str, float]
    micro_f1: float
    confusion: dict[str, ConfusionMatrix]
    threshold: float
    n_instances: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "n_instances": self.n_instances,
                "threshold": self.threshold,
                "auc": self.auc,
                "macro_auc": self.macro_auc,
                "precision": self.precision,
                "recall": self.recall,
                "f1": self.f1,
                "micro_f1": self.micro_f1,
                "confusion": {k: m.as_dict() for k, m in self.confusion.items()},
            },
            indent=2,
            sort_keys=True,
        )

    def to_row(self) -> str:
        """Flat delimited summary row for experiment tracking."""
        cells = [str(self.n_instances), format(self.macro_auc, ".6f")]
        cells += [format(self.auc[name], ".6f") for name in LABELS]
        cells += [format(self.f1[name], ".6f") for name in LABELS]
        cells.append(format(self.micro_f1, ".6f"))
        return ",".join(cells)

    ROW_HEADER = "n,macro_auc,auc_P,auc_I,auc_O,f1_P,f1_I,f1_O,micro_f1"

    def to_text(self) -> str:
        lines = [f"instances: {self.n_instances}   threshold: {self.threshold}"]
        lines.append(f"macro ROC_AUC: {self.macro_auc:.4f}")
        for name in LABELS:
            m = self.confusion[name]
            lines.append(
                f"  {name}: auc={self.auc[name]:.4f} "
                f"precision={self.precision[name]:.4f} recall={self.recall[name]:.4f} "
                f"f1={self.f1[name]:.4f} tp={m.tp} fp={m.fp} fn={m.fn} tn={m.tn}"
            )
        lines.append(f"micro F1: {self.micro_f1:.4f}")
        return "\n".join(lines)


def build_report(
    probabilities: np.ndarray, targets: np.ndarray, threshold: float = 0.5
) -> EvalReport:
    p = np.asarray(probabilities, dtype=np.float64)
    t = np.asarray(targets)
    matrices = confusion(p, t, threshold)
    auc = {name: roc_auc(p[:, k], t[:, k]) for k, name in enumerate(LABELS)}
    precision, recall, f1 = {}, {}, {}
    for name, m in matrices.items():
        precision[name], recall[name], f1[name] = _prf(m.tp, m.fp, m.fn)
    tp = sum(m.tp for m in matrices.values())
    fp = sum(m.fp for m in matrices.values())
    fn = sum(m.fn for m in matrices.values())
    return EvalReport(
        auc=auc,
        macro_auc=float(np.mean([auc[name] for name in LABELS])),
        precision=precision,
        recall=recall,
        f1=f1,
        micro_f1=_prf(tp, fp, fn)[2],
        confusion=matrices,
        threshold=threshold,
        n_instances=len(t),
    )
