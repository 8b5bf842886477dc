"""Multi-label linear head with logistic outputs and BCE-with-logits training.

The head maps any fixed input representation h to three independent label
probabilities: s_i = sum_j h_j w_ji + b_i, y_i = 1 / (1 + exp(-s_i)). The
loss is the per-label binary cross entropy summed over the three labels,
evaluated in the fused overflow-safe form
``max(s, 0) - s*t + log(1 + exp(-|s|))``, which equals the textbook
``-(t log y + (1-t) log(1-y))`` exactly in exact arithmetic.

This module also owns the probability interchange file, the sole contract
with externally trained base learners.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence, TextIO

import numpy as np

from .errors import ConfigError, DivergenceError, SchemaError, ValidationError

N_LABELS = 3


@dataclass
class LinearHead:
    """Per-label linear weights plus an optional per-label bias.

    The bias strictly generalizes the pure weighted-sum form: with bias
    zero the logits reduce to s_i = sum_j h_j w_ji. It defaults on because
    class priors are imbalanced in real corpora.
    """

    weights: np.ndarray  # shape (input_dim, 3)
    bias: np.ndarray  # shape (3,)
    loss_history: list[float] = field(default_factory=list)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.weights.shape[1] != N_LABELS:
            raise ConfigError(f"weights must be (input_dim, {N_LABELS})")
        if self.bias.shape != (N_LABELS,):
            raise ConfigError(f"bias must have shape ({N_LABELS},)")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise ConfigError("head parameters must be finite")

    @property
    def input_dim(self) -> int:
        return self.weights.shape[0]

    @classmethod
    def zeros(cls, input_dim: int) -> "LinearHead":
        return cls(weights=np.zeros((input_dim, N_LABELS)), bias=np.zeros(N_LABELS))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    epochs: int = 50
    batch_size: int = 64
    seed: int = 0
    l2: float = 1e-4
    use_bias: bool = True

    def __post_init__(self):
        if self.learning_rate <= 0 or self.epochs <= 0 or self.batch_size <= 0:
            raise ConfigError("learning_rate, epochs and batch_size must be positive")
        if self.l2 < 0:
            raise ConfigError("l2 must be non-negative")


def forward_logits(h: np.ndarray, head: LinearHead) -> np.ndarray:
    """s = h @ W + b for one vector or a batch of rows."""
    h = np.asarray(h, dtype=np.float64)
    if h.shape[-1] != head.input_dim:
        raise ValueError(f"input dim {h.shape[-1]} != head dim {head.input_dim}")
    return h @ head.weights + head.bias


def sigmoid(s: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function (sign-split form)."""
    s = np.asarray(s, dtype=np.float64)
    out = np.empty_like(s)
    pos = s >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-s[pos]))
    es = np.exp(s[~pos])
    out[~pos] = es / (1.0 + es)
    return out


def bce_with_logits(s: np.ndarray, t: np.ndarray) -> float:
    """Summed binary cross entropy of logits ``s`` against 0/1 targets ``t``."""
    s = np.asarray(s, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if s.shape != t.shape:
        raise ValueError("logits and targets must have the same shape")
    per = np.maximum(s, 0.0) - s * t + np.log1p(np.exp(-np.abs(s)))
    return float(np.sum(per))


def mean_bce_with_logits(s: np.ndarray, t: np.ndarray) -> float:
    """Mean over instances of the per-instance (3-label summed) loss."""
    s = np.atleast_2d(np.asarray(s, dtype=np.float64))
    return bce_with_logits(s, np.atleast_2d(t)) / s.shape[0]


def gradient(
    s: np.ndarray, t: np.ndarray, h: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Loss gradient for one instance: dW_ji = (y_i - t_i) h_j, db_i = y_i - t_i."""
    s = np.asarray(s, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    if s.shape != (N_LABELS,) or t.shape != (N_LABELS,) or h.ndim != 1:
        raise ValueError("gradient expects one instance: s,t of shape (3,), h 1-d")
    err = sigmoid(s) - t
    return np.outer(h, err), err


def train(
    dataset: Sequence[tuple[np.ndarray, np.ndarray]] | tuple[np.ndarray, np.ndarray],
    config: TrainConfig | None = None,
) -> LinearHead:
    """Mini-batch gradient descent with seed-determined shuffling.

    Accepts either a sequence of (h, t) pairs or a pre-stacked (H, T)
    array pair. The returned head carries the full training-loss
    trajectory (entry 0 is the pre-training loss). Deterministic: the same
    seed and data give bitwise-identical weights.
    """
    config = config or TrainConfig()
    if isinstance(dataset, tuple) and len(dataset) == 2 and np.ndim(dataset[0]) == 2:
        H = np.asarray(dataset[0], dtype=np.float64)
        T = np.asarray(dataset[1], dtype=np.float64)
    else:
        if len(dataset) == 0:
            raise ValueError("dataset must be non-empty")
        H = np.stack([np.asarray(h, dtype=np.float64) for h, _ in dataset])
        T = np.stack([np.asarray(t, dtype=np.float64) for _, t in dataset])
    if H.shape[0] == 0:
        raise ValueError("dataset must be non-empty")
    if T.shape != (H.shape[0], N_LABELS):
        raise ValueError(f"targets must have shape (n, {N_LABELS})")

    n = H.shape[0]
    head = LinearHead.zeros(H.shape[1])
    rng = np.random.default_rng(config.seed)
    head.loss_history.append(mean_bce_with_logits(forward_logits(H, head), T))

    for epoch in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            hb, tb = H[idx], T[idx]
            err = sigmoid(forward_logits(hb, head)) - tb
            grad_w = hb.T @ err / len(idx) + config.l2 * head.weights
            head.weights -= config.learning_rate * grad_w
            if config.use_bias:
                head.bias -= config.learning_rate * err.mean(axis=0)
        loss = mean_bce_with_logits(forward_logits(H, head), T)
        if not math.isfinite(loss):
            raise DivergenceError(epoch + 1)
        head.loss_history.append(loss)
    return head


def predict_proba(head: LinearHead, h: np.ndarray) -> np.ndarray:
    """sigmoid(forward_logits(h)); per-instance, order-preserving."""
    return sigmoid(forward_logits(h, head))


@dataclass(frozen=True)
class BaseProbabilities:
    """One base learner's probability triple for one instance."""

    instance_id: str
    model_name: str
    p: tuple[float, float, float]

    def __post_init__(self):
        if len(self.p) != N_LABELS:
            raise ValidationError(f"expected {N_LABELS} probabilities, got {len(self.p)}")
        for value in self.p:
            if not (math.isfinite(value) and 0.0 <= value <= 1.0):
                raise ValidationError(f"probability {value!r} outside [0, 1]")


def predict(
    head: LinearHead, H: np.ndarray, instance_ids: Sequence[str], model_name: str
) -> list[BaseProbabilities]:
    H = np.atleast_2d(np.asarray(H, dtype=np.float64))
    if len(instance_ids) != H.shape[0]:
        raise ValueError("one instance id per row required")
    probs = predict_proba(head, H)
    return [
        BaseProbabilities(instance_id=iid, model_name=model_name, p=tuple(row))
        for iid, row in zip(instance_ids, probs.tolist())
    ]


# -- probability interchange file ------------------------------------------
#
# Delimited text with header ``id,model,p_P,p_I,p_O``, UTF-8, '.' decimal
# separator, 17 significant digits. This is the only contract between the
# in-repo pipeline and externally trained base learners.

PROBABILITY_HEADER = ("id", "model", "p_P", "p_I", "p_O")


def write_probability_file(records: Iterable[BaseProbabilities], fh: TextIO) -> int:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(PROBABILITY_HEADER)
    n = 0
    for rec in records:
        writer.writerow([rec.instance_id, rec.model_name]
                        + [format(v, ".17g") for v in rec.p])
        n += 1
    return n


HEAD_FORMAT = "piostack-linear-head"
HEAD_VERSION = 1


def head_to_json(head: LinearHead, model_name: str) -> str:
    return json.dumps(
        {
            "format": HEAD_FORMAT,
            "version": HEAD_VERSION,
            "model_name": model_name,
            "weights": head.weights.tolist(),
            "bias": head.bias.tolist(),
            "loss_history": head.loss_history,
        }
    )


def head_from_json(text: str) -> tuple[LinearHead, str]:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"head file is not valid JSON: {exc}") from exc
    if obj.get("format") != HEAD_FORMAT:
        raise SchemaError(f"not a linear-head file (format={obj.get('format')!r})")
    if obj.get("version") != HEAD_VERSION:
        raise SchemaError(f"head version {obj.get('version')!r} unsupported")
    head = LinearHead(
        weights=np.asarray(obj["weights"], dtype=np.float64),
        bias=np.asarray(obj["bias"], dtype=np.float64),
        loss_history=[float(x) for x in obj.get("loss_history", [])],
    )
    return head, str(obj.get("model_name", "linear"))


# Generic fixed-vector file: the base learner accepts any externally
# supplied representation, one ``id,f0,...,fk`` row per instance.


def write_vectors_file(ids: Sequence[str], matrix: np.ndarray, fh: TextIO) -> int:
    matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    if len(ids) != matrix.shape[0]:
        raise ValueError("one id per matrix row required")
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["id"] + [f"f{k}" for k in range(matrix.shape[1])])
    for iid, row in zip(ids, matrix):
        writer.writerow([iid] + [format(v, ".17g") for v in row])
    return len(ids)


def read_vectors_file(fh: TextIO) -> tuple[list[str], np.ndarray]:
    reader = csv.reader(fh)
    header = next(reader, None)
    if not header or header[0] != "id" or len(header) < 2:
        raise ValidationError("vectors file header must be id,f0,...")
    width = len(header) - 1
    ids: list[str] = []
    rows: list[list[float]] = []
    for rowno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != width + 1:
            raise ValidationError(f"vectors file row {rowno}: wrong column count")
        try:
            rows.append([float(v) for v in row[1:]])
        except ValueError as exc:
            raise ValidationError(f"vectors file row {rowno}: {exc}") from exc
        ids.append(row[0])
    if len(set(ids)) != len(ids):
        raise ValidationError("vectors file contains duplicate ids")
    return ids, np.asarray(rows, dtype=np.float64)


def read_probability_file(fh: TextIO) -> list[BaseProbabilities]:
    """Read and validate an interchange file; row numbers are 1-based."""
    reader = csv.reader(fh)
    header = next(reader, None)
    if header is None or tuple(header) != PROBABILITY_HEADER:
        raise ValidationError(
            f"probability file header must be {','.join(PROBABILITY_HEADER)}"
        )
    records: list[BaseProbabilities] = []
    seen: set[tuple[str, str]] = set()
    for rowno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(PROBABILITY_HEADER):
            raise ValidationError(f"row {rowno}: expected {len(PROBABILITY_HEADER)} columns")
        instance_id, model_name = row[0], row[1]
        try:
            p = tuple(float(v) for v in row[2:5])
        except ValueError as exc:
            raise ValidationError(f"row {rowno}: {exc}") from exc
        try:
            record = BaseProbabilities(instance_id=instance_id, model_name=model_name, p=p)
        except ValidationError as exc:
            raise ValidationError(f"row {rowno}: {exc}") from exc
        key = (instance_id, model_name)
        if key in seen:
            raise ValidationError(f"row {rowno}: duplicate id {instance_id!r} for model {model_name!r}")
        seen.add(key)
        records.append(record)
    return records
