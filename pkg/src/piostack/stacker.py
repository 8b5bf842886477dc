"""Stacked generalization protocol over the boosted-tree ensemble.

The data is split once into a base split (60%, trains the base learners)
and a stack split (40%, never seen by a base learner). The stack split is
cut into five folds; per label, a boosted-tree ensemble is trained on four
folds and predicts the fifth, so every stack instance receives exactly one
out-of-fold prediction from a model that never saw it. The deployable
predictor averages the five fold models.

The split and fold assignment are seed-deterministic and persisted, and
every entry point re-checks the no-leakage invariant (base and stack id
sets disjoint) before touching data.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence, TextIO

import numpy as np

from .errors import ProtocolError, SchemaError, ValidationError
from .gbdt import BoostedTrees, GbdtConfig, fit_gbdt
from .metrics import LABELS, macro_roc_auc

STACKED_MODEL_FORMAT = "piostack-stacked-gbdt"
STACKED_MODEL_VERSION = 1

#: Text-feature columns appended after the per-model probability columns.
TEXT_FEATURE_COLUMNS = ("avg_tfidf", "pct", "pop", "dose", "num")


@dataclass(frozen=True)
class SplitProtocol:
    base_fraction: float = 0.6
    stack_folds: int = 5
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.base_fraction < 1:
            raise ProtocolError("base_fraction must be in (0, 1)")
        if self.stack_folds < 2:
            raise ProtocolError("need at least 2 folds")


@dataclass
class SplitAssignment:
    """A concrete, persisted base/stack id split."""

    base_ids: list[str]
    stack_ids: list[str]
    protocol: SplitProtocol

    def validate(self) -> None:
        base, stack = set(self.base_ids), set(self.stack_ids)
        if len(base) != len(self.base_ids) or len(stack) != len(self.stack_ids):
            raise ProtocolError("split contains duplicate ids")
        overlap = base & stack
        if overlap:
            raise ProtocolError(
                f"base/stack leakage: {len(overlap)} shared ids (e.g. {sorted(overlap)[:3]})"
            )

    def to_json(self) -> str:
        return json.dumps(
            {
                "base_fraction": self.protocol.base_fraction,
                "stack_folds": self.protocol.stack_folds,
                "seed": self.protocol.seed,
                "base_ids": self.base_ids,
                "stack_ids": self.stack_ids,
            },
            indent=0,
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "SplitAssignment":
        try:
            obj = json.loads(text)
            assignment = cls(
                base_ids=[str(x) for x in obj["base_ids"]],
                stack_ids=[str(x) for x in obj["stack_ids"]],
                protocol=SplitProtocol(
                    base_fraction=float(obj["base_fraction"]),
                    stack_folds=int(obj["stack_folds"]),
                    seed=int(obj["seed"]),
                ),
            )
        except (KeyError, ValueError, TypeError, json.JSONDecodeError) as exc:
            raise SchemaError(f"bad split file: {exc}") from exc
        assignment.validate()
        return assignment


def split_base_stack(ids: Sequence[str], protocol: SplitProtocol) -> SplitAssignment:
    """Seed-deterministic shuffle into |base| = round(base_fraction * N)."""
    ids = list(ids)
    if len(set(ids)) != len(ids):
        raise ProtocolError("ids must be unique")
    if len(ids) < 2 * protocol.stack_folds:
        raise ProtocolError(
            f"need at least {2 * protocol.stack_folds} ids to form a split, got {len(ids)}"
        )
    rng = np.random.default_rng(protocol.seed)
    order = rng.permutation(len(ids))
    n_base = int(round(protocol.base_fraction * len(ids)))
    shuffled = [ids[k] for k in order]
    assignment = SplitAssignment(
        base_ids=shuffled[:n_base], stack_ids=shuffled[n_base:], protocol=protocol
    )
    assignment.validate()
    return assignment


def make_folds(stack_ids: Sequence[str], k: int = 5, seed: int = 0) -> list[list[str]]:
    """Shuffle and partition into k folds whose sizes differ by at most one."""
    ids = list(stack_ids)
    if len(set(ids)) != len(ids):
        raise ProtocolError("fold ids must be unique")
    if len(ids) < k:
        raise ProtocolError(f"cannot form {k} folds from {len(ids)} ids")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ids))
    shuffled = [ids[j] for j in order]
    return [list(chunk) for chunk in np.array_split(np.array(shuffled, dtype=object), k)]


@dataclass(frozen=True)
class StackInstance:
    """One stack-split instance: meta-features plus the target triple.

    Column order of ``x``: for each base model, its (p_P, p_I, p_O), then
    avg_tfidf and the four QIEF counts.
    """

    instance_id: str
    x: tuple[float, ...]
    t: tuple[int, int, int]


def build_stack_instances(
    ids: Sequence[str],
    probabilities: dict[str, dict[str, tuple[float, float, float]]],
    text_features: dict[str, tuple[float, float, float, float, float]],
    targets: dict[str, tuple[int, int, int]],
    model_order: Sequence[str],
) -> list[StackInstance]:
    """Assemble instances in the documented column order; any missing piece
    is a validation error naming the instance."""
    instances = []
    for iid in ids:
        x: list[float] = []
        for model in model_order:
            per_model = probabilities.get(model, {})
            if iid not in per_model:
                raise ValidationError(f"no probabilities from model {model!r} for id {iid!r}")
            x.extend(per_model[iid])
        if iid not in text_features:
            raise ValidationError(f"no text features for id {iid!r}")
        x.extend(text_features[iid])
        if iid not in targets:
            raise ValidationError(f"no targets for id {iid!r}")
        instances.append(StackInstance(instance_id=iid, x=tuple(x), t=targets[iid]))
    return instances


def stack_feature_columns(model_order: Sequence[str]) -> list[str]:
    cols = []
    for k, _ in enumerate(model_order, start=1):
        cols += [f"m{k}_pP", f"m{k}_pI", f"m{k}_pO"]
    cols += list(TEXT_FEATURE_COLUMNS)
    return cols


def write_stack_matrix(instances: Iterable[StackInstance], model_order: Sequence[str], fh: TextIO) -> int:
    header = ["id"] + stack_feature_columns(model_order) + ["t_P", "t_I", "t_O"]
    fh.write(",".join(header) + "\n")
    n = 0
    for inst in instances:
        if len(inst.x) != len(header) - 4:
            raise ValidationError(
                f"instance {inst.instance_id!r} has {len(inst.x)} features, expected {len(header) - 4}"
            )
        cells = [inst.instance_id]
        cells += [format(v, ".17g") for v in inst.x]
        cells += [str(v) for v in inst.t]
        fh.write(",".join(cells) + "\n")
        n += 1
    return n


def read_stack_matrix(fh: TextIO) -> tuple[list[StackInstance], list[str]]:
    header_line = fh.readline().strip()
    cols = header_line.split(",") if header_line else []
    if len(cols) < 5 or cols[0] != "id" or cols[-3:] != ["t_P", "t_I", "t_O"]:
        raise ValidationError("stack matrix header must be id,<features...>,t_P,t_I,t_O")
    n_features = len(cols) - 4
    instances = []
    for lineno, line in enumerate(fh, start=2):
        line = line.strip()
        if not line:
            continue
        cells = line.split(",")
        if len(cells) != len(cols):
            raise ValidationError(f"stack matrix row {lineno}: wrong column count")
        try:
            x = tuple(float(v) for v in cells[1 : 1 + n_features])
            t = tuple(int(v) for v in cells[-3:])
        except ValueError as exc:
            raise ValidationError(f"stack matrix row {lineno}: {exc}") from exc
        if any(v not in (0, 1) for v in t):
            raise ValidationError(f"stack matrix row {lineno}: targets must be 0/1")
        instances.append(StackInstance(instance_id=cells[0], x=x, t=t))
    return instances, cols[1 : 1 + n_features]


@dataclass
class StackedModel:
    """Five fold-models per label plus the protocol that produced them."""

    fold_models: list[dict[str, BoostedTrees]]
    folds: list[list[str]]
    assignment: SplitAssignment
    config: GbdtConfig
    feature_columns: list[str]

    @property
    def n_features(self) -> int:
        return len(self.feature_columns)

    def to_json(self) -> str:
        return json.dumps(
            {
                "format": STACKED_MODEL_FORMAT,
                "version": STACKED_MODEL_VERSION,
                "protocol": {
                    "base_fraction": self.assignment.protocol.base_fraction,
                    "stack_folds": self.assignment.protocol.stack_folds,
                    "seed": self.assignment.protocol.seed,
                },
                "base_ids": self.assignment.base_ids,
                "stack_ids": self.assignment.stack_ids,
                "folds": self.folds,
                "feature_columns": self.feature_columns,
                "config": self.config.as_dict(),
                "fold_models": [
                    {label: model.to_dict() for label, model in fold.items()}
                    for fold in self.fold_models
                ],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "StackedModel":
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"model file is not valid JSON: {exc}") from exc
        if obj.get("format") != STACKED_MODEL_FORMAT:
            raise SchemaError(f"not a stacked model file (format={obj.get('format')!r})")
        if obj.get("version") != STACKED_MODEL_VERSION:
            raise SchemaError(
                f"model version {obj.get('version')!r} unsupported "
                f"(expected {STACKED_MODEL_VERSION})"
            )
        try:
            protocol = SplitProtocol(
                base_fraction=float(obj["protocol"]["base_fraction"]),
                stack_folds=int(obj["protocol"]["stack_folds"]),
                seed=int(obj["protocol"]["seed"]),
            )
            assignment = SplitAssignment(
                base_ids=[str(x) for x in obj["base_ids"]],
                stack_ids=[str(x) for x in obj["stack_ids"]],
                protocol=protocol,
            )
            model = cls(
                fold_models=[
                    {label: BoostedTrees.from_dict(m) for label, m in fold.items()}
                    for fold in obj["fold_models"]
                ],
                folds=[[str(x) for x in fold] for fold in obj["folds"]],
                assignment=assignment,
                config=GbdtConfig.from_dict(obj["config"]),
                feature_columns=[str(c) for c in obj["feature_columns"]],
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad stacked model payload: {exc}") from exc
        assignment.validate()
        return model


@dataclass
class StackingResult:
    model: StackedModel
    oof_ids: list[str]
    oof_probabilities: np.ndarray  # aligned with oof_ids, shape (n, 3)
    oof_targets: np.ndarray
    cv_scores: list[float] = field(default_factory=list)
    mean_cv_score: float = 0.0


def _instances_to_arrays(instances: Sequence[StackInstance]) -> tuple[np.ndarray, np.ndarray]:
    X = np.array([inst.x for inst in instances], dtype=np.float64)
    T = np.array([inst.t for inst in instances], dtype=np.float64)
    return X, T


def fit_stacked(
    instances: Sequence[StackInstance],
    assignment: SplitAssignment,
    config: GbdtConfig | None = None,
    feature_columns: Sequence[str] | None = None,
) -> StackingResult:
    """Cross-validated stacking fit over the stack split.

    Refuses to run on a leaky or mismatched split. Produces exactly one
    out-of-fold prediction per stack instance, per-fold macro ROC_AUC
    scores, and the final averaged predictor.
    """
    config = config or GbdtConfig()
    assignment.validate()
    ids = [inst.instance_id for inst in instances]
    if len(set(ids)) != len(ids):
        raise ProtocolError("duplicate instance ids in stacking input")
    base, stack = set(assignment.base_ids), set(assignment.stack_ids)
    leaked = sorted(set(ids) & base)
    if leaked:
        raise ProtocolError(f"stack instances overlap base split (e.g. {leaked[:3]})")
    if set(ids) != stack:
        missing = sorted(stack - set(ids))[:3]
        extra = sorted(set(ids) - stack)[:3]
        raise ProtocolError(
            f"stack instances must cover the stack split exactly "
            f"(missing e.g. {missing}, unexpected e.g. {extra})"
        )
    if feature_columns is None:
        feature_columns = [f"x{k}" for k in range(len(instances[0].x))]
    if any(len(inst.x) != len(feature_columns) for inst in instances):
        raise ValidationError("inconsistent feature vector lengths")

    folds = make_folds(assignment.stack_ids, k=assignment.protocol.stack_folds,
                       seed=assignment.protocol.seed)
    by_id = {inst.instance_id: inst for inst in instances}
    X_all, T_all = _instances_to_arrays(instances)
    row_of = {iid: k for k, iid in enumerate(ids)}

    fold_models: list[dict[str, BoostedTrees]] = []
    oof_probs = np.full((len(instances), len(LABELS)), np.nan, dtype=np.float64)
    oof_seen: set[str] = set()
    cv_scores: list[float] = []

    for fold_ids in folds:
        held = set(fold_ids)
        train_instances = [by_id[iid] for iid in assignment.stack_ids if iid not in held]
        X_train, T_train = _instances_to_arrays(train_instances)
        X_held = np.array([by_id[iid].x for iid in fold_ids], dtype=np.float64)
        T_held = np.array([by_id[iid].t for iid in fold_ids], dtype=np.float64)

        per_label: dict[str, BoostedTrees] = {}
        fold_pred = np.empty((len(fold_ids), len(LABELS)), dtype=np.float64)
        for k, label in enumerate(LABELS):
            model = fit_gbdt(X_train, T_train[:, k], config)
            per_label[label] = model
            fold_pred[:, k] = model.predict_proba(X_held)
        fold_models.append(per_label)

        for j, iid in enumerate(fold_ids):
            if iid in oof_seen:
                raise ProtocolError(f"instance {iid!r} predicted out-of-fold twice")
            oof_seen.add(iid)
            oof_probs[row_of[iid]] = fold_pred[j]
        cv_scores.append(macro_roc_auc(fold_pred, T_held))

    if oof_seen != stack or np.any(np.isnan(oof_probs)):
        raise ProtocolError("out-of-fold predictions do not cover the stack split exactly")

    stacked = StackedModel(
        fold_models=fold_models,
        folds=folds,
        assignment=assignment,
        config=config,
        feature_columns=list(feature_columns),
    )
    return StackingResult(
        model=stacked,
        oof_ids=ids,
        oof_probabilities=oof_probs,
        oof_targets=T_all,
        cv_scores=cv_scores,
        mean_cv_score=float(np.mean(cv_scores)),
    )


def predict_stacked(model: StackedModel, x: np.ndarray) -> np.ndarray:
    """Mean over fold models of per-label probabilities; accepts one vector
    or a batch of rows in training column order."""
    X = np.asarray(x, dtype=np.float64)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != model.n_features:
        raise ValueError(
            f"feature count {X.shape[1]} does not match training columns ({model.n_features})"
        )
    acc = np.zeros((X.shape[0], len(LABELS)), dtype=np.float64)
    for fold in model.fold_models:
        for k, label in enumerate(LABELS):
            acc[:, k] += fold[label].predict_proba(X)
    acc /= len(model.fold_models)
    return acc[0] if single else acc
