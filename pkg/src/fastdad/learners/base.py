"""Learner interface, target encodings, per-task losses, and model selection."""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from ..tables import Table, TaskKind

PROB_ATOL = 1e-6
LOG_FLOOR = 1e-12


@dataclass
class SoftTargets:
    """Per-row targets: scalars (regression / binary Brier) or probability
    vectors (multiclass)."""

    values: np.ndarray  # (n,) scalar kind, (n, C) prob kind

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim not in (1, 2):
            raise ValueError("targets must be (n,) scalars or (n, C) probability vectors")

    @property
    def kind(self) -> str:
        return "scalar" if self.values.ndim == 1 else "probs"

    @property
    def n_rows(self) -> int:
        return len(self.values)

    def validate(self, task: Optional[TaskKind] = None) -> None:
        if self.kind == "probs":
            if np.any(self.values < 0):
                raise ValueError("probability targets must be non-negative")
            sums = self.values.sum(axis=1)
            if not np.all(np.abs(sums - 1.0) <= PROB_ATOL):
                raise ValueError("probability targets must sum to 1")
            if task is not None and task.kind == "multiclass" and self.values.shape[1] != task.n_classes:
                raise ValueError("class count mismatch")
        elif task is not None and task.kind == "binary":
            if np.any(self.values < 0) or np.any(self.values > 1):
                raise ValueError("binary targets must lie in [0, 1]")

    def as_matrix(self) -> np.ndarray:
        return self.values[:, None] if self.kind == "scalar" else self.values

    def take(self, idx) -> "SoftTargets":
        return SoftTargets(self.values[idx])

    @staticmethod
    def concat(a: "SoftTargets", b: "SoftTargets") -> "SoftTargets":
        if a.kind != b.kind:
            raise ValueError(f"cannot mix target kinds: {a.kind} vs {b.kind}")
        if a.kind == "probs" and a.values.shape[1] != b.values.shape[1]:
            raise ValueError("class count mismatch")
        return SoftTargets(np.concatenate([a.values, b.values]))


def encode_targets(y: np.ndarray, task: TaskKind) -> SoftTargets:
    """True labels in the same target kind the teacher emits: scalars for
    regression and binary ({0,1} floats), one-hot rows for multiclass."""
    y = np.asarray(y)
    if task.kind == "regression":
        return SoftTargets(y.astype(np.float64))
    if task.kind == "binary":
        return SoftTargets(y.astype(np.float64))
    onehot = np.zeros((len(y), task.n_classes))
    onehot[np.arange(len(y)), y.astype(int)] = 1.0
    return SoftTargets(onehot)


# ---------------------------------------------------------------------------
# Losses


def brier_loss(pred: float, target: float) -> float:
    if not (0.0 <= pred <= 1.0 and 0.0 <= target <= 1.0):
        raise ValueError("brier_loss inputs must lie in [0, 1]")
    return (pred - target) ** 2


def soft_cross_entropy(pred_probs: np.ndarray, target: np.ndarray) -> float:
    """-sum_c target_c log pred_c with predictions floored at 1e-12."""
    pred_probs = np.asarray(pred_probs, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    for v, name in ((pred_probs, "pred"), (target, "target")):
        if np.any(v < 0) or abs(v.sum() - 1.0) > PROB_ATOL:
            raise ValueError(f"{name} is not a valid probability vector")
    return float(-(target * np.log(np.maximum(pred_probs, LOG_FLOOR))).sum())


def mean_soft_cross_entropy(pred_probs: np.ndarray, targets: np.ndarray) -> float:
    """Row-mean soft cross-entropy for (n, C) arrays; used in training loops."""
    return float(-(targets * np.log(np.maximum(pred_probs, LOG_FLOOR))).sum(axis=1).mean())


# ---------------------------------------------------------------------------
# Feature matrices: the representation trees and networks train on


@dataclass
class FeatureMatrix:
    """Dense float64 matrix plus per-column kind (0 = numeric, else cardinality)."""

    values: np.ndarray
    kinds: tuple[int, ...]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[1] != len(self.kinds):
            raise ValueError("feature matrix shape does not match kinds")

    @classmethod
    def from_table(cls, table: Table) -> "FeatureMatrix":
        feats = table.features()
        kinds = tuple(
            kind.cardinality if kind.is_categorical else 0 for _, kind in feats.schema.columns
        )
        values = np.column_stack([col.astype(np.float64) for col in feats.columns])
        return cls(values, kinds)

    @property
    def n_rows(self) -> int:
        return len(self.values)

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def take(self, idx) -> "FeatureMatrix":
        return FeatureMatrix(self.values[idx], self.kinds)


Features = Union[Table, FeatureMatrix]


def as_matrix(features: Features) -> FeatureMatrix:
    if isinstance(features, FeatureMatrix):
        return features
    return FeatureMatrix.from_table(features)


# ---------------------------------------------------------------------------
# Learner contract


class Learner(ABC):
    """fit/predict capability with a descriptor for reports and checkpoints."""

    task: Optional[TaskKind] = None

    @abstractmethod
    def fit(
        self,
        features: Features,
        targets: SoftTargets,
        task: TaskKind,
        real_mask: Optional[np.ndarray] = None,
    ) -> "Learner":
        ...

    @abstractmethod
    def predict(self, features: Features) -> SoftTargets:
        ...

    @abstractmethod
    def descriptor(self) -> dict:
        ...

    @abstractmethod
    def n_parameters(self) -> int:
        ...

    def _package(self, raw: np.ndarray) -> SoftTargets:
        """Shape raw (n, out) predictions into the task's target kind."""
        task = self.task
        if task is None:
            raise RuntimeError("learner is not fitted")
        if task.kind == "regression":
            return SoftTargets(raw[:, 0])
        if task.kind == "binary":
            return SoftTargets(np.clip(raw[:, 0], 0.0, 1.0))
        probs = np.maximum(raw, 0.0)
        sums = probs.sum(axis=1, keepdims=True)
        uniform = np.full_like(probs, 1.0 / probs.shape[1])
        probs = np.where(sums > 0, probs / np.where(sums > 0, sums, 1.0), uniform)
        return SoftTargets(probs)


# ---------------------------------------------------------------------------
# Evaluation metrics and the Selected-model protocol


def predicted_classes(preds: SoftTargets, task: TaskKind) -> np.ndarray:
    if task.kind == "binary":
        return (preds.values > 0.5).astype(np.int64)
    if task.kind == "multiclass":
        return np.argmax(preds.values, axis=1).astype(np.int64)
    raise ValueError("classes are only defined for classification tasks")


def accuracy(preds: SoftTargets, y: np.ndarray, task: TaskKind) -> float:
    return float((predicted_classes(preds, task) == np.asarray(y)).mean())


def r_squared(preds: SoftTargets, y: np.ndarray) -> float:
    y = np.asarray(y, dtype=np.float64)
    res = float(((preds.values - y) ** 2).sum())
    tot = float(((y - y.mean()) ** 2).sum())
    if tot == 0.0:
        return 1.0 if res == 0.0 else 0.0
    return 1.0 - res / tot


def task_metric(preds: SoftTargets, y: np.ndarray, task: TaskKind) -> float:
    """Higher-is-better score: accuracy for classification, R^2 for regression."""
    if task.is_classification:
        return accuracy(preds, y, task)
    return r_squared(preds, y)


def evaluate(learner: Learner, table: Table) -> float:
    task = table.schema.target.task
    preds = learner.predict(table.features())
    return task_metric(preds, table.target_values(), task)


def select_model(candidates: Sequence[Learner], val: Table, task: TaskKind) -> tuple[Learner, int]:
    """Best validation metric wins; exact ties prefer fewer parameters, then
    registration order. Returns (learner, index)."""
    if not candidates:
        raise ValueError("no candidates to select from")
    scores = [evaluate(c, val) for c in candidates]
    best = 0
    for j in range(1, len(candidates)):
        if scores[j] > scores[best]:
            best = j
        elif scores[j] == scores[best] and candidates[j].n_parameters() < candidates[best].n_parameters():
            best = j
    return candidates[best], best
