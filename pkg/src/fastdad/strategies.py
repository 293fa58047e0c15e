"""Baseline augmentation and labeling strategies (MUNGE, HUNGE, KNOW) and
assembly of the distillation dataset with teacher-provided targets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gibbs import AugmentedSet
from .learners.base import Learner, SoftTargets, encode_targets
from .tables import Table, TaskKind, compute_stats, concat_tables

MUNGE_GRID_P = (0.1, 0.25, 0.5, 0.75)
MUNGE_GRID_S = (0.5, 1.0, 5.0)

__all__ = [
    "MungeParams",
    "DistillSet",
    "munge",
    "hunge_labels",
    "know_targets",
    "teacher_label",
    "assemble",
    "MUNGE_GRID_P",
    "MUNGE_GRID_S",
]


@dataclass(frozen=True)
class MungeParams:
    """Swap probability p and local-variance parameter s."""

    p: float
    s: float

    GRID_P = MUNGE_GRID_P
    GRID_S = MUNGE_GRID_S

    def __post_init__(self):
        if not (0.0 <= self.p <= 1.0):
            raise ValueError("swap probability must lie in [0, 1]")
        if self.s <= 0.0:
            raise ValueError("local variance parameter must be positive")

    @classmethod
    def grid(cls) -> list["MungeParams"]:
        return [cls(p, s) for p in cls.GRID_P for s in cls.GRID_S]


@dataclass
class DistillSet:
    """Original labeled rows followed by teacher-labeled augmented rows."""

    features: Table  # feature columns only, n + m rows
    targets: SoftTargets
    real_mask: np.ndarray  # True for the leading original rows

    def __post_init__(self):
        if self.targets.n_rows != self.features.n_rows or len(self.real_mask) != self.features.n_rows:
            raise ValueError("features, targets, and origin flags must align")

    @property
    def n_rows(self) -> int:
        return self.features.n_rows

    @property
    def n_real(self) -> int:
        return int(self.real_mask.sum())


def _nearest_neighbors(train_feats: Table) -> np.ndarray:
    """Index of each row's nearest neighbor under standardized Euclidean
    distance on numerics plus Hamming distance on categoricals."""
    stats = compute_stats(train_feats)
    n = train_feats.n_rows
    num_cols = [j for j in range(train_feats.schema.n_columns) if not stats.is_categorical[j]]
    cat_cols = [j for j in range(train_feats.schema.n_columns) if stats.is_categorical[j]]
    dist = np.zeros((n, n))
    if num_cols:
        Z = np.column_stack(
            [(train_feats.columns[j] - stats.mean[j]) / stats.std[j] for j in num_cols]
        )
        sq = (Z * Z).sum(axis=1)
        d2 = sq[:, None] + sq[None, :] - 2.0 * (Z @ Z.T)
        dist += np.sqrt(np.maximum(d2, 0.0))
    for j in cat_cols:
        col = train_feats.columns[j]
        dist += (col[:, None] != col[None, :]).astype(np.float64)
    np.fill_diagonal(dist, np.inf)
    return np.argmin(dist, axis=1)  # ties resolve to the lowest row index


def munge(train: Table, params: MungeParams, multiplier: int, seed: int) -> AugmentedSet:
    """Neighbor-based augmentation: `multiplier` passes over the training
    features; per pass each copied row swaps attributes toward its nearest
    neighbor with probability p (numerics perturbed by a Gaussian of std
    |e_a - e'_a| / s, categoricals replaced outright)."""
    feats = train.features()
    n, d = feats.n_rows, feats.schema.n_columns
    if n < 2:
        raise ValueError("MUNGE needs at least 2 rows to find neighbors")
    if multiplier < 1:
        raise ValueError("multiplier must be >= 1")
    nn = _nearest_neighbors(feats)
    is_cat = [feats.schema.kind_of(j).is_categorical for j in range(d)]

    out_cols = [[] for _ in range(d)]
    origins = []
    rounds = []
    for pass_idx in range(multiplier):
        rng = np.random.default_rng([seed, pass_idx])
        U = rng.random((n, d))
        Z = rng.standard_normal((n, d))
        for j in range(d):
            e = feats.columns[j]
            e_nn = e[nn]
            swap = U[:, j] < params.p
            if is_cat[j]:
                new = np.where(swap, e_nn, e)
            else:
                sd = np.abs(e - e_nn) / params.s
                new = np.where(swap, e_nn + sd * Z[:, j], e)
            out_cols[j].append(new)
        origins.append(np.arange(n))
        rounds.append(np.full(n, pass_idx + 1))
    table = Table(feats.schema, [np.concatenate(c) for c in out_cols])
    return AugmentedSet(table, np.concatenate(origins), np.concatenate(rounds))


def teacher_label(teacher: Learner, aug: AugmentedSet, task: TaskKind) -> SoftTargets:
    """Teacher predictions as distillation targets: scalars for regression,
    positive-class probability for binary, probability vectors for multiclass."""
    preds = teacher.predict(aug.table)
    preds.validate(task)
    return preds


def hunge_labels(teacher: Learner, aug: AugmentedSet, task: TaskKind) -> SoftTargets:
    """Hard argmax of the teacher's probabilities (ties to the lower class)."""
    if not task.is_classification:
        raise ValueError("HUNGE hard labels require a classification task "
                         "(for regression HUNGE is equivalent to MUNGE)")
    probs = teacher.predict(aug.table)
    if task.kind == "binary":
        return SoftTargets((probs.values > 0.5).astype(np.float64))
    hard = np.argmax(probs.values, axis=1)
    onehot = np.zeros_like(probs.values)
    onehot[np.arange(len(hard)), hard] = 1.0
    return SoftTargets(onehot)


def know_targets(
    teacher_probs: SoftTargets,
    true_labels: np.ndarray,
    task: TaskKind,
    temperature: float = 2.0,
    hard_weight: float = 0.25,
) -> SoftTargets:
    """Temperature-smoothed teacher probabilities nudged toward the true
    labels: target = (1 - w) * normalize(p^(1/T)) + w * onehot(y)."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    if not (0.0 <= hard_weight <= 1.0):
        raise ValueError("hard weight must lie in [0, 1]")
    if not task.is_classification:
        raise ValueError("KNOW smoothing applies to classification tasks only")
    y = np.asarray(true_labels).astype(int)
    if task.kind == "binary":
        p = np.clip(teacher_probs.values, 0.0, 1.0)
        mat = np.column_stack([1.0 - p, p])
    else:
        mat = teacher_probs.values
    powered = np.power(np.maximum(mat, 0.0), 1.0 / temperature)
    soft = powered / powered.sum(axis=1, keepdims=True)
    onehot = np.zeros_like(soft)
    onehot[np.arange(len(y)), y] = 1.0
    target = (1.0 - hard_weight) * soft + hard_weight * onehot
    if task.kind == "binary":
        return SoftTargets(target[:, 1])
    return SoftTargets(target)


def assemble(train: Table, aug: AugmentedSet | None, aug_targets: SoftTargets | None,
             task: TaskKind) -> DistillSet:
    """Real rows (labels encoded into the teacher's target kind) followed by
    augmented rows carrying their teacher targets."""
    real_targets = encode_targets(train.target_values(), task)
    feats = train.features()
    if aug is None or aug.n_rows == 0:
        return DistillSet(feats, real_targets, np.ones(feats.n_rows, dtype=bool))
    if aug_targets is None or aug_targets.n_rows != aug.n_rows:
        raise ValueError("augmented rows need matching targets")
    targets = SoftTargets.concat(real_targets, aug_targets)
    features = concat_tables(feats, aug.table)
    real_mask = np.concatenate(
        [np.ones(feats.n_rows, dtype=bool), np.zeros(aug.n_rows, dtype=bool)]
    )
    return DistillSet(features, targets, real_mask)
