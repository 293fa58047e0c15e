"""Stacked-ensemble teacher: out-of-fold base predictions feed a GBM
meta-learner (alongside the original features), and the final predictor is a
convex blend of the meta-learner and the full-data base refits, with weights
chosen on the validation fold by coordinate descent on the task metric.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..tables import Table, TaskKind
from .base import (
    FeatureMatrix,
    Features,
    Learner,
    SoftTargets,
    as_matrix,
    encode_targets,
    task_metric,
)
from .forest import ForestConfig, RandomForestLearner
from .gbm import GBMConfig, GradientBoostingLearner
from .mlp import MLPConfig, MLPLearner

_BLEND_STEPS = (0.5, 0.25, 0.1, 0.05)
_MAX_BLEND_PASSES = 50


@dataclass(frozen=True)
class StackEnsembleConfig:
    folds: int = 10
    mlp: MLPConfig = field(default_factory=MLPConfig)
    forest: ForestConfig = field(default_factory=ForestConfig)
    gbm: GBMConfig = field(default_factory=GBMConfig)
    meta: GBMConfig = field(default_factory=GBMConfig)
    blend_on_validation: bool = True

    def __post_init__(self):
        if self.folds < 2:
            raise ValueError("need at least 2 folds")


def _sub_seed(*words: int) -> int:
    return int(np.random.SeedSequence(list(words)).generate_state(1)[0])


def _base_learners(config: StackEnsembleConfig, seed: int) -> list[tuple[str, Learner]]:
    return [
        ("mlp", MLPLearner(replace(config.mlp, seed=_sub_seed(seed, 1)))),
        ("forest", RandomForestLearner(replace(config.forest, seed=_sub_seed(seed, 2)))),
        ("gbm", GradientBoostingLearner(replace(config.gbm, seed=_sub_seed(seed, 3)))),
    ]


class StackedTeacher(Learner):
    def __init__(self, config: StackEnsembleConfig = StackEnsembleConfig(), seed: int = 0):
        self.config = config
        self.seed = seed
        self.base_names: list[str] = []
        self.full_refits: list[Learner] = []
        self.meta: GradientBoostingLearner | None = None
        self.blend_weights: np.ndarray | None = None  # over [meta, *full_refits]
        self.n_trained_rows = 0

    # -- fitting -------------------------------------------------------------

    def fit_labeled(self, train: Table, val: Table | None) -> "StackedTeacher":
        task = train.schema.target.task
        self.task = task
        fm = FeatureMatrix.from_table(train.features())
        y = train.target_values()
        targets = encode_targets(y, task)
        n = fm.n_rows
        folds = self.config.folds
        if n < folds:
            raise ValueError(f"need at least {folds} rows for {folds}-fold stacking")
        self.n_trained_rows = n

        rng = np.random.default_rng([self.seed, 0])
        fold_id = np.empty(n, dtype=np.int64)
        fold_id[rng.permutation(n)] = np.arange(n) % folds

        oof_blocks = []
        self.base_names = []
        self.full_refits = []
        for b, (name, proto) in enumerate(_base_learners(self.config, self.seed)):
            out_dim = task.n_classes if task.kind == "multiclass" else 1
            oof = np.zeros((n, out_dim))
            for f in range(folds):
                tr = fold_id != f
                learner = proto.with_seed(_sub_seed(self.seed, 10 + b, f))
                learner.fit(fm.take(tr), targets.take(tr), task)
                oof[~tr] = learner.predict(fm.take(~tr)).as_matrix()
            full = proto.with_seed(_sub_seed(self.seed, 10 + b, folds))
            full.fit(fm, targets, task)
            oof_blocks.append(oof)
            self.base_names.append(name)
            self.full_refits.append(full)

        meta_fm = self._meta_matrix(np.concatenate(oof_blocks, axis=1), fm)
        self.meta = GradientBoostingLearner(replace(self.config.meta, seed=_sub_seed(self.seed, 99)))
        self.meta.fit(meta_fm, targets, task)

        self.blend_weights = np.zeros(1 + len(self.full_refits))
        self.blend_weights[0] = 1.0
        if self.config.blend_on_validation and val is not None and val.n_rows > 0:
            self._fit_blend(val)
        return self

    def _meta_matrix(self, base_preds: np.ndarray, fm: FeatureMatrix) -> FeatureMatrix:
        values = np.concatenate([base_preds, fm.values], axis=1)
        kinds = tuple([0] * base_preds.shape[1]) + fm.kinds
        return FeatureMatrix(values, kinds)

    def _candidate_predictions(self, fm: FeatureMatrix) -> list[np.ndarray]:
        base_mats = [learner.predict(fm).as_matrix() for learner in self.full_refits]
        meta_fm = self._meta_matrix(np.concatenate(base_mats, axis=1), fm)
        meta_mat = self.meta.predict(meta_fm).as_matrix()
        return [meta_mat, *base_mats]

    def _fit_blend(self, val: Table) -> None:
        fm = FeatureMatrix.from_table(val.features())
        y = val.target_values()
        preds = self._candidate_predictions(fm)

        def score(w: np.ndarray) -> float:
            blended = sum(wi * p for wi, p in zip(w, preds))
            return task_metric(self._package(blended), y, self.task)

        n_cand = len(preds)
        corner_scores = [score(np.eye(n_cand)[j]) for j in range(n_cand)]
        best_j = int(np.argmax(corner_scores))
        w = np.eye(n_cand)[best_j]
        best = corner_scores[best_j]
        for _ in range(_MAX_BLEND_PASSES):
            improved = False
            for j in range(n_cand):
                for step in _BLEND_STEPS:
                    trial = (1.0 - step) * w + step * np.eye(n_cand)[j]
                    s = score(trial)
                    if s > best:
                        best, w, improved = s, trial, True
            if not improved:
                break
        self.blend_weights = w

    # -- learner contract ----------------------------------------------------

    def fit(self, features: Features, targets: SoftTargets, task: TaskKind, real_mask=None):
        raise NotImplementedError("the teacher fits labeled tables; use fit_teacher()")

    def predict(self, features: Features) -> SoftTargets:
        fm = as_matrix(features)
        preds = self._candidate_predictions(fm)
        blended = sum(w * p for w, p in zip(self.blend_weights, preds))
        return self._package(blended)

    def descriptor(self) -> dict:
        return {
            "type": "stacked_teacher",
            "folds": self.config.folds,
            "bases": self.base_names,
            "blend_weights": [float(w) for w in (self.blend_weights if self.blend_weights is not None else [])],
            "seed": self.seed,
            "trained_rows": self.n_trained_rows,
        }

    def n_parameters(self) -> int:
        total = sum(l.n_parameters() for l in self.full_refits)
        return int(total + (self.meta.n_parameters() if self.meta else 0))


def fit_teacher(train: Table, val: Table, config: StackEnsembleConfig, seed: int) -> StackedTeacher:
    """Train the stacked teacher on the labeled train fold; blend weights are
    tuned on the validation fold. Deterministic per seed."""
    teacher = StackedTeacher(config, seed)
    return teacher.fit_labeled(train, val)
