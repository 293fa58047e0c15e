"""Built-in learners: MLP, multi-output random forest, gradient-boosted
trees, and the stacked-ensemble teacher, plus per-task losses and the
Selected-model protocol."""

from __future__ import annotations

from typing import Optional

import numpy as np

from ..tables import TaskKind
from .base import (
    FeatureMatrix,
    Learner,
    SoftTargets,
    accuracy,
    as_matrix,
    brier_loss,
    encode_targets,
    evaluate,
    mean_soft_cross_entropy,
    predicted_classes,
    r_squared,
    select_model,
    soft_cross_entropy,
    task_metric,
)
from .forest import ForestConfig, RandomForestLearner
from .gbm import GBMConfig, GradientBoostingLearner
from .io import load_learner, save_learner
from .mlp import MLPConfig, MLPLearner
from .stack import StackEnsembleConfig, StackedTeacher, fit_teacher

STUDENT_TYPES = ("mlp", "forest", "gbm")


def make_student(kind: str, seed: int = 0, config=None) -> Learner:
    if kind == "mlp":
        return MLPLearner(config) if config is not None else MLPLearner(MLPConfig(seed=seed))
    if kind == "forest":
        return RandomForestLearner(config) if config is not None else RandomForestLearner(ForestConfig(seed=seed))
    if kind == "gbm":
        return GradientBoostingLearner(config) if config is not None else GradientBoostingLearner(GBMConfig(seed=seed))
    raise ValueError(f"unknown student type {kind!r}; expected one of {STUDENT_TYPES}")


def _fit_on_distill_set(learner: Learner, dset, task: TaskKind) -> Learner:
    features = dset.features.features()
    learner.fit(features, dset.targets, task, real_mask=dset.real_mask)
    return learner


def fit_mlp(dset, task: TaskKind, config: Optional[MLPConfig] = None) -> MLPLearner:
    return _fit_on_distill_set(MLPLearner(config or MLPConfig()), dset, task)


def fit_forest(dset, task: TaskKind, config: Optional[ForestConfig] = None) -> RandomForestLearner:
    return _fit_on_distill_set(RandomForestLearner(config or ForestConfig()), dset, task)


def fit_gbm(dset, task: TaskKind, config: Optional[GBMConfig] = None) -> GradientBoostingLearner:
    return _fit_on_distill_set(GradientBoostingLearner(config or GBMConfig()), dset, task)


__all__ = [
    "TaskKind",
    "FeatureMatrix",
    "Learner",
    "SoftTargets",
    "accuracy",
    "as_matrix",
    "brier_loss",
    "encode_targets",
    "evaluate",
    "mean_soft_cross_entropy",
    "predicted_classes",
    "r_squared",
    "select_model",
    "soft_cross_entropy",
    "task_metric",
    "ForestConfig",
    "RandomForestLearner",
    "GBMConfig",
    "GradientBoostingLearner",
    "MLPConfig",
    "MLPLearner",
    "StackEnsembleConfig",
    "StackedTeacher",
    "fit_teacher",
    "STUDENT_TYPES",
    "make_student",
    "fit_mlp",
    "fit_forest",
    "fit_gbm",
    "save_learner",
    "load_learner",
]
