"""Gradient-boosted trees.

Multiclass: one regression tree per class per round fits the negative
gradient of soft cross-entropy w.r.t. the logits (target_c - softmax_c);
logits accumulate with the learning rate and predictions pass through a
softmax. Binary and regression boost scalar targets by least squares (for
binary these are Brier targets in [0, 1]).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..tables import TaskKind
from .base import Features, Learner, SoftTargets, as_matrix, mean_soft_cross_entropy
from .tree import RegressionTree


@dataclass(frozen=True)
class GBMConfig:
    n_rounds: int = 200
    learning_rate: float = 0.1
    max_depth: int = 6
    min_leaf: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.n_rounds < 1:
            raise ValueError("need at least one boosting round")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class GradientBoostingLearner(Learner):
    def __init__(self, config: GBMConfig = GBMConfig()):
        self.config = config
        self.trees: list[list[RegressionTree]] = []  # [round][class] (one class for scalar tasks)
        self.kinds: tuple[int, ...] | None = None
        self.n_trained_rows = 0
        self.train_losses_: list[float] = []

    def fit(self, features: Features, targets: SoftTargets, task: TaskKind, real_mask=None):
        fm = as_matrix(features)
        if fm.n_rows == 0:
            raise ValueError("empty training data")
        targets.validate(task)
        self.task = task
        self.kinds = fm.kinds
        self.n_trained_rows = fm.n_rows
        self.trees = []
        self.train_losses_ = []
        X = fm.values
        cfg = self.config

        if task.kind == "multiclass":
            T = targets.as_matrix()
            C = T.shape[1]
            logits = np.zeros((fm.n_rows, C))
            for _ in range(cfg.n_rounds):
                probs = _softmax(logits)
                residual = T - probs  # negative gradient of soft CE w.r.t. logits
                round_trees = []
                for c in range(C):
                    tree = RegressionTree(cfg.max_depth, cfg.min_leaf)
                    tree.fit(X, fm.kinds, residual[:, c : c + 1])
                    logits[:, c] += cfg.learning_rate * tree.predict(X)[:, 0]
                    round_trees.append(tree)
                self.trees.append(round_trees)
                self.train_losses_.append(mean_soft_cross_entropy(_softmax(logits), T))
        else:
            t = targets.values
            F = np.zeros(fm.n_rows)
            for _ in range(cfg.n_rounds):
                residual = (t - F)[:, None]
                tree = RegressionTree(cfg.max_depth, cfg.min_leaf)
                tree.fit(X, fm.kinds, residual)
                F += cfg.learning_rate * tree.predict(X)[:, 0]
                self.trees.append([tree])
                self.train_losses_.append(float(((F - t) ** 2).mean()))
        return self

    def _raw(self, X: np.ndarray) -> np.ndarray:
        n_out = len(self.trees[0])
        raw = np.zeros((len(X), n_out))
        for round_trees in self.trees:
            for c, tree in enumerate(round_trees):
                raw[:, c] += self.config.learning_rate * tree.predict(X)[:, 0]
        return raw

    def predict(self, features: Features) -> SoftTargets:
        fm = as_matrix(features)
        if not self.trees:  # zero fitted rounds: uniform / zero predictions
            n_out = self.task.n_classes if self.task.kind == "multiclass" else 1
            raw = np.zeros((fm.n_rows, n_out))
        else:
            raw = self._raw(fm.values)
        if self.task.kind == "multiclass":
            return SoftTargets(_softmax(raw))
        return self._package(raw)

    def descriptor(self) -> dict:
        return {
            "type": "gbm",
            "n_rounds": self.config.n_rounds,
            "learning_rate": self.config.learning_rate,
            "max_depth": self.config.max_depth,
            "min_leaf": self.config.min_leaf,
            "seed": self.config.seed,
            "trained_rows": self.n_trained_rows,
        }

    def n_parameters(self) -> int:
        return int(sum(t.value.size + t.n_nodes for rt in self.trees for t in rt))

    def with_seed(self, seed: int) -> "GradientBoostingLearner":
        return GradientBoostingLearner(replace(self.config, seed=seed))
