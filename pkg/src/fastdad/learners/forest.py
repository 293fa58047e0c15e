"""Random forest over multi-output regression trees.

Classification trains directly against probability-vector targets (one-hot
for real rows, teacher probabilities for augmented rows); predictions are
tree averages renormalized to unit sum. The trees never extrapolate, so the
outputs are non-negative by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from ..tables import TaskKind
from .base import Features, Learner, SoftTargets, as_matrix
from .tree import RegressionTree


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    max_depth: Optional[int] = None
    min_leaf: int = 1
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("need at least one tree")


class RandomForestLearner(Learner):
    def __init__(self, config: ForestConfig = ForestConfig()):
        self.config = config
        self.trees: list[RegressionTree] = []
        self.kinds: tuple[int, ...] | None = None
        self.n_trained_rows = 0

    def fit(self, features: Features, targets: SoftTargets, task: TaskKind, real_mask=None):
        fm = as_matrix(features)
        if fm.n_rows == 0:
            raise ValueError("empty training data")
        targets.validate(task)
        Y = targets.as_matrix()
        n, d = fm.values.shape
        max_features = min(math.ceil(math.sqrt(d)), d)
        self.task = task
        self.kinds = fm.kinds
        self.n_trained_rows = n
        self.trees = []
        for t in range(self.config.n_trees):
            rng = np.random.default_rng([self.config.seed, t])
            idx = rng.integers(0, n, size=n) if self.config.bootstrap else np.arange(n)
            tree = RegressionTree(self.config.max_depth, self.config.min_leaf, max_features)
            tree.fit(fm.values[idx], fm.kinds, Y[idx], rng)
            self.trees.append(tree)
        return self

    def predict(self, features: Features) -> SoftTargets:
        fm = as_matrix(features)
        raw = self.trees[0].predict(fm.values)
        for tree in self.trees[1:]:
            raw += tree.predict(fm.values)
        raw /= len(self.trees)
        return self._package(raw)

    def descriptor(self) -> dict:
        return {
            "type": "forest",
            "n_trees": self.config.n_trees,
            "max_depth": self.config.max_depth,
            "min_leaf": self.config.min_leaf,
            "bootstrap": self.config.bootstrap,
            "seed": self.config.seed,
            "trained_rows": self.n_trained_rows,
        }

    def n_parameters(self) -> int:
        return int(sum(t.value.size + t.n_nodes for t in self.trees))

    def with_seed(self, seed: int) -> "RandomForestLearner":
        return RandomForestLearner(replace(self.config, seed=seed))
