"""ReLU multilayer perceptron student.

Preprocessing one-hot encodes categoricals and standardizes numerics with
stats computed from the real rows only. Training uses Adam with decoupled
weight decay and early-stops on a 10% holdout carved from the real rows.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.special import expit

from ..optim import AdamState, adam_step
from ..tables import TaskKind
from .base import Features, Learner, SoftTargets, as_matrix

LOG_FLOOR = 1e-12


@dataclass(frozen=True)
class MLPConfig:
    hidden: tuple[int, ...] = (128, 128)
    learning_rate: float = 1e-3
    batch_size: int = 64
    max_epochs: int = 300
    patience: int = 30
    weight_decay: float = 1e-6
    holdout_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if any(h < 1 for h in self.hidden):
            raise ValueError("hidden sizes must be positive")


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class MLPLearner(Learner):
    def __init__(self, config: MLPConfig = MLPConfig()):
        self.config = config
        self.params: dict[str, np.ndarray] = {}
        self.kinds: tuple[int, ...] | None = None
        self.num_mean: np.ndarray | None = None
        self.num_std: np.ndarray | None = None
        # regression targets are trained in standardized space (real-row stats)
        self.target_mean = 0.0
        self.target_std = 1.0
        self.n_trained_rows = 0

    # -- preprocessing ------------------------------------------------------

    def _encode(self, values: np.ndarray) -> np.ndarray:
        blocks = []
        for j, card in enumerate(self.kinds):
            col = values[:, j]
            if card == 0:
                blocks.append(((col - self.num_mean[j]) / self.num_std[j])[:, None])
            else:
                onehot = np.zeros((len(col), card))
                onehot[np.arange(len(col)), col.astype(int)] = 1.0
                blocks.append(onehot)
        return np.concatenate(blocks, axis=1)

    # -- forward / backward -------------------------------------------------

    def _forward(self, X: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        acts = [X]
        z = X
        n_layers = len(self.config.hidden) + 1
        for layer in range(n_layers):
            z = z @ self.params[f"w{layer}"] + self.params[f"b{layer}"]
            if layer < n_layers - 1:
                z = np.maximum(z, 0.0)
            acts.append(z)
        return z, acts

    def _loss_and_dout(self, out: np.ndarray, targets: np.ndarray, task: TaskKind):
        n = len(out)
        if task.kind == "regression":
            diff = out[:, 0] - targets
            return float((diff * diff).mean()), (2.0 * diff / n)[:, None]
        if task.kind == "binary":
            p = expit(out[:, 0])
            diff = p - targets
            loss = float((diff * diff).mean())
            return loss, (2.0 * diff * p * (1.0 - p) / n)[:, None]
        p = _softmax(out)
        loss = float(-(targets * np.log(np.maximum(p, LOG_FLOOR))).sum(axis=1).mean())
        return loss, (p - targets) / n

    def _backward(self, dout: np.ndarray, acts: list[np.ndarray]) -> dict[str, np.ndarray]:
        grads = {}
        n_layers = len(self.config.hidden) + 1
        dz = dout
        for layer in reversed(range(n_layers)):
            a_in = acts[layer]
            grads[f"w{layer}"] = a_in.T @ dz
            grads[f"b{layer}"] = dz.sum(axis=0)
            if layer > 0:
                dz = dz @ self.params[f"w{layer}"].T
                dz = dz * (acts[layer] > 0.0)
        return grads

    def _holdout_loss(self, X: np.ndarray, targets: np.ndarray, task: TaskKind) -> float:
        out, _ = self._forward(X)
        loss, _ = self._loss_and_dout(out, targets, task)
        return loss

    # -- learner contract ---------------------------------------------------

    def fit(self, features: Features, targets: SoftTargets, task: TaskKind, real_mask=None):
        fm = as_matrix(features)
        if fm.n_rows == 0:
            raise ValueError("empty training data")
        targets.validate(task)
        cfg = self.config
        self.task = task
        self.kinds = fm.kinds
        self.n_trained_rows = fm.n_rows
        if real_mask is None:
            real_mask = np.ones(fm.n_rows, dtype=bool)
        real_rows = np.flatnonzero(real_mask)
        if len(real_rows) == 0:
            real_rows = np.arange(fm.n_rows)

        self.num_mean = np.zeros(fm.n_features)
        self.num_std = np.ones(fm.n_features)
        for j, card in enumerate(self.kinds):
            if card == 0:
                col = fm.values[real_rows, j]
                self.num_mean[j] = col.mean()
                s = col.std()
                self.num_std[j] = s if s > 1e-12 else 1.0

        X = self._encode(fm.values)
        T = targets.values
        if task.kind == "regression":
            real_t = T[real_rows]
            self.target_mean = float(real_t.mean())
            s = float(real_t.std())
            self.target_std = s if s > 1e-12 else 1.0
            T = (T - self.target_mean) / self.target_std
        rng = np.random.default_rng([cfg.seed])

        n_hold = int(round(cfg.holdout_fraction * len(real_rows)))
        hold_rows = np.array([], dtype=np.int64)
        if 0 < n_hold < fm.n_rows:
            hold_rows = rng.choice(real_rows, size=n_hold, replace=False)
        train_rows = np.setdiff1d(np.arange(fm.n_rows), hold_rows)
        X_tr, T_tr = X[train_rows], T[train_rows]
        X_ho, T_ho = X[hold_rows], T[hold_rows]
        monitor_holdout = len(hold_rows) > 0

        out_dim = 1 if T.ndim == 1 else T.shape[1]
        sizes = [X.shape[1], *cfg.hidden, out_dim]
        self.params = {}
        for layer in range(len(sizes) - 1):
            fan_in = sizes[layer]
            self.params[f"w{layer}"] = rng.normal(0.0, np.sqrt(2.0 / fan_in), (fan_in, sizes[layer + 1]))
            self.params[f"b{layer}"] = np.zeros(sizes[layer + 1])

        adam = AdamState.for_params(self.params)
        best_loss = np.inf
        best_epoch = -1
        best_params = {k: v.copy() for k, v in self.params.items()}
        n_tr = len(train_rows)
        for epoch in range(cfg.max_epochs):
            perm = rng.permutation(n_tr)
            for start in range(0, n_tr, cfg.batch_size):
                idx = perm[start : start + cfg.batch_size]
                out, acts = self._forward(X_tr[idx])
                _, dout = self._loss_and_dout(out, T_tr[idx], task)
                grads = self._backward(dout, acts)
                adam_step(self.params, grads, adam, cfg.learning_rate, cfg.weight_decay)
            monitor = self._holdout_loss(X_ho, T_ho, task) if monitor_holdout else \
                self._holdout_loss(X_tr, T_tr, task)
            if monitor < best_loss:
                best_loss = monitor
                best_epoch = epoch
                best_params = {k: v.copy() for k, v in self.params.items()}
            if epoch - best_epoch >= cfg.patience:
                break
        self.params = best_params
        return self

    def predict(self, features: Features) -> SoftTargets:
        fm = as_matrix(features)
        out, _ = self._forward(self._encode(fm.values))
        if self.task.kind == "multiclass":
            return SoftTargets(_softmax(out))
        if self.task.kind == "binary":
            return SoftTargets(expit(out[:, 0]))
        return SoftTargets(out[:, 0] * self.target_std + self.target_mean)

    def descriptor(self) -> dict:
        return {
            "type": "mlp",
            "hidden": list(self.config.hidden),
            "learning_rate": self.config.learning_rate,
            "batch_size": self.config.batch_size,
            "weight_decay": self.config.weight_decay,
            "seed": self.config.seed,
            "trained_rows": self.n_trained_rows,
        }

    def n_parameters(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def with_seed(self, seed: int) -> "MLPLearner":
        return MLPLearner(replace(self.config, seed=seed))
