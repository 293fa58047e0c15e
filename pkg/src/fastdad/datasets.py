"""Bundled synthetic datasets: 2-D toy densities for the sampler studies and
labeled tasks for the benchmark harness."""

from __future__ import annotations

import numpy as np

from .tables import ColumnKind, Schema, Table, TargetSpec, TaskKind

__all__ = [
    "spiral_density",
    "checkerboard_density",
    "checkerboard_classification",
    "friedman_regression",
    "features_table",
    "make_bundled",
    "BUNDLED_DATASETS",
]


def features_table(X: np.ndarray, names: list[str] | None = None) -> Table:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    d = X.shape[1]
    names = names or [f"x{j}" for j in range(d)]
    schema = Schema(tuple((n, ColumnKind(None)) for n in names), None)
    return Table(schema, [X[:, j] for j in range(d)])


def _labeled_table(X: np.ndarray, y: np.ndarray, task: TaskKind) -> Table:
    d = X.shape[1]
    cols = [(f"x{j}", ColumnKind(None)) for j in range(d)]
    if task.is_classification:
        names = tuple(f"c{c}" for c in range(task.n_classes))
        cols.append(("label", ColumnKind(names)))
        values = [X[:, j] for j in range(d)] + [y.astype(np.int64)]
    else:
        cols.append(("target", ColumnKind(None)))
        values = [X[:, j] for j in range(d)] + [y.astype(np.float64)]
    schema = Schema(tuple(cols), TargetSpec(d, task))
    return Table(schema, values)


def spiral_density(n: int, seed: int = 0, noise: float = 0.15, turns: float = 1.5) -> Table:
    """Two-armed spiral winding outward from radius 1 to 2.2, leaving a hole
    at the origin. The hollow center makes initialization effects measurable:
    a standard-normal start drops mass where the density has none."""
    rng = np.random.default_rng(seed)
    u = rng.random(n)
    t = turns * np.pi * u
    arm = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    r = 1.0 + 1.2 * u
    x = arm * r * np.cos(t) + noise * rng.standard_normal(n)
    y = arm * r * np.sin(t) + noise * rng.standard_normal(n)
    return features_table(np.column_stack([x, y]))


def checkerboard_density(n: int, seed: int = 0) -> Table:
    """Uniform draws from the dark cells of a 4x4 board over [-2, 2]^2."""
    rng = np.random.default_rng(seed)
    cells = [(i, j) for i in range(4) for j in range(4) if (i + j) % 2 == 0]
    pick = rng.integers(0, len(cells), size=n)
    u = rng.random((n, 2))
    pts = np.empty((n, 2))
    for idx, (ci, cj) in enumerate(cells):
        mask = pick == idx
        pts[mask, 0] = -2.0 + ci + u[mask, 0]
        pts[mask, 1] = -2.0 + cj + u[mask, 1]
    return features_table(pts)


def checkerboard_classification(n: int, seed: int = 0, grid: int = 8) -> Table:
    """Multiclass task on [0, grid)^2: the class of a point is decided by the
    parities of its cell coordinates, giving 4 interleaved checker patterns.
    At grid 8 a few hundred training rows cannot resolve every cell, which is
    the regime where ensembling and augmented distillation pay off."""
    rng = np.random.default_rng(seed)
    X = rng.random((n, 2)) * grid
    ix = np.floor(X[:, 0]).astype(int)
    iy = np.floor(X[:, 1]).astype(int)
    y = 2 * (ix % 2) + (iy % 2)
    return _labeled_table(X, y, TaskKind.multiclass(4))


def friedman_regression(n: int, seed: int = 0, noise: float = 1.0) -> Table:
    """Friedman's 5-feature benchmark surface with Gaussian noise."""
    rng = np.random.default_rng(seed)
    X = rng.random((n, 5))
    y = (
        10.0 * np.sin(np.pi * X[:, 0] * X[:, 1])
        + 20.0 * (X[:, 2] - 0.5) ** 2
        + 10.0 * X[:, 3]
        + 5.0 * X[:, 4]
        + noise * rng.standard_normal(n)
    )
    return _labeled_table(X, y, TaskKind.regression())


BUNDLED_DATASETS = {
    "spiral": spiral_density,
    "checkerboard-density": checkerboard_density,
    "checkerboard": checkerboard_classification,
    "friedman1": friedman_regression,
}


def make_bundled(name: str, n: int, seed: int = 0) -> Table:
    if name not in BUNDLED_DATASETS:
        raise ValueError(f"unknown bundled dataset {name!r}; options: {sorted(BUNDLED_DATASETS)}")
    return BUNDLED_DATASETS[name](n, seed)
