"""Sample-quality diagnostics: mixture-kernel MMD, chain diffusion, and the
discriminator-based sample fidelity probe."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .density.model import DensityModel
from .gibbs import AugmentedSet, GibbsConfig, diffusion_of, generate
from .learners import ForestConfig, RandomForestLearner, SoftTargets, TaskKind, predicted_classes
from .learners.base import FeatureMatrix
from .tables import Table, compute_stats, to_model_matrix

DEFAULT_BANDWIDTHS = (1.0, 2.0, 4.0, 8.0, 16.0)

__all__ = [
    "MmdConfig",
    "FidelityReport",
    "mmd",
    "mmd_squared",
    "sample_fidelity",
    "diagnostics_suite",
    "DEFAULT_BANDWIDTHS",
]


@dataclass(frozen=True)
class MmdConfig:
    """Mixture-of-RBF kernel bandwidths; estimator is the biased V-statistic."""

    bandwidths: tuple[float, ...] = DEFAULT_BANDWIDTHS

    def __post_init__(self):
        if not self.bandwidths or any(b <= 0 for b in self.bandwidths):
            raise ValueError("bandwidths must be positive")


def _kernel_mean(A: np.ndarray, B: np.ndarray, bandwidths) -> float:
    D = cdist(A, B, "sqeuclidean")
    total = 0.0
    for bw in bandwidths:
        total += float(np.exp(-D / (2.0 * bw * bw)).mean())
    return total


def mmd_squared(X: np.ndarray, Y: np.ndarray, config: MmdConfig = MmdConfig()) -> float:
    """Biased estimate mean_XX k + mean_YY k - 2 mean_XY k with the kernel
    k(a, b) = sum_bw exp(-||a-b||^2 / (2 bw^2))."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    if X.size == 0 or Y.size == 0:
        raise ValueError("MMD inputs must be non-empty")
    if X.shape[1] != Y.shape[1]:
        raise ValueError("MMD inputs must share their dimension")
    return (
        _kernel_mean(X, X, config.bandwidths)
        + _kernel_mean(Y, Y, config.bandwidths)
        - 2.0 * _kernel_mean(X, Y, config.bandwidths)
    )


def mmd(X: np.ndarray, Y: np.ndarray, config: MmdConfig = MmdConfig()) -> float:
    """Square root of the squared estimate floored at 0."""
    return float(np.sqrt(max(mmd_squared(X, Y, config), 0.0)))


@dataclass(frozen=True)
class FidelityReport:
    """Real-vs-synthetic discriminator accuracy and its distance from chance.

    `fidelity` = |accuracy - 0.5| (lower means samples are harder to tell
    apart); `score` = 0.5 - fidelity is the complement, higher-is-better.
    """

    accuracy: float
    fidelity: float
    score: float

    def __post_init__(self):
        if not (0.0 <= self.fidelity <= 0.5):
            raise ValueError("fidelity must lie in [0, 0.5]")


def _balance(a: np.ndarray, b: np.ndarray, rng: np.random.Generator):
    n = min(len(a), len(b))
    if len(a) > n:
        a = a[np.sort(rng.choice(len(a), size=n, replace=False))]
    if len(b) > n:
        b = b[np.sort(rng.choice(len(b), size=n, replace=False))]
    return a, b


def sample_fidelity(
    train: Table,
    val_real: Table,
    test_real: Table,
    gibbs_a: AugmentedSet,
    gibbs_b: AugmentedSet,
    seed: int,
    discriminator_config: ForestConfig = ForestConfig(),
) -> FidelityReport:
    """Random-forest discriminator trained on {val_real: 1} vs {gibbs_a: 0}
    (balanced by subsampling), evaluated on {test_real: 1} vs {gibbs_b: 0}."""
    stats = compute_stats(train.features())
    real_tr = to_model_matrix(val_real.features(), stats, rng=None)
    fake_tr = to_model_matrix(gibbs_a.table, stats, rng=None)
    real_te = to_model_matrix(test_real.features(), stats, rng=None)
    fake_te = to_model_matrix(gibbs_b.table, stats, rng=None)

    rng = np.random.default_rng([seed, 11])
    real_tr, fake_tr = _balance(real_tr, fake_tr, rng)
    real_te, fake_te = _balance(real_te, fake_te, np.random.default_rng([seed, 13]))
    if min(len(real_tr), len(real_te)) < 10:
        raise ValueError("need at least 10 rows per side for the fidelity probe")

    kinds = tuple(0 for _ in range(real_tr.shape[1]))
    X_tr = FeatureMatrix(np.concatenate([real_tr, fake_tr]), kinds)
    y_tr = np.concatenate([np.ones(len(real_tr)), np.zeros(len(fake_tr))])
    X_te = np.concatenate([real_te, fake_te])
    y_te = np.concatenate([np.ones(len(real_te)), np.zeros(len(fake_te))])

    task = TaskKind.binary()
    forest = RandomForestLearner(discriminator_config)
    forest.fit(X_tr, SoftTargets(y_tr), task)
    preds = forest.predict(FeatureMatrix(X_te, kinds))
    acc = float((predicted_classes(preds, task) == y_te).mean())
    fid = abs(acc - 0.5)
    return FidelityReport(accuracy=acc, fidelity=fid, score=0.5 - fid)


def _minmax(values: list[float]) -> list[float]:
    arr = np.asarray(values, dtype=np.float64)
    span = arr.max() - arr.min()
    if span == 0.0:
        return [0.0] * len(arr)
    return list((arr - arr.min()) / span)


def diagnostics_suite(
    model: DensityModel,
    train: Table,
    val_real: Table,
    test_real: Table,
    rounds_list: list[int],
    seed: int,
    samples_per_round: int | None = None,
    mmd_config: MmdConfig = MmdConfig(),
) -> dict:
    """Per-round report of {mmd, diffusion, fidelity}, raw plus min-max
    normalized columns for plotting."""
    feats = train.features()
    stats = compute_stats(feats)
    train_std = to_model_matrix(feats, stats, rng=None)
    m = samples_per_round if samples_per_round is not None else feats.n_rows

    rows = []
    for k in rounds_list:
        aug = generate(model, train, GibbsConfig(rounds=k, target_count=m, seed=int(seed)))
        # fidelity needs two disjoint fake sets; split by origin row so the
        # evaluation fakes are novel even at k = 0 (pure copies)
        even = np.flatnonzero(aug.origin_rows % 2 == 0)
        odd = np.flatnonzero(aug.origin_rows % 2 == 1)
        aug_a = AugmentedSet(aug.table.take(even), aug.origin_rows[even], aug.rounds[even])
        aug_b = AugmentedSet(aug.table.take(odd), aug.origin_rows[odd], aug.rounds[odd])
        samples_std = to_model_matrix(aug.table, stats, rng=None)
        fid = sample_fidelity(train, val_real, test_real, aug_a, aug_b, seed)
        rows.append(
            {
                "rounds": int(k),
                "mmd": mmd(samples_std, train_std, mmd_config),
                "diffusion": diffusion_of(aug_a, train),
                "fidelity": fid.fidelity,
                "fidelity_score": fid.score,
                "discriminator_accuracy": fid.accuracy,
            }
        )
    normalized = {}
    for key in ("mmd", "diffusion", "fidelity"):
        normalized[key] = _minmax([r[key] for r in rows])
    return {"rows": rows, "normalized": normalized}
