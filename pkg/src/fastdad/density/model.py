"""Self-attention pseudolikelihood estimator over table rows.

One network simultaneously models every univariate conditional of a row
given the remaining features, each parametrized as a K-component Gaussian
mixture emitted at the masked feature's position.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from ..tables import Schema, StandardizationStats
from . import network

SIGMA_FLOOR = 1e-3
_LOG_2PI = float(np.log(2.0 * np.pi))

_PRESETS = {"small": (32, 16), "large": (128, 256)}


@dataclass(frozen=True)
class ModelConfig:
    """Architecture and training knobs; d_hidden/batch_size default per preset."""

    n_layers: int = 4
    n_heads: int = 8
    n_components: int = 100
    dropout: float = 0.1
    learning_rate: float = 3e-4
    weight_decay: float = 1e-6
    grad_clip_norm: float = 5.0
    size_preset: str = "auto"  # "auto" picks small/large by row count
    small_large_threshold: int = 15000
    d_hidden: Optional[int] = None
    batch_size: Optional[int] = None
    max_epochs: int = 200
    patience: int = 20

    def __post_init__(self):
        if self.n_components < 1:
            raise ValueError("need at least one mixture component")
        if not (0.0 <= self.dropout < 1.0):
            raise ValueError("dropout must lie in [0, 1)")
        if self.grad_clip_norm <= 0:
            raise ValueError("grad_clip_norm must be positive")
        if self.size_preset not in ("auto", "small", "large"):
            raise ValueError(f"unknown size preset {self.size_preset!r}")
        if self.d_hidden is not None and self.d_hidden % self.n_heads != 0:
            raise ValueError("d_hidden must be divisible by n_heads")

    def resolve(self, n_rows: int) -> "ModelConfig":
        """Pin d_hidden/batch_size from the preset (small under the row threshold)."""
        preset = self.size_preset
        if preset == "auto":
            preset = "small" if n_rows < self.small_large_threshold else "large"
        dh, bs = _PRESETS[preset]
        resolved = replace(
            self,
            size_preset=preset,
            d_hidden=self.d_hidden if self.d_hidden is not None else dh,
            batch_size=self.batch_size if self.batch_size is not None else bs,
        )
        if resolved.d_hidden % resolved.n_heads != 0:
            raise ValueError("d_hidden must be divisible by n_heads")
        return resolved

    def to_json(self) -> dict:
        from dataclasses import asdict

        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "ModelConfig":
        return cls(**obj)


@dataclass
class MixtureParams:
    """Gaussian mixture conditionals; arrays shaped (..., K)."""

    lam: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray

    @property
    def n_components(self) -> int:
        return self.lam.shape[-1]

    def __getitem__(self, idx) -> "MixtureParams":
        return MixtureParams(self.lam[idx], self.mu[idx], self.sigma[idx])

    def validate(self, atol: float = 1e-6) -> None:
        sums = self.lam.sum(axis=-1)
        if not np.all(np.abs(sums - 1.0) <= atol):
            raise ValueError("mixture weights must sum to 1")
        if np.any(self.lam < 0):
            raise ValueError("mixture weights must be non-negative")
        if np.any(self.sigma < SIGMA_FLOOR):
            raise ValueError(f"mixture stds must be >= {SIGMA_FLOOR}")


def positional_encoding(d_hidden: int, position: int) -> np.ndarray:
    """Interleaved sin/cos code for one table column index."""
    if d_hidden % 2 != 0:
        raise ValueError("d_hidden must be even for sin/cos positional encoding")
    if position < 0:
        raise ValueError("position must be non-negative")
    j = np.arange(d_hidden // 2, dtype=np.float64)
    angle = position / np.power(10000.0, 2.0 * j / d_hidden)
    enc = np.empty(d_hidden, dtype=np.float64)
    enc[0::2] = np.sin(angle)
    enc[1::2] = np.cos(angle)
    return enc


def positional_table(d: int, d_hidden: int) -> np.ndarray:
    return np.stack([positional_encoding(d_hidden, i) for i in range(d)])


def _trunc_normal(rng: np.random.Generator, shape, scale: float = 0.02) -> np.ndarray:
    vals = rng.normal(0.0, scale, size=shape)
    return np.clip(vals, -2.0 * scale, 2.0 * scale)


def init_params(d: int, config: ModelConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Fresh parameters. The output head starts at zero weights so the initial
    mixtures have uniform lam and sigma = softplus(0) + floor; the mu biases
    are spread over [-2, 2] because identical components would otherwise
    receive identical gradients and never separate.
    """
    H = config.d_hidden
    F = 4 * H
    K = config.n_components
    params: dict[str, np.ndarray] = {
        "embed_w": _trunc_normal(rng, (d, H)),
        "embed_b": np.zeros((d, H)),
        "mask_tok": _trunc_normal(rng, (H,)),
    }
    for layer in range(config.n_layers):
        p = f"l{layer}."
        params[p + "ln1_g"] = np.ones(H)
        params[p + "ln1_b"] = np.zeros(H)
        for name in ("wq", "wk", "wv", "wo"):
            params[p + name] = _trunc_normal(rng, (H, H))
        for name in ("bq", "bv", "bo"):  # keys carry no bias (softmax-inert)
            params[p + name] = np.zeros(H)
        params[p + "ln2_g"] = np.ones(H)
        params[p + "ln2_b"] = np.zeros(H)
        params[p + "w1"] = _trunc_normal(rng, (H, F))
        params[p + "b1"] = np.zeros(F)
        params[p + "w2"] = _trunc_normal(rng, (F, H))
        params[p + "b2"] = np.zeros(H)
    params["lnf_g"] = np.ones(H)
    params["lnf_b"] = np.zeros(H)
    params["head_w"] = np.zeros((H, 3 * K))
    head_b = np.zeros(3 * K)
    head_b[K : 2 * K] = np.linspace(-2.0, 2.0, K) if K > 1 else 0.0
    params["head_b"] = head_b
    return params


@dataclass
class DensityModel:
    """Trained estimator: config, feature schema, train-fold stats, parameters."""

    config: ModelConfig
    schema: Schema
    stats: StandardizationStats
    params: dict[str, np.ndarray]
    pos: np.ndarray

    @property
    def d(self) -> int:
        return self.schema.n_columns

    def conditionals(self, X: np.ndarray, masked: int) -> MixtureParams:
        return forward_conditionals(self, X, masked)


def _head_to_mixture(out: np.ndarray, K: int) -> MixtureParams:
    z = out[:, :K]
    log_lam = z - logsumexp(z, axis=-1, keepdims=True)
    lam = np.exp(log_lam)
    mu = out[:, K : 2 * K]
    sigma = network.softplus(out[:, 2 * K :]) + SIGMA_FLOOR
    return MixtureParams(lam, mu, sigma)


def forward_conditionals(model: DensityModel, X: np.ndarray, masked: int) -> MixtureParams:
    """Mixture parameters of p(x^masked | rest) for every row of X.

    X lives in model space (standardized numerics, dequantized categoricals).
    The output is invariant to the values stored at column `masked`.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    out, _ = network.forward(
        model.params, model.pos, X, masked, model.config.n_layers, model.config.n_heads
    )
    return _head_to_mixture(out, model.config.n_components)


def mixture_logpdf(v, params: MixtureParams) -> np.ndarray | float:
    """log sum_k lam_k N(v; mu_k, sigma_k^2), via log-sum-exp."""
    v_arr = np.asarray(v, dtype=np.float64)
    scalar = v_arr.ndim == 0 and params.lam.ndim == 1
    lam = np.atleast_2d(params.lam)
    mu = np.atleast_2d(params.mu)
    sigma = np.atleast_2d(params.sigma)
    vv = np.atleast_1d(v_arr)[:, None]
    with np.errstate(divide="ignore"):
        log_lam = np.where(lam > 0, np.log(np.where(lam > 0, lam, 1.0)), -np.inf)
    diff = (vv - mu) / sigma
    comp = log_lam - 0.5 * diff * diff - np.log(sigma) - 0.5 * _LOG_2PI
    out = logsumexp(comp, axis=-1)
    return float(out[0]) if scalar else out


def _mixture_loss_and_head_grads(out: np.ndarray, values: np.ndarray, K: int):
    """Mean negative log conditional of `values`, plus gradient w.r.t. the raw
    (B, 3K) head output."""
    B = out.shape[0]
    z = out[:, :K]
    mu = out[:, K : 2 * K]
    raw = out[:, 2 * K :]
    log_lam = z - logsumexp(z, axis=-1, keepdims=True)
    sigma = network.softplus(raw) + SIGMA_FLOOR
    diff = (values[:, None] - mu) / sigma
    comp = log_lam - 0.5 * diff * diff - np.log(sigma) - 0.5 * _LOG_2PI
    lse = logsumexp(comp, axis=-1)
    loss = -float(lse.mean())

    resp = np.exp(comp - lse[:, None])
    lam = np.exp(log_lam)
    dz = (lam - resp) / B
    dmu = -resp * diff / sigma / B
    dsigma = -resp * (diff * diff - 1.0) / sigma / B
    draw = dsigma * network.sigmoid(raw)
    dout = np.concatenate([dz, dmu, draw], axis=1)
    return loss, dout


def pl_loss(model: DensityModel, X: np.ndarray, masked: int) -> float:
    """Mean negative log conditional of column `masked` over the batch."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    out, _ = network.forward(
        model.params, model.pos, X, masked, model.config.n_layers, model.config.n_heads
    )
    loss, _ = _mixture_loss_and_head_grads(out, X[:, masked], model.config.n_components)
    return loss


def pl_loss_and_grads(
    params: dict[str, np.ndarray],
    pos: np.ndarray,
    X: np.ndarray,
    masked: int,
    config: ModelConfig,
    dropout_rng: np.random.Generator | None = None,
) -> tuple[float, dict[str, np.ndarray]]:
    """Loss plus analytic gradients for every parameter tensor.

    Dropout is applied only when an rng is passed; gradient checks run with
    it disabled.
    """
    dropout = config.dropout if dropout_rng is not None else 0.0
    out, cache = network.forward(
        params, pos, X, masked, config.n_layers, config.n_heads,
        dropout=dropout, rng=dropout_rng, need_cache=True,
    )
    loss, dout = _mixture_loss_and_head_grads(out, X[:, masked], config.n_components)
    grads = network.backward(params, cache, dout, config.n_layers, config.n_heads)
    if not np.isfinite(loss) or any(not np.all(np.isfinite(g)) for g in grads.values()):
        raise FloatingPointError("non-finite loss or gradient; numerical fault in training step")
    return loss, grads


def sample_mixture(params: MixtureParams, rng: np.random.Generator) -> float:
    """Ancestral draw: component proportional to lam, then its Gaussian."""
    lam = np.asarray(params.lam, dtype=np.float64).reshape(-1)
    mu = np.asarray(params.mu, dtype=np.float64).reshape(-1)
    sigma = np.asarray(params.sigma, dtype=np.float64).reshape(-1)
    cum = np.cumsum(lam)
    k = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
    k = min(k, len(lam) - 1)
    return float(mu[k] + sigma[k] * rng.standard_normal())
