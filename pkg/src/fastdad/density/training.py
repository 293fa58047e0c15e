"""Training loop and checkpoint IO for the pseudolikelihood estimator."""

from __future__ import annotations

import json
from typing import Callable, Optional

import numpy as np

from ..optim import AdamState, adam_step
from ..tables import Schema, StandardizationStats, Table, compute_stats, to_model_matrix
from . import network
from .model import (
    DensityModel,
    ModelConfig,
    _head_to_mixture,
    init_params,
    mixture_logpdf,
    pl_loss_and_grads,
    positional_table,
)

EVAL_CHUNK = 4096


def _cat_columns(stats: StandardizationStats) -> np.ndarray:
    return np.flatnonzero(stats.is_categorical)


def _with_fresh_noise(base: np.ndarray, cat_cols: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    M = base.copy()
    for j in cat_cols:
        M[:, j] += rng.random(len(M))
    return M


def validation_pseudolikelihood(model: DensityModel, val_matrix: np.ndarray) -> float:
    """Mean log conditional over all rows and all features of the fold."""
    d = model.d
    total = 0.0
    count = 0
    for i in range(d):
        for start in range(0, len(val_matrix), EVAL_CHUNK):
            chunk = val_matrix[start : start + EVAL_CHUNK]
            out, _ = network.forward(
                model.params, model.pos, chunk, i, model.config.n_layers, model.config.n_heads
            )
            params = _head_to_mixture(out, model.config.n_components)
            total += float(np.sum(mixture_logpdf(chunk[:, i], params)))
            count += len(chunk)
    return total / count


def fit(
    train: Table,
    val: Table,
    config: ModelConfig,
    seed: int,
    log_path: Optional[str] = None,
    on_epoch: Optional[Callable[[int, float, float], None]] = None,
    verbose: bool = False,
) -> DensityModel:
    """Train on the feature columns of `train`, early-stopping on the mean
    validation pseudolikelihood; the best-validation parameters are returned.
    Deterministic given (data, config, seed).
    """
    train_feats = train.features()
    val_feats = val.features()
    n = train_feats.n_rows
    if n == 0:
        raise ValueError("empty training table")
    cfg = config.resolve(n)
    d = train_feats.schema.n_columns

    rng = np.random.default_rng(seed)
    params = init_params(d, cfg, rng)
    pos = positional_table(d, cfg.d_hidden)
    stats = compute_stats(train_feats)
    model = DensityModel(cfg, train_feats.schema, stats, params, pos)

    base_train = to_model_matrix(train_feats, stats, rng=None)
    cat_cols = _cat_columns(stats)
    val_matrix = _with_fresh_noise(to_model_matrix(val_feats, stats, rng=None), cat_cols, rng)

    adam = AdamState.for_params(params)
    best_val = -np.inf
    best_epoch = -1
    best_params = {k: p.copy() for k, p in params.items()}
    history = []

    for epoch in range(cfg.max_epochs):
        perm = rng.permutation(n)
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            masked = int(rng.integers(d))
            M = _with_fresh_noise(base_train[idx], cat_cols, rng)
            loss, grads = pl_loss_and_grads(
                params, pos, M, masked, cfg,
                dropout_rng=rng if cfg.dropout > 0 else None,
            )
            adam_step(params, grads, adam, cfg.learning_rate, cfg.weight_decay, cfg.grad_clip_norm)
            epoch_loss += loss
            n_batches += 1
        train_loss = epoch_loss / max(n_batches, 1)
        val_pl = validation_pseudolikelihood(model, val_matrix)
        history.append({"epoch": epoch, "train_loss": train_loss, "val_pl": val_pl})
        if verbose:
            print(f"epoch {epoch:4d}  train_loss {train_loss:.6f}  val_pl {val_pl:.6f}")
        if on_epoch is not None:
            on_epoch(epoch, train_loss, val_pl)
        if val_pl > best_val:
            best_val = val_pl
            best_epoch = epoch
            best_params = {k: p.copy() for k, p in params.items()}
        if epoch - best_epoch >= cfg.patience:
            break

    if log_path is not None:
        with open(log_path, "w", encoding="utf-8") as fh:
            json.dump({"best_epoch": best_epoch, "epochs": history}, fh, indent=1)

    model.params = best_params
    return model


# ---------------------------------------------------------------------------
# Checkpoints: npz container with a JSON meta blob and little-endian float64
# tensors.

CHECKPOINT_VERSION = 1


def save_density(model: DensityModel, path: str) -> None:
    meta = {
        "format_version": CHECKPOINT_VERSION,
        "kind": "density",
        "config": model.config.to_json(),
        "schema": model.schema.to_json(),
        "schema_fingerprint": model.schema.fingerprint(),
        "stats": model.stats.to_json(),
        "param_names": sorted(model.params.keys()),
    }
    blob = np.frombuffer(json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    arrays = {f"param::{k}": v.astype("<f8") for k, v in model.params.items()}
    arrays["pos"] = model.pos.astype("<f8")
    arrays["meta"] = blob
    np.savez(path, **arrays)


def load_density(path: str) -> DensityModel:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode("utf-8"))
        if meta.get("format_version") != CHECKPOINT_VERSION or meta.get("kind") != "density":
            raise ValueError(f"{path}: not a version-{CHECKPOINT_VERSION} density checkpoint")
        params = {k: np.array(data[f"param::{k}"]) for k in meta["param_names"]}
        pos = np.array(data["pos"])
    config = ModelConfig.from_json(meta["config"])
    schema = Schema.from_json(meta["schema"])
    stats = StandardizationStats.from_json(meta["stats"])
    return DensityModel(config, schema, stats, params, pos)
