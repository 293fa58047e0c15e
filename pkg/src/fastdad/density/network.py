"""Masked self-attention encoder: hand-written forward and reverse passes.

Everything operates on float64 and a flat parameter dict so downstream code
can run finite-difference checks against any single parameter coordinate.
The encoder is pre-norm: h + Attn(LN(h)), then h + FF(LN(h)), with a final
layer norm before the mixture head. Position `i` is masked two ways: its
value embedding is replaced by a learned token, and no attention head may
read position `i` as a key/value.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf, expit

Params = dict[str, np.ndarray]

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + erf(x * _INV_SQRT2))


def gelu_grad(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + erf(x * _INV_SQRT2)) + x * _INV_SQRT2PI * np.exp(-0.5 * x * x)


def layernorm_forward(x: np.ndarray, g: np.ndarray, b: np.ndarray, eps: float = 1e-5):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    return g * xhat + b, (xhat, inv, g)


def layernorm_backward(dy: np.ndarray, cache) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    xhat, inv, g = cache
    reduce_axes = tuple(range(dy.ndim - 1))
    dg = np.sum(dy * xhat, axis=reduce_axes)
    db = np.sum(dy, axis=reduce_axes)
    dxhat = dy * g
    m1 = dxhat.mean(axis=-1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
    dx = inv * (dxhat - m1 - xhat * m2)
    return dx, dg, db


def _split_heads(x: np.ndarray, n_heads: int) -> np.ndarray:
    B, d, H = x.shape
    return x.reshape(B, d, n_heads, H // n_heads).transpose(0, 2, 1, 3)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    B, nh, d, dk = x.shape
    return x.transpose(0, 2, 1, 3).reshape(B, d, nh * dk)


def _dropout_mask(shape, rate: float, rng: np.random.Generator) -> np.ndarray:
    keep = rng.random(shape) >= rate
    return keep.astype(np.float64) / (1.0 - rate)


def forward(
    params: Params,
    pos: np.ndarray,
    X: np.ndarray,
    masked: int,
    n_layers: int,
    n_heads: int,
    dropout: float = 0.0,
    rng: np.random.Generator | None = None,
    need_cache: bool = False,
):
    """Run the encoder on a batch, with feature `masked` hidden.

    Returns the (B, 3K) head output at the masked position and, when
    requested, the cache needed by `backward`. Dropout is active only when
    both a positive rate and an rng are supplied.
    """
    B, d = X.shape
    if not (0 <= masked < d):
        raise ValueError(f"masked feature index {masked} out of range for d={d}")
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite values in model-space input")
    train_mode = dropout > 0.0 and rng is not None

    E = X[:, :, None] * params["embed_w"][None, :, :] + params["embed_b"][None, :, :]
    E[:, masked, :] = params["mask_tok"]
    h = E + pos[None, :, :]

    layer_caches = []
    for layer in range(n_layers):
        p = f"l{layer}."
        a, ln1_cache = layernorm_forward(h, params[p + "ln1_g"], params[p + "ln1_b"])
        q = a @ params[p + "wq"] + params[p + "bq"]
        # no key bias: a bias shared across keys shifts all scores of a row
        # equally and softmax cancels it, so the parameter would be inert
        k = a @ params[p + "wk"]
        v = a @ params[p + "wv"] + params[p + "bv"]
        qh, kh, vh = (_split_heads(t, n_heads) for t in (q, k, v))
        dk_dim = qh.shape[-1]
        scale = 1.0 / np.sqrt(dk_dim)
        scores = (qh @ kh.transpose(0, 1, 3, 2)) * scale
        scores[:, :, :, masked] = -np.inf
        m = np.max(scores, axis=-1, keepdims=True)
        e = np.exp(scores - np.where(np.isfinite(m), m, 0.0))
        denom = e.sum(axis=-1, keepdims=True)
        P = np.divide(e, denom, out=np.zeros_like(e), where=denom > 0)
        if train_mode:
            attn_keep = _dropout_mask(P.shape, dropout, rng)
            P_used = P * attn_keep
        else:
            attn_keep = None
            P_used = P
        ctx = P_used @ vh
        merged = _merge_heads(ctx)
        o = merged @ params[p + "wo"] + params[p + "bo"]
        h = h + o

        f, ln2_cache = layernorm_forward(h, params[p + "ln2_g"], params[p + "ln2_b"])
        u1 = f @ params[p + "w1"] + params[p + "b1"]
        u2 = gelu(u1)
        if train_mode:
            ff_keep = _dropout_mask(u2.shape, dropout, rng)
            u2_used = u2 * ff_keep
        else:
            ff_keep = None
            u2_used = u2
        y = u2_used @ params[p + "w2"] + params[p + "b2"]
        h = h + y
        if need_cache:
            layer_caches.append(
                dict(
                    a=a, ln1=ln1_cache, qh=qh, kh=kh, vh=vh, scale=scale, P=P,
                    attn_keep=attn_keep, P_used=P_used, merged=merged,
                    f=f, ln2=ln2_cache, u1=u1, u2_used=u2_used, ff_keep=ff_keep,
                )
            )

    hN, lnf_cache = layernorm_forward(h, params["lnf_g"], params["lnf_b"])
    out = hN[:, masked, :] @ params["head_w"] + params["head_b"]
    cache = None
    if need_cache:
        cache = dict(X=X, masked=masked, layers=layer_caches, hN=hN, lnf=lnf_cache)
    return out, cache


def backward(params: Params, cache: dict, dout_masked: np.ndarray, n_layers: int, n_heads: int) -> Params:
    """Reverse pass from the gradient at the masked position's head output."""
    X = cache["X"]
    masked = cache["masked"]
    hN = cache["hN"]
    B, d, H = hN.shape

    grads: Params = {}
    dhN = np.zeros_like(hN)
    dhN[:, masked, :] = dout_masked @ params["head_w"].T
    grads["head_w"] = hN[:, masked, :].T @ dout_masked
    grads["head_b"] = dout_masked.sum(axis=0)
    dh, grads["lnf_g"], grads["lnf_b"] = layernorm_backward(dhN, cache["lnf"])

    for layer in reversed(range(n_layers)):
        p = f"l{layer}."
        c = cache["layers"][layer]
        # feedforward sub-block (residual: dh reaches both branch and input)
        dy = dh
        du2_used = dy @ params[p + "w2"].T
        grads[p + "w2"] = np.einsum("bdf,bdh->fh", c["u2_used"], dy)
        grads[p + "b2"] = dy.sum(axis=(0, 1))
        du2 = du2_used if c["ff_keep"] is None else du2_used * c["ff_keep"]
        du1 = du2 * gelu_grad(c["u1"])
        df = du1 @ params[p + "w1"].T
        grads[p + "w1"] = np.einsum("bdh,bdf->hf", c["f"], du1)
        grads[p + "b1"] = du1.sum(axis=(0, 1))
        dh_ln2, grads[p + "ln2_g"], grads[p + "ln2_b"] = layernorm_backward(df, c["ln2"])
        dh = dh + dh_ln2

        # attention sub-block
        do = dh
        dmerged = do @ params[p + "wo"].T
        grads[p + "wo"] = np.einsum("bdh,bdk->hk", c["merged"], do)
        grads[p + "bo"] = do.sum(axis=(0, 1))
        dctx = _split_heads(dmerged, n_heads)
        dP_used = dctx @ c["vh"].transpose(0, 1, 3, 2)
        dvh = c["P_used"].transpose(0, 1, 3, 2) @ dctx
        dP = dP_used if c["attn_keep"] is None else dP_used * c["attn_keep"]
        P = c["P"]
        dS = P * (dP - np.sum(dP * P, axis=-1, keepdims=True))
        dqh = (dS @ c["kh"]) * c["scale"]
        dkh = (dS.transpose(0, 1, 3, 2) @ c["qh"]) * c["scale"]
        dq = _merge_heads(dqh)
        dk = _merge_heads(dkh)
        dv = _merge_heads(dvh)
        a = c["a"]
        da = dq @ params[p + "wq"].T + dk @ params[p + "wk"].T + dv @ params[p + "wv"].T
        grads[p + "wq"] = np.einsum("bdh,bdk->hk", a, dq)
        grads[p + "wk"] = np.einsum("bdh,bdk->hk", a, dk)
        grads[p + "wv"] = np.einsum("bdh,bdk->hk", a, dv)
        grads[p + "bq"] = dq.sum(axis=(0, 1))
        grads[p + "bv"] = dv.sum(axis=(0, 1))
        dh_ln1, grads[p + "ln1_g"], grads[p + "ln1_b"] = layernorm_backward(da, c["ln1"])
        dh = dh + dh_ln1

    dE = dh  # positional table is fixed, no gradient
    grads["mask_tok"] = dE[:, masked, :].sum(axis=0)
    dE = dE.copy()
    dE[:, masked, :] = 0.0
    grads["embed_w"] = np.einsum("bd,bdh->dh", X, dE)
    grads["embed_b"] = dE.sum(axis=0)
    return grads


def sigmoid(x: np.ndarray) -> np.ndarray:
    return expit(x)


def softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)
