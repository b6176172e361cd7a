"""Forward/backward pairs for the layers of the 1D CNN.

Every ``*_forward`` returns ``(out, cache)`` and the matching ``*_backward``
consumes ``(dout, cache)``. Arrays keep the dtype they come in with, so the
same code trains in float32 and gradient-checks in float64.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, ShapeError


def _as_batch(x: np.ndarray) -> tuple[np.ndarray, bool]:
    if x.ndim == 2:
        return x[None], True
    if x.ndim != 3:
        raise ShapeError(f"expected [B x C x N] or [C x N], got shape {x.shape}")
    return x, False


def _im2col(xb: np.ndarray, k: int, t: int) -> np.ndarray:
    """[B, C, N] -> [B, C*k, t] with row c*k + j holding x[:, c, j:j+t]."""
    bsz, c, _ = xb.shape
    return np.stack([xb[:, :, j : j + t] for j in range(k)], axis=2).reshape(bsz, c * k, t)


def conv1d_forward(x, w, b):
    """Valid cross-correlation.

    x: [B, C_in, N] (or [C_in, N]); w: [C_out, C_in, k]; b: [C_out]
    out[:, o, t] = b[o] + sum_{c, j} x[:, c, t + j] * w[o, c, j]
    """
    xb, squeeze = _as_batch(np.asarray(x))
    c_out, c_in, k = w.shape
    if xb.shape[1] != c_in:
        raise ShapeError(f"input has {xb.shape[1]} channels, weights expect {c_in}")
    n = xb.shape[2]
    if n < k:
        raise ShapeError(f"input length {n} shorter than kernel {k}")
    cols = _im2col(xb, k, n - k + 1)
    out = np.matmul(w.reshape(c_out, c_in * k), cols)
    out += b[None, :, None]
    cache = (cols, xb.shape, w, squeeze)
    return (out[0] if squeeze else out), cache


def conv1d_backward(dout, cache):
    cols, shape, w, squeeze = cache
    if squeeze:
        dout = dout[None]
    c_out, c_in, k = w.shape
    t = dout.shape[2]
    dw = np.matmul(dout, cols.transpose(0, 2, 1)).sum(axis=0).reshape(w.shape)
    dcols = np.matmul(w.reshape(c_out, c_in * k).T, dout).reshape(shape[0], c_in, k, t)
    dx = np.zeros(shape, dtype=dout.dtype)
    for j in range(k):
        dx[:, :, j : j + t] += dcols[:, :, j]
    db = dout.sum(axis=(0, 2))
    return (dx[0] if squeeze else dx), dw, db


def maxpool1d_forward(x, pool: int):
    """Non-overlapping max pool of width ``pool``; a trailing remainder is dropped.

    Ties go to the first occurrence; the winning positions are resolved
    lazily from the cache (see ``maxpool_indices``).
    """
    xb, squeeze = _as_batch(np.asarray(x))
    bsz, c, n = xb.shape
    if n < pool:
        raise ShapeError(f"input length {n} shorter than pool {pool}")
    m = n // pool
    windows = xb[:, :, : m * pool].reshape(bsz, c, m, pool)
    out = windows[..., 0].copy()
    for p in range(1, pool):
        np.maximum(out, windows[..., p], out=out)
    cache = (windows, out, xb.shape, squeeze)
    return (out[0] if squeeze else out), cache


def _first_hits(windows, out):
    """Yield (slot, mask) where mask marks windows whose first maximum sits at slot."""
    taken = np.zeros(out.shape, dtype=bool)
    for p in range(windows.shape[-1]):
        hit = windows[..., p] == out
        hit &= ~taken
        taken |= hit
        yield p, hit


def maxpool_indices(cache) -> np.ndarray:
    """Flat input positions that won each pool window (first occurrence on ties)."""
    windows, out, _, squeeze = cache
    pool = windows.shape[-1]
    idx = np.zeros(out.shape, dtype=np.int64)
    for p, hit in _first_hits(windows, out):
        idx[hit] = p
    pos = idx + pool * np.arange(out.shape[-1])
    return pos[0] if squeeze else pos


def maxpool1d_backward(dout, cache):
    windows, out, shape, squeeze = cache
    if squeeze:
        dout = dout[None]
    bsz, c, m, pool = windows.shape
    dx = np.zeros(shape, dtype=dout.dtype)
    dwin = dx[:, :, : m * pool].reshape(bsz, c, m, pool)  # a view into dx
    zero = dout.dtype.type(0)
    for p, hit in _first_hits(windows, out):
        dwin[..., p] = np.where(hit, dout, zero)
    return dx[0] if squeeze else dx


class BatchNormState:
    """Running statistics for one batch-norm layer, updated in train mode."""

    def __init__(self, channels: int, momentum: float = 0.9, eps: float = 1e-5, dtype=np.float32):
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.momentum = momentum
        self.eps = eps


def batchnorm_forward(x, gamma, beta, mode: str, state: BatchNormState):
    """Per-channel normalisation over batch and time of an [B, C, N] input."""
    if x.ndim != 3:
        raise ShapeError(f"batch norm expects [B x C x N], got {x.shape}")
    if x.shape[0] == 0:
        raise ShapeError("batch norm needs at least one example")
    eps = state.eps
    if mode == "train":
        # statistics accumulate in float64, then follow the input dtype
        mean = x.mean(axis=(0, 2), dtype=np.float64)
        xc = x - mean[None, :, None].astype(x.dtype)
        var = np.square(xc).mean(axis=(0, 2), dtype=np.float64)
        mom = state.momentum
        state.running_mean = (mom * state.running_mean + (1 - mom) * mean).astype(state.running_mean.dtype)
        state.running_var = (mom * state.running_var + (1 - mom) * var).astype(state.running_var.dtype)
    elif mode == "infer":
        var = state.running_var.astype(np.float64)
        xc = x - state.running_mean.astype(x.dtype)[None, :, None]
    else:
        raise ConfigError(f"unknown mode {mode!r}")
    inv_std = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
    xhat = xc
    xhat *= inv_std[None, :, None]
    out = xhat * gamma[None, :, None]
    out += beta[None, :, None]
    return out, (xhat, gamma, inv_std, mode)


def batchnorm_backward(dout, cache):
    xhat, gamma, inv_std, mode = cache
    dbeta = dout.sum(axis=(0, 2), dtype=np.float64)
    dgamma = np.einsum("bcn,bcn->c", dout, xhat, dtype=np.float64)
    scale = (gamma * inv_std)[None, :, None]
    if mode == "infer":
        return dout * scale, dgamma.astype(dout.dtype), dbeta.astype(dout.dtype)
    m = dout.shape[0] * dout.shape[2]
    # sum(dxhat) = gamma * dbeta and sum(dxhat * xhat) = gamma * dgamma
    dx = xhat * (-dgamma / m).astype(dout.dtype)[None, :, None]
    dx += dout
    dx -= (dbeta / m).astype(dout.dtype)[None, :, None]
    dx *= scale
    return dx, dgamma.astype(dout.dtype), dbeta.astype(dout.dtype)


def relu_forward(x):
    out = np.maximum(x, 0)
    return out, x


def relu_backward(dout, cache):
    return dout * (cache > 0)


def dense_forward(x, w, b):
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0] or b.shape != (w.shape[1],):
        raise ShapeError(f"dense shapes disagree: x {x.shape}, w {w.shape}, b {b.shape}")
    return x @ w + b, (x, w)


def dense_backward(dout, cache):
    x, w = cache
    return dout @ w.T, x.T @ dout, dout.sum(axis=0)


def dropout_forward(x, rate: float, mode: str, rng: np.random.Generator | None = None):
    """Inverted dropout. Returns ``(out, mask)``; mask is None when nothing is dropped."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate {rate} outside [0, 1)")
    if mode == "infer" or rate == 0.0:
        return x, None
    if mode != "train":
        raise ConfigError(f"unknown mode {mode!r}")
    if rng is None:
        raise ConfigError("train-mode dropout needs a random generator")
    keep = rng.random(x.shape, dtype=np.float32) >= rate
    mask = keep.astype(x.dtype) / x.dtype.type(1.0 - rate)
    return x * mask, mask


def dropout_backward(dout, mask):
    return dout if mask is None else dout * mask
