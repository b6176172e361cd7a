from __future__ import annotations

import numpy as np

from ..errors import ShapeError


def mse_loss(pred, target):
    """Mean squared error and its gradient with respect to ``pred``."""
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape or pred.size == 0:
        raise ShapeError(f"mse needs equal non-empty shapes, got {pred.shape} and {target.shape}")
    diff = pred.astype(np.float64) - target
    loss = float(np.mean(diff * diff))
    grad = (2.0 / pred.size) * diff
    return loss, grad.astype(pred.dtype)


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_crossentropy(logits, targets):
    """Mean negative log-likelihood over the batch and its gradient wrt the logits."""
    logits = np.asarray(logits)
    targets = np.asarray(targets, dtype=np.int64)
    if logits.ndim != 2 or logits.shape[1] < 2:
        raise ShapeError(f"logits must be [B x K] with K >= 2, got {logits.shape}")
    bsz, k = logits.shape
    if targets.shape != (bsz,):
        raise ShapeError(f"expected {bsz} targets, got shape {targets.shape}")
    if np.any(targets < 0) or np.any(targets >= k):
        raise IndexError(f"target class outside [0, {k})")
    z = logits.astype(np.float64)
    z = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    logp = z[np.arange(bsz), targets] - log_norm
    loss = float(-logp.mean())
    grad = np.exp(z - log_norm[:, None])
    grad[np.arange(bsz), targets] -= 1.0
    return loss, (grad / bsz).astype(logits.dtype)
