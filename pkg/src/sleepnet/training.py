"""Seeded mini-batch training with best-dev-loss checkpointing."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import nn
from .dataset import WindowSample, item_rng
from .errors import ConfigError, NumericError
from .model import ModelState, backward, forward_with_cache, save_model

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    epochs: int = 8
    lr: float = 0.001
    seed: int = 0
    checkpoint: str | None = None
    shuffle: bool = True

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("batch_size and epochs must be >= 1")
        if self.lr < 0:
            raise ConfigError("lr must be non-negative")


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    dev_loss: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)
    best_epoch: int = -1

    def to_csv(self, path: str | Path, include_time: bool = True) -> None:
        with open(path, "w") as fh:
            fh.write("epoch,train_loss,dev_loss,seconds\n")
            for i, (tr, dv, sec) in enumerate(zip(self.train_loss, self.dev_loss, self.seconds), start=1):
                t = f"{sec:.3f}" if include_time else ""
                fh.write(f"{i},{tr!r},{dv!r},{t}\n")


def loss_and_grad(model: ModelState, logits: np.ndarray, y: np.ndarray):
    if model.spec.head == "regression":
        loss, dpred = nn.mse_loss(logits[:, 0], y)
        return loss, dpred[:, None]
    return nn.softmax_crossentropy(logits, class_targets(y, model.spec.n_classes))


def class_targets(labels: np.ndarray, n_classes: int) -> np.ndarray:
    """Labels 1..K map to class indices 0..K-1."""
    idx = np.floor(np.asarray(labels, dtype=np.float64) + 0.5).astype(np.int64) - 1
    if np.any(idx < 0) or np.any(idx >= n_classes):
        raise ConfigError(f"labels must lie in 1..{n_classes} for a {n_classes}-class head")
    return idx


def per_example_loss(model: ModelState, logits: np.ndarray, y: np.ndarray) -> np.ndarray:
    z = logits.astype(np.float64)
    if model.spec.head == "regression":
        return (z[:, 0] - y) ** 2
    t = class_targets(y, model.spec.n_classes)
    z = z - z.max(axis=1, keepdims=True)
    return np.log(np.exp(z).sum(axis=1)) - z[np.arange(len(t)), t]


def gather(windows: Sequence[WindowSample], idx) -> tuple[np.ndarray, np.ndarray]:
    x = np.stack([windows[i].samples for i in idx]).astype(np.float32, copy=False)
    y = np.array([windows[i].label for i in idx], dtype=np.float32)
    return x, y


def evaluate_loss(model: ModelState, windows: Sequence[WindowSample], batch_size: int = 64) -> float:
    """Mean infer-mode loss over all windows, accumulated in float64."""
    if len(windows) == 0:
        raise ConfigError("cannot evaluate an empty dataset")
    total = 0.0
    for start in range(0, len(windows), batch_size):
        xb, yb = gather(windows, range(start, min(start + batch_size, len(windows))))
        logits, _ = forward_with_cache(model, xb, "infer")
        total += float(per_example_loss(model, logits, yb).sum())
    return total / len(windows)


def train(
    model: ModelState,
    train_windows: Sequence[WindowSample],
    dev_windows: Sequence[WindowSample],
    cfg: TrainConfig,
    progress: bool = False,
) -> tuple[ModelState, TrainHistory]:
    """Train a copy of ``model``; return the epoch-end snapshot with the lowest dev loss."""
    if len(train_windows) == 0 or len(dev_windows) == 0:
        raise ConfigError("training and dev sets must be non-empty")
    n = model.spec.input_length
    for w in (train_windows[0], dev_windows[0]):
        if len(w.samples) != n:
            raise ConfigError(f"window length {len(w.samples)} does not match the model's {n} samples")
    model = model.copy()
    opt = nn.AdamState(lr=cfg.lr)
    history = TrainHistory()
    best: ModelState | None = None
    best_loss = np.inf
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        if cfg.shuffle:
            order = item_rng(cfg.seed, "shuffle", epoch).permutation(len(train_windows))
        else:
            order = np.arange(len(train_windows))
        running = 0.0
        for b, start in enumerate(range(0, len(order), cfg.batch_size)):
            idx = order[start : start + cfg.batch_size]
            xb, yb = gather(train_windows, idx)
            rng = item_rng(cfg.seed, "dropout", epoch, b)
            logits, cache = forward_with_cache(model, xb, "train", rng)
            loss, dlogits = loss_and_grad(model, logits, yb)
            if not np.isfinite(loss):
                raise NumericError(f"non-finite loss at epoch {epoch + 1}, batch {b + 1}")
            grads = backward(model, cache, dlogits)
            grads.pop("input")
            try:
                nn.adam_step(model.params, grads, opt)
            except NumericError as exc:
                raise NumericError(f"epoch {epoch + 1}, batch {b + 1}: {exc}") from exc
            running += loss * len(idx)
        train_loss = running / len(order)
        dev_loss = evaluate_loss(model, dev_windows, cfg.batch_size)
        if not np.isfinite(dev_loss):
            raise NumericError(f"non-finite dev loss at epoch {epoch + 1}")
        history.train_loss.append(train_loss)
        history.dev_loss.append(dev_loss)
        history.seconds.append(time.perf_counter() - t0)
        if dev_loss < best_loss:
            best_loss = dev_loss
            best = model.copy()
            history.best_epoch = epoch
            if cfg.checkpoint:
                save_model(best, cfg.checkpoint)
        msg = f"epoch {epoch + 1}/{cfg.epochs} train {train_loss:.4f} dev {dev_loss:.4f} ({history.seconds[-1]:.1f}s)"
        log.info(msg)
        if progress:
            print(msg, flush=True)
    assert best is not None
    return best, history
