"""Clip-level aggregation of window predictions and the challenge metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .audio import AudioClip
from .dataset import KSS_MAX, KSS_MIN, WindowingConfig, extract_windows
from .errors import ConfigError, MetricUndefinedError, ShapeError
from .model import ModelState, forward


def aggregate(preds: Sequence[float], method: str = "mean", rounding: str = "truncate") -> int:
    """Merge window predictions into one KSS rating in 1..9.

    The merged value is clamped to [1, 9] and then cast to int (truncation).
    ``rounding="round"`` rounds half up instead. An even-length median takes
    the lower-middle element.
    """
    p = np.asarray(preds, dtype=np.float64)
    if p.size == 0:
        raise ConfigError("cannot aggregate an empty prediction list")
    if method == "mean":
        v = float(p.mean())
    elif method == "median":
        v = float(np.sort(p)[(p.size - 1) // 2])
    else:
        raise ConfigError(f"unknown aggregation method {method!r}")
    v = min(max(v, float(KSS_MIN)), float(KSS_MAX))
    if rounding == "truncate":
        return int(v)
    if rounding == "round":
        return int(math.floor(v + 0.5))
    raise ConfigError(f"unknown rounding mode {rounding!r}")


def rank_average(x: Sequence[float]) -> np.ndarray:
    """1-based ranks with ties sharing their average rank."""
    a = np.asarray(x, dtype=np.float64)
    order = np.argsort(a, kind="mergesort")
    sorted_a = a[order]
    # boundaries of runs of equal values
    starts = np.flatnonzero(np.r_[True, sorted_a[1:] != sorted_a[:-1]])
    ends = np.r_[starts[1:], a.size]
    avg = (starts + ends - 1) / 2.0 + 1.0
    ranks = np.empty(a.size, dtype=np.float64)
    ranks[order] = np.repeat(avg, ends - starts)
    return ranks


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    a = a - a.mean()
    b = b - b.mean()
    r = float((a @ b) / math.sqrt(float(a @ a) * float(b @ b)))
    return max(-1.0, min(1.0, r))


def spearman_rho(pred: Sequence[float], true: Sequence[float]) -> float:
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(true, dtype=np.float64)
    if p.shape != t.shape or p.ndim != 1:
        raise ShapeError(f"length mismatch: {p.shape} vs {t.shape}")
    if p.size < 2:
        raise MetricUndefinedError("Spearman's rho needs at least two items")
    if np.all(p == p[0]) or np.all(t == t[0]):
        raise MetricUndefinedError("Spearman's rho is undefined for a constant input")
    return _pearson(rank_average(p), rank_average(t))


def _pair(pred, true) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(true, dtype=np.float64)
    if p.shape != t.shape or p.size == 0:
        raise ShapeError(f"need equal non-empty lengths, got {p.shape} and {t.shape}")
    return p, t


def mse_metric(pred, true) -> float:
    p, t = _pair(pred, true)
    return float(np.mean((p - t) ** 2))


def mae_metric(pred, true) -> float:
    p, t = _pair(pred, true)
    return float(np.mean(np.abs(p - t)))


def uar(pred: Sequence[int], true: Sequence[int], n_classes: int) -> float:
    """Mean of per-class recalls."""
    p = np.asarray(pred, dtype=np.int64)
    t = np.asarray(true, dtype=np.int64)
    if p.shape != t.shape:
        raise ShapeError(f"length mismatch: {p.shape} vs {t.shape}")
    for arr in (p, t):
        if np.any(arr < 0) or np.any(arr >= n_classes):
            raise ConfigError(f"class index outside [0, {n_classes})")
    recalls = []
    for k in range(n_classes):
        support = t == k
        if not support.any():
            raise MetricUndefinedError(f"class {k} does not occur in the true labels")
        recalls.append(float(np.mean(p[support] == k)))
    return float(np.mean(recalls))


@dataclass
class ClipPrediction:
    clip_id: str
    true: int
    window_preds: list[float]
    rating: int


@dataclass
class EvalReport:
    clips: list[ClipPrediction]
    method: str
    rho: float | None = None
    mse: float | None = None
    mae: float | None = None
    uar: float | None = None
    notes: dict[str, str] = field(default_factory=dict)

    def summary(self) -> dict[str, object]:
        out: dict[str, object] = {"clips": len(self.clips), "method": self.method}
        for key in ("rho", "mse", "mae", "uar"):
            val = getattr(self, key)
            if val is not None:
                out[key] = val
        return out

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            fh.write("clip_id,true,pred\n")
            for c in self.clips:
                fh.write(f"{c.clip_id},{c.true},{c.rating}\n")
            s = self.summary()
            metrics = ";".join(f"{k}={v!r}" for k, v in s.items() if k not in ("clips", "method"))
            fh.write(f"#summary,{s['method']},{metrics}\n")

    def write_summary(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            for k, v in self.summary().items():
                fh.write(f"{k} = {v!r}\n" if isinstance(v, float) else f"{k} = {v}\n")


def predict_clip(model: ModelState, clip: AudioClip, cfg: WindowingConfig, batch_size: int = 256) -> np.ndarray:
    """Infer-mode outputs for every window of a clip: [n] (regression) or [n x K]."""
    wins = extract_windows(clip, cfg)
    outs = []
    for start in range(0, len(wins), batch_size):
        x = np.stack([w.samples for w in wins[start : start + batch_size]])
        outs.append(forward(model, x, "infer"))
    out = np.concatenate(outs)
    return out[:, 0] if model.spec.head == "regression" else out


def rate_clip(model: ModelState, clip: AudioClip, cfg: WindowingConfig, method: str = "mean",
              rounding: str = "truncate") -> tuple[list[float], int]:
    out = predict_clip(model, clip, cfg)
    if model.spec.head == "regression":
        return out.tolist(), aggregate(out, method, rounding)
    # class probabilities are averaged over windows; rating is class index + 1
    probs = out.mean(axis=0) if method == "mean" else np.median(out, axis=0)
    return out.argmax(axis=1).astype(float).tolist(), int(np.argmax(probs)) + 1


def evaluate_clips(model: ModelState, clips: Sequence[AudioClip], cfg: WindowingConfig,
                   method: str = "mean", rounding: str = "truncate", strict: bool = True) -> EvalReport:
    """Window every clip (no augmentation or balancing), aggregate, then score clips.

    Regression reports rho/MSE/MAE, classification reports UAR. With
    ``strict=False`` an undefined metric is reported as NaN instead of raising.
    """
    if (model.spec.sample_rate, model.spec.input_length) != (cfg.sample_rate, cfg.window_samples):
        raise ConfigError("windowing config does not match the model's input")
    preds = []
    for clip in clips:
        wp, rating = rate_clip(model, clip, cfg, method, rounding)
        preds.append(ClipPrediction(clip.id, int(clip.label), wp, rating))
    report = EvalReport(preds, method)
    y = [c.true for c in preds]
    r = [c.rating for c in preds]
    try:
        if model.spec.head == "regression":
            report.mse = mse_metric(r, y)
            report.mae = mae_metric(r, y)
            report.rho = spearman_rho(r, y)
        else:
            report.uar = uar([v - 1 for v in r], [v - 1 for v in y], model.spec.n_classes)
    except MetricUndefinedError:
        if strict:
            raise
        if model.spec.head == "regression":
            report.rho = float("nan")
        else:
            report.uar = float("nan")
    return report
