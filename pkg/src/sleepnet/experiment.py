"""Glue between the corpus on disk and training/evaluation runs."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

from .audio import AudioClip, resample
from .config import RunConfig
from .dataset import (
    Manifest,
    WindowSample,
    augment,
    balance,
    collect_background,
    extract_windows,
    load_clips,
    load_manifest,
)
from .evaluation import EvalReport, evaluate_clips
from .model import ModelState, build_model
from .training import TrainHistory, train

log = logging.getLogger(__name__)


def load_split(cfg: RunConfig, split: str, manifest: Manifest | None = None) -> list[AudioClip]:
    """Decode one split and bring it to the configured sample rate."""
    root = Path(cfg.data_dir)
    manifest = manifest or load_manifest(root / "manifest.csv")
    return [resample(c, cfg.sample_rate) for c in load_clips(manifest, root, split)]


def training_windows(clips: list[AudioClip], cfg: RunConfig) -> list[WindowSample]:
    """window -> balance -> augment; augmentations add to the originals."""
    wcfg = cfg.windowing()
    windows = [w for c in clips for w in extract_windows(c, wcfg)]
    if cfg.balance:
        windows = balance(windows, cfg.seed)
    aug = cfg.augment_config()
    if aug.any:
        background = None
        if aug.overlay:
            background = collect_background(clips, aug.energy_threshold, aug.frame_s)
        windows = augment(windows, aug, cfg.seed, background)
    return windows


def plain_windows(clips: list[AudioClip], cfg: RunConfig) -> list[WindowSample]:
    wcfg = cfg.windowing()
    return [w for c in clips for w in extract_windows(c, wcfg)]


@dataclass
class RunResult:
    model: ModelState
    history: TrainHistory
    report: EvalReport | None


def run_training(cfg: RunConfig, checkpoint: str | None = None, progress: bool = False,
                 evaluate_split: str | None = None) -> RunResult:
    manifest = load_manifest(Path(cfg.data_dir) / "manifest.csv")
    train_clips = load_split(cfg, "train", manifest)
    dev_clips = load_split(cfg, "dev", manifest)
    train_set = training_windows(train_clips, cfg)
    dev_set = plain_windows(dev_clips, cfg)
    log.info("%d training windows, %d dev windows", len(train_set), len(dev_set))
    model = build_model(cfg.model_spec(), cfg.seed)
    best, history = train(model, train_set, dev_set, cfg.train_config(checkpoint), progress=progress)
    report = None
    if evaluate_split:
        clips = dev_clips if evaluate_split == "dev" else load_split(cfg, evaluate_split, manifest)
        report = evaluate_clips(best, clips, cfg.windowing(), cfg.aggregation, cfg.rounding, strict=False)
    return RunResult(best, history, report)


# the comparison grid: one change at a time against the default configuration
GRID = (
    ("proposed", {}),
    ("aug_reverse", {"augment_reverse": True}),
    ("aug_overlay", {"augment_overlay": True}),
    ("aug_noisy_labels", {"augment_noisy_labels": True}),
    ("rate_8khz", {"sample_rate": 8000}),
    ("window_1s", {"window_size_s": 1.0}),
    ("conv_blocks_3", {"conv_blocks": 3}),
)


def run_grid(cfg: RunConfig, out_csv: str | Path, progress: bool = False) -> list[tuple[str, float, float, float]]:
    """Train and score each grid configuration on the dev split; write ``config_id,mse,mae,rho``."""
    rows = []
    for config_id, changes in GRID:
        run_cfg = cfg.replace(**changes)
        if progress:
            print(f"[{config_id}]", flush=True)
        result = run_training(run_cfg, progress=progress, evaluate_split="dev")
        rep = result.report
        rows.append((config_id, rep.mse, rep.mae, rep.rho))
    with open(out_csv, "w") as fh:
        fh.write("config_id,mse,mae,rho\n")
        for config_id, mse, mae, rho in rows:
            fh.write(f"{config_id},{mse:.6f},{mae:.6f},{rho:.6f}\n")
    return rows

