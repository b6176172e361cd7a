"""Flat ``key = value`` run configuration shared by every subcommand."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any

from .dataset import AugmentConfig, WindowingConfig
from .errors import ConfigError
from .model import ModelSpec
from .synth import SynthSpec
from .training import TrainConfig


@dataclass
class RunConfig:
    # paths
    data_dir: str = ""
    out_dir: str = ""
    model: str = ""
    split: str = "dev"
    # windowing
    sample_rate: int = 16000
    window_size_s: float = 1.5
    stride_s: float = 0.1
    allow_short: bool = False
    # model
    conv_blocks: int = 2
    filters_per_conv: int = 4
    kernel_size: int = 3
    pool_size: int = 4
    dense_units: int = 32
    conv_dropout: float = 0.1
    dense_dropout: float = 0.5
    head: str = "regression"
    n_classes: int = 1
    # training
    batch_size: int = 64
    epochs: int = 8
    lr: float = 0.001
    seed: int = 0
    shuffle: bool = True
    # data balancing and augmentation
    balance: bool = True
    augment_reverse: bool = False
    augment_overlay: bool = False
    augment_noisy_labels: bool = False
    label_sigma: float = 0.5
    overlay_alpha_low: float = 0.1
    overlay_alpha_high: float = 0.3
    background_threshold: float = 0.02
    background_frame_s: float = 0.1
    # evaluation
    aggregation: str = "mean"
    rounding: str = "truncate"
    # synthetic corpus
    synth_clips_per_label: int = 20
    synth_n_labels: int = 9
    synth_duration_mean: float = 3.87
    synth_duration_std: float = 0.64
    synth_duration_min: float = 1.56
    synth_duration_max: float = 5.00
    synth_base_freq: float = 200.0
    synth_freq_step: float = 150.0
    synth_noise_floor: float = 0.02
    synth_lead_silence_s: float = 0.2
    synth_sample_rate: int = 16000

    def __post_init__(self):
        if self.aggregation not in ("mean", "median"):
            raise ConfigError(f"aggregation must be mean or median, not {self.aggregation!r}")
        if self.rounding not in ("truncate", "round"):
            raise ConfigError(f"rounding must be truncate or round, not {self.rounding!r}")
        if self.split not in ("train", "dev", "test"):
            raise ConfigError(f"unknown split {self.split!r}")

    # -- views onto the component configs

    def windowing(self) -> WindowingConfig:
        return WindowingConfig(self.window_size_s, self.stride_s, self.sample_rate, self.allow_short)

    def model_spec(self) -> ModelSpec:
        return ModelSpec(
            sample_rate=self.sample_rate,
            window_size_s=self.window_size_s,
            conv_blocks=self.conv_blocks,
            filters_per_conv=self.filters_per_conv,
            kernel_size=self.kernel_size,
            pool_size=self.pool_size,
            dense_units=self.dense_units,
            conv_dropout=self.conv_dropout,
            dense_dropout=self.dense_dropout,
            head=self.head,
            n_classes=self.n_classes,
        )

    def train_config(self, checkpoint: str | None = None) -> TrainConfig:
        return TrainConfig(self.batch_size, self.epochs, self.lr, self.seed, checkpoint, self.shuffle)

    def augment_config(self) -> AugmentConfig:
        return AugmentConfig(
            reverse=self.augment_reverse,
            overlay=self.augment_overlay,
            noisy_labels=self.augment_noisy_labels,
            label_sigma=self.label_sigma,
            alpha_low=self.overlay_alpha_low,
            alpha_high=self.overlay_alpha_high,
            energy_threshold=self.background_threshold,
            frame_s=self.background_frame_s,
        )

    def synth_spec(self) -> SynthSpec:
        kw = {f.name[len("synth_"):]: getattr(self, f.name) for f in fields(self) if f.name.startswith("synth_")}
        return SynthSpec(seed=self.seed, **kw)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def coerce(key: str, raw: str) -> Any:
    if key not in FIELD_TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    kind = FIELD_TYPES[key]
    raw = raw.strip()
    try:
        if kind == "bool":
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {kind}") from None
    return raw


def parse_config_text(text: str, origin: str = "<config>") -> dict[str, Any]:
    values: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{lineno}: expected 'key = value'")
        key, raw = line.split("=", 1)
        key = key.strip()
        try:
            values[key] = coerce(key, raw)
        except ConfigError as exc:
            raise ConfigError(f"{origin}:{lineno}: {exc}") from None
    return values


def load_config(path: str | Path) -> dict[str, Any]:
    return parse_config_text(Path(path).read_text(), str(path))


def build_config(file_values: dict[str, Any] | None = None, overrides: dict[str, Any] | None = None) -> RunConfig:
    """Defaults, then config file values, then flag overrides (strongest)."""
    merged: dict[str, Any] = {}
    merged.update(file_values or {})
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    unknown = set(merged) - set(FIELD_TYPES)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return RunConfig(**merged)


def format_config(cfg: RunConfig) -> str:
    lines = ["# effective configuration"]
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, bool):
            v = "true" if v else "false"
        elif isinstance(v, float):
            v = repr(v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


def write_config(cfg: RunConfig, out_dir: str | Path) -> None:
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    (Path(out_dir) / "config.txt").write_text(format_config(cfg))
