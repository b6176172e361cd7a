"""Deterministic tone corpus whose label is encoded in the tone frequency."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import MIN_TARGET_RATE, AudioClip, encode_wav
from .dataset import Manifest, ManifestEntry, item_rng, write_manifest
from .errors import ConfigError

TONE_AMPLITUDE = 0.5


@dataclass(frozen=True)
class SynthSpec:
    clips_per_label: int = 20
    n_labels: int = 9
    duration_mean: float = 3.87
    duration_std: float = 0.64
    duration_min: float = 1.56
    duration_max: float = 5.00
    base_freq: float = 200.0
    freq_step: float = 150.0
    noise_floor: float = 0.02
    lead_silence_s: float = 0.2
    sample_rate: int = 16000
    seed: int = 0

    def __post_init__(self):
        if not self.duration_min <= self.duration_mean <= self.duration_max:
            raise ConfigError("synth durations need min <= mean <= max")
        if not 1 <= self.n_labels <= 9:
            raise ConfigError("n_labels must be between 1 and 9")
        if self.clips_per_label < 1:
            raise ConfigError("clips_per_label must be positive")
        top = self.frequency(self.n_labels)
        limit = 0.4 * MIN_TARGET_RATE / 2
        if self.base_freq <= 0 or top >= limit:
            raise ConfigError(f"highest tone {top} Hz must stay below {limit} Hz")
        if self.lead_silence_s >= self.duration_min:
            raise ConfigError("lead silence must be shorter than the shortest clip")

    def frequency(self, label: int) -> float:
        return self.base_freq + self.freq_step * (label - 1)


def synth_clip(spec: SynthSpec, label: int, index: int) -> AudioClip:
    rng = item_rng(spec.seed, "clip", label, index)
    duration = float(np.clip(rng.normal(spec.duration_mean, spec.duration_std),
                             spec.duration_min, spec.duration_max))
    n = int(round(duration * spec.sample_rate))
    t = np.arange(n) / spec.sample_rate
    phase = rng.uniform(0, 2 * np.pi)
    tone = TONE_AMPLITUDE * np.sin(2 * np.pi * spec.frequency(label) * t + phase)
    tone[: int(round(spec.lead_silence_s * spec.sample_rate))] = 0.0
    noise = rng.uniform(-spec.noise_floor, spec.noise_floor, size=n)
    x = np.clip(tone + noise, -1.0, 1.0).astype(np.float32)
    return AudioClip(f"k{label}_{index:04d}", x, spec.sample_rate, label)


def assign_splits(spec: SynthSpec, label: int) -> list[str]:
    """Exact 40/30/30 split of one label's clips via a seeded permutation."""
    n = spec.clips_per_label
    n_train = int(round(0.4 * n))
    n_dev = int(round(0.3 * n))
    tags = ["train"] * n_train + ["dev"] * n_dev + ["test"] * (n - n_train - n_dev)
    perm = item_rng(spec.seed, "split", label).permutation(n)
    return [tags[i] for i in np.argsort(perm)]


def generate_corpus(spec: SynthSpec, out_dir: str | Path) -> Manifest:
    """Write ``audio/*.wav`` and ``manifest.csv`` under ``out_dir``."""
    out_dir = Path(out_dir)
    (out_dir / "audio").mkdir(parents=True, exist_ok=True)
    entries = []
    for label in range(1, spec.n_labels + 1):
        splits = assign_splits(spec, label)
        for i in range(spec.clips_per_label):
            clip = synth_clip(spec, label, i)
            rel = f"audio/{clip.id}.wav"
            encode_wav(clip, out_dir / rel)
            entries.append(ManifestEntry(rel, label, splits[i]))
    manifest = Manifest(entries)
    write_manifest(manifest, out_dir / "manifest.csv")
    return manifest
