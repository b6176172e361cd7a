"""Manifest parsing, sliding windows, label balancing, augmentation, window files."""

from __future__ import annotations

import csv
import math
import struct
import zlib
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .audio import AudioClip, decode_wav
from .errors import ClipTooShortError, ConfigError, ManifestError, ShapeError, SleepNetError

SPLITS = ("train", "dev", "test")
KSS_MIN, KSS_MAX = 1, 9
WINDOW_MAGIC = b"RVW1"


def item_rng(seed: int, *keys: object) -> np.random.Generator:
    """Generator derived from (seed, keys), independent of processing order."""
    words = [int(seed) & 0xFFFFFFFF]
    words += [zlib.crc32(str(k).encode("utf-8")) for k in keys]
    return np.random.default_rng(words)


# --------------------------------------------------------------------------- manifest

@dataclass(frozen=True)
class ManifestEntry:
    file: str
    label: int
    split: str


@dataclass
class Manifest:
    entries: list[ManifestEntry]

    def split(self, name: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == name]


def load_manifest(path: str | Path) -> Manifest:
    """Parse a ``file,label,split`` CSV. Errors name the offending line."""
    entries: list[ManifestEntry] = []
    seen: set[str] = set()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ManifestError(f"{path}: empty file, expected header file,label,split")
        header = [h.strip() for h in header]
        missing = [c for c in ("file", "label", "split") if c not in header]
        if missing:
            raise ManifestError(f"{path}:1: missing column(s) {', '.join(missing)}")
        idx = {c: header.index(c) for c in ("file", "label", "split")}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < len(header):
                raise ManifestError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            file = row[idx["file"]].strip()
            split = row[idx["split"]].strip()
            try:
                label = int(row[idx["label"]].strip())
            except ValueError:
                raise ManifestError(f"{path}:{lineno}: label {row[idx['label']]!r} is not an integer") from None
            if not KSS_MIN <= label <= KSS_MAX:
                raise ManifestError(f"{path}:{lineno}: label {label} outside [{KSS_MIN}, {KSS_MAX}]")
            if split not in SPLITS:
                raise ManifestError(f"{path}:{lineno}: unknown split {split!r}")
            if file in seen:
                raise ManifestError(f"{path}:{lineno}: duplicate path {file!r}")
            seen.add(file)
            entries.append(ManifestEntry(file, label, split))
    return Manifest(entries)


def write_manifest(manifest: Manifest, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["file", "label", "split"])
        for e in manifest.entries:
            w.writerow([e.file, e.label, e.split])


def load_clips(manifest: Manifest, root: str | Path, split: str) -> list[AudioClip]:
    root = Path(root)
    clips = []
    for e in manifest.split(split):
        try:
            clips.append(decode_wav(root / e.file, clip_id=e.file, label=e.label))
        except (SleepNetError, OSError) as exc:
            raise type(exc)(f"cannot decode {e.file}: {exc}") from exc
    return clips


# --------------------------------------------------------------------------- statistics

@dataclass(frozen=True)
class CorpusStats:
    count: int
    mean: float
    std: float
    min: float
    max: float


def duration_stats(durations: Sequence[float]) -> CorpusStats:
    d = np.asarray(durations, dtype=np.float64)
    if d.size == 0:
        return CorpusStats(0, float("nan"), float("nan"), float("nan"), float("nan"))
    return CorpusStats(int(d.size), float(d.mean()), float(d.std()), float(d.min()), float(d.max()))


def corpus_stats(manifest: Manifest, root: str | Path) -> dict[str, CorpusStats]:
    """Per-split clip-duration statistics (population std), plus ``all`` over every clip."""
    root = Path(root)
    out = {}
    every: list[float] = []
    for split in SPLITS:
        durations = []
        for e in manifest.split(split):
            try:
                clip = decode_wav(root / e.file)
            except (SleepNetError, OSError) as exc:
                raise type(exc)(f"cannot decode {e.file}: {exc}") from exc
            durations.append(clip.duration_seconds)
        if durations:
            out[split] = duration_stats(durations)
            every.extend(durations)
    if every:
        out["all"] = duration_stats(every)
    return out


def format_stats(stats: dict[str, CorpusStats]) -> str:
    names = {"train": "Training", "dev": "Development", "test": "Test", "all": "All"}
    lines = [f"{'Dataset':<12} {'Samples':>8} {'mu':>6} {'sigma':>6} {'min':>6} {'max':>6}"]
    for split, s in stats.items():
        lines.append(
            f"{names[split]:<12} {s.count:>8,} {s.mean:>6.2f} {s.std:>6.2f} {s.min:>6.2f} {s.max:>6.2f}"
        )
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------- windows

@dataclass(frozen=True)
class WindowingConfig:
    window_size_s: float = 1.5
    stride_s: float = 0.1
    sample_rate: int = 16000
    allow_short: bool = False

    def __post_init__(self):
        if self.window_size_s <= 0 or self.stride_s <= 0 or self.sample_rate <= 0:
            raise ConfigError("window size, stride and sample rate must be positive")
        for name, sec in (("window_size_s", self.window_size_s), ("stride_s", self.stride_s)):
            n = sec * self.sample_rate
            if abs(n - round(n)) > 1e-6:
                raise ConfigError(f"{name}={sec} s is not a whole number of samples at {self.sample_rate} Hz")

    @property
    def window_samples(self) -> int:
        return int(round(self.window_size_s * self.sample_rate))

    @property
    def stride_samples(self) -> int:
        return int(round(self.stride_s * self.sample_rate))


@dataclass
class WindowSample:
    samples: np.ndarray
    label: float
    source_id: str
    offset_s: float


def window_count(n_samples: int, cfg: WindowingConfig) -> int:
    return max(1, (n_samples - cfg.window_samples) // cfg.stride_samples)


def extract_windows(clip: AudioClip, cfg: WindowingConfig) -> list[WindowSample]:
    """Cut ``max(1, floor((L - w) / s))`` windows; each is a view into the clip.

    Unlabelled clips yield NaN-labelled windows (inference only).
    """
    if clip.sample_rate != cfg.sample_rate:
        raise ConfigError(f"clip {clip.id} is at {clip.sample_rate} Hz, config expects {cfg.sample_rate} Hz")
    label = float(clip.label) if clip.label is not None else float("nan")
    w, s = cfg.window_samples, cfg.stride_samples
    x = np.asarray(clip.samples, dtype=np.float32)
    if len(x) < w:
        if not cfg.allow_short:
            raise ClipTooShortError(
                f"clip {clip.id} is {clip.duration_seconds:.3f} s, shorter than the {cfg.window_size_s} s window"
            )
        padded = np.zeros(w, dtype=np.float32)
        padded[: len(x)] = x
        return [WindowSample(padded, label, clip.id, 0.0)]
    return [
        WindowSample(x[i * s : i * s + w], label, clip.id, i * s / cfg.sample_rate)
        for i in range(window_count(len(x), cfg))
    ]


def label_bucket(label: float) -> int:
    """Round half away from zero."""
    return int(math.floor(abs(label) + 0.5)) * (1 if label >= 0 else -1)


def balance(windows: Sequence[WindowSample], seed: int) -> list[WindowSample]:
    """Resample every non-empty label bucket to the median bucket count.

    Oversized buckets are subsampled without replacement (original order kept);
    undersized ones are replicated whole, then topped up by a seeded draw.
    With an even number of buckets the lower-middle count is the target.
    """
    buckets: dict[int, list[WindowSample]] = {}
    for win in windows:
        b = label_bucket(win.label)
        if not KSS_MIN <= b <= KSS_MAX:
            raise ConfigError(f"label {win.label} of {win.source_id} falls outside buckets 1-9")
        buckets.setdefault(b, []).append(win)
    if not buckets:
        return []
    counts = sorted(len(v) for v in buckets.values())
    target = counts[(len(counts) - 1) // 2]
    out: list[WindowSample] = []
    for b in sorted(buckets):
        items = buckets[b]
        n = len(items)
        rng = item_rng(seed, "balance", b)
        if n >= target:
            keep = np.sort(rng.choice(n, size=target, replace=False))
            out.extend(items[i] for i in keep)
        else:
            reps, extra = divmod(target, n)
            out.extend(items * reps)
            out.extend(items[i] for i in np.sort(rng.choice(n, size=extra, replace=False)))
    return out


# --------------------------------------------------------------------------- augmentation

def reverse_augment(window: WindowSample) -> WindowSample:
    return replace(window, samples=window.samples[::-1])


def overlay_noise(window: WindowSample, noise: np.ndarray, alpha: float) -> WindowSample:
    n = len(window.samples)
    if len(noise) < n:
        raise ShapeError(f"noise has {len(noise)} samples, window needs {n}")
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"mixing coefficient {alpha} outside [0, 1]")
    mixed = np.clip(window.samples + np.float32(alpha) * np.asarray(noise[:n], dtype=np.float32), -1.0, 1.0)
    return replace(window, samples=mixed.astype(np.float32))


def extract_background(clip: AudioClip, energy_threshold: float = 0.02, frame_s: float = 0.1) -> np.ndarray:
    """Concatenate the frames whose RMS is below ``energy_threshold``."""
    if frame_s <= 0:
        raise ConfigError("frame length must be positive")
    frame = max(1, int(round(frame_s * clip.sample_rate)))
    x = np.asarray(clip.samples, dtype=np.float32)
    # trailing partial frame is kept as its own frame
    n_frames = -(-len(x) // frame)
    if n_frames == 0:
        return np.zeros(0, dtype=np.float32)
    padded = np.zeros(n_frames * frame, dtype=np.float64)
    padded[: len(x)] = x
    sq = padded.reshape(n_frames, frame) ** 2
    lengths = np.full(n_frames, frame)
    lengths[-1] = len(x) - (n_frames - 1) * frame
    rms = np.sqrt(sq.sum(axis=1) / lengths)
    parts = [x[i * frame : (i + 1) * frame] for i in np.flatnonzero(rms < energy_threshold)]
    if not parts:
        return np.zeros(0, dtype=np.float32)
    return np.concatenate(parts).astype(np.float32)


def noisy_label(label: float, sigma: float, rng: np.random.Generator) -> float:
    if sigma < 0:
        raise ConfigError("label noise sigma must be non-negative")
    if sigma == 0:
        return float(label)
    return float(np.clip(label + rng.normal(0.0, sigma), KSS_MIN, KSS_MAX))


@dataclass(frozen=True)
class AugmentConfig:
    reverse: bool = False
    overlay: bool = False
    noisy_labels: bool = False
    label_sigma: float = 0.5
    alpha_low: float = 0.1
    alpha_high: float = 0.3
    energy_threshold: float = 0.02
    frame_s: float = 0.1

    @property
    def any(self) -> bool:
        return self.reverse or self.overlay or self.noisy_labels


def _window_key(win: WindowSample) -> str:
    return f"{win.source_id}@{win.offset_s:.6f}"


def augment(
    windows: Sequence[WindowSample],
    cfg: AugmentConfig,
    seed: int,
    background: np.ndarray | None = None,
) -> list[WindowSample]:
    """Return the originals followed by one modified copy per enabled technique."""
    out = list(windows)
    if cfg.reverse:
        out.extend(reverse_augment(w) for w in windows)
    if cfg.overlay:
        if background is None or len(background) == 0:
            raise ConfigError("background overlay enabled but no background noise was found")
        for i, w in enumerate(windows):
            rng = item_rng(seed, "overlay", _window_key(w), i)
            n = len(w.samples)
            # short buffers are tiled so any window length can be covered
            buf = background if len(background) >= n else np.resize(background, n)
            start = int(rng.integers(0, len(buf) - n + 1))
            alpha = float(rng.uniform(cfg.alpha_low, cfg.alpha_high))
            out.append(overlay_noise(w, buf[start : start + n], alpha))
    if cfg.noisy_labels:
        for i, w in enumerate(windows):
            rng = item_rng(seed, "label", _window_key(w), i)
            out.append(replace(w, label=noisy_label(w.label, cfg.label_sigma, rng)))
    return out


def collect_background(clips: Iterable[AudioClip], energy_threshold: float, frame_s: float) -> np.ndarray:
    parts = [extract_background(c, energy_threshold, frame_s) for c in clips]
    parts = [p for p in parts if len(p)]
    return np.concatenate(parts) if parts else np.zeros(0, dtype=np.float32)


def stack_windows(windows: Sequence[WindowSample]) -> tuple[np.ndarray, np.ndarray]:
    x = np.stack([w.samples for w in windows]).astype(np.float32, copy=False)
    y = np.array([w.label for w in windows], dtype=np.float32)
    return x, y


# --------------------------------------------------------------------------- window files

def save_windows(windows: Sequence[WindowSample], path: str | Path) -> None:
    """Binary layout: ``RVW1``, u32 count, u32 length, then (f32 label, f32 samples...) per window."""
    length = len(windows[0].samples) if windows else 0
    with open(path, "wb") as fh:
        fh.write(WINDOW_MAGIC)
        fh.write(struct.pack("<II", len(windows), length))
        for w in windows:
            if len(w.samples) != length:
                raise ShapeError("all windows must share one length")
            fh.write(struct.pack("<f", w.label))
            fh.write(np.asarray(w.samples, dtype="<f4").tobytes())


def load_windows(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Return (labels [count], samples [count x length]) from an ``RVW1`` file."""
    data = Path(path).read_bytes()
    if data[:4] != WINDOW_MAGIC:
        raise ManifestError(f"{path}: not a window file (bad magic)")
    count, length = struct.unpack_from("<II", data, 4)
    rec = np.dtype([("label", "<f4"), ("samples", "<f4", (length,))])
    expected = 12 + count * rec.itemsize
    if len(data) != expected:
        raise ManifestError(f"{path}: expected {expected} bytes, found {len(data)}")
    arr = np.frombuffer(data, dtype=rec, count=count, offset=12)
    return arr["label"].copy(), arr["samples"].copy()
