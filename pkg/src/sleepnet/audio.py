"""WAV decoding/encoding and integer-factor anti-aliased decimation."""

from __future__ import annotations

import wave
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import UnsupportedFormatError, UnsupportedRateError, WavFormatError

MIN_TARGET_RATE = 8000
FIR_TAPS = 63
CUTOFF_FRACTION = 0.45


@dataclass
class AudioClip:
    id: str
    samples: np.ndarray  # float32 mono in [-1, 1]
    sample_rate: int
    label: int | None = None

    @property
    def duration_seconds(self) -> float:
        return len(self.samples) / self.sample_rate


def decode_wav(path: str | Path, clip_id: str | None = None, label: int | None = None) -> AudioClip:
    """Read a 16-bit PCM WAV file; multichannel input is averaged to mono."""
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as wf:
            channels = wf.getnchannels()
            width = wf.getsampwidth()
            rate = wf.getframerate()
            nframes = wf.getnframes()
            raw = wf.readframes(nframes)
    except wave.Error as exc:
        msg = str(exc)
        if "unknown format" in msg:
            raise UnsupportedFormatError(f"{path}: {msg}") from exc
        raise WavFormatError(f"{path}: {msg}") from exc
    except EOFError as exc:
        raise WavFormatError(f"{path}: truncated header") from exc
    if width != 2:
        raise UnsupportedFormatError(f"{path}: {8 * width}-bit PCM, only 16-bit is supported")
    if rate <= 0:
        raise WavFormatError(f"{path}: sample rate {rate}")
    pcm = np.frombuffer(raw, dtype="<i2")
    usable = len(pcm) - len(pcm) % channels
    pcm = pcm[:usable].reshape(-1, channels).astype(np.float64)
    mono = pcm.mean(axis=1) / 32768.0
    return AudioClip(
        id=clip_id if clip_id is not None else path.stem,
        samples=mono.astype(np.float32),
        sample_rate=int(rate),
        label=label,
    )


def encode_wav(clip: AudioClip, path: str | Path) -> None:
    x = np.asarray(clip.samples, dtype=np.float64)
    pcm = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2")
    with open(path, "wb") as fh, wave.open(fh, "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(int(clip.sample_rate))
        wf.writeframes(pcm.tobytes())


def lowpass_taps(factor: int, numtaps: int = FIR_TAPS) -> np.ndarray:
    """Hamming-windowed sinc, cutoff at 0.45 x the post-decimation Nyquist, unit DC gain."""
    fc = CUTOFF_FRACTION / factor  # cycles/sample, relative to the source rate's Nyquist = 0.5
    n = np.arange(numtaps) - (numtaps - 1) / 2
    h = 2 * fc * np.sinc(2 * fc * n) * np.hamming(numtaps)
    return h / h.sum()


def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    """Decimate by an integer factor after a zero-padded linear-phase FIR low-pass."""
    src = clip.sample_rate
    if target_rate == src:
        return clip
    if target_rate > src:
        raise UnsupportedRateError(f"upsampling {src} -> {target_rate} Hz is not supported")
    if target_rate < MIN_TARGET_RATE:
        raise UnsupportedRateError(f"target rate {target_rate} Hz is below {MIN_TARGET_RATE} Hz")
    if src % target_rate:
        raise UnsupportedRateError(f"{src} -> {target_rate} Hz is not an integer decimation")
    factor = src // target_rate
    h = lowpass_taps(factor)
    filtered = np.convolve(np.asarray(clip.samples, dtype=np.float64), h, mode="same")
    out_len = len(clip.samples) // factor
    out = np.clip(filtered[: out_len * factor : factor], -1.0, 1.0).astype(np.float32)
    return replace(clip, samples=out, sample_rate=target_rate)
