import hashlib
from collections import Counter

import numpy as np
import pytest

from sleepnet.dataset import duration_stats, load_manifest
from sleepnet.errors import ConfigError
from sleepnet.synth import SynthSpec, assign_splits, generate_corpus, synth_clip


def tree_digest(root):
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(root)).encode())
            h.update(p.read_bytes())
    return h.hexdigest()


def test_regeneration_is_byte_identical(tmp_path):
    spec = SynthSpec(clips_per_label=3, seed=4)
    generate_corpus(spec, tmp_path / "a")
    generate_corpus(spec, tmp_path / "b")
    assert tree_digest(tmp_path / "a") == tree_digest(tmp_path / "b")
    m = load_manifest(tmp_path / "a" / "manifest.csv")
    assert len(m.entries) == 27
    assert (tmp_path / "a" / m.entries[0].file).exists()


def test_seed_changes_corpus():
    a = synth_clip(SynthSpec(seed=1), 3, 0)
    b = synth_clip(SynthSpec(seed=2), 3, 0)
    assert not np.array_equal(a.samples, b.samples)


def nearest_label(clip, spec):
    spectrum = np.abs(np.fft.rfft(clip.samples))
    peak = np.fft.rfftfreq(len(clip.samples), 1 / clip.sample_rate)[np.argmax(spectrum)]
    freqs = [spec.base_freq + spec.freq_step * (k - 1) for k in range(1, spec.n_labels + 1)]
    return 1 + int(np.argmin([abs(peak - f) for f in freqs]))


def test_label_recoverable_by_spectral_peak():
    spec = SynthSpec(noise_floor=0.05, seed=7)
    hits = total = 0
    for label in range(1, 10):
        for i in range(25):
            hits += nearest_label(synth_clip(spec, label, i), spec) == label
            total += 1
    assert hits / total >= 0.99


def test_duration_statistics():
    spec = SynthSpec(seed=0)
    durations = [synth_clip(spec, 1 + i % 9, i // 9).duration_seconds for i in range(1000)]
    s = duration_stats(durations)
    assert abs(s.mean - 3.87) <= 0.1
    assert s.min >= 1.56 and s.max <= 5.00


def test_clip_shape():
    spec = SynthSpec(seed=0)
    clip = synth_clip(spec, 9, 0)
    assert clip.sample_rate == 16000 and clip.label == 9
    assert np.all(np.abs(clip.samples) <= 1.0)
    lead = clip.samples[: int(0.2 * 16000)]
    assert np.abs(lead).max() <= spec.noise_floor


def test_split_proportions():
    spec = SynthSpec(clips_per_label=10, seed=3)
    for label in range(1, 10):
        assert Counter(assign_splits(spec, label)) == {"train": 4, "dev": 3, "test": 3}
    assert assign_splits(spec, 1) != assign_splits(spec, 2) or assign_splits(spec, 1) != assign_splits(spec, 3)


@pytest.mark.parametrize(
    "kwargs",
    [{"duration_mean": 6.0}, {"freq_step": 200.0}, {"clips_per_label": 0}, {"n_labels": 10}],
)
def test_spec_validation(kwargs):
    with pytest.raises(ConfigError):
        SynthSpec(**kwargs)
