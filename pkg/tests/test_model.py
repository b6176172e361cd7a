import numpy as np
import pytest

from helpers import numeric_grad_smooth, rel_error
from sleepnet.errors import CorruptModelError, ModelFormatError, ShapeError, SpecError, StateError
from sleepnet.model import (
    ModelSpec,
    backward,
    build_model,
    forward,
    forward_with_cache,
    load_model,
    model_bytes,
    save_model,
)
from sleepnet.nn import maxpool_indices
from sleepnet.training import loss_and_grad

TINY = ModelSpec(sample_rate=64, window_size_s=1.0)


def as_float64(model):
    model.params = {k: v.astype(np.float64) for k, v in model.params.items()}
    for st in model.bn:
        st.running_mean = st.running_mean.astype(np.float64)
        st.running_var = st.running_var.astype(np.float64)
    return model


def test_default_shapes_and_counts():
    model = build_model(ModelSpec(), seed=0)
    assert model.param_count("conv0") == 16
    assert model.param_count("conv1") == 52
    assert model.spec.stage_lengths() == [23998, 5999, 5997, 1499]
    assert model.params["dense.w"].shape == (5996, 32)
    assert model.params["head.w"].shape == (32, 1)
    out = forward(model, np.zeros((2, 1, 24000), np.float32))
    assert out.shape == (2, 1)


def test_classification_head_probabilities():
    model = build_model(ModelSpec(sample_rate=64, window_size_s=1.0, head="classification", n_classes=3), 0)
    x = np.random.default_rng(0).uniform(-1, 1, (5, 64)).astype(np.float32)
    p = forward(model, x)
    assert p.shape == (5, 3)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-6)


def test_zero_head_gives_zero():
    model = build_model(TINY, 1)
    model.params["head.w"][:] = 0
    x = np.random.default_rng(1).uniform(-1, 1, (3, 64)).astype(np.float32)
    np.testing.assert_array_equal(forward(model, x), 0.0)


def test_build_and_infer_deterministic():
    a, b = build_model(TINY, 7), build_model(TINY, 7)
    for k in a.params:
        np.testing.assert_array_equal(a.params[k], b.params[k])
    x = np.random.default_rng(2).uniform(-1, 1, (4, 64)).astype(np.float32)
    np.testing.assert_array_equal(forward(a, x), forward(a, x))
    assert not np.array_equal(build_model(TINY, 8).params["dense.w"], a.params["dense.w"])


def test_init_bounds():
    model = build_model(ModelSpec(), 0)
    bound = np.sqrt(6.0 / 5996)
    assert np.abs(model.params["dense.w"]).max() <= bound
    assert np.all(model.params["dense.b"] == 0)


def test_window_too_short_names_minimum():
    spec = ModelSpec(sample_rate=16, window_size_s=1.0, conv_blocks=3)
    with pytest.raises(SpecError, match="minimum is"):
        build_model(spec)
    n = spec.min_input_length()
    assert spec.flatten_length(n) >= 1 and spec.flatten_length(n - 1) == 0


def test_wrong_input_shape():
    with pytest.raises(ShapeError):
        forward(build_model(TINY), np.zeros((1, 1, 63), np.float32))


def test_backward_before_forward():
    with pytest.raises(StateError):
        backward(build_model(TINY), None, np.zeros((1, 1)))


def activation_pattern(cache) -> bytes:
    """Fingerprint of every relu sign and pool winner in a forward cache."""
    blocks, _, _, dense_relu, _, _ = cache
    parts = []
    for _, _, relu_in, pool_cache, _ in blocks:
        parts.append((relu_in > 0).tobytes())
        parts.append(maxpool_indices(pool_cache).tobytes())
    parts.append((dense_relu > 0).tobytes())
    return b"".join(parts)


def composed_gradient_errors(seed, head, n=64, batch=4, h=1e-3):
    """Per-tensor relative errors between backprop and kink-aware central differences."""
    spec = ModelSpec(sample_rate=n, window_size_s=1.0, head=head, n_classes=3 if head == "classification" else 1)
    model = as_float64(build_model(spec, seed))
    rng = np.random.default_rng(100 + seed)
    x = rng.uniform(-1, 1, (batch, 1, n))
    y = rng.integers(1, 4, size=batch).astype(np.float64)

    def loss():
        logits, cache = forward_with_cache(model, x, "train", np.random.default_rng(seed))
        return loss_and_grad(model, logits, y)[0], activation_pattern(cache)

    logits, cache = forward_with_cache(model, x, "train", np.random.default_rng(seed))
    _, dlogits = loss_and_grad(model, logits, y)
    grads = backward(model, cache, dlogits)
    errors, skipped, total = {}, 0, 0
    for name, p in list(model.params.items()) + [("input", x)]:
        num, valid = numeric_grad_smooth(loss, p, h)
        skipped += int((~valid).sum())
        total += valid.size
        ana, num = grads[name][valid], num[valid]
        # conv biases feed straight into batch norm, so their true gradient is zero
        errors[name] = 0.0 if np.max(np.abs(ana - num), initial=0.0) <= 1e-8 else rel_error(ana, num)
    return errors, skipped, total


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("head", ["regression", "classification"])
def test_composed_gradient(seed, head):
    errors, skipped, total = composed_gradient_errors(seed, head)
    assert max(errors.values()) <= 1e-3, errors
    assert skipped <= 0.1 * total


def test_save_load_bit_exact(tmp_path):
    model = build_model(TINY, 3)
    x = np.random.default_rng(3).uniform(-1, 1, (6, 64)).astype(np.float32)
    forward_with_cache(model, x, "train", np.random.default_rng(0))  # move running stats off the defaults
    save_model(model, tmp_path / "m.rvm")
    raw = (tmp_path / "m.rvm").read_bytes()
    assert raw[:4] == b"RVM1"
    back = load_model(tmp_path / "m.rvm")
    assert back.spec == model.spec
    for k in model.params:
        np.testing.assert_array_equal(back.params[k], model.params[k])
    np.testing.assert_array_equal(back.bn[0].running_mean, model.bn[0].running_mean)
    np.testing.assert_array_equal(forward(back, x), forward(model, x))
    assert model_bytes(back) == raw


def test_load_bad_magic(tmp_path):
    (tmp_path / "x.rvm").write_bytes(b"RIFF" + bytes(40))
    with pytest.raises(ModelFormatError):
        load_model(tmp_path / "x.rvm")


def test_load_truncated_and_corrupt(tmp_path):
    save_model(build_model(TINY), tmp_path / "m.rvm")
    raw = (tmp_path / "m.rvm").read_bytes()
    (tmp_path / "t.rvm").write_bytes(raw[: len(raw) // 2])
    with pytest.raises(CorruptModelError):
        load_model(tmp_path / "t.rvm")
    flipped = bytearray(raw)
    flipped[len(raw) // 2] ^= 0xFF
    (tmp_path / "f.rvm").write_bytes(bytes(flipped))
    with pytest.raises(CorruptModelError):
        load_model(tmp_path / "f.rvm")


def test_load_wrong_version(tmp_path):
    save_model(build_model(TINY), tmp_path / "m.rvm")
    raw = bytearray((tmp_path / "m.rvm").read_bytes())
    raw[4:6] = (2).to_bytes(2, "little")
    (tmp_path / "v.rvm").write_bytes(bytes(raw))
    with pytest.raises(ModelFormatError, match="version"):
        load_model(tmp_path / "v.rvm")
