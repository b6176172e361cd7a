"""The raw-waveform 1D CNN: build, forward/backward, save/load.

Layer stack, repeated ``conv_blocks`` times::

    conv1d(k) -> batchnorm -> relu -> maxpool(P) -> dropout

followed by ``flatten -> dense(units) -> relu -> dropout -> head`` where the
head is a single linear unit (regression) or K logits fed to a softmax
(classification).
"""

from __future__ import annotations

import copy
import json
import struct
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from .errors import ConfigError, CorruptModelError, ModelFormatError, ShapeError, SpecError, StateError

MODEL_MAGIC = b"RVM1"
MODEL_VERSION = 1


@dataclass(frozen=True)
class ModelSpec:
    sample_rate: int = 16000
    window_size_s: float = 1.5
    conv_blocks: int = 2
    filters_per_conv: int = 4
    kernel_size: int = 3
    pool_size: int = 4
    dense_units: int = 32
    conv_dropout: float = 0.1
    dense_dropout: float = 0.5
    head: str = "regression"
    n_classes: int = 1

    def __post_init__(self):
        if self.head not in ("regression", "classification"):
            raise SpecError(f"unknown head {self.head!r}")
        if self.head == "classification" and self.n_classes < 2:
            raise SpecError("classification head needs n_classes >= 2")
        counts = (self.sample_rate, self.conv_blocks, self.filters_per_conv, self.kernel_size,
                  self.pool_size, self.dense_units)
        if any(c < 1 for c in counts):
            raise SpecError("all layer counts must be positive")
        for rate in (self.conv_dropout, self.dense_dropout):
            if not 0.0 <= rate < 1.0:
                raise SpecError(f"dropout rate {rate} outside [0, 1)")

    @property
    def input_length(self) -> int:
        return int(round(self.window_size_s * self.sample_rate))

    @property
    def outputs(self) -> int:
        return 1 if self.head == "regression" else self.n_classes

    def stage_lengths(self, n: int | None = None) -> list[int]:
        """Sequence length after each conv and each pool, in order."""
        n = self.input_length if n is None else n
        lengths = []
        for _ in range(self.conv_blocks):
            n = n - self.kernel_size + 1
            lengths.append(n)
            n = n // self.pool_size if n > 0 else 0
            lengths.append(n)
        return lengths

    def flatten_length(self, n: int | None = None) -> int:
        lengths = self.stage_lengths(n)
        if min(lengths) < 1:
            return 0
        return self.filters_per_conv * lengths[-1]

    def min_input_length(self) -> int:
        n = self.kernel_size
        while self.flatten_length(n) < 1:
            n += 1
        return n


@dataclass
class ModelState:
    spec: ModelSpec
    params: dict[str, np.ndarray]
    bn: list[nn.BatchNormState] = field(default_factory=list)

    def param_count(self, prefix: str = "") -> int:
        return sum(p.size for k, p in self.params.items() if k.startswith(prefix))

    def copy(self) -> "ModelState":
        return copy.deepcopy(self)


def _uniform(rng, shape, fan_in):
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


def build_model(spec: ModelSpec, seed: int = 0) -> ModelState:
    flat = spec.flatten_length()
    if flat < 1:
        raise SpecError(
            f"a {spec.input_length}-sample window is too short for {spec.conv_blocks} conv blocks; "
            f"minimum is {spec.min_input_length()} samples "
            f"({spec.min_input_length() / spec.sample_rate:.4f} s at {spec.sample_rate} Hz)"
        )
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    bn = []
    c_in, f, k = 1, spec.filters_per_conv, spec.kernel_size
    for i in range(spec.conv_blocks):
        params[f"conv{i}.w"] = _uniform(rng, (f, c_in, k), c_in * k)
        params[f"conv{i}.b"] = np.zeros(f, dtype=np.float32)
        params[f"bn{i}.gamma"] = np.ones(f, dtype=np.float32)
        params[f"bn{i}.beta"] = np.zeros(f, dtype=np.float32)
        bn.append(nn.BatchNormState(f))
        c_in = f
    params["dense.w"] = _uniform(rng, (flat, spec.dense_units), flat)
    params["dense.b"] = np.zeros(spec.dense_units, dtype=np.float32)
    params["head.w"] = _uniform(rng, (spec.dense_units, spec.outputs), spec.dense_units)
    params["head.b"] = np.zeros(spec.outputs, dtype=np.float32)
    return ModelState(spec, params, bn)


def _prepare_input(model: ModelState, x) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim == 2:
        x = x[:, None, :]
    n = model.spec.input_length
    if x.ndim != 3 or x.shape[1] != 1 or x.shape[2] != n:
        raise ShapeError(f"expected windows of shape [B x 1 x {n}], got {x.shape}")
    return x


def forward_with_cache(model: ModelState, x, mode: str = "infer", rng: np.random.Generator | None = None):
    """Return head logits and the cache ``backward`` needs.

    Train mode updates the batch-norm running statistics.
    """
    spec, p = model.spec, model.params
    h = _prepare_input(model, x)
    caches = []
    for i in range(spec.conv_blocks):
        h, c_conv = nn.conv1d_forward(h, p[f"conv{i}.w"], p[f"conv{i}.b"])
        h, c_bn = nn.batchnorm_forward(h, p[f"bn{i}.gamma"], p[f"bn{i}.beta"], mode, model.bn[i])
        # relu and max-pool commute; pooling first makes relu 4x cheaper
        h, c_pool = nn.maxpool1d_forward(h, spec.pool_size)
        h, c_relu = nn.relu_forward(h)
        h, mask = nn.dropout_forward(h, spec.conv_dropout, mode, rng)
        caches.append((c_conv, c_bn, c_relu, c_pool, mask))
    pooled_shape = h.shape
    h = h.reshape(h.shape[0], -1)
    h, c_dense = nn.dense_forward(h, p["dense.w"], p["dense.b"])
    h, c_relu = nn.relu_forward(h)
    h, mask = nn.dropout_forward(h, spec.dense_dropout, mode, rng)
    logits, c_head = nn.dense_forward(h, p["head.w"], p["head.b"])
    return logits, (caches, pooled_shape, c_dense, c_relu, mask, c_head)


def forward(model: ModelState, x, mode: str = "infer", rng: np.random.Generator | None = None) -> np.ndarray:
    """[B x 1] predictions (regression) or [B x K] class probabilities."""
    logits, _ = forward_with_cache(model, x, mode, rng)
    if model.spec.head == "classification":
        return nn.softmax(logits)
    return logits


def backward(model: ModelState, cache, dlogits) -> dict[str, np.ndarray]:
    """Parameter gradients for the logits gradient ``dlogits``."""
    if cache is None:
        raise StateError("backward called before a forward pass")
    caches, pooled_shape, c_dense, c_relu, mask, c_head = cache
    grads: dict[str, np.ndarray] = {}
    dh, grads["head.w"], grads["head.b"] = nn.dense_backward(dlogits, c_head)
    dh = nn.dropout_backward(dh, mask)
    dh = nn.relu_backward(dh, c_relu)
    dh, grads["dense.w"], grads["dense.b"] = nn.dense_backward(dh, c_dense)
    dh = dh.reshape(pooled_shape)
    for i in reversed(range(model.spec.conv_blocks)):
        c_conv, c_bn, c_relu_i, c_pool, mask_i = caches[i]
        dh = nn.dropout_backward(dh, mask_i)
        dh = nn.relu_backward(dh, c_relu_i)
        dh = nn.maxpool1d_backward(dh, c_pool)
        dh, grads[f"bn{i}.gamma"], grads[f"bn{i}.beta"] = nn.batchnorm_backward(dh, c_bn)
        dh, grads[f"conv{i}.w"], grads[f"conv{i}.b"] = nn.conv1d_backward(dh, c_conv)
    grads["input"] = dh
    return grads


# --------------------------------------------------------------------------- serialization

def _state_tensors(model: ModelState) -> list[np.ndarray]:
    tensors = list(model.params.values())
    for st in model.bn:
        tensors += [st.running_mean, st.running_var]
    return tensors


def _param_names(spec: ModelSpec) -> list[str]:
    names = []
    for i in range(spec.conv_blocks):
        names += [f"conv{i}.w", f"conv{i}.b", f"bn{i}.gamma", f"bn{i}.beta"]
    return names + ["dense.w", "dense.b", "head.w", "head.b"]


def model_bytes(model: ModelState) -> bytes:
    spec_blob = json.dumps(asdict(model.spec), sort_keys=True).encode("utf-8")
    parts = [MODEL_MAGIC, struct.pack("<H", MODEL_VERSION), struct.pack("<I", len(spec_blob)), spec_blob]
    tensors = _state_tensors(model)
    parts.append(struct.pack("<I", len(tensors)))
    for t in tensors:
        parts.append(struct.pack("<B", t.ndim))
        parts.append(struct.pack(f"<{t.ndim}I", *t.shape))
        parts.append(np.ascontiguousarray(t, dtype="<f4").tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def save_model(model: ModelState, path: str | Path) -> None:
    """Layout: ``RVM1``, u16 version, u32 + JSON spec, u32 tensor count,
    per tensor (u8 rank, u32 dims, f32 data), trailing CRC32 of everything before it."""
    Path(path).write_bytes(model_bytes(model))


def load_model(path: str | Path) -> ModelState:
    data = Path(path).read_bytes()
    if data[:4] != MODEL_MAGIC:
        raise ModelFormatError(f"{path}: not a model file (bad magic)")
    if len(data) < 10:
        raise CorruptModelError(f"{path}: truncated")
    (version,) = struct.unpack_from("<H", data, 4)
    if version != MODEL_VERSION:
        raise ModelFormatError(f"{path}: format version {version}, expected {MODEL_VERSION}")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise CorruptModelError(f"{path}: checksum mismatch (truncated or damaged)")
    try:
        (spec_len,) = struct.unpack_from("<I", body, 6)
        pos = 10
        spec = ModelSpec(**json.loads(body[pos : pos + spec_len].decode("utf-8")))
        pos += spec_len
        (count,) = struct.unpack_from("<I", body, pos)
        pos += 4
        tensors = []
        for _ in range(count):
            (rank,) = struct.unpack_from("<B", body, pos)
            pos += 1
            shape = struct.unpack_from(f"<{rank}I", body, pos)
            pos += 4 * rank
            size = int(np.prod(shape)) if rank else 1
            t = np.frombuffer(body, dtype="<f4", count=size, offset=pos).reshape(shape).astype(np.float32)
            pos += 4 * size
            tensors.append(t)
    except (struct.error, ValueError, TypeError) as exc:
        raise CorruptModelError(f"{path}: {exc}") from exc
    if pos != len(body):
        raise CorruptModelError(f"{path}: {len(body) - pos} trailing bytes")
    model = build_model(spec, seed=0)
    names = _param_names(spec)
    if len(tensors) != len(names) + 2 * spec.conv_blocks:
        raise CorruptModelError(f"{path}: {len(tensors)} tensors, spec implies {len(names) + 2 * spec.conv_blocks}")
    for name, t in zip(names, tensors):
        if t.shape != model.params[name].shape:
            raise CorruptModelError(f"{path}: {name} has shape {t.shape}, expected {model.params[name].shape}")
        model.params[name] = t
    rest = tensors[len(names):]
    for i, st in enumerate(model.bn):
        st.running_mean, st.running_var = rest[2 * i], rest[2 * i + 1]
    return model


def spec_from_mapping(values: dict) -> ModelSpec:
    known = {f for f in ModelSpec.__dataclass_fields__}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown model keys: {sorted(unknown)}")
    return ModelSpec(**values)
