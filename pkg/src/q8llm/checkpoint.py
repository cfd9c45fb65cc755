"""Checkpoint serialization: float32 reference files and the grouped-int8
version-2 export, plus the offline post-training quantization step between
them.

float32 layout: seven little-endian int32s (dim, hidden_dim, n_layers,
n_heads, n_kv_heads, vocab_size, seq_len) -- a negative vocab_size flags an
unshared classifier -- followed by float32 arrays in canonical order:
token_embedding, rms_att x layers, wq, wk, wv, wo, rms_ffn, w1, w2, w3,
rms_final, [classifier if unshared].

version-2 layout: magic 0x616B3432 ("ak42"), int32 version=2, the seven
config int32s, uint8 shared-classifier flag, int32 group_size, zero padding
to byte 256; then all float32 norm vectors (rms_att x layers, rms_ffn x
layers, rms_final); then each quantized tensor as int8 values followed by
its float32 scales, in canonical weight order.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .model import ModelConfig, TransformerWeights
from .quant import QuantizedTensor, QuantStats, ShapeError, quantize_tensor

MAGIC = 0x616B3432
VERSION = 2
V2_HEADER_BYTES = 256
_CONFIG_FIELDS = ("dim", "hidden_dim", "n_layers", "n_heads", "n_kv_heads",
                  "vocab_size", "seq_len")


class CheckpointFormatError(ValueError):
    """Malformed or inconsistent checkpoint bytes."""


@dataclass
class Fp32Weights:
    """Unquantized reference weights; matrices are (rows, cols) row-major."""

    token_embedding: np.ndarray       # (vocab, dim)
    rms_att: np.ndarray               # (n_layers, dim)
    wq: np.ndarray                    # (n_layers, dim, dim)
    wk: np.ndarray                    # (n_layers, kv_dim, dim)
    wv: np.ndarray                    # (n_layers, kv_dim, dim)
    wo: np.ndarray                    # (n_layers, dim, dim)
    rms_ffn: np.ndarray               # (n_layers, dim)
    w1: np.ndarray                    # (n_layers, hidden_dim, dim)
    w2: np.ndarray                    # (n_layers, dim, hidden_dim)
    w3: np.ndarray                    # (n_layers, hidden_dim, dim)
    rms_final: np.ndarray             # (dim,)
    classifier: np.ndarray | None     # (vocab, dim), None when shared


def _shapes(config: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    d, h, L = config.dim, config.hidden_dim, config.n_layers
    kv, v = config.kv_dim, config.vocab_size
    return [
        ("token_embedding", (v, d)),
        ("rms_att", (L, d)),
        ("wq", (L, d, d)),
        ("wk", (L, kv, d)),
        ("wv", (L, kv, d)),
        ("wo", (L, d, d)),
        ("rms_ffn", (L, d)),
        ("w1", (L, h, d)),
        ("w2", (L, d, h)),
        ("w3", (L, h, d)),
        ("rms_final", (d,)),
    ]


def fp32_checkpoint_nbytes(config: ModelConfig, shared_classifier: bool) -> int:
    n = sum(int(np.prod(shape)) for _, shape in _shapes(config))
    if not shared_classifier:
        n += config.vocab_size * config.dim
    return 28 + 4 * n


def load_fp32_checkpoint(data: bytes) -> tuple[ModelConfig, Fp32Weights]:
    if len(data) < 28:
        raise CheckpointFormatError("file too short for the 7-int32 header")
    raw = struct.unpack_from("<7i", data, 0)
    shared = raw[5] > 0
    fields = list(raw)
    fields[5] = abs(fields[5])
    if any(f <= 0 for f in fields):
        raise CheckpointFormatError(f"non-positive config fields in header {raw}")
    try:
        config = ModelConfig(*fields)
    except ShapeError as exc:
        raise CheckpointFormatError(f"invalid header: {exc}") from exc
    expect = fp32_checkpoint_nbytes(config, shared)
    if len(data) != expect:
        raise CheckpointFormatError(
            f"payload size mismatch: header implies {expect} bytes, got {len(data)}"
        )
    flat = np.frombuffer(data, dtype="<f4", offset=28)
    off = 0
    arrays = {}
    for name, shape in _shapes(config):
        n = int(np.prod(shape))
        arrays[name] = flat[off:off + n].reshape(shape).copy()
        off += n
    classifier = None
    if not shared:
        n = config.vocab_size * config.dim
        classifier = flat[off:off + n].reshape(config.vocab_size, config.dim).copy()
    return config, Fp32Weights(classifier=classifier, **arrays)


def write_fp32_checkpoint(config: ModelConfig, weights: Fp32Weights) -> bytes:
    shared = weights.classifier is None
    header = list(getattr(config, f) for f in _CONFIG_FIELDS)
    if not shared:
        header[5] = -header[5]
    out = bytearray(struct.pack("<7i", *header))
    for name, shape in _shapes(config):
        arr = np.asarray(getattr(weights, name), dtype=np.float32)
        if arr.shape != shape:
            raise CheckpointFormatError(f"{name} has shape {arr.shape}, expected {shape}")
        out += arr.tobytes()
    if not shared:
        out += np.asarray(weights.classifier, dtype=np.float32).tobytes()
    return bytes(out)


def quantize_weights(config: ModelConfig, weights: Fp32Weights,
                     group_size: int) -> tuple[TransformerWeights, QuantStats]:
    """Post-training step: quantize every linear weight, keep norms float32."""
    if config.dim % group_size or config.hidden_dim % group_size:
        raise ShapeError(
            "dim and hidden_dim must be divisible by the quantization group size"
        )
    stats: list[QuantStats] = []

    def q(arr: np.ndarray) -> QuantizedTensor:
        qt, st = quantize_tensor(np.asarray(arr, dtype=np.float32).ravel(), group_size)
        stats.append(st)
        return qt

    token_embedding = q(weights.token_embedding)
    per_layer = {
        name: [q(getattr(weights, name)[layer]) for layer in range(config.n_layers)]
        for name in ("wq", "wk", "wv", "wo", "w1", "w2", "w3")
    }
    shared = weights.classifier is None
    classifier = token_embedding if shared else q(weights.classifier)
    tw = TransformerWeights(
        token_embedding=token_embedding,
        rms_att=np.asarray(weights.rms_att, dtype=np.float32).copy(),
        rms_ffn=np.asarray(weights.rms_ffn, dtype=np.float32).copy(),
        rms_final=np.asarray(weights.rms_final, dtype=np.float32).copy(),
        classifier=classifier,
        shared_classifier=shared,
        **per_layer,
    )
    return tw, QuantStats.merge(stats)


def quantized_checkpoint_nbytes(config: ModelConfig, group_size: int,
                                shared_classifier: bool) -> int:
    d, h, L = config.dim, config.hidden_dim, config.n_layers
    kv, v = config.kv_dim, config.vocab_size
    norms = 4 * (2 * L * d + d)
    q_elems = v * d + L * (2 * d * d + 2 * kv * d + 3 * h * d)
    if not shared_classifier:
        q_elems += v * d
    return V2_HEADER_BYTES + norms + q_elems + 4 * (q_elems // group_size)


def _quantized_tensors(weights: TransformerWeights) -> list[QuantizedTensor]:
    tensors = [weights.token_embedding]
    for name in ("wq", "wk", "wv", "wo", "w1", "w2", "w3"):
        tensors.extend(getattr(weights, name))
    if not weights.shared_classifier:
        tensors.append(weights.classifier)
    return tensors


def write_quantized_checkpoint(config: ModelConfig,
                               weights: TransformerWeights) -> bytes:
    gs = weights.group_size
    if config.dim % gs or config.hidden_dim % gs:
        raise ShapeError(
            "dim and hidden_dim must be divisible by the quantization group size"
        )
    header = struct.pack(
        "<2i7iBi",
        MAGIC,
        VERSION,
        *(getattr(config, f) for f in _CONFIG_FIELDS),
        1 if weights.shared_classifier else 0,
        gs,
    )
    out = bytearray(header)
    out += bytes(V2_HEADER_BYTES - len(header))
    out += np.asarray(weights.rms_att, dtype=np.float32).tobytes()
    out += np.asarray(weights.rms_ffn, dtype=np.float32).tobytes()
    out += np.asarray(weights.rms_final, dtype=np.float32).tobytes()
    for t in _quantized_tensors(weights):
        if t.group_size != gs:
            raise ShapeError("all tensors must share one group size")
        out += t.values.tobytes()
        out += t.scales.tobytes()
    return bytes(out)


def load_quantized_checkpoint(data: bytes) -> tuple[ModelConfig, TransformerWeights]:
    if len(data) < V2_HEADER_BYTES:
        raise CheckpointFormatError("file too short for the 256-byte header")
    magic, version = struct.unpack_from("<2i", data, 0)
    if magic != MAGIC:
        raise CheckpointFormatError(f"bad magic 0x{magic & 0xFFFFFFFF:08x}")
    if version != VERSION:
        raise CheckpointFormatError(f"unsupported version {version}")
    fields = struct.unpack_from("<7i", data, 8)
    if any(f <= 0 for f in fields):
        raise CheckpointFormatError(f"non-positive config fields {fields}")
    (shared_flag,) = struct.unpack_from("<B", data, 36)
    (gs,) = struct.unpack_from("<i", data, 37)
    if shared_flag not in (0, 1):
        raise CheckpointFormatError(f"bad shared-classifier flag {shared_flag}")
    try:
        config = ModelConfig(*fields)
    except ShapeError as exc:
        raise CheckpointFormatError(f"invalid header: {exc}") from exc
    if gs <= 0 or config.dim % gs or config.hidden_dim % gs:
        raise CheckpointFormatError(f"group_size {gs} incompatible with dims")
    shared = bool(shared_flag)
    expect = quantized_checkpoint_nbytes(config, gs, shared)
    if len(data) != expect:
        raise CheckpointFormatError(
            f"payload size mismatch: header implies {expect} bytes, got {len(data)}"
        )

    d, h, L = config.dim, config.hidden_dim, config.n_layers
    off = V2_HEADER_BYTES

    def read_f32(count: int) -> np.ndarray:
        nonlocal off
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=off).copy()
        off += 4 * count
        return arr

    rms_att = read_f32(L * d).reshape(L, d)
    rms_ffn = read_f32(L * d).reshape(L, d)
    rms_final = read_f32(d)

    def read_qt(n: int) -> QuantizedTensor:
        nonlocal off
        vals = np.frombuffer(data, dtype=np.int8, count=n, offset=off).copy()
        off += n
        scales = np.frombuffer(data, dtype="<f4", count=n // gs, offset=off).copy()
        off += 4 * (n // gs)
        return QuantizedTensor(vals, scales, gs)

    token_embedding = read_qt(config.vocab_size * d)
    sizes = {"wq": d * d, "wk": config.kv_dim * d, "wv": config.kv_dim * d,
             "wo": d * d, "w1": h * d, "w2": d * h, "w3": h * d}
    per_layer = {name: [read_qt(n) for _ in range(L)] for name, n in sizes.items()}
    classifier = token_embedding if shared else read_qt(config.vocab_size * d)
    return config, TransformerWeights(
        token_embedding=token_embedding,
        rms_att=rms_att,
        rms_ffn=rms_ffn,
        rms_final=rms_final,
        classifier=classifier,
        shared_classifier=shared,
        **per_layer,
    )
