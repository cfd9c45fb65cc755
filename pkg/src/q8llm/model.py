"""Single-token Llama-2-style forward pass over grouped-int8 weights.

The decode loop processes one token at one position per call: pre-norm
attention with rotary embeddings and a per-layer key/value cache, grouped
query attention, a SwiGLU feed-forward block, and a final norm + classifier.
Norm parameters and the residual stream stay float32; activations are
requantized to int8 immediately before every quantized linear layer.

All buffers live in :class:`RunState` and are allocated once; a forward call
never grows or replaces them, mirroring statically sized on-chip memory.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .quant import QuantizedTensor, ShapeError, qmatmul, quantize_into

ROPE_BASE = 10000.0
RMSNORM_EPS = 1e-5


class CapacityError(ValueError):
    """Position exceeds the fixed sequence capacity of the state buffers."""


@dataclass(frozen=True)
class ModelConfig:
    """The seven architecture hyperparameters that fix every tensor shape."""

    dim: int
    hidden_dim: int
    n_layers: int
    n_heads: int
    n_kv_heads: int
    vocab_size: int
    seq_len: int

    def __post_init__(self):
        for name in ("dim", "hidden_dim", "n_layers", "n_heads", "n_kv_heads",
                     "vocab_size", "seq_len"):
            if getattr(self, name) <= 0:
                raise ShapeError(f"{name} must be positive")
        if self.dim % self.n_heads != 0:
            raise ShapeError("dim must be divisible by n_heads")
        if self.n_heads % self.n_kv_heads != 0:
            raise ShapeError("n_heads must be divisible by n_kv_heads")
        if (self.dim // self.n_heads) % 2 != 0:
            raise ShapeError("head_dim must be even for rotary pairs")

    @property
    def head_dim(self) -> int:
        return self.dim // self.n_heads

    @property
    def kv_dim(self) -> int:
        return self.dim * self.n_kv_heads // self.n_heads

    @property
    def n_rep(self) -> int:
        """Query heads served by each key/value head."""
        return self.n_heads // self.n_kv_heads


# the 110M reference model: 768 dim, 2048 hidden, 12 layers, 12 heads,
# 12 kv heads, 32000 vocab, 1024 context
CONFIG_110M = ModelConfig(768, 2048, 12, 12, 12, 32000, 1024)


@dataclass
class TransformerWeights:
    """All layer weights (quantized) plus float32 norm parameters.

    Weight matrices are stored flat and row-major, one QuantizedTensor per
    layer.  ``classifier`` may be the same object as ``token_embedding``
    when the checkpoint shares the embedding with the output projection.
    """

    token_embedding: QuantizedTensor            # vocab * dim
    rms_att: np.ndarray                         # (n_layers, dim) float32
    wq: list[QuantizedTensor]                   # dim   * dim per layer
    wk: list[QuantizedTensor]                   # kv_dim * dim per layer
    wv: list[QuantizedTensor]                   # kv_dim * dim per layer
    wo: list[QuantizedTensor]                   # dim   * dim per layer
    rms_ffn: np.ndarray                         # (n_layers, dim) float32
    w1: list[QuantizedTensor]                   # hidden * dim per layer
    w2: list[QuantizedTensor]                   # dim * hidden per layer
    w3: list[QuantizedTensor]                   # hidden * dim per layer
    rms_final: np.ndarray                       # (dim,) float32
    classifier: QuantizedTensor                 # vocab * dim
    shared_classifier: bool = True

    @property
    def group_size(self) -> int:
        return self.token_embedding.group_size


class RunState:
    """Mutable per-session buffers: activations, scores, logits, KV cache.

    Sized once from the config; one generation session per instance.
    Cache rows [0, pos] are valid after processing position ``pos``.
    """

    def __init__(self, config: ModelConfig, group_size: int):
        if config.dim % group_size != 0 or config.hidden_dim % group_size != 0:
            raise ShapeError(
                "dim and hidden_dim must be divisible by the quantization group size"
            )
        d, hd = config.dim, config.hidden_dim
        self.x = np.zeros(d, dtype=np.float32)        # residual stream
        self.xb = np.zeros(d, dtype=np.float32)       # norm / attention output
        self.xb2 = np.zeros(d, dtype=np.float32)      # projection scratch
        self.hb = np.zeros(hd, dtype=np.float32)      # ffn gate branch
        self.hb2 = np.zeros(hd, dtype=np.float32)     # ffn linear branch
        self.q = np.zeros(d, dtype=np.float32)        # query heads
        self.xq = QuantizedTensor(
            np.zeros(d, dtype=np.int8),
            np.zeros(d // group_size, dtype=np.float32),
            group_size,
        )
        self.hq = QuantizedTensor(
            np.zeros(hd, dtype=np.int8),
            np.zeros(hd // group_size, dtype=np.float32),
            group_size,
        )
        self.att = np.zeros((config.n_heads, config.seq_len), dtype=np.float32)
        self.logits = np.zeros(config.vocab_size, dtype=np.float32)
        self.key_cache = np.zeros(
            (config.n_layers, config.seq_len, config.kv_dim), dtype=np.float32
        )
        self.value_cache = np.zeros_like(self.key_cache)


def rmsnorm(x: np.ndarray, g: np.ndarray, eps: float = RMSNORM_EPS,
            out: np.ndarray | None = None) -> np.ndarray:
    """out[i] = g[i] * x[i] / sqrt(mean(x^2) + eps)."""
    if x.shape != g.shape:
        raise ShapeError(f"x and g shapes differ: {x.shape} vs {g.shape}")
    ss = float(np.dot(x, x)) / x.size + eps
    inv = np.float32(1.0 / math.sqrt(ss))
    out = np.multiply(x, g, out=out)
    out *= inv
    return out


def rope_rotate(vec: np.ndarray, pos: int, head_dim: int) -> np.ndarray:
    """Rotate consecutive (2i, 2i+1) pairs of every head in place.

    Pair i turns by pos * ROPE_BASE ** (-2 i / head_dim) radians.
    """
    if head_dim % 2 != 0:
        raise ShapeError(f"head_dim must be even, got {head_dim}")
    if vec.size % head_dim != 0:
        raise ShapeError(f"vector length {vec.size} is not a multiple of head_dim")
    pairs = vec.reshape(-1, head_dim // 2, 2)
    i = np.arange(head_dim // 2, dtype=np.float64)
    theta = pos * ROPE_BASE ** (-2.0 * i / head_dim)
    cos = np.cos(theta).astype(np.float32)
    sin = np.sin(theta).astype(np.float32)
    re = pairs[..., 0] * cos - pairs[..., 1] * sin
    im = pairs[..., 0] * sin + pairs[..., 1] * cos
    pairs[..., 0] = re
    pairs[..., 1] = im
    return vec


def softmax_inplace(x: np.ndarray) -> np.ndarray:
    """Numerically stable softmax over the last axis, in place."""
    x -= x.max(axis=-1, keepdims=True)
    np.exp(x, out=x)
    x /= x.sum(axis=-1, keepdims=True)
    return x


def swiglu(h1: np.ndarray, h3: np.ndarray,
           out: np.ndarray | None = None) -> np.ndarray:
    """out_i = h1_i * sigmoid(h1_i) * h3_i (SiLU gate times linear branch)."""
    if h1.shape != h3.shape:
        raise ShapeError(f"branch shapes differ: {h1.shape} vs {h3.shape}")
    with np.errstate(over="ignore"):
        gate = h1 / (1.0 + np.exp(-h1))
    out = np.multiply(gate, h3, out=out)
    return out


def attention_layer(state: RunState, layer: int, pos: int,
                    config: ModelConfig) -> None:
    """Grouped-query attention over cache positions [0, pos] into state.xb.

    Expects state.q and the cache rows for ``pos`` already rotated/written.
    Query head h reads key/value head h // n_rep; scores are scaled by
    1/sqrt(head_dim) and softmaxed over the causal prefix.
    """
    if pos >= config.seq_len:
        raise CapacityError(f"pos {pos} exceeds seq_len {config.seq_len}")
    nh, nkv, hd = config.n_heads, config.n_kv_heads, config.head_dim
    t = pos + 1
    q = state.q.reshape(nkv, config.n_rep, hd)
    keys = state.key_cache[layer, :t].reshape(t, nkv, hd)
    vals = state.value_cache[layer, :t].reshape(t, nkv, hd)

    att = state.att[:, :t]
    np.einsum("gri,tgi->grt", q, keys, out=att.reshape(nkv, config.n_rep, t))
    att *= np.float32(1.0 / math.sqrt(hd))
    softmax_inplace(att)
    np.einsum(
        "grt,tgi->gri",
        att.reshape(nkv, config.n_rep, t),
        vals,
        out=state.xb.reshape(nkv, config.n_rep, hd),
    )


def _dequantize_row(t: QuantizedTensor, row: int, width: int,
                    out: np.ndarray) -> None:
    gs = t.group_size
    vals = t.values[row * width:(row + 1) * width]
    scl = t.scales[row * width // gs:(row + 1) * width // gs]
    np.multiply(
        vals.reshape(-1, gs).astype(np.float32),
        scl[:, None],
        out=out.reshape(-1, gs),
    )


def forward(token: int, pos: int, weights: TransformerWeights,
            state: RunState, config: ModelConfig) -> np.ndarray:
    """Compute next-token logits for ``token`` at position ``pos``.

    Per layer: rmsnorm -> quantize -> wq/wk/wv -> RoPE on q,k -> cache write
    -> attention -> quantize -> wo -> residual -> rmsnorm -> quantize ->
    w1,w3 -> swiglu -> quantize -> w2 -> residual.  Then the final norm,
    one more quantization, and the classifier projection.

    Returns state.logits (owned by the state, overwritten per call).
    """
    if not 0 <= token < config.vocab_size:
        raise ValueError(f"token {token} outside vocab of {config.vocab_size}")
    if not 0 <= pos < config.seq_len:
        raise CapacityError(f"pos {pos} outside [0, {config.seq_len})")

    d, hd_dim, kv = config.dim, config.hidden_dim, config.kv_dim
    _dequantize_row(weights.token_embedding, token, d, state.x)

    for layer in range(config.n_layers):
        rmsnorm(state.x, weights.rms_att[layer], out=state.xb)
        quantize_into(state.xb, state.xq)
        qmatmul(state.xq, weights.wq[layer], d, d, out=state.q)
        k_row = state.key_cache[layer, pos]
        v_row = state.value_cache[layer, pos]
        qmatmul(state.xq, weights.wk[layer], d, kv, out=k_row)
        qmatmul(state.xq, weights.wv[layer], d, kv, out=v_row)
        rope_rotate(state.q, pos, config.head_dim)
        rope_rotate(k_row, pos, config.head_dim)

        attention_layer(state, layer, pos, config)
        quantize_into(state.xb, state.xq)
        qmatmul(state.xq, weights.wo[layer], d, d, out=state.xb2)
        state.x += state.xb2

        rmsnorm(state.x, weights.rms_ffn[layer], out=state.xb)
        quantize_into(state.xb, state.xq)
        qmatmul(state.xq, weights.w1[layer], d, hd_dim, out=state.hb)
        qmatmul(state.xq, weights.w3[layer], d, hd_dim, out=state.hb2)
        swiglu(state.hb, state.hb2, out=state.hb)
        quantize_into(state.hb, state.hq)
        qmatmul(state.hq, weights.w2[layer], hd_dim, d, out=state.xb2)
        state.x += state.xb2

    rmsnorm(state.x, weights.rms_final, out=state.xb)
    quantize_into(state.xb, state.xq)
    qmatmul(state.xq, weights.classifier, d, config.vocab_size, out=state.logits)
    return state.logits
