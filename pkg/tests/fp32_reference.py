"""Independent dense float32 oracle for the transformer forward pass.

Straight-line recomputation over the full token prefix: no KV cache, no
quantization of activations, weights taken directly from the float32
checkpoint arrays.  Deliberately written without reusing any code from the
package under test.
"""
from __future__ import annotations

import numpy as np


def _norm(x: np.ndarray, g: np.ndarray, eps: float) -> np.ndarray:
    rms = np.sqrt((x * x).mean(axis=-1, keepdims=True) + eps)
    return x / rms * g


def _rope(x: np.ndarray, positions: np.ndarray, head_dim: int) -> np.ndarray:
    # x: (T, n_heads * head_dim) -> rotate each consecutive pair per head
    t = x.shape[0]
    x = x.reshape(t, -1, head_dim // 2, 2).copy()
    i = np.arange(head_dim // 2)
    theta = positions[:, None] * 10000.0 ** (-2.0 * i / head_dim)
    cos = np.cos(theta)[:, None, :].astype(np.float32)
    sin = np.sin(theta)[:, None, :].astype(np.float32)
    re = x[..., 0] * cos - x[..., 1] * sin
    im = x[..., 0] * sin + x[..., 1] * cos
    x[..., 0], x[..., 1] = re, im
    return x.reshape(t, -1)


def dense_forward_logits(tokens, config, w, eps: float = 1e-5) -> np.ndarray:
    """Logits at every position of ``tokens``; shape (len(tokens), vocab)."""
    t_total = len(tokens)
    hd = config.head_dim
    rep = config.n_heads // config.n_kv_heads
    positions = np.arange(t_total)

    x = w.token_embedding[list(tokens)].astype(np.float32)
    for layer in range(config.n_layers):
        xb = _norm(x, w.rms_att[layer], eps)
        q = _rope(xb @ w.wq[layer].T, positions, hd).reshape(t_total, config.n_heads, hd)
        k = _rope(xb @ w.wk[layer].T, positions, hd).reshape(t_total, config.n_kv_heads, hd)
        v = (xb @ w.wv[layer].T).reshape(t_total, config.n_kv_heads, hd)

        heads = np.zeros((t_total, config.n_heads, hd), dtype=np.float32)
        for t in range(t_total):
            for h in range(config.n_heads):
                g = h // rep
                scores = (k[: t + 1, g] @ q[t, h]) / np.float32(np.sqrt(hd))
                scores = scores - scores.max()
                e = np.exp(scores)
                e /= e.sum()
                heads[t, h] = e @ v[: t + 1, g]
        x = x + heads.reshape(t_total, -1) @ w.wo[layer].T

        xb = _norm(x, w.rms_ffn[layer], eps)
        h1 = xb @ w.w1[layer].T
        h3 = xb @ w.w3[layer].T
        x = x + (h1 / (1.0 + np.exp(-h1)) * h3) @ w.w2[layer].T

    x = _norm(x, w.rms_final, eps)
    classifier = w.classifier if w.classifier is not None else w.token_embedding
    return x @ classifier.T
