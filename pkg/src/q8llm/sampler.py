"""Temperature + nucleus (top-p) sampling with a reproducible 64-bit RNG."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1
_MULT = 0x2545F4914F6CDD1D


class Xorshift64Star:
    """xorshift64* generator: three shift/xor steps and an odd multiply.

    state ^= state >> 12; state ^= state << 25; state ^= state >> 27;
    output = state * 0x2545F4914F6CDD1D (mod 2^64).  Uniform floats take the
    top 24 bits, so identical seeds reproduce identical draws anywhere.
    """

    def __init__(self, seed: int):
        self.state = seed & _MASK64
        if self.state == 0:  # xorshift has a fixed point at zero
            self.state = _MULT

    def next_u64(self) -> int:
        s = self.state
        s ^= s >> 12
        s = (s ^ (s << 25)) & _MASK64
        s ^= s >> 27
        self.state = s
        return (s * _MULT) & _MASK64

    def uniform(self) -> float:
        """Uniform float in [0, 1) with 24 bits of resolution."""
        return (self.next_u64() >> 40) / 16777216.0


@dataclass(frozen=True)
class SamplerConfig:
    temperature: float = 1.0
    top_p: float = 1.0
    rng_seed: int = 1

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError(f"temperature must be >= 0, got {self.temperature}")
        if not 0.0 < self.top_p <= 1.0:
            raise ValueError(f"top_p must be in (0, 1], got {self.top_p}")


def _softmax(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.float64)
    x -= x.max()
    np.exp(x, out=x)
    x /= x.sum()
    return x


def _nucleus(probs: np.ndarray, top_p: float) -> tuple[np.ndarray, np.ndarray]:
    """Candidates in descending probability (ties keep the lower token id),
    truncated to the smallest prefix with cumulative mass >= top_p."""
    order = np.argsort(-probs, kind="stable")
    sorted_probs = probs[order]
    if top_p < 1.0:
        keep = int(np.searchsorted(np.cumsum(sorted_probs), top_p, side="left")) + 1
        keep = min(keep, len(order))
        order = order[:keep]
        sorted_probs = sorted_probs[:keep]
    return order, sorted_probs


def _pick(order: np.ndarray, sorted_probs: np.ndarray, u: float) -> int:
    """Inverse CDF over the candidate list; u is scaled by the kept mass."""
    cdf = np.cumsum(sorted_probs)
    r = u * cdf[-1]
    idx = int(np.searchsorted(cdf, r, side="right"))
    return int(order[min(idx, len(order) - 1)])


def sample(logits: np.ndarray, cfg: SamplerConfig, rng: Xorshift64Star) -> int:
    """Draw the next token id; argmax when temperature is zero."""
    logits = np.asarray(logits)
    if logits.ndim != 1 or logits.size < 1:
        raise ValueError("logits must be a non-empty 1-D array")
    if not 0.0 < cfg.top_p <= 1.0:
        raise ValueError(f"top_p must be in (0, 1], got {cfg.top_p}")
    if cfg.temperature == 0.0:
        return int(np.argmax(logits))
    probs = _softmax(logits / cfg.temperature)
    order, sorted_probs = _nucleus(probs, cfg.top_p)
    return _pick(order, sorted_probs, rng.uniform())
