"""Perplexity over a token stream: exp of the mean negative log-likelihood.

Streams longer than the context are scored in independent non-overlapping
windows of seq_len - 1 tokens; every window is framed with BOS at position
zero so each stream token is predicted exactly once.
"""
from __future__ import annotations

import math
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .model import ModelConfig, RunState, TransformerWeights, forward
from .tokenizer import BOS_ID, Tokenizer


class EvalError(ValueError):
    """Invalid evaluation input (too few tokens, out-of-range ids)."""


def _logprob(logits: np.ndarray, target: int) -> float:
    z = logits.astype(np.float64)
    m = z.max()
    return float(z[target] - m - math.log(np.exp(z - m).sum()))


def perplexity_over_windows(
    token_ids: Sequence[int],
    step_fn: Callable[[int, int], np.ndarray],
    seq_len: int,
    bos_id: int = BOS_ID,
) -> float:
    """Windowed perplexity driven by ``step_fn(prev_token, pos) -> logits``.

    The step function is called with positions restarting at 0 for every
    window; incremental state (a KV cache) may simply be overwritten.
    """
    ids = [int(t) for t in token_ids]
    if len(ids) < 2:
        raise EvalError(f"need at least 2 tokens, got {len(ids)}")
    window = seq_len - 1
    if window < 1:
        raise EvalError("seq_len must be at least 2 to predict anything")
    total_nll = 0.0
    for start in range(0, len(ids), window):
        prev = bos_id
        for pos, tok in enumerate(ids[start:start + window]):
            logits = step_fn(prev, pos)
            total_nll -= _logprob(logits, tok)
            prev = tok
    return math.exp(total_nll / len(ids))


def perplexity(token_ids: Sequence[int], weights: TransformerWeights,
               config: ModelConfig) -> float:
    """Perplexity of the quantized model on ``token_ids``."""
    ids = [int(t) for t in token_ids]
    bad = [t for t in ids if not 0 <= t < config.vocab_size]
    if bad:
        raise EvalError(f"token ids outside vocab: {bad[:5]}")
    state = RunState(config, weights.group_size)

    def step(prev: int, pos: int) -> np.ndarray:
        return forward(prev, pos, weights, state, config)

    return perplexity_over_windows(ids, step, config.seq_len)


def load_token_ids(path: str | Path, tokenizer: Tokenizer | None = None) -> list[int]:
    """Read evaluation tokens: ``.bin`` files are a little-endian int32
    stream; anything else is UTF-8 text encoded with the tokenizer."""
    p = Path(path)
    if p.suffix == ".bin":
        return np.fromfile(p, dtype="<i4").tolist()
    if tokenizer is None:
        raise EvalError("a tokenizer is required to score plain text")
    return tokenizer.encode(p.read_bytes(), add_bos=False, add_eos=False)
