import math

import numpy as np
import pytest

from q8llm import (
    EvalError,
    RunState,
    forward,
    load_token_ids,
    perplexity,
    perplexity_over_windows,
    quantize_weights,
)
from conftest import build_test_tokenizer, random_fp32_weights
from fp32_reference import dense_forward_logits


def test_uniform_logits_gives_vocab_size():
    vocab = 48

    def step(prev, pos):
        return np.zeros(vocab, np.float32)

    ppl = perplexity_over_windows([1, 2, 3, 4, 5], step, seq_len=8)
    assert ppl == pytest.approx(vocab, rel=1e-9)


def test_oracle_model_gives_one(rng):
    ids = rng.integers(0, 32, size=20).tolist()
    stream = iter(ids)

    def step(prev, pos):
        logits = np.zeros(32, np.float32)
        logits[next(stream)] = 60.0  # probability 1 up to float underflow
        return logits

    assert perplexity_over_windows(ids, step, seq_len=64) == pytest.approx(1.0, abs=1e-9)


def test_too_short_input_rejected():
    def step(prev, pos):
        return np.zeros(4, np.float32)

    with pytest.raises(EvalError):
        perplexity_over_windows([], step, seq_len=8)
    with pytest.raises(EvalError):
        perplexity_over_windows([3], step, seq_len=8)


def test_uniform_model_end_to_end(tiny_config, rng):
    # a zero classifier quantizes to all-zero codes, forcing uniform logits
    fp32 = random_fp32_weights(tiny_config, rng)
    fp32.classifier = np.zeros_like(fp32.classifier)
    weights, _ = quantize_weights(tiny_config, fp32, group_size=8)
    ids = rng.integers(0, tiny_config.vocab_size, size=30).tolist()
    assert perplexity(ids, weights, tiny_config) == pytest.approx(
        tiny_config.vocab_size, rel=1e-6
    )


def test_windowing_restarts_context(tiny_model, rng):
    config, _, weights = tiny_model
    ids = rng.integers(0, config.vocab_size, size=3 * (config.seq_len - 1) + 4).tolist()
    got = perplexity(ids, weights, config)

    window = config.seq_len - 1
    state = RunState(config, weights.group_size)
    nll, n = 0.0, 0
    for start in range(0, len(ids), window):
        prev = 1
        for pos, tok in enumerate(ids[start:start + window]):
            logits = forward(prev, pos, weights, state, config).astype(np.float64)
            z = logits - logits.max()
            nll -= z[tok] - math.log(np.exp(z).sum())
            prev = tok
            n += 1
    assert got == pytest.approx(math.exp(nll / n), rel=1e-9)


def test_quantized_ppl_close_to_fp32_oracle(tiny_model, rng):
    config, fp32, weights = tiny_model
    ids = rng.integers(0, config.vocab_size, size=config.seq_len - 1).tolist()
    quantized_ppl = perplexity(ids, weights, config)

    ref = dense_forward_logits([1] + ids[:-1], config, fp32).astype(np.float64)
    nll = 0.0
    for pos, tok in enumerate(ids):
        z = ref[pos] - ref[pos].max()
        nll -= z[tok] - math.log(np.exp(z).sum())
    fp32_ppl = math.exp(nll / len(ids))
    assert abs(quantized_ppl - fp32_ppl) / fp32_ppl <= 0.02


def test_ppl_at_least_one(tiny_model, rng):
    config, _, weights = tiny_model
    ids = rng.integers(0, config.vocab_size, size=8).tolist()
    assert perplexity(ids, weights, config) >= 1.0


class TestTokenFileLoading:
    def test_int32_stream(self, tmp_path):
        path = tmp_path / "stream.bin"
        np.array([5, 1, 9, 2], dtype="<i4").tofile(path)
        assert load_token_ids(path) == [5, 1, 9, 2]

    def test_plain_text(self, tmp_path):
        tok = build_test_tokenizer()
        path = tmp_path / "corpus.txt"
        path.write_text("hi")
        ids = load_token_ids(path, tok)
        assert tok.decode_ids(ids) == b"hi"

    def test_text_without_tokenizer_rejected(self, tmp_path):
        path = tmp_path / "corpus.txt"
        path.write_text("hi")
        with pytest.raises(EvalError):
            load_token_ids(path)
