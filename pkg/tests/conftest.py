import numpy as np
import pytest

from q8llm import Fp32Weights, ModelConfig, Tokenizer, byte_level_pieces, quantize_weights


def random_fp32_weights(config: ModelConfig, rng, weight_scale=None) -> Fp32Weights:
    """Random dense weights sized so tiny-model logits stay O(1)."""
    d, h = config.dim, config.hidden_dim
    layers, vocab, kv = config.n_layers, config.vocab_size, config.kv_dim
    if weight_scale is None:
        weight_scale = 0.5 / np.sqrt(d)

    def mat(*shape, s=weight_scale):
        return rng.uniform(-s, s, size=shape).astype(np.float32)

    def gain(*shape):
        return rng.uniform(0.7, 1.3, size=shape).astype(np.float32)

    return Fp32Weights(
        token_embedding=mat(vocab, d, s=0.5),
        rms_att=gain(layers, d),
        wq=mat(layers, d, d),
        wk=mat(layers, kv, d),
        wv=mat(layers, kv, d),
        wo=mat(layers, d, d),
        rms_ffn=gain(layers, d),
        w1=mat(layers, h, d),
        w2=mat(layers, d, h),
        w3=mat(layers, h, d),
        rms_final=gain(d),
        classifier=mat(vocab, d),
    )


def build_test_tokenizer(extra=()) -> Tokenizer:
    """Byte-fallback vocabulary plus optional (piece, score) merge entries."""
    pieces, scores = byte_level_pieces()
    for piece, score in extra:
        pieces.append(piece)
        scores.append(score)
    return Tokenizer.from_pieces(pieces, scores)


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


@pytest.fixture
def tiny_config():
    return ModelConfig(dim=16, hidden_dim=32, n_layers=2, n_heads=2,
                       n_kv_heads=1, vocab_size=48, seq_len=12)


@pytest.fixture
def tiny_model(tiny_config, rng):
    fp32 = random_fp32_weights(tiny_config, rng)
    weights, _ = quantize_weights(tiny_config, fp32, group_size=8)
    return tiny_config, fp32, weights
