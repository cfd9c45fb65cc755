"""Perplexity sanity checks on synthetic models.

A model forced to uniform logits scores exactly vocab_size; a random tiny
model's int8 perplexity lands within a couple percent of the same model
evaluated in float32.
"""
import math

import numpy as np

from q8llm import Fp32Weights, ModelConfig, perplexity, quantize_weights

rng = np.random.default_rng(7)
config = ModelConfig(dim=16, hidden_dim=32, n_layers=2, n_heads=2,
                     n_kv_heads=1, vocab_size=48, seq_len=12)


def build(scale, zero_classifier=False):
    L, d, h = config.n_layers, config.dim, config.hidden_dim

    def mat(*shape, s=scale):
        return rng.uniform(-s, s, size=shape).astype(np.float32)

    cls = np.zeros((config.vocab_size, d), np.float32) if zero_classifier \
        else mat(config.vocab_size, d)
    return Fp32Weights(
        token_embedding=mat(config.vocab_size, d, s=0.5),
        rms_att=np.ones((L, d), np.float32),
        wq=mat(L, d, d), wk=mat(L, config.kv_dim, d),
        wv=mat(L, config.kv_dim, d), wo=mat(L, d, d),
        rms_ffn=np.ones((L, d), np.float32),
        w1=mat(L, h, d), w2=mat(L, d, h), w3=mat(L, h, d),
        rms_final=np.ones(d, np.float32),
        classifier=cls,
    )


tokens = rng.integers(0, config.vocab_size, size=40).tolist()

uniform, _ = quantize_weights(config, build(0.1, zero_classifier=True), 8)
ppl = perplexity(tokens, uniform, config)
print(f"uniform-logits model: ppl {ppl:.4f} (vocab size {config.vocab_size}, "
      f"since -log(1/V) = log V = {math.log(config.vocab_size):.4f})")

weights, stats = quantize_weights(config, build(0.5 / np.sqrt(config.dim)), 8)
print(f"\nrandom tiny model (quantization rmse {stats.rmse:.2e}):")
print(f"int8 ppl on {len(tokens)} tokens: "
      f"{perplexity(tokens, weights, config):.4f}")
print("windows restart the cache every "
      f"{config.seq_len - 1} tokens with a BOS frame")
