"""Build a tiny random model, quantize it, write both checkpoint formats,
and sample text from the int8 engine through the same path the CLI uses.

The weights are untrained, so the "text" is noise; the point is the full
pipeline: fp32 checkpoint -> quantize -> v2 file -> load -> decode loop.
"""
import tempfile
from pathlib import Path

import numpy as np

from q8llm import (
    Fp32Weights,
    ModelConfig,
    SamplerConfig,
    Tokenizer,
    load_quantized_checkpoint,
    quantize_weights,
    write_fp32_checkpoint,
    write_quantized_checkpoint,
    write_tokenizer,
)
from q8llm.cli import run_generation

rng = np.random.default_rng(42)
config = ModelConfig(dim=32, hidden_dim=64, n_layers=2, n_heads=4,
                     n_kv_heads=2, vocab_size=64, seq_len=32)


def mat(*shape, s):
    return rng.uniform(-s, s, size=shape).astype(np.float32)


s = 0.5 / np.sqrt(config.dim)
L, d, h = config.n_layers, config.dim, config.hidden_dim
fp32 = Fp32Weights(
    token_embedding=mat(config.vocab_size, d, s=0.5),
    rms_att=np.ones((L, d), np.float32),
    wq=mat(L, d, d, s=s), wk=mat(L, config.kv_dim, d, s=s),
    wv=mat(L, config.kv_dim, d, s=s), wo=mat(L, d, d, s=s),
    rms_ffn=np.ones((L, d), np.float32),
    w1=mat(L, h, d, s=s), w2=mat(L, d, h, s=s), w3=mat(L, h, d, s=s),
    rms_final=np.ones(d, np.float32),
    # untrained shared heads just echo the input token, which reads as an
    # immediate end-of-text; an independent head keeps the sampler busy
    classifier=mat(config.vocab_size, d, s=s),
)

words = [b"<unk>", b"\n<s>\n", b"\n</s>\n"]
words += [b"tok%02d " % i for i in range(config.vocab_size - 3)]
tokenizer = Tokenizer.from_pieces(words, [0.0] * len(words))

with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    (tmp / "model.f32").write_bytes(write_fp32_checkpoint(config, fp32))
    weights, stats = quantize_weights(config, fp32, group_size=16)
    (tmp / "model.v2").write_bytes(write_quantized_checkpoint(config, weights))
    (tmp / "tok.bin").write_bytes(write_tokenizer(tokenizer))
    print(f"fp32 checkpoint: {(tmp / 'model.f32').stat().st_size} bytes")
    print(f"int8 checkpoint: {(tmp / 'model.v2').stat().st_size} bytes")
    print(f"quantization rmse: {stats.rmse:.6f} over {stats.count} weights\n")

    config2, loaded = load_quantized_checkpoint((tmp / "model.v2").read_bytes())
    pieces = []
    ids, toks_per_s = run_generation(
        loaded, config2, tokenizer,
        SamplerConfig(temperature=1.0, top_p=0.9, rng_seed=2024),
        prompt="", steps=24, on_piece=pieces.append,
    )
    print("sampled:", b"".join(pieces).decode("utf-8", errors="replace"))
    print(f"{len(ids)} tokens at {toks_per_s:.1f} tok/s (tiny CPU model)")
