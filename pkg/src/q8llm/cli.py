"""Command-line host: quantize checkpoints, generate text, score perplexity,
and estimate hardware latency/energy from the cycle table."""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from .checkpoint import (
    load_fp32_checkpoint,
    load_quantized_checkpoint,
    quantize_weights,
    write_quantized_checkpoint,
)
from .evaluate import load_token_ids, perplexity
from .model import CONFIG_110M, ModelConfig, RunState, TransformerWeights, forward
from .perf import (
    DEFAULT_DEVICE_BASELINES,
    EnergyProfile,
    compose_forward_cycles,
    efficiency_report,
    energy_per_token_mwh,
    format_efficiency_report,
    forward_latency_ms,
    load_cycle_table,
    throughput_toks_per_s,
)
from .sampler import SamplerConfig, Xorshift64Star, sample
from .tokenizer import BOS_ID, EOS_ID, Tokenizer, load_tokenizer


def run_generation(
    weights: TransformerWeights,
    config: ModelConfig,
    tokenizer: Tokenizer,
    sampler_cfg: SamplerConfig,
    prompt: str = "",
    steps: int = 256,
    on_piece=None,
) -> tuple[list[int], float]:
    """Decode up to ``steps`` tokens (capped at the context length).

    Returns (token ids incl. prompt, tokens/s measured after a one-token
    warm-up so model setup and the first forward stay out of the timing).
    """
    steps = min(steps, config.seq_len)
    state = RunState(config, weights.group_size)
    rng = Xorshift64Star(sampler_cfg.rng_seed)
    prompt_ids = tokenizer.encode(prompt, add_bos=True)
    token = prompt_ids[0]
    produced = [token]
    started = None
    timed_tokens = 0
    for pos in range(steps):
        logits = forward(token, pos, weights, state, config)
        if pos + 1 < len(prompt_ids):
            nxt = prompt_ids[pos + 1]
        else:
            nxt = sample(logits, sampler_cfg, rng)
        if started is None:
            started = time.perf_counter()  # warm-up token excluded
        else:
            timed_tokens += 1
        if nxt in (BOS_ID, EOS_ID):
            break
        if on_piece is not None:
            on_piece(tokenizer.decode(token, nxt))
        produced.append(nxt)
        token = nxt
    elapsed = time.perf_counter() - started if started is not None else 0.0
    toks_per_s = timed_tokens / elapsed if elapsed > 0 else 0.0
    return produced, toks_per_s


def cmd_quantize(args) -> int:
    data = Path(args.input).read_bytes()
    config, fp32 = load_fp32_checkpoint(data)
    weights, stats = quantize_weights(config, fp32, args.group_size)
    Path(args.output).write_bytes(write_quantized_checkpoint(config, weights))
    if args.json:
        print(json.dumps({
            "output": args.output,
            "group_size": args.group_size,
            "max_abs_error": stats.max_abs_error,
            "rmse": stats.rmse,
            "count": stats.count,
        }))
    else:
        print(f"wrote {args.output} (group_size={args.group_size})")
        print(f"quantization error over {stats.count} weights: "
              f"max_abs={stats.max_abs_error:.6g} rmse={stats.rmse:.6g}")
    return 0


def cmd_generate(args) -> int:
    config, weights = load_quantized_checkpoint(Path(args.model).read_bytes())
    tokenizer = load_tokenizer(Path(args.tokenizer).read_bytes(), config.vocab_size)
    seed = args.seed if args.seed is not None else time.time_ns()
    cfg = SamplerConfig(temperature=args.temperature, top_p=args.top_p,
                        rng_seed=seed)

    def emit(piece: bytes) -> None:
        sys.stdout.buffer.write(piece)
        sys.stdout.buffer.flush()

    _, toks_per_s = run_generation(
        weights, config, tokenizer, cfg,
        prompt=args.prompt, steps=args.steps, on_piece=emit,
    )
    sys.stdout.buffer.write(b"\n")
    sys.stdout.buffer.flush()
    print(f"achieved tok/s: {toks_per_s:.2f}", file=sys.stderr)
    return 0


def cmd_perplexity(args) -> int:
    config, weights = load_quantized_checkpoint(Path(args.model).read_bytes())
    tokenizer = load_tokenizer(Path(args.tokenizer).read_bytes(), config.vocab_size)
    ids = load_token_ids(args.text, tokenizer)
    print(f"ppl: {perplexity(ids, weights, config):.4f}")
    return 0


def _fpga_latency_ms(args) -> float:
    table = load_cycle_table(None if args.table == "builtin" else args.table)
    if args.mode == "table":
        return forward_latency_ms(table, "avg")
    # composition mode: mean per-token cost over the generated positions
    cycles = [compose_forward_cycles(CONFIG_110M, table, pos)
              for pos in range(min(args.tokens, CONFIG_110M.seq_len))]
    return sum(cycles) / len(cycles) * table.clock_period_ns / 1e6


def cmd_estimate(args) -> int:
    latency = _fpga_latency_ms(args)
    profiles = [EnergyProfile("FPGA", args.power_fpga)]
    latencies = [latency]
    for name, default_power, default_latency in DEFAULT_DEVICE_BASELINES[args.tokens]:
        power = getattr(args, f"power_{name.lower()}") or default_power
        lat = getattr(args, f"latency_{name.lower()}") or default_latency
        profiles.append(EnergyProfile(name, power))
        latencies.append(lat)
    report = efficiency_report(profiles, latencies, baseline="FPGA")
    report["mode"] = args.mode
    report["tokens"] = args.tokens
    if args.json:
        print(json.dumps(report, indent=2))
    else:
        fpga = report["devices"]["FPGA"]
        print(f"FPGA forward latency ({args.mode} mode): {latency:.3f} ms")
        print(f"throughput: {throughput_toks_per_s(latency):.2f} toks/s")
        print(f"energy: {energy_per_token_mwh(profiles[0], latency):.4f} mWh/token "
              f"({fpga['mwh_per_token_2dp']:.2f} rounded)")
        print(format_efficiency_report(report))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="q8llm",
        description="int8 grouped-quantized transformer inference and "
                    "hardware performance estimation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("quantize", help="convert an fp32 checkpoint to the "
                                        "int8 version-2 format")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--group-size", type=int, default=64)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("generate", help="sample text from a quantized model")
    p.add_argument("model")
    p.add_argument("tokenizer")
    p.add_argument("--prompt", default="")
    p.add_argument("--steps", type=int, default=256)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--top-p", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("perplexity", help="perplexity of a model on a text "
                                          "file or .bin int32 token stream")
    p.add_argument("model")
    p.add_argument("tokenizer")
    p.add_argument("text")
    p.set_defaults(func=cmd_perplexity)

    p = sub.add_parser("estimate", help="hardware latency / throughput / "
                                        "energy from the cycle table")
    p.add_argument("--table", default="builtin")
    p.add_argument("--tokens", type=int, default=256, choices=(256, 1024))
    p.add_argument("--mode", default="table", choices=("table", "compose"))
    p.add_argument("--power-fpga", type=float, default=9.0)
    p.add_argument("--power-cpu", type=float, default=None)
    p.add_argument("--latency-cpu", type=float, default=None)
    p.add_argument("--power-gpu", type=float, default=None)
    p.add_argument("--latency-gpu", type=float, default=None)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_estimate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, IndexError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
