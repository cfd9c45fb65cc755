"""Cycle-accurate-by-table performance and energy model.

The built-in table carries the synthesis-reported cycle counts for every
hardware module of the 110M-configuration kernel on a VU9P-class part, on a
4 ns clock (250 MHz).  Three ways to use it:

* table mode -- read the ``forward`` row directly: one token costs its avg
  cycles, 17.510 ms at 4 ns.
* composition mode -- rebuild the forward latency from per-module rows.
  Fixed-cost rows are summed per layer; the attention sub-loops (iterate /
  max / exp / sum / norm / acc) vary with context length and interpolate
  linearly between their best (pos = 0) and worst (pos = seq_len - 1)
  cycles.  How many times those sub-loops run per layer is not derivable
  from the table alone, so an integer multiplier is calibrated against the
  ``forward`` row's endpoints.
* analytic matmul -- cycles = d_out * (II * d_in / burst + per_row_overhead)
  + fixed_overhead, with the overheads least-squares fitted to the table's
  matmul rows.

Energy accounting multiplies a device's average power by per-token latency
and converts joules to milliwatt-hours (/ 3600 * 1000 = / 3.6).
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .model import ModelConfig
from .quant import ShapeError

CLOCK_PERIOD_NS = 4.0

# attention sub-loops whose trip count grows with the cached context
ATTENTION_SUBLOOPS = (
    "forward_Pipeline_iterate",
    "forward_Pipeline_max",
    "forward_Pipeline_exp",
    "forward_Pipeline_sum",
    "forward_Pipeline_norm",
    "forward_Pipeline_acc",
)


class CycleTableFormatError(ValueError):
    """Malformed cycle-table file."""


class PerfModelError(ValueError):
    """Composition impossible: required module rows are missing."""


@dataclass(frozen=True)
class CycleRow:
    best: int
    avg: int
    worst: int
    # printed absolute times from the synthesis report, kept for
    # cross-checking cycles * clock against the tool's own rounding
    printed: tuple[str, str, str] | None = None

    def __post_init__(self):
        if not self.best <= self.avg <= self.worst:
            raise CycleTableFormatError(
                f"cycle ordering violated: {self.best} <= {self.avg} <= {self.worst}"
            )

    def interp(self, fraction: float) -> float:
        """Linear best->worst interpolation; constant rows are unaffected."""
        return self.best + (self.worst - self.best) * fraction


@dataclass(frozen=True)
class CycleTable:
    rows: dict[str, CycleRow]
    clock_period_ns: float = CLOCK_PERIOD_NS

    def __post_init__(self):
        if self.clock_period_ns <= 0:
            raise CycleTableFormatError("clock period must be positive")
        if "forward" not in self.rows:
            raise CycleTableFormatError("table has no 'forward' row")

    def cycles(self, name: str, which: str = "avg") -> int:
        return getattr(self.rows[name], which)

    def time_ns(self, name: str, which: str = "avg") -> float:
        return self.cycles(name, which) * self.clock_period_ns


# (name, best, avg, worst, printed best/avg/worst) as reported by synthesis
_BUILTIN_ROWS = (
    ("forward_Pipeline_1", 771, 771, 771, ("3.084 us",) * 3),
    ("rmsnorm_768_Pipeline_1", 770, 770, 770, ("3.080 us",) * 3),
    ("rmsnorm_768_Pipeline_2", 771, 771, 771, ("3.084 us",) * 3),
    ("rmsnorm_768_Pipeline_sum_of_squares", 5413, 5413, 5413, ("21.652 us",) * 3),
    ("rmsnorm_768_Pipeline_norm_and_scale", 23, 23, 23, ("92.000 ns",) * 3),
    ("rmsnorm_768_Pipeline_5", 770, 770, 770, ("3.080 us",) * 3),
    ("rmsnorm_768_s", 7822, 7822, 7822, ("31.288 us",) * 3),
    ("round", 1, 1, 1, ("4.000 ns",) * 3),
    ("p_hls_fptosi_float_i8", 1, 1, 1, ("4.000 ns",) * 3),
    ("quantize_768_Pipeline_main_loop", 198, 198, 198, ("0.792 us",) * 3),
    ("quantize_768_Pipeline_2", 770, 770, 770, ("3.080 us",) * 3),
    ("quantize_768_Pipeline_3", 14, 14, 14, ("56.000 ns",) * 3),
    ("quantize_768_s", 971, 971, 971, ("3.884 us",) * 3),
    ("matmul_768_768_Pipeline_x_buff", 50, 50, 50, ("0.200 us",) * 3),
    ("matmul_768_768_Pipeline_xs_buff", 5, 5, 5, ("20.000 ns",) * 3),
    ("matmul_768_768_Pipeline_VITIS_LOOP_225_1", 20900, 20900, 20900, ("83.600 us",) * 3),
    ("matmul_768_768_s", 20977, 20977, 20977, ("83.908 us",) * 3),
    ("pow_generic_float_s", 15, 15, 15, ("60.000 ns",) * 3),
    ("sin_or_cos_float_s", 18, 18, 18, ("72.000 ns",) * 3),
    ("forward_Pipeline_rotation1", 119, 119, 119, ("0.476 us",) * 3),
    ("forward_Pipeline_3", 839, 839, 839, ("3.356 us",) * 3),
    ("forward_Pipeline_4", 839, 839, 839, ("3.356 us",) * 3),
    ("forward_Pipeline_iterate", 530, 1042, 1554, ("2.120 us", "4.168 us", "6.216 us")),
    ("forward_Pipeline_max", 2, 133, 261, ("8.000 ns", "0.532 us", "1.044 us")),
    ("forward_Pipeline_exp", 24, 40, 56, ("96.000 ns", "0.160 us", "0.224 us")),
    ("forward_Pipeline_sum", 10, 778, 1546, ("40.000 ns", "3.112 us", "6.184 us")),
    ("forward_Pipeline_norm", 9, 17, 25, ("36.000 ns", "68.000 ns", "0.100 us")),
    ("forward_Pipeline_10", 66, 66, 66, ("0.264 us",) * 3),
    ("forward_Pipeline_acc", 89, 857, 1625, ("0.356 us", "3.428 us", "6.500 us")),
    ("forward_Pipeline_residual", 61, 61, 61, ("0.244 us",) * 3),
    ("matmul_768_2048_Pipeline_x_buff", 50, 50, 50, ("0.200 us",) * 3),
    ("matmul_768_2048_Pipeline_xs_buff", 5, 5, 5, ("20.000 ns",) * 3),
    ("matmul_768_2048_Pipeline_VITIS_LOOP_225_1", 55460, 55460, 55460, ("0.222 ms",) * 3),
    ("matmul_768_2048_s", 55537, 55537, 55537, ("0.222 ms",) * 3),
    ("forward_Pipeline_swi_glu", 552, 552, 552, ("2.208 us",) * 3),
    ("forward_Pipeline_14", 2050, 2050, 2050, ("8.200 us",) * 3),
    ("quantize_2048_Pipeline_main_loop", 221, 221, 221, ("0.884 us",) * 3),
    ("quantize_2048_Pipeline_2", 2050, 2050, 2050, ("8.200 us",) * 3),
    ("quantize_2048_Pipeline_3", 34, 34, 34, ("0.136 us",) * 3),
    ("quantize_2048_s", 2274, 2274, 2274, ("9.096 us",) * 3),
    ("matmul_2048_768_Pipeline_x_buff", 130, 130, 130, ("0.520 us",) * 3),
    ("matmul_2048_768_Pipeline_xs_buff", 10, 10, 10, ("40.000 ns",) * 3),
    ("matmul_2048_768_Pipeline_VITIS_LOOP_225_1", 52526, 52526, 52526, ("0.210 ms",) * 3),
    ("matmul_2048_768_s", 52659, 52659, 52659, ("0.211 ms",) * 3),
    ("forward_Pipeline_residual2", 58, 58, 58, ("0.232 us",) * 3),
    ("matmul_768_32000_Pipeline_x_buff", 50, 50, 50, ("0.200 us",) * 3),
    ("matmul_768_32000_Pipeline_xs_buff", 5, 5, 5, ("20.000 ns",) * 3),
    ("matmul_768_32000_Pipeline_VITIS_LOOP_225_1", 864190, 864190, 864190, ("3.457 ms",) * 3),
    ("matmul_768_32000_s", 864311, 864311, 864311, ("3.457 ms",) * 3),
    ("forward", 4160107, 4377403, 4892635, ("16.640 ms", "17.510 ms", "19.571 ms")),
)

_TIME_UNITS_NS = {"ns": 1.0, "us": 1e3, "ms": 1e6, "s": 1e9}


def builtin_cycle_table() -> CycleTable:
    rows = {name: CycleRow(b, a, w, printed)
            for name, b, a, w, printed in _BUILTIN_ROWS}
    return CycleTable(rows=rows, clock_period_ns=CLOCK_PERIOD_NS)


def parse_printed_time(text: str) -> tuple[float, float]:
    """Parse e.g. '3.084 us' into (value_ns, half_ulp_ns of the printing)."""
    try:
        num, unit = text.split()
        scale = _TIME_UNITS_NS[unit]
    except (ValueError, KeyError) as exc:
        raise CycleTableFormatError(f"unparseable time {text!r}") from exc
    decimals = len(num.split(".")[1]) if "." in num else 0
    return float(num) * scale, 0.5 * 10.0 ** (-decimals) * scale


def check_time_consistency(table: CycleTable) -> list[str]:
    """Rows whose cycles * clock disagree with the printed absolute time."""
    bad = []
    for name, row in table.rows.items():
        if row.printed is None:
            continue
        for which, text in zip(("best", "avg", "worst"), row.printed):
            printed_ns, tol_ns = parse_printed_time(text)
            if abs(table.time_ns(name, which) - printed_ns) > tol_ns:
                bad.append(f"{name}/{which}: {table.time_ns(name, which)} ns vs {text}")
    return bad


def load_cycle_table(source: str | Path | None = None) -> CycleTable:
    """Load a table: None or 'builtin' gives the built-in synthesis numbers.

    File format: '#' comments; an optional 'clock_period_ns <float>' line;
    otherwise one row per module: name best avg worst.
    """
    if source is None or source == "builtin":
        return builtin_cycle_table()
    text = Path(source).read_text()
    rows: dict[str, CycleRow] = {}
    clock = CLOCK_PERIOD_NS
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "clock_period_ns":
            if len(parts) != 2:
                raise CycleTableFormatError(f"line {lineno}: bad clock directive")
            clock = float(parts[1])
            continue
        if len(parts) != 4:
            raise CycleTableFormatError(
                f"line {lineno}: expected 'name best avg worst', got {line!r}"
            )
        try:
            best, avg, worst = (int(p) for p in parts[1:])
        except ValueError as exc:
            raise CycleTableFormatError(f"line {lineno}: non-integer cycles") from exc
        rows[parts[0]] = CycleRow(best, avg, worst)
    return CycleTable(rows=rows, clock_period_ns=clock)


def forward_latency_ms(table: CycleTable, which: str = "avg") -> float:
    """Per-token latency straight from the table's 'forward' row."""
    return table.time_ns("forward", which) / 1e6


@dataclass(frozen=True)
class PipelineParams:
    """Knobs of the analytic matmul model.

    ``per_row_overhead`` is the pipeline fill/drain cost charged per output
    row (defaults to ``pipeline_depth`` until calibrated); ``fixed_overhead``
    is the per-call setup cost (input burst-in, scale loads).
    """

    burst_width_values_per_cycle: int = 64
    pipeline_depth: int = 15
    initiation_interval: int = 1
    per_row_overhead: float | None = None
    fixed_overhead: float = 0.0

    def __post_init__(self):
        if self.burst_width_values_per_cycle <= 0 or self.pipeline_depth <= 0 \
                or self.initiation_interval <= 0:
            raise ValueError("pipeline parameters must be positive")

    @property
    def row_overhead(self) -> float:
        return self.pipeline_depth if self.per_row_overhead is None \
            else self.per_row_overhead


def analytic_matmul_cycles(d_in: int, d_out: int,
                           params: PipelineParams | None = None) -> int:
    """Model a (d_out, d_in) matrix-vector product on the burst pipeline."""
    params = params or PipelineParams()
    burst = params.burst_width_values_per_cycle
    if d_in % burst != 0:
        raise ShapeError(f"d_in {d_in} is not divisible by burst width {burst}")
    per_row = params.initiation_interval * (d_in // burst) + params.row_overhead
    return int(round(d_out * per_row + params.fixed_overhead))


# rows used to fit the analytic model; the 2048-input matmul is excluded
# because its loop pipelines at a different initiation interval (68.4 vs
# 27.0 cycles per row) and a single (II, overhead) pair cannot cover both
DEFAULT_CALIBRATION_SHAPES = ((768, 768), (768, 2048), (768, 32000))


def calibrate_matmul_model(
    table: CycleTable,
    shapes: tuple[tuple[int, int], ...] = DEFAULT_CALIBRATION_SHAPES,
    params: PipelineParams | None = None,
) -> PipelineParams:
    """Least-squares fit of per-row and fixed overheads to matmul rows."""
    params = params or PipelineParams()
    burst = params.burst_width_values_per_cycle
    rows = []
    for d_in, d_out in shapes:
        name = f"matmul_{d_in}_{d_out}_s"
        if name not in table.rows:
            raise PerfModelError(f"calibration row {name} missing from table")
        rows.append((d_in, d_out, table.cycles(name)))
    a = np.array([[d_out, 1.0] for _, d_out, _ in rows])
    y = np.array(
        [c - params.initiation_interval * d_out * (d_in // burst)
         for d_in, d_out, c in rows],
        dtype=np.float64,
    )
    (ovh, fixed), *_ = np.linalg.lstsq(a, y, rcond=None)
    return replace(params, per_row_overhead=float(ovh), fixed_overhead=float(fixed))


def _forward_structure(config: ModelConfig) -> tuple[dict[str, int], dict[str, int]]:
    """Module-row multiset of one forward pass: (per-layer rows, final rows)."""
    d, h = config.dim, config.hidden_dim
    kv, v = config.kv_dim, config.vocab_size
    per_layer: dict[str, int] = {}

    def add(counter, name, times=1):
        counter[name] = counter.get(name, 0) + times

    add(per_layer, f"rmsnorm_{d}_s", 2)
    add(per_layer, f"quantize_{d}_s", 2)
    add(per_layer, f"matmul_{d}_{d}_s", 2)        # wq, wo
    add(per_layer, f"matmul_{d}_{kv}_s", 2)       # wk, wv
    add(per_layer, f"matmul_{d}_{h}_s", 2)        # w1, w3
    add(per_layer, f"matmul_{h}_{d}_s", 1)        # w2
    add(per_layer, f"quantize_{h}_s", 1)
    for name in ("forward_Pipeline_rotation1", "forward_Pipeline_3",
                 "forward_Pipeline_4", "forward_Pipeline_10",
                 "forward_Pipeline_residual", "forward_Pipeline_swi_glu",
                 "forward_Pipeline_14", "forward_Pipeline_residual2"):
        add(per_layer, name)
    final = {
        "forward_Pipeline_1": 1,
        f"rmsnorm_{d}_s": 1,
        f"quantize_{d}_s": 1,
        f"matmul_{d}_{v}_s": 1,
    }
    return per_layer, final


def compose_forward_cycles(config: ModelConfig, table: CycleTable, pos: int,
                           attention_multiplicity: int | None = None) -> int:
    """Rebuild one token's forward cycles from per-module rows at ``pos``."""
    if not 0 <= pos < config.seq_len:
        raise PerfModelError(f"pos {pos} outside [0, {config.seq_len})")
    per_layer, final = _forward_structure(config)
    needed = set(per_layer) | set(final) | set(ATTENTION_SUBLOOPS)
    missing = sorted(needed - set(table.rows))
    if missing:
        raise PerfModelError(f"table is missing module rows: {missing}")
    if attention_multiplicity is None:
        attention_multiplicity = calibrate_attention_multiplicity(table, config)

    fraction = pos / (config.seq_len - 1) if config.seq_len > 1 else 0.0
    layer_cost = sum(table.rows[n].interp(fraction) * c for n, c in per_layer.items())
    attn_cost = sum(table.rows[n].interp(fraction) for n in ATTENTION_SUBLOOPS)
    final_cost = sum(table.rows[n].interp(fraction) * c for n, c in final.items())
    total = config.n_layers * (layer_cost + attention_multiplicity * attn_cost)
    return int(round(total + final_cost))


def calibrate_attention_multiplicity(table: CycleTable, config: ModelConfig,
                                     search: range = range(1, 65)) -> int:
    """Integer sub-loop run count per layer that best matches the measured
    forward row at both ends of the context (pos 0 and pos seq_len - 1)."""
    target_best = table.cycles("forward", "best")
    target_worst = table.cycles("forward", "worst")
    best_m, best_err = 1, float("inf")
    for m in search:
        lo = compose_forward_cycles(config, table, 0, attention_multiplicity=m)
        hi = compose_forward_cycles(config, table, config.seq_len - 1,
                                    attention_multiplicity=m)
        err = max(abs(lo - target_best) / target_best,
                  abs(hi - target_worst) / target_worst)
        if err < best_err:
            best_m, best_err = m, err
    return best_m


def throughput_toks_per_s(latency_ms: float) -> float:
    if latency_ms <= 0:
        raise ValueError(f"latency must be positive, got {latency_ms}")
    return 1000.0 / latency_ms


@dataclass(frozen=True)
class EnergyProfile:
    device_name: str
    avg_power_watts: float

    def __post_init__(self):
        if self.avg_power_watts <= 0:
            raise ValueError(f"power must be positive, got {self.avg_power_watts}")


def energy_per_token_mwh(profile: EnergyProfile, latency_ms: float) -> float:
    """watts * seconds = joules; / 3.6 converts joules to milliwatt-hours."""
    if latency_ms <= 0:
        raise ValueError(f"latency must be positive, got {latency_ms}")
    return profile.avg_power_watts * (latency_ms / 1000.0) / 3.6


# vendor-reported baselines for the 110M model on the comparison devices:
# (device, average watts, per-token latency ms), keyed by tokens generated
DEFAULT_DEVICE_BASELINES = {
    256: (("CPU", 42.5, 43.08), ("GPU", 126.9, 9.34)),
    1024: (("CPU", 42.5, 50.94), ("GPU", 130.6, 9.32)),
}


def efficiency_report(profiles: list[EnergyProfile], latencies_ms: list[float],
                      baseline: str | None = None) -> dict:
    """Per-device speed/energy metrics plus ratios against a baseline device.

    Headline ratios follow reporting convention: energy per token is rounded
    to two decimals before dividing, speed ratios divide raw latencies, and
    every ratio is rounded to two decimals.
    """
    if len(profiles) != len(latencies_ms):
        raise ValueError("profiles and latencies differ in length")
    if len(profiles) < 2:
        raise ValueError("need at least two devices to compare")
    devices = {}
    for profile, latency in zip(profiles, latencies_ms):
        mwh = energy_per_token_mwh(profile, latency)
        devices[profile.device_name] = {
            "avg_power_watts": profile.avg_power_watts,
            "latency_ms": latency,
            "toks_per_s": throughput_toks_per_s(latency),
            "mwh_per_token": mwh,
            "mwh_per_token_2dp": round(mwh, 2),
        }
    if baseline is None:
        baseline = min(devices, key=lambda d: devices[d]["mwh_per_token"])
    if baseline not in devices:
        raise ValueError(f"baseline {baseline!r} is not among the devices")
    base = devices[baseline]
    # headline convention divides two-decimal energies; fall back to raw
    # values when rounding collapses the baseline to zero
    rounded_ok = base["mwh_per_token_2dp"] > 0
    ratios = {}
    for name, dev in devices.items():
        if name == baseline:
            continue
        if rounded_ok:
            energy_ratio = dev["mwh_per_token_2dp"] / base["mwh_per_token_2dp"]
        else:
            energy_ratio = dev["mwh_per_token"] / base["mwh_per_token"]
        ratios[name] = {
            "energy_vs_baseline": round(energy_ratio, 2),
            "baseline_speedup": round(dev["latency_ms"] / base["latency_ms"], 2),
        }
    return {"baseline": baseline, "devices": devices, "ratios": ratios}


def format_efficiency_report(report: dict) -> str:
    lines = [
        f"{'device':<8}{'power (W)':>11}{'latency (ms)':>14}"
        f"{'toks/s':>9}{'mWh/tok':>9}",
    ]
    for name, dev in report["devices"].items():
        lines.append(
            f"{name:<8}{dev['avg_power_watts']:>11.1f}{dev['latency_ms']:>14.3f}"
            f"{dev['toks_per_s']:>9.2f}{dev['mwh_per_token_2dp']:>9.2f}"
        )
    base = report["baseline"]
    for name, r in report["ratios"].items():
        lines.append(
            f"{base} vs {name}: {r['energy_vs_baseline']:.2f}x less energy, "
            f"{r['baseline_speedup']:.2f}x the speed"
        )
    return "\n".join(lines)
