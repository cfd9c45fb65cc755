"""Reproduce the accelerator's headline numbers from the built-in cycle table.

Covers all three model layers: the table-driven forward latency, the
per-module composition with its context-length interpolation, and the
analytic matmul fit, then the derived throughput / power / energy figures
for the FPGA against the CPU and GPU baselines.
"""
from q8llm import (
    CONFIG_110M,
    EnergyProfile,
    analytic_matmul_cycles,
    builtin_cycle_table,
    calibrate_attention_multiplicity,
    calibrate_matmul_model,
    compose_forward_cycles,
    efficiency_report,
    energy_per_token_mwh,
    format_efficiency_report,
    forward_latency_ms,
    throughput_toks_per_s,
)

table = builtin_cycle_table()

print("== table mode ==")
latency = forward_latency_ms(table)
print(f"forward row: {table.cycles('forward'):,} cycles x "
      f"{table.clock_period_ns} ns = {latency:.3f} ms per token")
print(f"throughput: {throughput_toks_per_s(latency):.2f} toks/s")

print("\n== composition mode ==")
m = calibrate_attention_multiplicity(table, CONFIG_110M)
print(f"calibrated attention sub-loop multiplicity: {m} per layer")
for pos in (0, 255, 511, 1023):
    cycles = compose_forward_cycles(CONFIG_110M, table, pos, m)
    print(f"pos {pos:4d}: {cycles:,} cycles = "
          f"{cycles * table.clock_period_ns / 1e6:.3f} ms")
print(f"table endpoints: best {table.cycles('forward', 'best'):,} / "
      f"worst {table.cycles('forward', 'worst'):,}")

print("\n== analytic matmul ==")
params = calibrate_matmul_model(table)
print(f"per-row overhead {params.per_row_overhead:.2f} cycles, "
      f"fixed overhead {params.fixed_overhead:.0f} cycles")
for d_in, d_out in ((768, 768), (768, 2048), (768, 32000)):
    got = analytic_matmul_cycles(d_in, d_out, params)
    ref = table.cycles(f"matmul_{d_in}_{d_out}_s")
    print(f"matmul {d_in:>5} x {d_out:<5}: model {got:>7,} vs table {ref:>7,} "
          f"({(got - ref) / ref:+.2%})")

print("\n== energy per token ==")
fpga = EnergyProfile("FPGA", 9.0)
print(f"FPGA: 9 W x {latency:.3f} ms -> "
      f"{energy_per_token_mwh(fpga, latency):.4f} mWh/token")
report = efficiency_report(
    [fpga, EnergyProfile("CPU", 42.5), EnergyProfile("GPU", 126.9)],
    [latency, 43.08, 9.34],
    baseline="FPGA",
)
print(format_efficiency_report(report))
