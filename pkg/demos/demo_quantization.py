"""Walk through the grouped int8 quantization scheme.

Shows the per-group scale rule, the roundtrip error bound, and the
integer-accumulator matrix-vector product against its float oracle.
"""
import numpy as np

from q8llm import dequantize_tensor, qmatmul, quantize_group, quantize_tensor

rng = np.random.default_rng(0)

print("== one group ==")
w = np.array([0.5, -1.0, 0.25])
codes, scale = quantize_group(w)
print(f"weights {w} -> codes {codes}, scale {scale:.6f} (= max|w|/127)")
print(f"dequantized: {codes * scale}")

print("\n== roundtrip bound: |error| <= scale/2 ==")
w = rng.uniform(-8, 8, size=64 * 1000)
qt, stats = quantize_tensor(w, group_size=64)
back = dequantize_tensor(qt)
print(f"{stats.count} weights, max abs error {stats.max_abs_error:.6f}, "
      f"rmse {stats.rmse:.6f}")
print(f"half of the largest group scale: {0.5 * qt.scales.max():.6f}")

print("\n== quantized matmul vs dequantize-then-multiply ==")
d_in, d_out = 256, 16
x, _ = quantize_tensor(rng.uniform(-4, 4, d_in), 64)
wm, _ = quantize_tensor(rng.uniform(-4, 4, d_in * d_out), 64)
got = qmatmul(x, wm, d_in, d_out)
oracle = dequantize_tensor(wm).reshape(d_out, d_in) @ dequantize_tensor(x)
print(f"first rows: quantized {got[:4]}")
print(f"            oracle    {oracle[:4]}")
print(f"worst relative deviation: "
      f"{np.abs(got - oracle).max() / np.abs(oracle).max():.2e}")
