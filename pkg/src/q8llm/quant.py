"""Grouped symmetric int8 quantization (Q8_0 style).

A float32 vector is split into fixed-size groups; each group stores int8
codes in [-127, 127] plus one float32 scale = max|w| / 127.  Dequantization
is ``code * scale``.  Linear layers run on the codes with exact integer
accumulation inside each group and float32 accumulation across groups.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

INT8_BOUND = 127  # codes stay in [-127, 127]; -128 is never produced

# largest group size for which 127*127*group_size fits an int32 accumulator
_MAX_GROUP_SIZE = (2**31 - 1) // (INT8_BOUND * INT8_BOUND)


class QuantizationError(ValueError):
    """Input outside the quantizable domain (non-finite values)."""


class ShapeError(ValueError):
    """Array lengths and group sizes do not line up."""


@dataclass
class QuantizedTensor:
    """Flat int8 codes plus one float32 scale per group of ``group_size``."""

    values: np.ndarray
    scales: np.ndarray
    group_size: int

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.int8)
        self.scales = np.ascontiguousarray(self.scales, dtype=np.float32)
        if self.group_size < 1:
            raise ShapeError(f"group_size must be >= 1, got {self.group_size}")
        n = self.values.size
        if n % self.group_size != 0:
            raise ShapeError(
                f"tensor length {n} is not a multiple of group_size {self.group_size}"
            )
        if self.scales.size != n // self.group_size:
            raise ShapeError(
                f"expected {n // self.group_size} scales, got {self.scales.size}"
            )
        if n and int(self.values.min()) < -INT8_BOUND:
            raise ShapeError("quantized codes must lie in [-127, 127]")
        if self.scales.size and float(self.scales.min()) < 0.0:
            raise ShapeError("scales must be non-negative")
        zero = self.scales == 0.0
        if zero.any() and self.values.reshape(-1, self.group_size)[zero].any():
            raise ShapeError("a zero scale requires an all-zero group")

    def __len__(self) -> int:
        return self.values.size

    @property
    def n_groups(self) -> int:
        return self.scales.size


@dataclass(frozen=True)
class QuantStats:
    """Roundtrip error summary for one quantization pass."""

    max_abs_error: float
    rmse: float
    count: int

    @staticmethod
    def merge(parts: list["QuantStats"]) -> "QuantStats":
        total = sum(p.count for p in parts)
        if total == 0:
            return QuantStats(0.0, 0.0, 0)
        sq = sum(p.rmse**2 * p.count for p in parts)
        return QuantStats(
            max_abs_error=max(p.max_abs_error for p in parts),
            rmse=float(np.sqrt(sq / total)),
            count=total,
        )


def _round_half_away_from_zero(x: np.ndarray) -> np.ndarray:
    a = np.abs(x)
    floored = np.floor(a)
    return np.sign(x) * (floored + np.floor(2.0 * (a - floored)))


def _quantize_groups(groups: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Quantize a (n_groups, group_size) float array; codes int8, scales f32."""
    if not np.isfinite(groups).all():
        raise QuantizationError("cannot quantize non-finite values")
    groups = groups.astype(np.float64, copy=False)
    gmax = np.abs(groups).max(axis=1)
    scales = (gmax / INT8_BOUND).astype(np.float32)
    with np.errstate(divide="ignore", invalid="ignore"):
        scaled = np.where(gmax[:, None] > 0.0, groups * (INT8_BOUND / gmax)[:, None], 0.0)
    codes = _round_half_away_from_zero(scaled)
    codes = np.clip(codes, -INT8_BOUND, INT8_BOUND).astype(np.int8)
    return codes, scales


def quantize_group(w) -> tuple[np.ndarray, np.float32]:
    """Quantize one group; returns (int8 codes, scale = max|w| / 127)."""
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 1 or w.size < 1:
        raise ShapeError("quantize_group expects a non-empty 1-D array")
    codes, scales = _quantize_groups(w[None, :])
    return codes[0], scales[0]


def quantize_tensor(w, group_size: int) -> tuple[QuantizedTensor, QuantStats]:
    """Quantize a flat tensor group by group; also reports roundtrip error."""
    w = np.asarray(w, dtype=np.float64).ravel()
    if group_size < 1:
        raise ShapeError(f"group_size must be >= 1, got {group_size}")
    if w.size % group_size != 0:
        raise ShapeError(
            f"length {w.size} is not divisible by group_size {group_size}"
        )
    codes, scales = _quantize_groups(w.reshape(-1, group_size))
    qt = QuantizedTensor(codes.ravel(), scales, group_size)
    err = np.abs(
        codes.astype(np.float64) * scales.astype(np.float64)[:, None]
        - w.reshape(-1, group_size)
    )
    stats = QuantStats(
        max_abs_error=float(err.max(initial=0.0)),
        rmse=float(np.sqrt(np.mean(err**2))) if w.size else 0.0,
        count=int(w.size),
    )
    return qt, stats


def quantize_into(x: np.ndarray, dst: QuantizedTensor) -> None:
    """Requantize ``x`` in place into a preallocated QuantizedTensor."""
    if x.size != dst.values.size:
        raise ShapeError(f"expected length {dst.values.size}, got {x.size}")
    codes, scales = _quantize_groups(x.reshape(-1, dst.group_size))
    dst.values[:] = codes.ravel()
    dst.scales[:] = scales


def dequantize_tensor(t: QuantizedTensor) -> np.ndarray:
    """Inverse map: out[i] = values[i] * scales[i // group_size], float32."""
    vals = t.values.astype(np.float32).reshape(-1, t.group_size)
    return (vals * t.scales[:, None]).ravel()


def qmatmul(
    x: QuantizedTensor,
    w: QuantizedTensor,
    d_in: int,
    d_out: int,
    out: np.ndarray | None = None,
) -> np.ndarray:
    """Quantized matrix-vector product: out[r] = row_r(W) . x, float32.

    ``w`` holds a row-major (d_out, d_in) matrix, every row grouped with the
    same group size as ``x``.  Each group contributes an exact int32 dot
    product of its codes, rescaled by the product of the two group scales;
    group contributions are accumulated in float32.
    """
    gs = x.group_size
    if w.group_size != gs:
        raise ShapeError(f"group size mismatch: x has {gs}, w has {w.group_size}")
    if gs > _MAX_GROUP_SIZE:
        raise ShapeError(f"group_size {gs} would overflow the int32 accumulator")
    if d_in % gs != 0:
        raise ShapeError(f"d_in {d_in} is not divisible by group_size {gs}")
    if len(x) != d_in:
        raise ShapeError(f"x has length {len(x)}, expected d_in {d_in}")
    if len(w) != d_in * d_out:
        raise ShapeError(f"w has length {len(w)}, expected {d_in * d_out}")

    ng = d_in // gs
    qx = x.values.reshape(ng, gs).astype(np.int32)
    qw = w.values.reshape(d_out, ng, gs).astype(np.int32)
    ip = np.einsum("rgk,gk->rg", qw, qx)  # exact per-group integer sums
    contrib = ip.astype(np.float32)
    contrib *= x.scales[None, :]
    contrib *= w.scales.reshape(d_out, ng)
    if out is None:
        return contrib.sum(axis=1, dtype=np.float32)
    if out.shape != (d_out,):
        raise ShapeError(f"out has shape {out.shape}, expected ({d_out},)")
    contrib.sum(axis=1, dtype=np.float32, out=out)
    return out
