"""Deterministic signed fixed-point arithmetic with explicit rounding and saturation.

All datapath numbers in this package are two's-complement integers tagged with a
Q-format (total bits, fraction bits).  Multiplies go through a double-width
exact product and are rounded once; additions saturate instead of wrapping.
The raw-integer kernels at the bottom (``rne_shift``, ``sat``, ...) carry the
same semantics without object overhead and are what the sample-rate loops use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

ROUND_NEAREST_EVEN = "round_nearest_even"
TRUNCATE = "truncate"


@dataclass(frozen=True)
class QFormat:
    """Signed two's-complement Q-format: `total_bits` wide, `frac_bits` fractional.

    Real value of a raw integer r is r * 2**-frac_bits.  Raw range is
    [-2**(total_bits-1), 2**(total_bits-1) - 1].
    """

    total_bits: int
    frac_bits: int

    def __post_init__(self):
        if not (4 <= self.total_bits <= 32):
            raise ValueError(f"total_bits must be in 4..32, got {self.total_bits}")
        if not (0 <= self.frac_bits <= self.total_bits - 1):
            raise ValueError(
                f"frac_bits must be in 0..{self.total_bits - 1}, got {self.frac_bits}"
            )

    @property
    def min_raw(self) -> int:
        return -(1 << (self.total_bits - 1))

    @property
    def max_raw(self) -> int:
        return (1 << (self.total_bits - 1)) - 1

    @property
    def scale(self) -> int:
        return 1 << self.frac_bits

    @property
    def resolution(self) -> float:
        return 1.0 / self.scale

    def __repr__(self):
        return f"Q{{{self.total_bits},{self.frac_bits}}}"


@dataclass(frozen=True)
class FixedValue:
    """An immutable raw integer bound to its QFormat."""

    raw: int
    fmt: QFormat

    def __post_init__(self):
        if not (self.fmt.min_raw <= self.raw <= self.fmt.max_raw):
            raise ValueError(f"raw {self.raw} out of range for {self.fmt}")

    @property
    def value(self) -> float:
        return self.raw / self.fmt.scale

    def __repr__(self):
        return f"FixedValue({self.value:g} = {self.raw}/{self.fmt.scale}, {self.fmt})"


# ---------------------------------------------------------------------------
# raw-integer kernels

def sat(raw: int, fmt: QFormat) -> int:
    """Clamp a raw integer into the format's range."""
    if raw > fmt.max_raw:
        return fmt.max_raw
    if raw < fmt.min_raw:
        return fmt.min_raw
    return raw


def sat_bounds(raw: int, lo: int, hi: int) -> int:
    return lo if raw < lo else hi if raw > hi else raw


INT32_MIN = -(1 << 31)
INT32_MAX = (1 << 31) - 1


def sat32(raw: int) -> int:
    """Saturate to the 32-bit accumulator range used by biquads and MAC units."""
    return INT32_MIN if raw < INT32_MIN else INT32_MAX if raw > INT32_MAX else raw


def rne_shift(x: int, k: int) -> int:
    """Round-to-nearest-even right shift of an integer by k >= 0 bits."""
    if k <= 0:
        return x
    half = 1 << (k - 1)
    q = (x + half) >> k
    if (x & ((1 << k) - 1)) == half and (q & 1):
        q -= 1
    return q


def trunc_shift(x: int, k: int) -> int:
    """Truncating (floor, i.e. plain arithmetic) right shift."""
    if k <= 0:
        return x
    return x >> k


def round_half_even(x: float) -> int:
    """Python round() is banker's rounding already; guard against NaN."""
    if math.isnan(x):
        raise ValueError("cannot round NaN")
    return int(round(x))


# ---------------------------------------------------------------------------
# spec operations on FixedValue

def quantize(value: float, fmt: QFormat, mode: str = ROUND_NEAREST_EVEN) -> FixedValue:
    """Quantize a real value onto the format grid, saturating at the range edges.

    NaN is rejected; infinities saturate.
    """
    if isinstance(value, float) and math.isnan(value):
        raise ValueError("cannot quantize NaN")
    if isinstance(value, float) and math.isinf(value):
        raw = fmt.max_raw if value > 0 else fmt.min_raw
        return FixedValue(raw, fmt)
    scaled = value * fmt.scale
    if mode == ROUND_NEAREST_EVEN:
        raw = round_half_even(scaled)
    elif mode == TRUNCATE:
        raw = math.floor(scaled)
    else:
        raise ValueError(f"unknown rounding mode {mode!r}")
    return FixedValue(sat(raw, fmt), fmt)


def sat_add(a: FixedValue, b: FixedValue) -> FixedValue:
    """Exact sum of two same-format values, saturated into the format."""
    if a.fmt != b.fmt:
        raise ValueError(f"format mismatch: {a.fmt} vs {b.fmt}")
    return FixedValue(sat(a.raw + b.raw, a.fmt), a.fmt)


def mul_shift(
    a: FixedValue,
    b: FixedValue,
    out_fmt: QFormat,
    mode: str = ROUND_NEAREST_EVEN,
) -> FixedValue:
    """Multiply via an exact double-width product, then round/shift into out_fmt.

    The product of Q{_,fa} x Q{_,fb} carries fa+fb fraction bits; moving to
    out_fmt shifts right by fa+fb-out_frac (rounded) or left (exact), then
    saturates.
    """
    prod = a.raw * b.raw
    shift = a.fmt.frac_bits + b.fmt.frac_bits - out_fmt.frac_bits
    if shift >= 0:
        if mode == ROUND_NEAREST_EVEN:
            raw = rne_shift(prod, shift)
        elif mode == TRUNCATE:
            raw = trunc_shift(prod, shift)
        else:
            raise ValueError(f"unknown rounding mode {mode!r}")
    else:
        raw = prod << (-shift)
    return FixedValue(sat(raw, out_fmt), out_fmt)


def shift_mul(
    a: FixedValue,
    shifts: list[tuple[int, int]],
    out_fmt: QFormat | None = None,
) -> FixedValue:
    """Multiplierless coefficient product: sum of +-(a >> k) terms.

    `shifts` is the canonical-signed-digit realization of a coefficient, at
    most two (sign, shift_amount) terms; shift_amount k multiplies by 2**-k
    (negative k shifts left).  The terms are aligned in a wide accumulator and
    rounded once, so the result is bit-identical to mul_shift with the
    coefficient whose CSD expansion is exactly `shifts`.
    """
    if not shifts:
        raise ValueError("empty shift list")
    if len(shifts) > 2:
        raise ValueError("CSD realization limited to 2 nonzero digits")
    out_fmt = out_fmt or a.fmt
    d = out_fmt.frac_bits - a.fmt.frac_bits
    exps = [d - k for _, k in shifts]
    align = max(0, -min(exps))
    acc = 0
    for (sign, _), e in zip(shifts, exps):
        if sign not in (1, -1):
            raise ValueError(f"sign must be +-1, got {sign}")
        acc += sign * (a.raw << (align + e))
    return FixedValue(sat(rne_shift(acc, align), out_fmt), out_fmt)
