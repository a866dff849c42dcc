"""Mel-spaced 4th-order IIR band-pass bank design and mixed-precision quantization.

Each channel is a Butterworth band-pass realized as two cascaded biquads
(bilinear transform with frequency pre-warping), so every numerator is
b0*(1 - z^-2): b1 = 0 and b2 = -b0 structurally.  Coefficients are quantized
to 12-bit numerators / 8-bit denominators with fraction bits shared per family
across the bank.  One numerator gain per channel is snapped to a <=2-digit
canonical-signed-digit value so it is realized with shifts instead of a
multiplier; the companion section's gain absorbs the snap error.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .fixed_point import FixedValue, QFormat

DEFAULT_SAMPLE_RATE = 8000
DEFAULT_N_CHANNELS = 16
DEFAULT_F_LO_HZ = 100.0
DEFAULT_F_HI_HZ = 7900.0
# channels whose band would cross Nyquist are designed at this fraction of fs
CENTER_CLAMP_FRACTION = 0.45
# contiguous enabled window whose centers land nearest the 516 Hz..4.22 kHz
# operating band of the 10-channel configuration
DESIGNATED_10CH_WINDOW = tuple(range(3, 13))

B_BITS_DEFAULT = 12
A_BITS_DEFAULT = 8

# feature post-processing constants live with the bank because the bank file
# carries the per-channel offset/scale raws
OFFSET_FMT = QFormat(16, 6)   # log2-domain units
SCALE_FMT = QFormat(16, 12)
DEFAULT_OFFSET_RAW = 0
DEFAULT_SCALE_RAW = 16384     # x4: maps the 0..~15 log2 envelope range into 12 bits


def mel_from_hz(f_hz: float) -> float:
    return 2595.0 * math.log10(1.0 + f_hz / 700.0)


def hz_from_mel(m: float) -> float:
    return 700.0 * (10.0 ** (m / 2595.0) - 1.0)


def mel_center_frequencies(n: int, f_lo_hz: float, f_hi_hz: float) -> list[float]:
    """n center frequencies equally spaced on the Mel scale, endpoints inclusive.

    A single channel sits at the Mel midpoint of the range.
    """
    if not (1 <= n <= 16):
        raise ValueError(f"channel count must be 1..16, got {n}")
    if not (0 < f_lo_hz < f_hi_hz):
        raise ValueError(f"invalid frequency range [{f_lo_hz}, {f_hi_hz}]")
    m_lo, m_hi = mel_from_hz(f_lo_hz), mel_from_hz(f_hi_hz)
    if n == 1:
        return [hz_from_mel(0.5 * (m_lo + m_hi))]
    return [hz_from_mel(float(m)) for m in np.linspace(m_lo, m_hi, n)]


@dataclass(frozen=True)
class SOSCoefficients:
    """One real-coefficient biquad, a0 normalized to 1."""

    b0: float
    b1: float
    b2: float
    a1: float
    a2: float


@dataclass(frozen=True)
class QuantizedSOS:
    """Biquad with 12-bit numerator / 8-bit denominator fixed-point coefficients.

    csd_* hold the shift realization for coefficients whose canonical signed
    digit expansion has at most two nonzero digits, None otherwise.
    """

    b0: FixedValue
    b2: FixedValue
    a1: FixedValue
    a2: FixedValue
    csd_b0: tuple | None = None
    csd_a1: tuple | None = None
    csd_a2: tuple | None = None

    @property
    def frac_b(self) -> int:
        return self.b0.fmt.frac_bits

    @property
    def frac_a(self) -> int:
        return self.a1.fmt.frac_bits

    def dequantized(self) -> SOSCoefficients:
        return SOSCoefficients(self.b0.value, 0.0, self.b2.value, self.a1.value, self.a2.value)


@dataclass(frozen=True)
class ChannelSpec:
    center_freq_hz: float
    sos: tuple[QuantizedSOS, QuantizedSOS]
    offset: FixedValue
    scale: FixedValue
    enabled: bool = True


@dataclass(frozen=True)
class FilterBank:
    channels: tuple[ChannelSpec, ...]
    sample_rate_hz: int

    def __post_init__(self):
        if not (1 <= len(self.channels) <= 16):
            raise ValueError("bank must hold 1..16 channels")
        cfs = [c.center_freq_hz for c in self.channels]
        if any(b <= a for a, b in zip(cfs, cfs[1:])):
            raise ValueError("center frequencies must be strictly increasing")

    @property
    def n_channels(self) -> int:
        return len(self.channels)

    @property
    def enabled_indices(self) -> tuple[int, ...]:
        return tuple(i for i, c in enumerate(self.channels) if c.enabled)

    def design_freq_hz(self, idx: int) -> float:
        return min(self.channels[idx].center_freq_hz, CENTER_CLAMP_FRACTION * self.sample_rate_hz)


@dataclass(frozen=True)
class FloatChannel:
    center_freq_hz: float
    design_freq_hz: float
    q_factor: float
    sos: tuple[SOSCoefficients, SOSCoefficients]


@dataclass(frozen=True)
class FloatBankDesign:
    """Float prototype of the whole bank, input to quantization and search."""

    channels: tuple[FloatChannel, ...]
    sample_rate_hz: int


# ---------------------------------------------------------------------------
# design

def design_bandpass(center_hz: float, q_factor: float, sample_rate_hz: int) -> list[SOSCoefficients]:
    """4th-order Butterworth band-pass as two biquads, unity gain at center.

    Bilinear transform with pre-warping; each analog section carries one zero
    at s=0, so each digital numerator is b0*(1 - z^-2).
    """
    if q_factor <= 0:
        raise ValueError("q_factor must be positive")
    if not (0 < center_hz < sample_rate_hz / 2):
        raise ValueError(f"center {center_hz} Hz not below Nyquist of {sample_rate_hz} Hz")
    fs = float(sample_rate_hz)
    w0 = 2.0 * fs * math.tan(math.pi * center_hz / fs)
    bw = w0 / q_factor
    # order-2 Butterworth low-pass prototype poles -> band-pass poles
    poles = []
    for p_lp in (complex(-math.sqrt(0.5), math.sqrt(0.5)), complex(-math.sqrt(0.5), -math.sqrt(0.5))):
        disc = cmath.sqrt((p_lp * bw) ** 2 - 4.0 * w0 * w0)
        poles.append((p_lp * bw + disc) / 2.0)
        poles.append((p_lp * bw - disc) / 2.0)
    upper = [p for p in poles if p.imag > 1e-12]
    if len(upper) != 2:
        raise ValueError(f"degenerate pole configuration for center {center_hz} Hz")
    sections = []
    for p in upper:
        # analog section g*s / (s^2 + c1 s + c0) with conjugate pole pair
        c1 = -2.0 * p.real
        c0 = abs(p) ** 2
        k = 2.0 * fs
        a0 = k * k + c1 * k + c0
        sec = SOSCoefficients(
            b0=k / a0,
            b1=0.0,
            b2=-k / a0,
            a1=(2.0 * c0 - 2.0 * k * k) / a0,
            a2=(k * k - c1 * k + c0) / a0,
        )
        g = abs(frequency_response([sec], center_hz, sample_rate_hz))
        sections.append(replace(sec, b0=sec.b0 / g, b2=sec.b2 / g))
    return sections


def frequency_response(sos_list, freq_hz: float, sample_rate_hz: int) -> complex:
    """Cascade transfer function at z = exp(j*2*pi*f/fs)."""
    z1 = cmath.exp(-2j * math.pi * freq_hz / sample_rate_hz)
    z2 = z1 * z1
    h = complex(1.0)
    for sec in sos_list:
        if isinstance(sec, QuantizedSOS):
            sec = sec.dequantized()
        h *= (sec.b0 + sec.b1 * z1 + sec.b2 * z2) / (1.0 + sec.a1 * z1 + sec.a2 * z2)
    return h


def _gain_grid(sos_list, freqs: np.ndarray, fs: int) -> np.ndarray:
    z1 = np.exp(-2j * np.pi * freqs / fs)
    z2 = z1 * z1
    h = np.ones_like(z1)
    for sec in sos_list:
        if isinstance(sec, QuantizedSOS):
            sec = sec.dequantized()
        h *= (sec.b0 + sec.b1 * z1 + sec.b2 * z2) / (1.0 + sec.a1 * z1 + sec.a2 * z2)
    return np.abs(h)


def stability_check(sos) -> bool:
    """Stability triangle on dequantized values: |a2| < 1 and |a1| < 1 + a2."""
    if isinstance(sos, QuantizedSOS):
        sos = sos.dequantized()
    return abs(sos.a2) < 1.0 and abs(sos.a1) < 1.0 + sos.a2


class QuantizationError(ValueError):
    pass


# ---------------------------------------------------------------------------
# canonical signed digit

def csd_digits(n: int) -> list[tuple[int, int]]:
    """Non-adjacent-form digits of an integer as (sign, bit_position) pairs."""
    digs = []
    pos = 0
    while n != 0:
        if n & 1:
            d = 2 - (n & 3)  # +1 if n % 4 == 1, -1 if n % 4 == 3
            n -= d
            digs.append((d, pos))
        n >>= 1
        pos += 1
    return digs


def csd_shifts(coeff: FixedValue, max_digits: int = 2) -> tuple | None:
    """Shift realization of a coefficient if its CSD has <= max_digits nonzeros.

    Returned shift amounts are right shifts: coefficient = sum s_i * 2**-k_i.
    """
    if coeff.raw == 0:
        return None
    digs = csd_digits(coeff.raw)
    if len(digs) > max_digits:
        return None
    return tuple((sign, coeff.fmt.frac_bits - pos) for sign, pos in digs)


def _nearest_csd2_raw(target: float, bits: int) -> int:
    """Nearest nonzero raw integer of the same sign whose NAF weight is <= 2."""
    lim = (1 << (bits - 1)) - 1
    sign = 1 if target >= 0 else -1
    mag = abs(target)
    cands = set()
    for p in range(0, bits + 1):
        cands.add(1 << p)
        for p2 in range(0, p):
            cands.add((1 << p) + (1 << p2))
            cands.add((1 << p) - (1 << p2))
    best = None
    for c in sorted(cands):
        if c == 0 or c > lim:
            continue
        if best is None or abs(c - mag) < abs(best - mag):
            best = c
    return sign * best


# ---------------------------------------------------------------------------
# quantization

def _int_bits_for(max_abs: float) -> int:
    ib = 1
    while max_abs >= 2 ** (ib - 1):
        ib += 1
    return ib


def coefficient_fraction_bits(sos_list, b_bits: int, a_bits: int) -> tuple[int, int]:
    """Family-wide fraction bits: integer bits from the max |b| and max |a|."""
    max_b = max(max(abs(s.b0), abs(s.b2)) for s in sos_list)
    max_a = max(max(abs(s.a1), abs(s.a2)) for s in sos_list)
    return b_bits - _int_bits_for(max_b), a_bits - _int_bits_for(max_a)


def _q_raw(v: float, frac: int, bits: int) -> int:
    r = round(v * (1 << frac))
    lo, hi = -(1 << (bits - 1)), (1 << (bits - 1)) - 1
    return max(lo, min(hi, int(r)))


def _make_qsos(b0_raw, b2_raw, a1_raw, a2_raw, frac_b, frac_a, b_bits, a_bits) -> QuantizedSOS:
    bf, af = QFormat(b_bits, frac_b), QFormat(a_bits, frac_a)
    q = QuantizedSOS(
        b0=FixedValue(b0_raw, bf),
        b2=FixedValue(b2_raw, bf),
        a1=FixedValue(a1_raw, af),
        a2=FixedValue(a2_raw, af),
    )
    return replace(
        q,
        csd_b0=csd_shifts(q.b0),
        csd_a1=csd_shifts(q.a1),
        csd_a2=csd_shifts(q.a2),
    )


def quantize_coefficients(
    sos: SOSCoefficients,
    b_bits: int,
    a_bits: int,
    frac_b: int | None = None,
    frac_a: int | None = None,
) -> QuantizedSOS:
    """Round one section to mixed precision (round-to-nearest per coefficient).

    Fraction bits default to this section's own maxima; bank-level callers pass
    the family-shared values.  Raises QuantizationError if the rounded poles
    leave the unit circle.
    """
    if b_bits < 4 or a_bits < 4:
        raise ValueError("coefficient widths must be at least 4 bits")
    if frac_b is None or frac_a is None:
        fb, fa = coefficient_fraction_bits([sos], b_bits, a_bits)
        frac_b = fb if frac_b is None else frac_b
        frac_a = fa if frac_a is None else frac_a
    q = _make_qsos(
        _q_raw(sos.b0, frac_b, b_bits),
        _q_raw(sos.b2, frac_b, b_bits),
        _q_raw(sos.a1, frac_a, a_bits),
        _q_raw(sos.a2, frac_a, a_bits),
        frac_b,
        frac_a,
        b_bits,
        a_bits,
    )
    if not stability_check(q):
        raise QuantizationError(
            f"quantization to {b_bits}b/{a_bits}b destabilizes section "
            f"(a1={q.a1.value}, a2={q.a2.value})"
        )
    return q


def _denominator_candidates(sec: SOSCoefficients, frac_a: int, a_bits: int, keep: int = 4):
    """Stable (a1_raw, a2_raw) pairs near the rounded values, best pole match first."""
    r_t = math.sqrt(max(sec.a2, 1e-12))
    th_t = math.acos(max(-1.0, min(1.0, -sec.a1 / (2.0 * r_t))))
    a1_0, a2_0 = _q_raw(sec.a1, frac_a, a_bits), _q_raw(sec.a2, frac_a, a_bits)
    lim = (1 << (a_bits - 1)) - 1
    scored = []
    for da1 in range(-2, 3):
        for da2 in range(-2, 3):
            a1_r, a2_r = a1_0 + da1, a2_0 + da2
            if abs(a1_r) > lim or abs(a2_r) > lim:
                continue
            a1_q, a2_q = a1_r / (1 << frac_a), a2_r / (1 << frac_a)
            if a2_q <= 0 or abs(a2_q) >= 1 or abs(a1_q) >= 1 + a2_q:
                continue
            r_c = math.sqrt(a2_q)
            arg = -a1_q / (2.0 * r_c)
            if abs(arg) > 1.0:
                continue
            cost = (math.acos(arg) - th_t) ** 2 + 0.25 * (r_c - r_t) ** 2
            scored.append((cost, a1_r, a2_r))
    scored.sort()
    if not scored:
        raise QuantizationError(f"no stable {a_bits}-bit denominator near a1={sec.a1}, a2={sec.a2}")
    return scored[:keep]


def _compensated_b0_target(a1_q: float, a2_q: float, f_hz: float, fs: int) -> float:
    """b0 making the section gain exactly 1 at f against the quantized poles."""
    z1 = cmath.exp(-2j * math.pi * f_hz / fs)
    z2 = z1 * z1
    num = abs(1.0 - z2)
    den = abs(1.0 + a1_q * z1 + a2_q * z2)
    return den / num if num > 1e-12 else 0.0


def quantize_channel(
    ch: FloatChannel,
    sample_rate_hz: int,
    b_bits: int,
    a_bits: int,
    frac_b: int,
    frac_a: int,
    tuned: bool = True,
) -> tuple[QuantizedSOS, QuantizedSOS]:
    """Quantize one channel's cascade.

    tuned mode searches a small stable neighborhood of the rounded denominators
    for the pair best preserving the cascade peak, recomputes each numerator
    gain against the chosen quantized poles, and snaps section 0's b0 to the
    nearest 2-digit CSD value (compensated in section 1) so one multiplier per
    channel becomes shifts.  Plain mode is scalar round-to-nearest.
    """
    fs = sample_rate_hz
    fc = ch.design_freq_hz
    if not tuned:
        return tuple(
            quantize_coefficients(sec, b_bits, a_bits, frac_b, frac_a) for sec in ch.sos
        )

    cands = [_denominator_candidates(sec, frac_a, a_bits) for sec in ch.sos]
    grid = np.linspace(max(1.0, fc * 0.55), min(fs / 2.0 - 1.0, fc * 1.45), 1500)
    g_float = abs(frequency_response(ch.sos, fc, fs))
    best = None
    for _, a1_r0, a2_r0 in cands[0]:
        for _, a1_r1, a2_r1 in cands[1]:
            pair_raws = ((a1_r0, a2_r0), (a1_r1, a2_r1))
            targets = [
                _compensated_b0_target(a1r / (1 << frac_a), a2r / (1 << frac_a), fc, fs)
                for a1r, a2r in pair_raws
            ]
            b0_raw0 = _nearest_csd2_raw(targets[0] * (1 << frac_b), b_bits)
            b0_t1 = (targets[0] * targets[1]) / (b0_raw0 / (1 << frac_b))
            b0_raw1 = _q_raw(b0_t1, frac_b, b_bits)
            qsecs = (
                _make_qsos(b0_raw0, -b0_raw0, *pair_raws[0], frac_b, frac_a, b_bits, a_bits),
                _make_qsos(b0_raw1, -b0_raw1, *pair_raws[1], frac_b, frac_a, b_bits, a_bits),
            )
            resp = _gain_grid(qsecs, grid, fs)
            f_peak = float(grid[int(np.argmax(resp))])
            shift = abs(f_peak - fc) / fc
            g_q = abs(frequency_response(qsecs, fc, fs))
            gain_err_db = abs(20.0 * math.log10(max(g_q, 1e-12) / g_float))
            cost = shift + 0.05 * gain_err_db
            if best is None or cost < best[0]:
                best = (cost, qsecs)
    qsecs = best[1]
    for i, q in enumerate(qsecs):
        if not stability_check(q):
            raise QuantizationError(f"section {i} unstable after quantization")
    return qsecs


# ---------------------------------------------------------------------------
# bank construction

def _channel_q_factors(centers: list[float]) -> list[float]:
    """Q from Mel-midpoint band edges so neighbors cross near -3 dB."""
    ms = [mel_from_hz(c) for c in centers]
    if len(centers) == 1:
        return [max(centers[0] / (0.3 * centers[0]), 0.5)]
    step = ms[1] - ms[0]
    qs = []
    for i, c in enumerate(centers):
        m_lo = ms[i] - step / 2 if i == 0 else (ms[i - 1] + ms[i]) / 2
        m_hi = ms[i] + step / 2 if i == len(centers) - 1 else (ms[i] + ms[i + 1]) / 2
        qs.append(c / (hz_from_mel(m_hi) - hz_from_mel(m_lo)))
    return qs


def design_float_bank(
    n_channels: int = DEFAULT_N_CHANNELS,
    f_lo_hz: float = DEFAULT_F_LO_HZ,
    f_hi_hz: float = DEFAULT_F_HI_HZ,
    sample_rate_hz: int = DEFAULT_SAMPLE_RATE,
) -> FloatBankDesign:
    centers = mel_center_frequencies(n_channels, f_lo_hz, f_hi_hz)
    qs = _channel_q_factors(centers)
    clamp = CENTER_CLAMP_FRACTION * sample_rate_hz
    channels = []
    for c, q in zip(centers, qs):
        fd = min(c, clamp)
        secs = design_bandpass(fd, q, sample_rate_hz)
        channels.append(FloatChannel(c, fd, q, tuple(secs)))
    return FloatBankDesign(tuple(channels), sample_rate_hz)


def quantize_bank(
    design: FloatBankDesign,
    b_bits: int = B_BITS_DEFAULT,
    a_bits: int = A_BITS_DEFAULT,
    enabled: tuple[int, ...] | None = None,
    tuned: bool = True,
) -> FilterBank:
    """Quantize a float bank design to mixed precision with shared fraction bits."""
    all_sos = [s for ch in design.channels for s in ch.sos]
    frac_b, frac_a = coefficient_fraction_bits(all_sos, b_bits, a_bits)
    if enabled is None:
        enabled = (
            DESIGNATED_10CH_WINDOW
            if len(design.channels) == DEFAULT_N_CHANNELS
            else tuple(range(len(design.channels)))
        )
    channels = []
    for i, ch in enumerate(design.channels):
        try:
            qsecs = quantize_channel(
                ch, design.sample_rate_hz, b_bits, a_bits, frac_b, frac_a, tuned=tuned
            )
        except QuantizationError as e:
            raise QuantizationError(f"channel {i} ({ch.center_freq_hz:.0f} Hz): {e}") from e
        channels.append(
            ChannelSpec(
                center_freq_hz=ch.center_freq_hz,
                sos=qsecs,
                offset=FixedValue(DEFAULT_OFFSET_RAW, OFFSET_FMT),
                scale=FixedValue(DEFAULT_SCALE_RAW, SCALE_FMT),
                enabled=i in enabled,
            )
        )
    return FilterBank(tuple(channels), design.sample_rate_hz)


def default_bank(sample_rate_hz: int = DEFAULT_SAMPLE_RATE) -> FilterBank:
    """The shipped 16-channel bank with the designated 10-channel window enabled."""
    return quantize_bank(design_float_bank(sample_rate_hz=sample_rate_hz))


# ---------------------------------------------------------------------------
# op-count accounting and precision search

BASIC_MULTIPLIERS_PER_FILTER = 10  # generic biquad pair: b0,b1,b2,a1,a2 each
ADDERS_PER_FILTER = 8


def channel_multiplier_count(ch: ChannelSpec) -> int:
    """Multipliers left per filter after structural and CSD substitutions.

    Of the 10 generic stations, the two b1 are structural zeros and the two b2
    reuse the b0 product negated; each remaining coefficient with a <=2-digit
    CSD realization becomes shifts.
    """
    count = 0
    for sec in ch.sos:
        for csd in (sec.csd_b0, sec.csd_a1, sec.csd_a2):
            if csd is None:
                count += 1
    return count


def multiplier_report(bank: FilterBank) -> dict:
    counts = [channel_multiplier_count(c) for c in bank.channels]
    return {
        "basic_per_filter": BASIC_MULTIPLIERS_PER_FILTER,
        "adders_per_filter": ADDERS_PER_FILTER,
        "shift_substituted_per_filter": max(counts),
        "per_channel": counts,
    }


def precision_search(
    design: FloatBankDesign,
    candidate_b_bits: list[int],
    candidate_a_bits: list[int],
    metric,
    tolerance: float = 0.0,
    baseline_bits: tuple[int, int] = (16, 16),
) -> tuple[int, int, list[dict]]:
    """Full-grid search for the cheapest precision within tolerance of baseline.

    metric maps a quantized FilterBank to a scalar score (higher is better).
    Returns the admissible configuration with the smallest b_bits + a_bits
    (ties: smaller b, then smaller a) and the whole grid as a report.
    """
    if not candidate_b_bits or not candidate_a_bits:
        raise ValueError("empty precision grid")
    baseline_bank = quantize_bank(design, *baseline_bits)
    baseline_score = metric(baseline_bank)
    report = []
    for b in sorted(set(candidate_b_bits)):
        for a in sorted(set(candidate_a_bits)):
            try:
                bank = quantize_bank(design, b, a)
                score = metric(bank)
                ok = score >= baseline_score - tolerance
                report.append({"b_bits": b, "a_bits": a, "score": score, "admissible": ok})
            except QuantizationError as e:
                report.append(
                    {"b_bits": b, "a_bits": a, "score": float("-inf"), "admissible": False,
                     "error": str(e)}
                )
    admissible = [r for r in report if r["admissible"]]
    if not admissible:
        raise ValueError("no admissible configuration in the grid")
    chosen = min(admissible, key=lambda r: (r["b_bits"] + r["a_bits"], r["b_bits"], r["a_bits"]))
    return chosen["b_bits"], chosen["a_bits"], report
