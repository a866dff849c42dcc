"""Serial time-domain feature extractor.

Every 12-bit input sample runs through the enabled channels' biquad cascades
(transposed direct-form II, 32-bit accumulators), a full-wave rectifier with a
one-pole shift-only smoother, and, at each 16 ms frame boundary, channel-wise
log2 compression with offset/scale normalization into 12-bit features.

All arithmetic is integer; identical inputs and bank files give bit-identical
frames on any platform.  Feature values are unsigned 12-bit raws carrying
log2-domain band energy with 6 fraction bits (Q0.6-per-step grid, see
``LOG_FRAC_BITS``).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

from .filter_design import ChannelSpec, FilterBank, QuantizedSOS
from .fixed_point import (
    FixedValue,
    QFormat,
    rne_shift,
    sat,
    sat32,
    trunc_shift,
)

X_FMT = QFormat(16, 11)       # 12-bit PCM raws widened with 4 bits of headroom
Y_FMT = QFormat(16, 11)       # section outputs
LOG_FRAC_BITS = 6             # log2-domain fraction bits (Mitchell mantissa width)
FEAT_BITS = 12
FEAT_MAX = (1 << FEAT_BITS) - 1
FRAME_SHIFT_S = 0.016         # window length == frame shift (non-overlapping)
DEFAULT_ALPHA_SHIFT = 5       # ~4 ms envelope time constant at 8 kHz


@dataclass
class FexConfig:
    alpha_shift: int = DEFAULT_ALPHA_SHIFT

    def __post_init__(self):
        if self.alpha_shift < 1:
            raise ValueError("alpha_shift must be >= 1")


@dataclass
class BiquadSectionState:
    """Transposed DF-II delay registers, full accumulator width."""

    s1: int = 0
    s2: int = 0


@dataclass
class OpCounts:
    """Datapath operation stations executed, by realization class.

    A coefficient realized through its CSD shift list counts as one shift
    station regardless of digit count, so per-channel totals are constant and
    the counter is exactly linear in the enabled channel count.
    """

    mul: int = 0
    shift: int = 0
    add: int = 0

    @property
    def total(self) -> int:
        return self.mul + self.shift + self.add

    def __add__(self, other: "OpCounts") -> "OpCounts":
        return OpCounts(self.mul + other.mul, self.shift + other.shift, self.add + other.add)


@dataclass(frozen=True)
class FeatureFrame:
    """One 16 ms frame of per-enabled-channel 12-bit log-band-energy values."""

    t: int
    values: tuple[int, ...]


@dataclass
class FexRun:
    frames: list[FeatureFrame]
    ops: OpCounts
    center_freqs_hz: tuple[float, ...] = ()


def frame_length(sample_rate_hz: int) -> int:
    return round(sample_rate_hz * FRAME_SHIFT_S)


# ---------------------------------------------------------------------------
# datapath pieces (FixedValue-level contract API)

def _acc_frac(sec: QuantizedSOS) -> int:
    return X_FMT.frac_bits + max(sec.frac_b, sec.frac_a)


def biquad_step(x: FixedValue, coeffs: QuantizedSOS, state: BiquadSectionState) -> FixedValue:
    """One transposed DF-II update; saturates instead of wrapping everywhere."""
    if x.fmt != X_FMT and x.fmt != Y_FMT:
        raise ValueError(f"unexpected input format {x.fmt}")
    accf = _acc_frac(coeffs)
    b_shift = accf - X_FMT.frac_bits - coeffs.frac_b
    a_shift = accf - X_FMT.frac_bits - coeffs.frac_a
    prod_b0 = (x.raw * coeffs.b0.raw) << b_shift
    y_raw = sat(rne_shift(sat32(prod_b0 + state.s1), accf - Y_FMT.frac_bits), Y_FMT)
    prod_a1 = (y_raw * coeffs.a1.raw) << a_shift
    prod_a2 = (y_raw * coeffs.a2.raw) << a_shift
    state.s1 = sat32(-prod_a1 + state.s2)
    state.s2 = sat32(-prod_b0 - prod_a2)  # b2 x == -(b0 x), product reused
    return FixedValue(y_raw, Y_FMT)


def envelope_detect(y: FixedValue, env_state: FixedValue, alpha_shift: int) -> FixedValue:
    """Full-wave rectify and track: env += (|y| - env) >> alpha_shift."""
    if alpha_shift < 1:
        raise ValueError("alpha_shift must be >= 1")
    rect = min(abs(y.raw), Y_FMT.max_raw)
    env = env_state.raw + trunc_shift(rect - env_state.raw, alpha_shift)
    return FixedValue(sat(env, Y_FMT), Y_FMT)


def log2_approx_raw(r: int) -> int:
    """Leading-one position plus the next 6 mantissa bits (Q.6 raw), r >= 1."""
    p = r.bit_length() - 1
    frac = ((r - (1 << p)) << LOG_FRAC_BITS) >> p
    return (p << LOG_FRAC_BITS) | frac


def post_process(env: FixedValue, offset: FixedValue, scale: FixedValue) -> int:
    """Log-compress and normalize an envelope into a 12-bit feature raw."""
    if env.raw < 0:
        raise ValueError("envelope must be non-negative")
    v = log2_approx_raw(max(env.raw, 1))
    t = v - offset.raw
    out = rne_shift(t * scale.raw, scale.fmt.frac_bits)
    return max(0, min(FEAT_MAX, out))


# ---------------------------------------------------------------------------
# channel kernels (raw-int hot path; bit-identical to the functions above)

# per channel-sample station counts: 6 coefficient stations, 6 cascade adds,
# rectifier subtract + smoother add, one smoother shift
_ADDS_PER_CHANNEL_SAMPLE = 8
_ENV_SHIFTS_PER_CHANNEL_SAMPLE = 1
# per channel-frame post-processing stations
_FRAME_OPS = OpCounts(mul=1, shift=2, add=2)


class _ChannelKernel:
    def __init__(self, ch: ChannelSpec):
        self.offset_raw = ch.offset.raw
        self.scale_raw = ch.scale.raw
        self.scale_frac = ch.scale.fmt.frac_bits
        self.sections = []
        self.mul_stations = 0
        self.shift_stations = 0
        for sec in ch.sos:
            accf = _acc_frac(sec)
            b_shift = accf - X_FMT.frac_bits - sec.frac_b
            a_shift = accf - X_FMT.frac_bits - sec.frac_a
            self.sections.append(
                (sec.b0.raw, sec.a1.raw, sec.a2.raw, b_shift, a_shift, accf - Y_FMT.frac_bits)
            )
            for csd in (sec.csd_b0, sec.csd_a1, sec.csd_a2):
                if csd is None:
                    self.mul_stations += 1
                else:
                    self.shift_stations += 1
        self.state = [[0, 0], [0, 0]]
        self.env = 0

    def step(self, x_raw: int, alpha_shift: int) -> None:
        y = x_raw
        ymin, ymax = Y_FMT.min_raw, Y_FMT.max_raw
        for (b0, a1, a2, b_sh, a_sh, out_sh), st in zip(self.sections, self.state):
            prod_b0 = (y * b0) << b_sh
            acc = sat32(prod_b0 + st[0])
            y_next = rne_shift(acc, out_sh)
            y_next = ymin if y_next < ymin else ymax if y_next > ymax else y_next
            st[0] = sat32(-((y_next * a1) << a_sh) + st[1])
            st[1] = sat32(-prod_b0 - ((y_next * a2) << a_sh))
            y = y_next
        rect = -y if y < 0 else y
        if rect > ymax:
            rect = ymax
        self.env += (rect - self.env) >> alpha_shift

    def frame_value(self) -> int:
        e = self.env if self.env >= 1 else 1
        p = e.bit_length() - 1
        v = (p << LOG_FRAC_BITS) | (((e - (1 << p)) << LOG_FRAC_BITS) >> p)
        out = rne_shift((v - self.offset_raw) * self.scale_raw, self.scale_frac)
        return 0 if out < 0 else FEAT_MAX if out > FEAT_MAX else out


def extract_features(samples, bank: FilterBank, config: FexConfig | None = None) -> FexRun:
    """Run the serial extractor over a 12-bit sample stream.

    Returns one frame per full 128-sample hop (at 8 kHz); a trailing partial
    frame is dropped.  The op counter scales exactly linearly with the enabled
    channel count.
    """
    config = config or FexConfig()
    enabled = [bank.channels[i] for i in bank.enabled_indices]
    if not enabled:
        raise ValueError("no enabled channels")
    kernels = [_ChannelKernel(ch) for ch in enabled]
    flen = frame_length(bank.sample_rate_hz)
    frames: list[FeatureFrame] = []
    ops = OpCounts()
    alpha = config.alpha_shift
    n_in_frame = 0
    for x in samples:
        x = int(x)
        if not (-2048 <= x <= 2047):
            raise ValueError(f"sample {x} outside 12-bit range")
        for k in kernels:
            k.step(x, alpha)
        n_in_frame += 1
        if n_in_frame == flen:
            frames.append(FeatureFrame(len(frames), tuple(k.frame_value() for k in kernels)))
            n_in_frame = 0
    n_samples = len(frames) * flen + n_in_frame
    for k in kernels:
        ops.mul += k.mul_stations * n_samples
        ops.shift += (k.shift_stations + _ENV_SHIFTS_PER_CHANNEL_SAMPLE) * n_samples
        ops.add += _ADDS_PER_CHANNEL_SAMPLE * n_samples
    n_ch_frames = len(kernels) * len(frames)
    ops.mul += _FRAME_OPS.mul * n_ch_frames
    ops.shift += _FRAME_OPS.shift * n_ch_frames
    ops.add += _FRAME_OPS.add * n_ch_frames
    centers = tuple(ch.center_freq_hz for ch in enabled)
    return FexRun(frames, ops, centers)


def ops_per_sample(bank: FilterBank) -> OpCounts:
    """Static per-input-sample op cost of the enabled channels."""
    ops = OpCounts()
    for i in bank.enabled_indices:
        k = _ChannelKernel(bank.channels[i])
        ops.mul += k.mul_stations
        ops.shift += k.shift_stations + _ENV_SHIFTS_PER_CHANNEL_SAMPLE
        ops.add += _ADDS_PER_CHANNEL_SAMPLE
    return ops


def select_channels(bank: FilterBank, mask) -> FilterBank:
    """New bank with `mask` (iterable of channel indices) enabled.

    Disabled channels cost nothing: no filter ops and no feature column.
    """
    idx = sorted(set(int(i) for i in mask))
    if not idx:
        raise ValueError("empty channel mask")
    if idx[0] < 0 or idx[-1] >= bank.n_channels:
        raise ValueError(f"mask indices out of range 0..{bank.n_channels - 1}")
    channels = tuple(
        ChannelSpec(c.center_freq_hz, c.sos, c.offset, c.scale, enabled=(i in idx))
        for i, c in enumerate(bank.channels)
    )
    return FilterBank(channels, bank.sample_rate_hz)


# ---------------------------------------------------------------------------
# feature CSV (the FEx <-> classifier contract)

def write_features(run: FexRun, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow([f"{cf:.2f}" for cf in run.center_freqs_hz])
        for fr in run.frames:
            w.writerow(fr.values)


def read_features(path) -> tuple[tuple[float, ...], list[tuple[int, ...]]]:
    with open(path, "r", newline="", encoding="utf-8") as f:
        r = csv.reader(f)
        try:
            header = next(r)
        except StopIteration:
            raise ValueError(f"empty feature file {path}")
        centers = tuple(float(h) for h in header)
        rows = []
        for row in r:
            if len(row) != len(centers):
                raise ValueError(f"row width {len(row)} != header width {len(centers)}")
            rows.append(tuple(int(v) for v in row))
    return centers, rows
