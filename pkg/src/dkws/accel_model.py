"""Cycle and energy model of the 8-MAC, 125 kHz, packed-weight-read datapath.

The model is affine in op counts.  `calibrate` fits it through two measured
operating points (a dense one and a sparse one): the energy line is solved
exactly for the per-MAC bundle and the fixed per-frame term, and the cycle
line for an effective cycles-per-MAC coefficient plus an integer per-frame
overhead anchored exactly at the dense point.  The structural datapath count
ceil(MACs/8) stays available separately; the fitted coefficient absorbs
sequencing overheads the pure MAC count cannot see (the measured sparse
latency sits well above MACs/8 cycles).

Energy fields are nanojoules; a "decision" is one frame's computation, so a
calibrated model reproduces measured energy-per-decision numbers when queried
with per-frame MAC counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .delta_gru import N_HID_DEFAULT, N_IN_DEFAULT, N_OUT_DEFAULT, UtteranceStats

_CEIL_EPS = 1e-9  # float-noise guard so exact integers do not round up


def _eps_ceil(x: float) -> int:
    return math.ceil(x - _CEIL_EPS)


@dataclass(frozen=True)
class CostModel:
    macs_parallel: int = 8
    clock_hz: int = 125_000
    # effective datapath throughput; 1/macs_parallel until calibration replaces it
    cycles_per_mac: float = 0.125
    cycles_frame_fixed: int = 0
    e_mac_nj: float = 0.0
    e_read_nj: float = 0.0
    e_frame_fixed_nj: float = 0.0
    e_fex_frame_nj: float = 0.0
    fex_ref_channels: int = 10

    def __post_init__(self):
        if self.macs_parallel < 1:
            raise ValueError("macs_parallel must be >= 1")
        for name in (
            "clock_hz", "cycles_per_mac", "cycles_frame_fixed",
            "e_mac_nj", "e_read_nj", "e_frame_fixed_nj", "e_fex_frame_nj",
        ):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


# energy split ratios for the default template: the marginal per-MAC bundle is
# apportioned compute:weight-read like the measured 57%:18% power shares, and
# the fixed per-frame term is almost entirely the feature extractor's
# (~1.22 uW x 16 ms = ~19.5 nJ/frame) plus a small sequencing remainder
DEFAULT_TEMPLATE = CostModel(
    e_mac_nj=0.0057,
    e_read_nj=0.0036,
    e_frame_fixed_nj=1.0,
    e_fex_frame_nj=19.5,
)

# measured operating points of the 65 nm implementation at a 125 kHz clock:
# (latency_ms, energy_nj) per decision, dense and at 87% temporal sparsity
DENSE_POINT = (16.4, 121.2)
SPARSE_POINT = (6.9, 36.11, 0.87)


def dense_macs(n_in: int = N_IN_DEFAULT, n_hid: int = N_HID_DEFAULT,
               n_out: int = N_OUT_DEFAULT) -> int:
    return 3 * n_hid * (n_in + n_hid) + n_out * n_hid


def macs_at_sparsity(sparsity: float, n_in: int = N_IN_DEFAULT,
                     n_hid: int = N_HID_DEFAULT, n_out: int = N_OUT_DEFAULT) -> float:
    """Per-frame MACs when a fraction `sparsity` of delta elements stays silent."""
    if not (0.0 <= sparsity <= 1.0):
        raise ValueError("sparsity must be in [0, 1]")
    return 3 * n_hid * (n_in + n_hid) * (1.0 - sparsity) + n_out * n_hid


def datapath_cycles(macs: int, macs_parallel: int = 8) -> int:
    """Pure op-count proxy: MAC issue slots on the parallel datapath."""
    return -(-macs // macs_parallel)


def frame_cycles(frame_stats, cm: CostModel) -> int:
    """Modeled cycles for one frame's stats (monotone in the MAC count)."""
    macs = frame_stats.macs if hasattr(frame_stats, "macs") else int(frame_stats)
    if macs == 0 and cm.cycles_frame_fixed == 0:
        return 0
    return _eps_ceil(macs * cm.cycles_per_mac) + cm.cycles_frame_fixed


def frame_latency_ms(macs: float, cm: CostModel) -> float:
    """Continuous-query latency of one frame (fractional MACs allowed)."""
    cycles = macs * cm.cycles_per_mac + cm.cycles_frame_fixed
    return cycles / cm.clock_hz * 1000.0


def weight_reads(frame_stats) -> int:
    """16-bit words fetched: two packed int8 weights per read."""
    touched = (
        frame_stats.weights_touched if hasattr(frame_stats, "weights_touched")
        else int(frame_stats)
    )
    return -(-touched // 2)


def frame_energy_nj(macs: float, cm: CostModel, n_channels: int | None = None) -> float:
    """Continuous-query energy of one frame; reads modeled as macs/2."""
    fex = cm.e_fex_frame_nj
    if n_channels is not None:
        fex *= n_channels / cm.fex_ref_channels
    return macs * cm.e_mac_nj + (macs / 2.0) * cm.e_read_nj + cm.e_frame_fixed_nj + fex


@dataclass(frozen=True)
class CostReport:
    cycles: int
    latency_ms: float
    energy_nj: float
    energy_mac_nj: float
    energy_read_nj: float
    energy_fixed_nj: float
    energy_fex_nj: float

    def __post_init__(self):
        total = self.energy_mac_nj + self.energy_read_nj + self.energy_fixed_nj + self.energy_fex_nj
        if not math.isclose(total, self.energy_nj, rel_tol=1e-9, abs_tol=1e-9):
            raise ValueError("breakdown does not sum to total")


def decision_energy(stats: UtteranceStats, cm: CostModel,
                    n_channels: int | None = None) -> float:
    """Total modeled energy of an utterance's frames."""
    return cost_report(stats, cm, n_channels).energy_nj


def cost_report(stats: UtteranceStats, cm: CostModel,
                n_channels: int | None = None) -> CostReport:
    fex_per_frame = cm.e_fex_frame_nj
    if n_channels is not None:
        fex_per_frame *= n_channels / cm.fex_ref_channels
    cycles = sum(frame_cycles(f, cm) for f in stats.frames)
    e_mac = sum(f.macs for f in stats.frames) * cm.e_mac_nj
    e_read = sum(weight_reads(f) for f in stats.frames) * cm.e_read_nj
    e_fixed = stats.n_frames * cm.e_frame_fixed_nj
    e_fex = stats.n_frames * fex_per_frame
    return CostReport(
        cycles=cycles,
        latency_ms=cycles / cm.clock_hz * 1000.0,
        energy_nj=e_mac + e_read + e_fixed + e_fex,
        energy_mac_nj=e_mac,
        energy_read_nj=e_read,
        energy_fixed_nj=e_fixed,
        energy_fex_nj=e_fex,
    )


class CalibrationError(ValueError):
    pass


def calibrate(
    dense_point: tuple[float, float] = DENSE_POINT,
    sparse_point: tuple[float, float, float] = SPARSE_POINT,
    cm_template: CostModel = DEFAULT_TEMPLATE,
    n_in: int = N_IN_DEFAULT,
    n_hid: int = N_HID_DEFAULT,
    n_out: int = N_OUT_DEFAULT,
) -> tuple[CostModel, dict]:
    """Fit the model through two measured (latency, energy) operating points.

    Returns (model, report); the report carries the fitted lines, the MAC
    counts they were anchored at, and the residuals of the integer-overhead
    rounding and of the structural ceil(MACs/8) model at the sparse point.
    """
    lat_d, e_d = dense_point
    lat_s, e_s, sparsity = sparse_point
    m_d = float(dense_macs(n_in, n_hid, n_out))
    m_s = macs_at_sparsity(sparsity, n_in, n_hid, n_out)
    if math.isclose(m_d, m_s) or (math.isclose(lat_d, lat_s) and math.isclose(e_d, e_s)):
        raise CalibrationError("operating points coincide; system is singular")

    # energy line: E = gamma * MACs + fixed
    gamma = (e_d - e_s) / (m_d - m_s)
    e_fixed_total = e_d - gamma * m_d
    if gamma < 0 or e_fixed_total < 0:
        raise CalibrationError(
            f"points imply negative energy parameters (gamma={gamma:.4g}, "
            f"fixed={e_fixed_total:.4g})"
        )
    bundle_t = cm_template.e_mac_nj + cm_template.e_read_nj / 2.0
    if bundle_t <= 0 or (cm_template.e_frame_fixed_nj + cm_template.e_fex_frame_nj) <= 0:
        raise CalibrationError("template energy ratios must be positive")
    k_marginal = gamma / bundle_t
    k_fixed = e_fixed_total / (cm_template.e_frame_fixed_nj + cm_template.e_fex_frame_nj)

    # cycle line: anchored exactly at the dense point, integer frame overhead
    cyc_d = lat_d / 1000.0 * cm_template.clock_hz
    cyc_s = lat_s / 1000.0 * cm_template.clock_hz
    slope = (cyc_d - cyc_s) / (m_d - m_s)
    if slope <= 0:
        raise CalibrationError("latency points imply non-positive cycles per MAC")
    fixed_cycles = int(round(cyc_d - slope * m_d))
    if fixed_cycles < 0:
        raise CalibrationError("latency points imply negative frame overhead")
    cycles_per_mac = (cyc_d - fixed_cycles) / m_d

    cm = replace(
        cm_template,
        cycles_per_mac=cycles_per_mac,
        cycles_frame_fixed=fixed_cycles,
        e_mac_nj=k_marginal * cm_template.e_mac_nj,
        e_read_nj=k_marginal * cm_template.e_read_nj,
        e_frame_fixed_nj=k_fixed * cm_template.e_frame_fixed_nj,
        e_fex_frame_nj=k_fixed * cm_template.e_fex_frame_nj,
    )
    report = {
        "macs_dense": m_d,
        "macs_sparse": m_s,
        "energy_per_mac_bundle_nj": gamma,
        "energy_fixed_nj": e_fixed_total,
        "latency_residual_dense_ms": frame_latency_ms(m_d, cm) - lat_d,
        "latency_residual_sparse_ms": frame_latency_ms(m_s, cm) - lat_s,
        "energy_residual_dense_nj": frame_energy_nj(m_d, cm) - e_d,
        "energy_residual_sparse_nj": frame_energy_nj(m_s, cm) - e_s,
        "structural_cycles_sparse": datapath_cycles(round(m_s), cm.macs_parallel)
        + cm.cycles_frame_fixed,
        "modeled_cycles_sparse": m_s * cm.cycles_per_mac + cm.cycles_frame_fixed,
    }
    return cm, report


# ---------------------------------------------------------------------------
# cost-model file (key-value text)

_FILE_FIELDS = (
    "macs_parallel", "clock_hz", "cycles_per_mac", "cycles_frame_fixed",
    "e_mac_nj", "e_read_nj", "e_frame_fixed_nj", "e_fex_frame_nj", "fex_ref_channels",
)


def write_cost_model(cm: CostModel, path) -> None:
    from . import kvfile

    items: dict[str, object] = {"format_version": 1}
    for name in _FILE_FIELDS:
        v = getattr(cm, name)
        items[name] = repr(v) if isinstance(v, float) else v
    kvfile.dump(items, path, header="dkws cost model")


def read_cost_model(path) -> CostModel:
    from . import kvfile

    items = kvfile.load(path)
    if int(items.get("format_version", "0")) != 1:
        raise ValueError(f"unsupported cost-model format_version in {path}")
    kwargs = {}
    for name in _FILE_FIELDS:
        if name not in items:
            raise ValueError(f"cost-model file missing {name}")
        if name in ("macs_parallel", "clock_hz", "cycles_frame_fixed", "fex_ref_channels"):
            kwargs[name] = int(items[name])
        else:
            kwargs[name] = float(items[name])
    return CostModel(**kwargs)
