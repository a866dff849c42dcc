"""Delta-gated GRU classifier with a bit-exact dense reference.

The network is a GRU layer plus a dense output layer.  Instead of recomputing
full matrix-vector products each frame, the engine keeps per-gate integer
pre-activation accumulators and adds only weight columns of elements whose
input or hidden-state change since the last transmitted value exceeds the
threshold.  Because the accumulators are plain integers, `W x = W x_hat +
W (x - x_hat)` is an identity and a zero threshold reproduces the dense
network bit for bit; that equivalence is the cornerstone test of the module.

Numeric conventions:
  * activations live on a Q{16,14} grid (12-bit features enter left-aligned,
    raw << 3, i.e. values in [0, 2));
  * weights are int8 with a per-matrix power-of-two scale 2**scale_exp,
    scale_exp in [-7, 0] so every product lands exactly on the Q21
    accumulator grid;
  * accumulators are 32-bit saturating integers with 21 fraction bits;
  * sigmoid/tanh are 256-entry symmetric lookup tables over [-8, 8) shared by
    the delta engine and both dense paths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fixed_point import INT32_MAX, INT32_MIN

N_IN_DEFAULT = 10
N_HID_DEFAULT = 64
N_OUT_DEFAULT = 12

ACT_FRAC = 14
ACT_ONE = 1 << ACT_FRAC
WEIGHT_FRAC = 7          # scale_exp = -7 puts int8 weights in [-1, 1)
ACC_FRAC = ACT_FRAC + WEIGHT_FRAC
FEAT_TO_ACT_SHIFT = 3    # 12-bit feature raw -> activation raw (values in [0, 2))

LUT_SIZE = 256
LUT_RANGE = 8.0          # pre-activations map [-8, 8) onto the 256 entries
_LUT_INDEX_SHIFT = ACC_FRAC - 4  # raw * 16 / 2**ACC_FRAC

MATRIX_NAMES = ("W_xr", "W_xu", "W_xc", "W_hr", "W_hu", "W_hc", "W_fc")
BIAS_NAMES = ("b_r", "b_u", "b_c", "b_fc")


def _build_tables() -> tuple[np.ndarray, np.ndarray]:
    sig = np.zeros(LUT_SIZE, dtype=np.int64)
    tnh = np.zeros(LUT_SIZE, dtype=np.int64)

    def rne(x: float) -> int:
        return int(round(x))  # Python round is half-even

    for i in range(128, 256):
        v = (i - 128) / 16.0
        sig[i] = rne(ACT_ONE / (1.0 + math.exp(-v)))
        tnh[i] = rne(ACT_ONE * math.tanh(v))
    for k in range(1, 128):
        sig[128 - k] = ACT_ONE - sig[128 + k]
        tnh[128 - k] = -tnh[128 + k]
    # entry 0 mirrors the (clamped-away) +8.0 point so negation stays exact
    sig[0] = ACT_ONE - rne(ACT_ONE / (1.0 + math.exp(-8.0)))
    tnh[0] = -rne(ACT_ONE * math.tanh(8.0))
    return sig, tnh


SIGMOID_TABLE, TANH_TABLE = _build_tables()


def rne_shift_arr(x: np.ndarray, k: int) -> np.ndarray:
    """Vectorized round-to-nearest-even right shift on int64 arrays."""
    if k <= 0:
        return x
    half = np.int64(1 << (k - 1))
    mask = np.int64((1 << k) - 1)
    q = (x + half) >> k
    ties = (x & mask) == half
    return q - (ties & (q & 1).astype(bool))


def sat32_arr(x: np.ndarray) -> np.ndarray:
    return np.clip(x, INT32_MIN, INT32_MAX)


def lut_lookup(table: np.ndarray, acc: np.ndarray) -> np.ndarray:
    # symmetric index saturation (+-127) keeps f(-v) == mirror(f(v)) exact for
    # every accumulator value; entry 0 is the unreachable -8.0 mirror point
    idx = rne_shift_arr(acc, _LUT_INDEX_SHIFT)
    idx = np.clip(idx, -127, 127) + 128
    return table[idx]


def quantize_theta(theta: float) -> int:
    """Threshold quantized onto the activation grid; inf disables firing."""
    if theta < 0:
        raise ValueError("theta must be >= 0")
    if math.isinf(theta):
        return 1 << 62
    return int(round(theta * ACT_ONE))


# ---------------------------------------------------------------------------
# weights

@dataclass
class NetworkWeights:
    """int8 weight matrices, int32 accumulator-grid biases, per-matrix scales."""

    W_xr: np.ndarray
    W_xu: np.ndarray
    W_xc: np.ndarray
    W_hr: np.ndarray
    W_hu: np.ndarray
    W_hc: np.ndarray
    W_fc: np.ndarray
    b_r: np.ndarray
    b_u: np.ndarray
    b_c: np.ndarray
    b_fc: np.ndarray
    scale_exp: dict = field(default_factory=lambda: {name: -7 for name in MATRIX_NAMES})

    def __post_init__(self):
        n_hid, n_in = self.W_xr.shape
        n_out = self.W_fc.shape[0]
        for name in ("W_xr", "W_xu", "W_xc"):
            if getattr(self, name).shape != (n_hid, n_in):
                raise ValueError(f"{name} must be {n_hid}x{n_in}")
        for name in ("W_hr", "W_hu", "W_hc"):
            if getattr(self, name).shape != (n_hid, n_hid):
                raise ValueError(f"{name} must be {n_hid}x{n_hid}")
        if self.W_fc.shape != (n_out, n_hid):
            raise ValueError("W_fc shape mismatch")
        for name in ("b_r", "b_u", "b_c"):
            if getattr(self, name).shape != (n_hid,):
                raise ValueError(f"{name} must have length {n_hid}")
        if self.b_fc.shape != (n_out,):
            raise ValueError("b_fc length mismatch")
        for name in MATRIX_NAMES:
            m = getattr(self, name)
            if m.dtype != np.int8:
                raise ValueError(f"{name} must be int8")
            e = self.scale_exp.get(name)
            if e is None or not (-WEIGHT_FRAC <= e <= 0):
                raise ValueError(f"scale_exp[{name}] must be in [-7, 0], got {e}")
        for name in BIAS_NAMES:
            b = getattr(self, name)
            if b.dtype != np.int32:
                raise ValueError(f"{name} must be int32")
        # int64 working copies so products never wrap
        self._m64 = {name: getattr(self, name).astype(np.int64) for name in MATRIX_NAMES}
        self._shift = {name: self.scale_exp[name] + WEIGHT_FRAC for name in MATRIX_NAMES}

    @property
    def n_in(self) -> int:
        return self.W_xr.shape[1]

    @property
    def n_hid(self) -> int:
        return self.W_xr.shape[0]

    @property
    def n_out(self) -> int:
        return self.W_fc.shape[0]

    def matvec(self, name: str, v: np.ndarray) -> np.ndarray:
        """Exact integer W @ v on the accumulator grid."""
        return (self._m64[name] @ v) << self._shift[name]

    def matvec_cols(self, name: str, idx: np.ndarray, dv: np.ndarray) -> np.ndarray:
        """Only the columns in idx are read and multiplied."""
        if len(idx) == 0:
            return np.zeros(self._m64[name].shape[0], dtype=np.int64)
        return (self._m64[name][:, idx] @ dv[idx]) << self._shift[name]

    def dense_macs_per_frame(self) -> int:
        return 3 * self.n_hid * (self.n_in + self.n_hid) + self.n_out * self.n_hid


def make_random_weights(
    seed: int,
    n_in: int = N_IN_DEFAULT,
    n_hid: int = N_HID_DEFAULT,
    n_out: int = N_OUT_DEFAULT,
    weight_span: int = 64,
    bias_span: int = 1 << 21,
) -> NetworkWeights:
    """Seeded random network for tests and demos (moderate recurrent gain)."""
    rng = np.random.default_rng(seed)

    def mat(r, c):
        return rng.integers(-weight_span, weight_span + 1, size=(r, c)).astype(np.int8)

    def bias(n):
        return rng.integers(-bias_span, bias_span + 1, size=n).astype(np.int32)

    return NetworkWeights(
        W_xr=mat(n_hid, n_in), W_xu=mat(n_hid, n_in), W_xc=mat(n_hid, n_in),
        W_hr=mat(n_hid, n_hid), W_hu=mat(n_hid, n_hid), W_hc=mat(n_hid, n_hid),
        W_fc=mat(n_out, n_hid),
        b_r=bias(n_hid), b_u=bias(n_hid), b_c=bias(n_hid), b_fc=bias(n_out),
    )


# ---------------------------------------------------------------------------
# engine

@dataclass
class DeltaState:
    """Per-utterance engine state (all raw integers)."""

    x_hat: np.ndarray
    h_hat: np.ndarray
    h_prev: np.ndarray
    M_r: np.ndarray
    M_u: np.ndarray
    M_xc: np.ndarray
    M_hc: np.ndarray

    @classmethod
    def initial(cls, w: NetworkWeights) -> "DeltaState":
        return cls(
            x_hat=np.zeros(w.n_in, dtype=np.int64),
            h_hat=np.zeros(w.n_hid, dtype=np.int64),
            h_prev=np.zeros(w.n_hid, dtype=np.int64),
            M_r=w.b_r.astype(np.int64).copy(),
            M_u=w.b_u.astype(np.int64).copy(),
            M_xc=w.b_c.astype(np.int64).copy(),
            M_hc=np.zeros(w.n_hid, dtype=np.int64),
        )


@dataclass(frozen=True)
class FrameStats:
    fired_x: int
    fired_h: int
    macs: int
    macs_fc: int

    @property
    def weights_touched(self) -> int:
        return self.macs

    @property
    def weight_reads(self) -> int:
        # weight memory packs two int8 weights per 16-bit word
        return -(-self.macs // 2)


@dataclass
class UtteranceStats:
    n_in: int
    n_hid: int
    frames: list[FrameStats] = field(default_factory=list)

    @property
    def n_frames(self) -> int:
        return len(self.frames)

    @property
    def total_fired(self) -> int:
        return sum(f.fired_x + f.fired_h for f in self.frames)

    @property
    def total_macs(self) -> int:
        return sum(f.macs for f in self.frames)

    @property
    def total_weight_reads(self) -> int:
        return sum(f.weight_reads for f in self.frames)

    @property
    def temporal_sparsity(self) -> float:
        """1 - fired/(total delta elements); input and hidden counted jointly."""
        denom = (self.n_in + self.n_hid) * self.n_frames
        return 1.0 - self.total_fired / denom if denom else 0.0

    @property
    def sparsity_x(self) -> float:
        d = self.n_in * self.n_frames
        return 1.0 - sum(f.fired_x for f in self.frames) / d if d else 0.0

    @property
    def sparsity_h(self) -> float:
        d = self.n_hid * self.n_frames
        return 1.0 - sum(f.fired_h for f in self.frames) / d if d else 0.0


def delta_encode(v: np.ndarray, v_hat: np.ndarray, theta_raw: int):
    """Fire elements whose change exceeds theta strictly; hold the rest.

    Returns (delta, new v_hat, fired bool mask); non-fired deltas are zero and
    their v_hat entries are unchanged, so |v - v_hat| <= theta always holds
    after the update.
    """
    diff = v - v_hat
    fired = np.abs(diff) > theta_raw
    delta = np.where(fired, diff, 0)
    v_hat_new = np.where(fired, v, v_hat)
    return delta, v_hat_new, fired


def _gates_from_accumulators(M_r, M_u, M_xc, M_hc, h_prev):
    r = lut_lookup(SIGMOID_TABLE, sat32_arr(M_r))
    u = lut_lookup(SIGMOID_TABLE, sat32_arr(M_u))
    c_pre = sat32_arr(sat32_arr(M_xc) + rne_shift_arr(r * sat32_arr(M_hc), ACT_FRAC))
    c = lut_lookup(TANH_TABLE, c_pre)
    # h' = h + u*(c - h): lands between h and c, so it never overflows Q{16,14}
    return h_prev + rne_shift_arr(u * (c - h_prev), ACT_FRAC)


def gru_step_dense(x: np.ndarray, h: np.ndarray, w: NetworkWeights) -> np.ndarray:
    """Dense integer step computed from scratch (no persistent accumulators)."""
    x = np.asarray(x, dtype=np.int64)
    h = np.asarray(h, dtype=np.int64)
    M_r = w.matvec("W_xr", x) + w.matvec("W_hr", h) + w.b_r
    M_u = w.matvec("W_xu", x) + w.matvec("W_hu", h) + w.b_u
    M_xc = w.matvec("W_xc", x) + w.b_c
    M_hc = w.matvec("W_hc", h)
    return _gates_from_accumulators(M_r, M_u, M_xc, M_hc, h)


def delta_gru_step(
    state: DeltaState, x: np.ndarray, theta_raw: int, w: NetworkWeights
) -> tuple[np.ndarray, FrameStats]:
    """One frame of the delta engine; mutates state, returns (h', stats)."""
    x = np.asarray(x, dtype=np.int64)
    dx, state.x_hat, fired_x = delta_encode(x, state.x_hat, theta_raw)
    dh, state.h_hat, fired_h = delta_encode(state.h_prev, state.h_hat, theta_raw)
    ix = np.nonzero(fired_x)[0]
    ih = np.nonzero(fired_h)[0]
    state.M_r = sat32_arr(state.M_r + w.matvec_cols("W_xr", ix, dx) + w.matvec_cols("W_hr", ih, dh))
    state.M_u = sat32_arr(state.M_u + w.matvec_cols("W_xu", ix, dx) + w.matvec_cols("W_hu", ih, dh))
    state.M_xc = sat32_arr(state.M_xc + w.matvec_cols("W_xc", ix, dx))
    state.M_hc = sat32_arr(state.M_hc + w.matvec_cols("W_hc", ih, dh))
    h_new = _gates_from_accumulators(state.M_r, state.M_u, state.M_xc, state.M_hc, state.h_prev)
    n_fired = int(len(ix) + len(ih))
    stats = FrameStats(
        fired_x=int(len(ix)),
        fired_h=int(len(ih)),
        macs=3 * w.n_hid * n_fired + w.n_out * w.n_hid,
        macs_fc=w.n_out * w.n_hid,
    )
    state.h_prev = h_new
    return h_new, stats


def fc_forward(h: np.ndarray, w: NetworkWeights) -> np.ndarray:
    """Output layer; always dense, int32-saturated accumulators."""
    h = np.asarray(h, dtype=np.int64)
    return sat32_arr(w.matvec("W_fc", h) + w.b_fc)


def features_to_activations(feature_rows) -> np.ndarray:
    """12-bit feature raws left-aligned onto the Q{16,14} activation grid."""
    arr = np.asarray(feature_rows, dtype=np.int64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.size and (arr.min() < 0 or arr.max() > 4095):
        raise ValueError("feature raws must be 12-bit unsigned")
    return arr << FEAT_TO_ACT_SHIFT


@dataclass
class InferenceResult:
    decision: int
    logits_trace: np.ndarray
    stats: UtteranceStats


def run_inference(feature_rows, theta: float, w: NetworkWeights) -> InferenceResult:
    """Classify one utterance: delta steps + dense output layer per frame.

    The decision is the argmax of the temporal mean of the logits (equivalently
    of their integer sum; ties resolve to the lowest class id).
    """
    acts = features_to_activations(feature_rows)
    if acts.shape[0] == 0:
        raise ValueError("empty feature sequence")
    if acts.shape[1] != w.n_in:
        raise ValueError(f"feature width {acts.shape[1]} != network n_in {w.n_in}")
    theta_raw = quantize_theta(theta)
    state = DeltaState.initial(w)
    stats = UtteranceStats(n_in=w.n_in, n_hid=w.n_hid)
    trace = np.zeros((acts.shape[0], w.n_out), dtype=np.int64)
    for t in range(acts.shape[0]):
        h, fr = delta_gru_step(state, acts[t], theta_raw, w)
        trace[t] = fc_forward(h, w)
        stats.frames.append(fr)
    decision = int(np.argmax(trace.sum(axis=0)))
    return InferenceResult(decision, trace, stats)


# ---------------------------------------------------------------------------
# independent dense oracle (float-orchestrated, shares the lookup tables)

def dense_oracle_run(feature_rows, w: NetworkWeights):
    """Double-precision dense reference returning (h_trace, logits_trace).

    Matrix products are float64 (exact for these magnitudes) and the
    nonlinearities use the same quantized tables, so the result is bit-exact
    against the integer engine at zero threshold.
    """
    acts = features_to_activations(feature_rows).astype(np.float64)
    mats = {name: getattr(w, name).astype(np.float64) * 2.0 ** (w.scale_exp[name] + WEIGHT_FRAC)
            for name in MATRIX_NAMES}
    b_r = w.b_r.astype(np.float64)
    b_u = w.b_u.astype(np.float64)
    b_c = w.b_c.astype(np.float64)
    b_fc = w.b_fc.astype(np.float64)

    def clip32(a):
        return np.clip(a, float(INT32_MIN), float(INT32_MAX))

    def lut(table, acc):
        idx = np.round(acc / float(1 << _LUT_INDEX_SHIFT))
        idx = np.clip(idx, -127, 127).astype(np.int64) + 128
        return table[idx].astype(np.float64)

    h = np.zeros(w.n_hid, dtype=np.float64)
    h_trace = np.zeros((acts.shape[0], w.n_hid))
    logits_trace = np.zeros((acts.shape[0], w.n_out))
    for t in range(acts.shape[0]):
        x = acts[t]
        m_r = clip32(mats["W_xr"] @ x + mats["W_hr"] @ h + b_r)
        m_u = clip32(mats["W_xu"] @ x + mats["W_hu"] @ h + b_u)
        m_xc = clip32(mats["W_xc"] @ x + b_c)
        m_hc = clip32(mats["W_hc"] @ h)
        r = lut(SIGMOID_TABLE, m_r)
        u = lut(SIGMOID_TABLE, m_u)
        c_pre = clip32(m_xc + np.round(r * m_hc / ACT_ONE))
        c = lut(TANH_TABLE, c_pre)
        h = h + np.round(u * (c - h) / ACT_ONE)
        h_trace[t] = h
        logits_trace[t] = clip32(mats["W_fc"] @ h + b_fc)
    return h_trace, logits_trace
