"""Acceptance suite: one test and one printed pass/fail line per criterion.

Run with ``pytest tests/test_acceptance.py -s`` to see the per-criterion
lines; each test also fails normally under plain pytest.
"""

import math
import time

import numpy as np
import pytest

from dkws.accel_model import (
    CostModel,
    calibrate,
    cost_report,
    datapath_cycles,
    frame_energy_nj,
    frame_latency_ms,
    read_cost_model,
)
from dkws.cli import main
from dkws.dataset import build_dataset, load_utterance, load_wav, wav_bytes
from dkws.delta_gru import (
    DeltaState,
    delta_gru_step,
    dense_oracle_run,
    fc_forward,
    features_to_activations,
    make_random_weights,
    quantize_theta,
)
from dkws.fex import extract_features, ops_per_sample, select_channels
from dkws.filter_design import (
    DESIGNATED_10CH_WINDOW,
    default_bank,
    design_float_bank,
    frequency_response,
    multiplier_report,
    stability_check,
)
from dkws.fixed_point import FixedValue, QFormat, mul_shift, shift_mul


def _report(name: str, started: float, detail: str = ""):
    extra = f" {detail}" if detail else ""
    print(f"{name}: PASS ({time.time() - started:.1f}s){extra}")


def _smoothed_rows(rng, n_frames, n_in=10, smooth=0.7):
    steps = rng.integers(-600, 601, size=(n_frames, n_in)).astype(np.float64)
    rows = np.zeros((n_frames, n_in))
    level = rng.integers(500, 3000, size=n_in).astype(np.float64)
    for t in range(n_frames):
        level = smooth * level + (1 - smooth) * 2048 + steps[t] * (1 - smooth)
        rows[t] = level
    return np.clip(np.round(rows), 0, 4095).astype(np.int64)


def test_p1_dense_delta_equivalence():
    """1000 seeded weight sets x 100 frames: theta=0 is bit-exact vs the oracle."""
    t0 = time.time()
    rng = np.random.default_rng(20240901)
    for seed in range(1000):
        w = make_random_weights(seed)
        rows = _smoothed_rows(rng, 100)
        theta_raw = quantize_theta(0.0)
        state = DeltaState.initial(w)
        acts = features_to_activations(rows)
        h_list, logit_list = [], []
        for t in range(acts.shape[0]):
            h, _ = delta_gru_step(state, acts[t], theta_raw, w)
            h_list.append(h)
            logit_list.append(fc_forward(h, w))
        h_ref, logit_ref = dense_oracle_run(rows, w)
        assert (np.array(h_list) == h_ref.astype(np.int64)).all(), f"hidden mismatch seed {seed}"
        assert (np.array(logit_list) == logit_ref.astype(np.int64)).all(), (
            f"logit mismatch seed {seed}"
        )
    _report("P1 dense/delta equivalence (1000 runs, exact)", t0)


THETA_GRID = [round(0.05 * i, 2) for i in range(11)]


@pytest.fixture(scope="module")
def theta_grid_runs():
    """100 utterances x 11 thresholds with per-step reconstruction checks."""
    cm, _ = calibrate()
    rng = np.random.default_rng(7)
    # suite totals per theta, mirroring the measured mean-sparsity curve
    totals = {th: [0, 0, 0, 0, 0.0] for th in THETA_GRID}
    bound_ok = True
    for u in range(100):
        w = make_random_weights(3000 + u % 10)
        rows = _smoothed_rows(rng, 30)
        acts = features_to_activations(rows)
        for theta in THETA_GRID:
            theta_raw = quantize_theta(theta)
            state = DeltaState.initial(w)
            fired = macs = 0
            frames = []
            for t in range(acts.shape[0]):
                h_before = state.h_prev.copy()
                _, fr = delta_gru_step(state, acts[t], theta_raw, w)
                if (np.abs(state.x_hat - acts[t]) > theta_raw).any():
                    bound_ok = False
                if (np.abs(state.h_hat - h_before) > theta_raw).any():
                    bound_ok = False
                fired += fr.fired_x + fr.fired_h
                macs += fr.macs
                frames.append(fr)
            from dkws.delta_gru import UtteranceStats

            stats = UtteranceStats(10, 64, frames)
            rep = cost_report(stats, cm)
            agg = totals[theta]
            agg[0] += fired
            agg[1] += macs
            agg[2] += stats.total_weight_reads
            agg[3] += rep.cycles
            agg[4] += rep.energy_nj
    return totals, bound_ok


def test_p2_monotonicity_suite(theta_grid_runs):
    # the hidden-state trajectory itself changes with theta, so per-utterance
    # fired counts can wobble by a few elements; the suite aggregate (what the
    # measured sparsity curve reports) must be strictly well behaved
    t0 = time.time()
    totals, _ = theta_grid_runs
    names = ("fired", "macs", "weight reads", "cycles", "energy")
    series = [totals[t] for t in THETA_GRID]
    for k, name in enumerate(names):
        vals = [s[k] for s in series]
        assert all(b <= a for a, b in zip(vals, vals[1:])), (name, vals)
    _report("P2 monotonicity in theta (fired/MACs/reads/cycles/energy)", t0)


def test_p3_reconstruction_bound(theta_grid_runs):
    t0 = time.time()
    _, bound_ok = theta_grid_runs
    assert bound_ok
    _report("P3 reconstruction bound |x_hat - x| <= theta at every step", t0)


def test_p4_filter_bank_validity():
    t0 = time.time()
    bank = default_bank()
    design = design_float_bank()
    assert bank.n_channels == 16
    for i, ch in enumerate(bank.channels):
        for j, sec in enumerate(ch.sos):
            assert stability_check(sec), f"channel {i} section {j} unstable"
    for i, (ch, fch) in enumerate(zip(bank.channels, design.channels)):
        fd = fch.design_freq_hz
        gq = abs(frequency_response(ch.sos, fd, bank.sample_rate_hz))
        gf = abs(frequency_response(fch.sos, fd, bank.sample_rate_hz))
        err_db = abs(20 * math.log10(gq / gf))
        assert err_db < 1.0, f"channel {i}: center gain off by {err_db:.3f} dB"
    lo = bank.channels[DESIGNATED_10CH_WINDOW[0]].center_freq_hz
    hi = bank.channels[DESIGNATED_10CH_WINDOW[-1]].center_freq_hz
    assert len(DESIGNATED_10CH_WINDOW) == 10
    assert abs(lo / 516.0 - 1.0) < 0.15, f"window low edge {lo:.0f} Hz"
    assert abs(hi / 4220.0 - 1.0) < 0.15, f"window high edge {hi:.0f} Hz"
    _report(
        "P4 filter bank validity (32 stable sections, <1 dB, window "
        f"{lo:.0f}-{hi:.0f} Hz)",
        t0,
    )


def test_p5_shift_substitution_equivalence():
    t0 = time.time()
    bank = default_bank()
    in_fmt = QFormat(12, 11)
    checked = 0
    for ch in bank.channels:
        for sec in ch.sos:
            for coeff, shifts in (
                (sec.b0, sec.csd_b0), (sec.a1, sec.csd_a1), (sec.a2, sec.csd_a2),
            ):
                if shifts is None:
                    continue
                for raw in range(in_fmt.min_raw, in_fmt.max_raw + 1):
                    a = FixedValue(raw, in_fmt)
                    assert shift_mul(a, list(shifts)).raw == mul_shift(a, coeff, in_fmt).raw
                checked += 1
    assert checked >= 32  # one forced CSD numerator per section pair at minimum
    report = multiplier_report(bank)
    assert report["basic_per_filter"] == 10
    assert report["shift_substituted_per_filter"] == 5
    assert all(n <= 5 for n in report["per_channel"])
    _report(
        f"P5 shift substitution ({checked} coefficients exhaustive, 10 -> 5 multipliers)",
        t0,
    )


def test_p6_cost_model_calibration(tmp_path):
    t0 = time.time()
    dest = tmp_path / "cost_model.txt"
    assert main(["calibrate", "--cost-model", str(dest)]) == 0
    cm = read_cost_model(dest)
    assert frame_latency_ms(14976, cm) == pytest.approx(16.4, rel=1e-9)
    assert frame_energy_nj(14976, cm) == pytest.approx(121.2, rel=1e-9)
    m_s = 3 * 64 * 74 * (1 - 0.87) + 768
    assert frame_latency_ms(m_s, cm) == pytest.approx(6.9, rel=0.01)
    assert frame_energy_nj(m_s, cm) == pytest.approx(36.11, rel=0.01)
    assert datapath_cycles(14976, 8) == 1872
    _report("P6 cost-model calibration (dense exact, sparse within 1%)", t0)


def test_p7_channel_linearity():
    t0 = time.time()
    bank = default_bank()
    full = select_channels(bank, range(16))
    ten = select_channels(bank, DESIGNATED_10CH_WINDOW)
    s16 = ops_per_sample(full).total
    s10 = ops_per_sample(ten).total
    assert s10 * 16 == s16 * 10, (s10, s16)
    r16 = extract_features([0] * 384, full).ops.total
    r10 = extract_features([0] * 384, ten).ops.total
    assert r10 * 16 == r16 * 10, (r10, r16)
    _report("P7 FEx op counter linearity (10 ch = 62.5% of 16 ch, exact)", t0)


def test_p8_dataset_integrity(gscd_tree):
    t0 = time.time()
    samples = np.array([0, 1, -1, 2047, -2048, 123], dtype=np.int16)
    data = wav_bytes(8000, samples)
    rate, decoded = load_wav(data)
    assert wav_bytes(rate, decoded) == data
    a = build_dataset(gscd_tree, seed=5)
    b = build_dataset(gscd_tree, seed=5)
    assert a == b
    u = load_utterance(gscd_tree, a["test"][0])
    assert len(u.samples) == 8000
    run = extract_features(u.samples.tolist(), default_bank())
    assert len(run.frames) == 62
    _report("P8 dataset integrity (round trip, deterministic splits, 62 frames)", t0)
