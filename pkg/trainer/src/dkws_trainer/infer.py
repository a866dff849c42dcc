"""Trainer-side quantized inference over exported int8/int32 arrays.

Independent integer implementation of the simulator's documented numeric
conventions (Q14 activations entered as feature raw << 3, Q21 32-bit
saturating accumulators, 256-entry symmetric sigmoid/tanh tables over
[-8, 8) with round-to-nearest-even indexing saturated at +-127, hidden
update h + u*(c - h) rounded back to the grid).  Used to sanity-check an
export before handing it to the simulator and for the parity harness.
"""

from __future__ import annotations

import math

import numpy as np

ACT_FRAC = 14
ACT_ONE = 1 << ACT_FRAC
ACC_FRAC = 21
INT32_MIN, INT32_MAX = -(1 << 31), (1 << 31) - 1
_INDEX_SHIFT = ACC_FRAC - 4


def _rne_shift(x: np.ndarray, k: int) -> np.ndarray:
    half = np.int64(1 << (k - 1))
    mask = np.int64((1 << k) - 1)
    q = (x + half) >> k
    ties = (x & mask) == half
    return q - (ties & (q & 1).astype(bool))


def _tables():
    sig = np.zeros(256, dtype=np.int64)
    tnh = np.zeros(256, dtype=np.int64)
    for i in range(128, 256):
        v = (i - 128) / 16.0
        sig[i] = round(ACT_ONE / (1.0 + math.exp(-v)))
        tnh[i] = round(ACT_ONE * math.tanh(v))
    for k in range(1, 128):
        sig[128 - k] = ACT_ONE - sig[128 + k]
        tnh[128 - k] = -tnh[128 + k]
    sig[0] = ACT_ONE - round(ACT_ONE / (1.0 + math.exp(-8.0)))
    tnh[0] = -round(ACT_ONE * math.tanh(8.0))
    return sig, tnh


_SIG, _TANH = _tables()


def _lut(table: np.ndarray, acc: np.ndarray) -> np.ndarray:
    idx = np.clip(_rne_shift(acc, _INDEX_SHIFT), -127, 127) + 128
    return table[idx]


def _sat32(x: np.ndarray) -> np.ndarray:
    return np.clip(x, INT32_MIN, INT32_MAX)


def quantized_decisions(arrays: dict, feats: np.ndarray, theta: float) -> list[int]:
    """Decisions for a batch of utterances ([N, T, n_in] 12-bit feature raws).

    `arrays` holds the exported int8 matrices and int32 biases (weight scale
    2^-7, biases on the Q21 grid), as produced by export.quantized_arrays.
    """
    theta_raw = (1 << 62) if math.isinf(theta) else int(round(theta * ACT_ONE))
    mats = {k: v.astype(np.int64) for k, v in arrays.items() if k.startswith("W_")}
    biases = {k: v.astype(np.int64) for k, v in arrays.items() if k.startswith("b_")}
    n_hid = mats["W_xr"].shape[0]
    decisions = []
    for utt in np.asarray(feats, dtype=np.int64):
        x_hat = np.zeros(utt.shape[1], dtype=np.int64)
        h_hat = np.zeros(n_hid, dtype=np.int64)
        h = np.zeros(n_hid, dtype=np.int64)
        m_r = biases["b_r"].copy()
        m_u = biases["b_u"].copy()
        m_xc = biases["b_c"].copy()
        m_hc = np.zeros(n_hid, dtype=np.int64)
        logit_sum = np.zeros(mats["W_fc"].shape[0], dtype=np.int64)
        for x_row in utt << 3:  # left-align 12-bit raws onto the Q14 grid
            dx = x_row - x_hat
            fx = np.abs(dx) > theta_raw
            dx = np.where(fx, dx, 0)
            x_hat = np.where(fx, x_row, x_hat)
            dh = h - h_hat
            fh = np.abs(dh) > theta_raw
            dh = np.where(fh, dh, 0)
            h_hat = np.where(fh, h, h_hat)
            m_r = _sat32(m_r + mats["W_xr"] @ dx + mats["W_hr"] @ dh)
            m_u = _sat32(m_u + mats["W_xu"] @ dx + mats["W_hu"] @ dh)
            m_xc = _sat32(m_xc + mats["W_xc"] @ dx)
            m_hc = _sat32(m_hc + mats["W_hc"] @ dh)
            r = _lut(_SIG, m_r)
            u = _lut(_SIG, m_u)
            c = _lut(_TANH, _sat32(m_xc + _rne_shift(r * m_hc, ACT_FRAC)))
            h = h + _rne_shift(u * (c - h), ACT_FRAC)
            logit_sum += _sat32(mats["W_fc"] @ h + biases["b_fc"])
        decisions.append(int(np.argmax(logit_sum)))
    return decisions
