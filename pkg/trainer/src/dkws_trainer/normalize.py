"""Per-channel feature normalization constants from the train split.

The simulator maps log2-domain envelope values v (Q.6 raws) to 12-bit
features via out = rne((v - offset) * scale_raw >> 12).  This module inverts
the bootstrap mapping recorded in the bank file, takes the 5th percentile of
the recovered log values as the new offset, spans [offset, 99.5th
percentile] across the 12-bit range, and rewrites the bank file's
offset_raw/scale_raw keys.  Low outliers floor at 0 by design; "coverage"
counts values that do not saturate high.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

SCALE_FRAC = 12
FEAT_MAX = 4095
MIN_SPAN_RAW = 64  # one log2 unit in Q.6


def _read_kv(path) -> dict[str, str]:
    items = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        k, v = stripped.split("=", 1)
        items[k.strip()] = v.strip()
    return items


def _write_kv(items: dict[str, str], path) -> None:
    lines = ["# dkws filter bank"]
    lines += [f"{k} = {v}" for k, v in items.items()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def recover_log_values(features: np.ndarray, offset_raw: int, scale_raw: int) -> np.ndarray:
    """Invert out = (v - offset) * scale >> 12 for one channel's column."""
    return offset_raw + features.astype(np.float64) * (1 << SCALE_FRAC) / scale_raw


def channel_constants(log_values: np.ndarray) -> tuple[int, int]:
    """(offset_raw, scale_raw) spanning [p5, p99.5] over the 12-bit range."""
    p5, p995 = np.percentile(log_values, [5.0, 99.5])
    offset = int(np.floor(p5))
    span = max(p995 - offset, MIN_SPAN_RAW)
    scale = int(round(FEAT_MAX * (1 << SCALE_FRAC) / span))
    return offset, max(1, min(scale, 32767))


def apply_constants(log_values: np.ndarray, offset_raw: int, scale_raw: int) -> np.ndarray:
    out = np.round((log_values - offset_raw) * scale_raw / (1 << SCALE_FRAC))
    return out


def compute_normalization(features_per_utt: list[np.ndarray], bank_path) -> dict:
    """Derive constants from train-split features and update the bank file.

    Returns per-channel dicts with the new raws and the no-high-saturation
    coverage of the train values under the new mapping.
    """
    items = _read_kv(bank_path)
    n_channels = int(items["n_channels"])
    enabled = [i for i in range(n_channels) if items[f"channel.{i}.enabled"] == "1"]
    stacked = np.concatenate([f for f in features_per_utt], axis=0)
    if stacked.shape[1] != len(enabled):
        raise ValueError(
            f"features have {stacked.shape[1]} columns, bank enables {len(enabled)}"
        )
    report = {}
    for col, ch in enumerate(enabled):
        old_off = int(items[f"channel.{ch}.offset_raw"])
        old_scale = int(items[f"channel.{ch}.scale_raw"])
        v = recover_log_values(stacked[:, col], old_off, old_scale)
        off, scale = channel_constants(v)
        mapped = apply_constants(v, off, scale)
        coverage = float(np.mean(mapped <= FEAT_MAX))
        items[f"channel.{ch}.offset_raw"] = str(off)
        items[f"channel.{ch}.scale_raw"] = str(scale)
        report[ch] = {"offset_raw": off, "scale_raw": scale, "coverage": coverage}
    _write_kv(items, bank_path)
    return report
