"""Feature-set loading.

The trainer never recomputes features: it consumes the CSV files the
simulator's `dkws features --dataset-root ...` export writes (one directory
per split, each with utt*.features.csv and a labels.csv naming file, label id
and keyword).  Feature values are unsigned 12-bit raws.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass
class FeatureSet:
    features: list[np.ndarray]  # [T, n_channels] int64 each
    labels: np.ndarray          # int64
    names: list[str]
    center_freqs: tuple[float, ...]

    def __len__(self):
        return len(self.features)

    @property
    def n_channels(self) -> int:
        return self.features[0].shape[1]


def read_feature_csv(path) -> tuple[tuple[float, ...], np.ndarray]:
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    if not rows:
        raise ValueError(f"empty feature file {path}")
    centers = tuple(float(h) for h in rows[0])
    data = np.array([[int(v) for v in r] for r in rows[1:]], dtype=np.int64)
    if data.size and (data.min() < 0 or data.max() > 4095):
        raise ValueError(f"{path}: feature values outside the 12-bit range")
    return centers, data


def load_split(split_dir) -> FeatureSet:
    split_dir = Path(split_dir)
    labels_path = split_dir / "labels.csv"
    if not labels_path.is_file():
        raise FileNotFoundError(f"missing {labels_path}")
    with open(labels_path, newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    feats, labels, names = [], [], []
    centers = None
    for row in rows:
        c, data = read_feature_csv(split_dir / row["file"])
        centers = centers or c
        feats.append(data)
        labels.append(int(row["label"]))
        names.append(row["file"])
    if not feats:
        raise ValueError(f"no utterances listed in {labels_path}")
    return FeatureSet(feats, np.array(labels, dtype=np.int64), names, centers)
