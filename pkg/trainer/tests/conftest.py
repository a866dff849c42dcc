"""Synthetic feature datasets in the simulator's CSV export layout."""

import csv
from pathlib import Path

import numpy as np
import pytest

N_CHANNELS = 10
N_FRAMES = 62

# distinct hot-channel signatures per class id (silence = none)
CLASS_CHANNELS = {k: (k - 2,) for k in range(2, 12)}
CLASS_CHANNELS[0] = ()
CLASS_CHANNELS[1] = (1, 6)


def synth_utterance(label: int, rng: np.random.Generator) -> np.ndarray:
    feats = rng.integers(0, 250, size=(N_FRAMES, N_CHANNELS))
    for ch in CLASS_CHANNELS[label]:
        burst = 2200 + rng.integers(-300, 300)
        feats[18:44, ch % N_CHANNELS] += burst
    return np.clip(feats, 0, 4095).astype(np.int64)


def write_split(split_dir: Path, labels, seed: int):
    split_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    rows = []
    centers = [f"{500 + 300 * i:.2f}" for i in range(N_CHANNELS)]
    for i, label in enumerate(labels):
        name = f"utt{i:05d}.features.csv"
        feats = synth_utterance(label, rng)
        with open(split_dir / name, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f)
            w.writerow(centers)
            w.writerows(feats.tolist())
        rows.append({"file": name, "label": label, "keyword": str(label)})
    with open(split_dir / "labels.csv", "w", newline="", encoding="utf-8") as f:
        w = csv.DictWriter(f, fieldnames=["file", "label", "keyword"])
        w.writeheader()
        w.writerows(rows)


@pytest.fixture(scope="session")
def feature_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("features")
    rng = np.random.default_rng(0)
    train_labels = [int(v) for v in rng.integers(0, 12, size=120)]
    val_labels = [int(v) for v in rng.integers(0, 12, size=36)]
    write_split(root / "train", train_labels, seed=1)
    write_split(root / "val", val_labels, seed=2)
    return root
