"""Shared fixtures: a tiny synthetic speech-commands v2 directory tree."""

import numpy as np
import pytest

from dkws.dataset import write_wav


def tone(freq_hz, amp, rate=16000, seconds=1.0, phase=0.0):
    t = np.arange(int(rate * seconds))
    return np.round(amp * np.sin(2 * np.pi * freq_hz * t / rate + phase)).astype(np.int16)


def word_like(seed, rate=16000):
    """A crude word-shaped burst: tone mixture gated by an onset envelope."""
    rng = np.random.default_rng(seed)
    t = np.arange(rate)
    env = np.exp(-((t - rate * 0.45) ** 2) / (2 * (rate * 0.12) ** 2))
    f1, f2 = rng.integers(300, 1200), rng.integers(1200, 3500)
    sig = 9000 * env * (
        np.sin(2 * np.pi * f1 * t / rate) + 0.5 * np.sin(2 * np.pi * f2 * t / rate)
    )
    noise = rng.normal(0, 350, size=rate)
    return np.clip(np.round(sig + noise), -32768, 32767).astype(np.int16)


@pytest.fixture(scope="session")
def gscd_tree(tmp_path_factory):
    """Speech-commands-shaped tree: 3 keywords, 1 unknown word, noise, lists."""
    root = tmp_path_factory.mktemp("gscd")
    rng = np.random.default_rng(42)
    words = {"yes": 6, "no": 6, "up": 6, "bird": 5}
    val_lines, test_lines = [], []
    seed = 0
    for word, count in words.items():
        d = root / word
        d.mkdir()
        for i in range(count):
            name = f"spk{i:02d}_nohash_0.wav"
            write_wav(d / name, 16000, word_like(seed))
            seed += 1
            if i == count - 2:
                val_lines.append(f"{word}/{name}")
            elif i == count - 1:
                test_lines.append(f"{word}/{name}")
    noise_dir = root / "_background_noise_"
    noise_dir.mkdir()
    for i, name in enumerate(["white_noise.wav", "pink_helicopter.wav"]):
        samples = (rng.normal(0, 900, size=3 * 16000)).astype(np.int16)
        write_wav(noise_dir / name, 16000, samples)
    (root / "validation_list.txt").write_text("\n".join(val_lines) + "\n")
    (root / "testing_list.txt").write_text("\n".join(test_lines) + "\n")
    return root
