"""Run the serial fixed-point extractor on a synthetic spoken-word burst.

Builds a word-like signal (tone mixture under a Gaussian onset envelope plus
noise floor), pushes it through the 10 enabled channels, and renders the
12-bit log-energy feature image: energy should concentrate in the word
interval with silence frames near the floor.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from dkws.dataset import quantize_12b, resample_16k_to_8k
from dkws.fex import extract_features
from dkws.filter_design import default_bank

out = Path(__file__).parent / "out"
out.mkdir(exist_ok=True)

rate = 16000
rng = np.random.default_rng(3)
t = np.arange(rate)
envelope = np.exp(-((t - rate * 0.45) ** 2) / (2 * (rate * 0.1) ** 2))
word = 9000 * envelope * (
    np.sin(2 * np.pi * 640 * t / rate) + 0.5 * np.sin(2 * np.pi * 2100 * t / rate)
)
signal = np.clip(np.round(word + rng.normal(0, 300, rate)), -32768, 32767).astype(np.int16)

samples = quantize_12b(resample_16k_to_8k(signal))
bank = default_bank()
run = extract_features(samples.tolist(), bank)
img = np.array([fr.values for fr in run.frames]).T

print(f"{len(run.frames)} frames x {img.shape[0]} channels")
print(f"op counter: {run.ops.mul} muls, {run.ops.shift} shifts, {run.ops.add} adds")
mid = img[:, 24:36].mean()
edge = np.concatenate([img[:, :6], img[:, -6:]], axis=1).mean()
print(f"mean feature in word interval: {mid:.0f}, at the edges: {edge:.0f}")

fig, (ax0, ax1) = plt.subplots(2, 1, figsize=(7, 5), height_ratios=[1, 2], sharex=False)
ax0.plot(np.arange(len(samples)) / 8000, samples, lw=0.3)
ax0.set_ylabel("12-bit PCM")
ax0.set_xlabel("time (s)")
ax1.imshow(img, aspect="auto", origin="lower", interpolation="nearest")
ax1.set_xlabel("frame (16 ms)")
ax1.set_ylabel("channel")
ax1.set_yticks(range(len(run.center_freqs_hz)))
ax1.set_yticklabels([f"{cf:.0f} Hz" for cf in run.center_freqs_hz], fontsize=6)
fig.tight_layout()
fig.savefig(out / "features.png", dpi=130)
print(f"wrote {out / 'features.png'}")
