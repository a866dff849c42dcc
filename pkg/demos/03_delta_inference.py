"""Delta-gated inference: exact dense equivalence and the sparsity trade-off.

First verifies bit-exact agreement between the delta engine at zero threshold
and the double-precision dense reference, then sweeps the threshold and plots
temporal sparsity and MACs per frame.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from dkws.delta_gru import dense_oracle_run, make_random_weights, run_inference

out = Path(__file__).parent / "out"
out.mkdir(exist_ok=True)

rng = np.random.default_rng(11)
w = make_random_weights(42)

# utterance-like smoothed random feature rows (62 frames like 1 s of audio)
steps = rng.integers(-600, 601, size=(62, 10)).astype(float)
rows = np.zeros((62, 10))
level = rng.integers(500, 3000, size=10).astype(float)
for t in range(62):
    level = 0.7 * level + 0.3 * 2048 + 0.3 * steps[t]
    rows[t] = level
rows = np.clip(np.round(rows), 0, 4095).astype(np.int64)

res0 = run_inference(rows, 0.0, w)
_, oracle_logits = dense_oracle_run(rows, w)
exact = (res0.logits_trace == oracle_logits.astype(np.int64)).all()
print(f"theta=0 vs dense reference: {'bit-exact' if exact else 'MISMATCH'}")
assert exact

thetas = [0.05 * i for i in range(11)]
spars, macs = [], []
for theta in thetas:
    res = run_inference(rows, theta, w)
    spars.append(res.stats.temporal_sparsity)
    macs.append(res.stats.total_macs / res.stats.n_frames)
    print(f"theta={theta:4.2f}  sparsity={spars[-1]:.3f}  MACs/frame={macs[-1]:8.1f}"
          f"  decision={res.decision}")

fig, ax1 = plt.subplots(figsize=(6, 3.5))
ax1.plot(thetas, spars, "o-", color="tab:blue")
ax1.set_xlabel("delta threshold")
ax1.set_ylabel("temporal sparsity", color="tab:blue")
ax1.set_ylim(0, 1)
ax2 = ax1.twinx()
ax2.plot(thetas, macs, "s--", color="tab:red")
ax2.set_ylabel("MACs per frame", color="tab:red")
fig.tight_layout()
fig.savefig(out / "sparsity_vs_theta.png", dpi=130)
print(f"wrote {out / 'sparsity_vs_theta.png'}")
