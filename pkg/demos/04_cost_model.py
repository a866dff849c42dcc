"""Calibrate the cycle/energy model and reproduce the measured trade-offs.

Fits the affine model through the two measured operating points (dense and
87% sparsity), prints the dense/sparse ratios, and plots per-frame energy and
latency against temporal sparsity with the anchor points marked.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from dkws.accel_model import (
    DENSE_POINT,
    SPARSE_POINT,
    calibrate,
    frame_energy_nj,
    frame_latency_ms,
    macs_at_sparsity,
)

out = Path(__file__).parent / "out"
out.mkdir(exist_ok=True)

cm, report = calibrate()
print("calibrated model:")
for k in ("cycles_per_mac", "cycles_frame_fixed", "e_mac_nj", "e_read_nj",
          "e_frame_fixed_nj", "e_fex_frame_nj"):
    print(f"  {k} = {getattr(cm, k):.6g}")

m_d, m_s = report["macs_dense"], report["macs_sparse"]
print(f"\ndense:  {frame_latency_ms(m_d, cm):6.2f} ms  {frame_energy_nj(m_d, cm):7.2f} nJ")
print(f"sparse: {frame_latency_ms(m_s, cm):6.2f} ms  {frame_energy_nj(m_s, cm):7.2f} nJ")
print(f"latency ratio {frame_latency_ms(m_d, cm) / frame_latency_ms(m_s, cm):.2f}x "
      f"(measured 2.4x), energy ratio "
      f"{frame_energy_nj(m_d, cm) / frame_energy_nj(m_s, cm):.2f}x (measured 3.4x)")

s = np.linspace(0, 1, 101)
macs = [macs_at_sparsity(v) for v in s]
fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(9, 3.5))
ax0.plot(s, [frame_energy_nj(m, cm) for m in macs])
ax0.plot([0.0, SPARSE_POINT[2]], [DENSE_POINT[1], SPARSE_POINT[1]], "r*", ms=12)
ax0.set_xlabel("temporal sparsity")
ax0.set_ylabel("energy per decision (nJ)")
ax1.plot(s, [frame_latency_ms(m, cm) for m in macs])
ax1.plot([0.0, SPARSE_POINT[2]], [DENSE_POINT[0], SPARSE_POINT[0]], "r*", ms=12)
ax1.set_xlabel("temporal sparsity")
ax1.set_ylabel("latency (ms)")
for ax in (ax0, ax1):
    ax.grid(True, alpha=0.3)
fig.tight_layout()
fig.savefig(out / "cost_vs_sparsity.png", dpi=130)
print(f"wrote {out / 'cost_vs_sparsity.png'}")
