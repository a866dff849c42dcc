"""Design the 16-channel Mel band-pass bank and inspect its quantization.

Walks the full design chain: Mel-spaced centers, per-channel Butterworth
band-pass prototypes, 12b/8b mixed-precision quantization with the
shift-realized numerator, and the stability / gain / multiplier accounting.
Writes a response plot to demos/out/.
"""

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from dkws.filter_design import (
    DESIGNATED_10CH_WINDOW,
    default_bank,
    design_float_bank,
    frequency_response,
    multiplier_report,
    stability_check,
)

out = Path(__file__).parent / "out"
out.mkdir(exist_ok=True)

design = design_float_bank()
bank = default_bank()

print("channel  center(Hz)  design(Hz)  Q      stable  gain_err(dB)  csd_b0")
for i, (fch, ch) in enumerate(zip(design.channels, bank.channels)):
    gq = abs(frequency_response(ch.sos, fch.design_freq_hz, 8000))
    gf = abs(frequency_response(fch.sos, fch.design_freq_hz, 8000))
    err = 20 * math.log10(gq / gf)
    stable = all(stability_check(s) for s in ch.sos)
    mark = "*" if i in DESIGNATED_10CH_WINDOW else " "
    print(
        f"  {i:2d} {mark}  {ch.center_freq_hz:9.1f}  {fch.design_freq_hz:9.1f}"
        f"  {fch.q_factor:5.2f}  {str(stable):6s}  {err:+11.3f}  {ch.sos[0].csd_b0}"
    )

rep = multiplier_report(bank)
print(f"\nmultipliers per 4th-order filter: basic {rep['basic_per_filter']}"
      f" -> shift-substituted {rep['shift_substituted_per_filter']}")
print("(* = designated 10-channel operating window)")

freqs = np.linspace(10, 3990, 1200)
fig, ax = plt.subplots(figsize=(8, 4))
for i in DESIGNATED_10CH_WINDOW:
    mags = [abs(frequency_response(bank.channels[i].sos, f, 8000)) for f in freqs]
    ax.semilogx(freqs, 20 * np.log10(np.maximum(mags, 1e-6)),
                label=f"{bank.channels[i].center_freq_hz:.0f} Hz")
ax.set_ylim(-60, 5)
ax.set_xlabel("frequency (Hz)")
ax.set_ylabel("gain (dB)")
ax.set_title("quantized 12b/8b responses, enabled window")
ax.grid(True, which="both", alpha=0.3)
ax.legend(fontsize=6, ncol=2)
fig.tight_layout()
fig.savefig(out / "bank_responses.png", dpi=130)
print(f"wrote {out / 'bank_responses.png'}")
