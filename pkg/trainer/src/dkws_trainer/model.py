"""Delta-gated GRU in torch with the inference grid in the training loop.

Forward semantics mirror the integer engine: 12-bit features left-aligned to
a Q14 activation grid in [0, 2), per-step delta commitment of inputs and
hidden states against last-transmitted values (strict > threshold), gates
computed from the committed values, and the hidden update h + u*(c - h)
rounded back onto the grid.  Weight fake-quantization pins int8 weights at a
2^-7 scale.  All rounding and gating decisions use straight-through
gradients.
"""

from __future__ import annotations

import torch
import torch.nn as nn

ACT_SCALE = 1 << 14        # Q14 activation grid
FEAT_SCALE = 1 << 11       # feature raw -> activation value in [0, 2)
WEIGHT_SCALE = 1 << 7      # int8 weights at 2^-7
WEIGHT_LIMIT = 127


def ste_round(x: torch.Tensor) -> torch.Tensor:
    return x + (torch.round(x) - x).detach()


def quantize_grid(x: torch.Tensor, scale: int) -> torch.Tensor:
    return ste_round(x * scale) / scale


def fake_quant_weight(w: torch.Tensor) -> torch.Tensor:
    q = torch.clamp(ste_round(w * WEIGHT_SCALE), -WEIGHT_LIMIT, WEIGHT_LIMIT)
    return q / WEIGHT_SCALE


def delta_commit(v: torch.Tensor, v_hat: torch.Tensor, theta: float):
    """Committed value (forward) with identity gradient into v."""
    fired = (v - v_hat).abs() > theta
    committed = torch.where(fired, v, v_hat)
    return v + (committed - v).detach(), fired


class DeltaGRUNet(nn.Module):
    def __init__(self, n_in: int = 10, n_hid: int = 64, n_out: int = 12):
        super().__init__()
        self.n_in, self.n_hid, self.n_out = n_in, n_hid, n_out
        def mat(r, c, gain):
            return nn.Parameter(torch.randn(r, c) * gain)
        self.W_xr = mat(n_hid, n_in, 0.3)
        self.W_xu = mat(n_hid, n_in, 0.3)
        self.W_xc = mat(n_hid, n_in, 0.3)
        self.W_hr = mat(n_hid, n_hid, 0.15)
        self.W_hu = mat(n_hid, n_hid, 0.15)
        self.W_hc = mat(n_hid, n_hid, 0.15)
        self.W_fc = mat(n_out, n_hid, 0.3)
        self.b_r = nn.Parameter(torch.zeros(n_hid))
        self.b_u = nn.Parameter(torch.zeros(n_hid))
        self.b_c = nn.Parameter(torch.zeros(n_hid))
        self.b_fc = nn.Parameter(torch.zeros(n_out))

    def clamp_weights_(self):
        """Keep parameters inside the exportable int8 range."""
        lim = WEIGHT_LIMIT / WEIGHT_SCALE
        with torch.no_grad():
            for name in ("W_xr", "W_xu", "W_xc", "W_hr", "W_hu", "W_hc", "W_fc"):
                getattr(self, name).clamp_(-lim, lim)

    def forward(self, feats: torch.Tensor, theta: float, quantize: bool = True):
        """feats: [B, T, n_in] 12-bit raws.  Returns (mean logits, fire rate)."""
        B, T, _ = feats.shape
        x_seq = feats.to(torch.float32) / FEAT_SCALE
        theta_q = round(theta * ACT_SCALE) / ACT_SCALE
        wq = fake_quant_weight if quantize else (lambda w: w)
        W_xr, W_xu, W_xc = wq(self.W_xr), wq(self.W_xu), wq(self.W_xc)
        W_hr, W_hu, W_hc = wq(self.W_hr), wq(self.W_hu), wq(self.W_hc)
        W_fc = wq(self.W_fc)
        h = feats.new_zeros((B, self.n_hid), dtype=torch.float32)
        x_hat = feats.new_zeros((B, self.n_in), dtype=torch.float32)
        h_hat = feats.new_zeros((B, self.n_hid), dtype=torch.float32)
        logit_sum = feats.new_zeros((B, self.n_out), dtype=torch.float32)
        fired_total = 0.0
        for t in range(T):
            x = x_seq[:, t]
            if quantize:
                x = quantize_grid(x, ACT_SCALE)
            x_c, fx = delta_commit(x, x_hat, theta_q)
            h_c, fh = delta_commit(h, h_hat, theta_q)
            x_hat = x_c.detach()
            h_hat = h_c.detach()
            r = torch.sigmoid(x_c @ W_xr.T + h_c @ W_hr.T + self.b_r)
            u = torch.sigmoid(x_c @ W_xu.T + h_c @ W_hu.T + self.b_u)
            c = torch.tanh(x_c @ W_xc.T + self.b_c + r * (h_c @ W_hc.T))
            h = h + u * (c - h)
            if quantize:
                h = quantize_grid(h, ACT_SCALE)
            logit_sum = logit_sum + h @ W_fc.T + self.b_fc
            fired_total = fired_total + (fx.float().sum() + fh.float().sum())
        fire_rate = fired_total / (B * T * (self.n_in + self.n_hid))
        return logit_sum / T, fire_rate

    @torch.no_grad()
    def decisions(self, feats: torch.Tensor, theta: float) -> torch.Tensor:
        """Quantized-eval decisions (argmax of the temporal mean of logits)."""
        self.eval()
        logits, _ = self.forward(feats, theta, quantize=True)
        return logits.argmax(dim=1)
