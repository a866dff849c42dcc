"""Desk-scale, bit-accurate simulator of a delta-gated GRU keyword-spotting
pipeline: fixed-point IIR band-pass feature extraction, threshold-gated
recurrent inference with exact dense equivalence, and a calibrated cycle and
energy model of the accelerator datapath."""

__version__ = "0.1.0"

from .accel_model import CostModel, calibrate, cost_report
from .delta_gru import NetworkWeights, make_random_weights, run_inference
from .fex import FexConfig, extract_features, select_channels
from .filter_design import FilterBank, default_bank, design_float_bank, quantize_bank

__all__ = [
    "CostModel",
    "FexConfig",
    "FilterBank",
    "NetworkWeights",
    "calibrate",
    "cost_report",
    "default_bank",
    "design_float_bank",
    "extract_features",
    "make_random_weights",
    "quantize_bank",
    "run_inference",
    "select_channels",
    "__version__",
]
