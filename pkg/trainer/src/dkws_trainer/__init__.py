"""Threshold-aware, quantization-aware trainer for the delta-gated GRU
keyword spotter.  Consumes feature CSVs exported by the simulator, trains
with the delta threshold and int8 weight grid in the loop, and exports the
binary weight file and bank normalization constants the simulator reads."""

__version__ = "0.1.0"

from .data import FeatureSet, load_split
from .export import export_weights, quantized_arrays
from .model import DeltaGRUNet
from .normalize import compute_normalization
from .train import TrainConfig, TrainingDiverged, evaluate, train

__all__ = [
    "DeltaGRUNet",
    "FeatureSet",
    "TrainConfig",
    "TrainingDiverged",
    "compute_normalization",
    "evaluate",
    "export_weights",
    "load_split",
    "quantized_arrays",
    "train",
]
