"""LUT-network training with learned input pruning and Verilog export."""

from .data import Dataset, load_idx, synth_boolean
from .lutcore import LutMask, TruthTable, binarize_mask, lut_forward
from .model import Network
from .shrink import build_prune_mask, build_U, compose_transforms, salience
from .train import TrainConfig

__all__ = [
    "Dataset",
    "LutMask",
    "Network",
    "TrainConfig",
    "TruthTable",
    "binarize_mask",
    "build_U",
    "build_prune_mask",
    "compose_transforms",
    "load_idx",
    "lut_forward",
    "salience",
    "synth_boolean",
]
