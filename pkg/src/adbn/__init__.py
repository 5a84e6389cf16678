"""Self-structuring deep belief networks with detection and heatmaps."""

from .adaptive import AdaptiveConfig, GrowthTrace, StructureMonitor
from .dbn import AdaptiveDbn, TrainConfig, finetune, load, pretrain, save
from .detection import BoundingBox, DetectConfig, detect, evaluate_detection, iou
from .heatmap import Heatmap, compute_heatmap, render_jet
from .numerics import Rng, bernoulli_sample, sigmoid, softmax
from .rbm import CdUpdate, RbmLayer, apply_update, cd_step

__all__ = [
    "AdaptiveConfig", "AdaptiveDbn", "BoundingBox", "CdUpdate", "DetectConfig",
    "GrowthTrace", "Heatmap", "RbmLayer", "Rng", "StructureMonitor",
    "TrainConfig", "apply_update", "bernoulli_sample", "cd_step",
    "compute_heatmap", "detect", "evaluate_detection", "finetune", "iou",
    "load", "pretrain", "render_jet", "save", "sigmoid", "softmax",
]

__version__ = "0.1.0"
