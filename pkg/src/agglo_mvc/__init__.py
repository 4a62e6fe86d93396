"""Multi-view clustering through agglomerated connection graphs.

Per-view latent affinities are fused along a view hierarchy into a single
consensus graph; training drives the graph towards exactly ``k`` connected
components, which are read off as the cluster labels.
"""

from .data import Dataset, load_dataset, synth_blobs, synth_layered
from .metrics import MetricsReport, evaluate
from .structure import ViewNode, ViewStructure, validate
from .trainer import TrainerConfig, TrainResult, train

__all__ = [
    "Dataset",
    "MetricsReport",
    "TrainResult",
    "TrainerConfig",
    "ViewNode",
    "ViewStructure",
    "evaluate",
    "load_dataset",
    "synth_blobs",
    "synth_layered",
    "train",
    "validate",
]

__version__ = "0.1.0"
