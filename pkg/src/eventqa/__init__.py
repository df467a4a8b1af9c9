"""Event-centric question answering with an invertible event transformation
and event contrastive learning, built on a small numpy autograd engine."""

from .data import QAInstance, RelationType, load_dataset, save_dataset
from .metrics import MetricsReport, build_report
from .model import EventQAModel, ModelConfig
from .synth import synth_generate
from .training import RunConfig, evaluate, fewshot_sweep, train

__version__ = "0.1.0"

__all__ = [
    "EventQAModel",
    "MetricsReport",
    "ModelConfig",
    "QAInstance",
    "RelationType",
    "RunConfig",
    "build_report",
    "evaluate",
    "fewshot_sweep",
    "load_dataset",
    "save_dataset",
    "synth_generate",
    "train",
]
