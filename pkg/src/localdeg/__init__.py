"""Desk-scale toolkit for detecting and identifying local speech degradations.

Subpackages cover the full pipeline: a minimal autodiff engine, a synthetic
parallel corpus, partial mix-up augmentation, a two-headed frame-level
quality model, its training objectives, detection scoring, threshold-free
metrics, and embedding-space analysis.
"""

__version__ = "0.1.0"

from .autodiff import Tensor, backward, no_grad
from .config import RunConfig, load_config
from .corpus import CorpusConfig, DegradationSpec, ParallelUtterance, Waveform
from .losses import LossConfig
from .metrics import ScoredFrames, frame_eer, frame_min_dcf, intersection_auc
from .model import Model, ModelConfig
from .training import TrainConfig, train

__all__ = [
    "Tensor",
    "backward",
    "no_grad",
    "RunConfig",
    "load_config",
    "CorpusConfig",
    "DegradationSpec",
    "ParallelUtterance",
    "Waveform",
    "LossConfig",
    "ScoredFrames",
    "frame_eer",
    "frame_min_dcf",
    "intersection_auc",
    "Model",
    "ModelConfig",
    "TrainConfig",
    "train",
]
