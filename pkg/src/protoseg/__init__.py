"""Unsupervised point-cloud semantic segmentation driven by dual prototype
memories over reliability-split pseudo-labels."""

from .benchmark import benchmark_config, raw_oracle_report
from .cloud import (
    AugmentParams,
    PointCloud,
    augment_colors,
    load_cloud,
    normalize,
    save_cloud,
    synth_scene,
    synth_suite,
    voxel_superpoints,
)
from .clustering import KMeansResult, kmeans
from .config import Config, load_config
from .errors import ConfigError, DataError, NumericalAbort, ProtosegError
from .losses import (
    LossReport,
    consistent_reasoning_loss,
    cross_entropy,
    objective,
    similarity_matrices,
    structure_loss,
)
from .metrics import (
    Assignment,
    ConfusionMatrix,
    MetricReport,
    align_and_score,
    hungarian,
    metrics_from_confusion,
    primitives_to_categories,
)
from .prototypes import PrototypeBank, effective_prototypes, ema_update, init_banks
from .reliability import SplitSets, reliability_mask, split
from .segmenter import PrototypeSegmenter
from .trainer import (
    Checkpoint,
    TrainLog,
    Trainer,
    evaluate_run,
    load_checkpoint,
    save_checkpoint,
)

__version__ = "0.1.0"

__all__ = [
    "AugmentParams",
    "Assignment",
    "Checkpoint",
    "Config",
    "ConfigError",
    "ConfusionMatrix",
    "DataError",
    "KMeansResult",
    "LossReport",
    "MetricReport",
    "NumericalAbort",
    "PointCloud",
    "ProtosegError",
    "PrototypeBank",
    "PrototypeSegmenter",
    "SplitSets",
    "TrainLog",
    "Trainer",
    "align_and_score",
    "augment_colors",
    "benchmark_config",
    "consistent_reasoning_loss",
    "cross_entropy",
    "effective_prototypes",
    "ema_update",
    "evaluate_run",
    "hungarian",
    "init_banks",
    "kmeans",
    "load_checkpoint",
    "load_cloud",
    "load_config",
    "metrics_from_confusion",
    "normalize",
    "objective",
    "primitives_to_categories",
    "raw_oracle_report",
    "reliability_mask",
    "save_checkpoint",
    "save_cloud",
    "similarity_matrices",
    "split",
    "structure_loss",
    "synth_scene",
    "synth_suite",
    "voxel_superpoints",
]
