"""endokit: dataset curation and evaluation for multi-label capsule-endoscopy
frame classification.

Subpackages cover the 17-class taxonomy, manifest ingestion and statistics,
cardinality-aware under-sampling with a stratified train/validation split,
thresholded mAP evaluation, a desk-scale Vision Transformer with exact
gradients, a reproducible training loop, and synthetic data generation.
"""

from .labels import LABELS, LABEL_NAMES, NUM_LABELS, cardinality, labelset_from_names, parse_label
from .manifest import DatasetStats, FrameRecord, Manifest, compute_stats, read_manifest, write_manifest
from .metrics import EvalReport, PredictionSet, average_precision, evaluate, map_at, overall_map
from .sampler import SamplingConfig, SelectionPlan, split_train_val, under_sample
from .trainer import TrainConfig, predict, train
from .vit import TOY_CONFIG, ViTConfig, bce_loss, forward, init_params

__version__ = "0.1.0"

__all__ = [
    "LABELS",
    "LABEL_NAMES",
    "NUM_LABELS",
    "cardinality",
    "labelset_from_names",
    "parse_label",
    "DatasetStats",
    "FrameRecord",
    "Manifest",
    "compute_stats",
    "read_manifest",
    "write_manifest",
    "EvalReport",
    "PredictionSet",
    "average_precision",
    "evaluate",
    "map_at",
    "overall_map",
    "SamplingConfig",
    "SelectionPlan",
    "split_train_val",
    "under_sample",
    "TrainConfig",
    "predict",
    "train",
    "TOY_CONFIG",
    "ViTConfig",
    "bce_loss",
    "forward",
    "init_params",
    "__version__",
]
