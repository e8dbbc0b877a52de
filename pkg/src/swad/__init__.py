"""Two-stage autoencoder anomaly detection with latent feature selection.

Train an autoencoder on normal data, learn an importance mask over its latent
features, then score test samples by the reconstruction error of
soft-selected latent codes (top-k features kept, the rest scaled by tau).
"""

from .autoencoder import AutoencoderModel, TrainReport, build, decode, encode, train_stage1
from .data import OneClassSplit, RawDataset, load_csv, load_idx, make_one_class_split
from .detector import (
    ScoreSet,
    Threshold,
    WeightingConfig,
    auc,
    detect,
    fit_threshold,
    score,
    weight_latent,
)
from .feature_mask import (
    FeatureMask,
    FmModule,
    LearnNet,
    build_fm,
    build_learn_net,
    fm_forward,
    select_top_k,
    train_stage2,
)
from .numerics import Rng, ShapeError, SwadError, TrainingDivergedError

__version__ = "0.1.0"

__all__ = [
    "AutoencoderModel",
    "FeatureMask",
    "FmModule",
    "LearnNet",
    "OneClassSplit",
    "RawDataset",
    "Rng",
    "ScoreSet",
    "ShapeError",
    "SwadError",
    "Threshold",
    "TrainReport",
    "TrainingDivergedError",
    "WeightingConfig",
    "auc",
    "build",
    "build_fm",
    "build_learn_net",
    "decode",
    "detect",
    "encode",
    "fit_threshold",
    "fm_forward",
    "load_csv",
    "load_idx",
    "make_one_class_split",
    "score",
    "select_top_k",
    "train_stage1",
    "train_stage2",
    "weight_latent",
]
