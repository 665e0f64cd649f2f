from .config import ModelConfig, TrainConfig
from .loss import loss_ce_smoothed, smoothed_targets
from .model import (
    DimMismatch,
    FusionModel,
    NonFiniteLogits,
    StaleCache,
    backward,
    forward,
    parameter_names,
    predict,
    read_checkpoint,
    write_checkpoint,
)
from .train import (
    Checkpoint,
    DivergedLoss,
    EmptySplit,
    EvalResult,
    FeatureSet,
    TrainResult,
    evaluate,
    train,
)
from .ablate import AblationReport, AblationRow, ablate

__all__ = [
    "AblationReport",
    "AblationRow",
    "ablate",
    "ModelConfig",
    "TrainConfig",
    "loss_ce_smoothed",
    "smoothed_targets",
    "DimMismatch",
    "FusionModel",
    "NonFiniteLogits",
    "StaleCache",
    "backward",
    "forward",
    "parameter_names",
    "predict",
    "read_checkpoint",
    "write_checkpoint",
    "Checkpoint",
    "DivergedLoss",
    "EmptySplit",
    "EvalResult",
    "FeatureSet",
    "TrainResult",
    "evaluate",
    "train",
]
