"""Losses, FGSM embedding perturbation, dual-forward training and harness."""

from .losses import (
    LossBreakdown,
    Perturbation,
    combined_loss,
    cross_entropy,
    fgsm,
    nt_xent,
)
from .search import (
    CellResult,
    FoldResult,
    GridSpec,
    enumerate_grid,
    grid_search,
    kfold_cv,
    stratified_fold_assignment,
)
from .training import (
    AdamState,
    EpochRecord,
    TrainConfig,
    TrainResult,
    batch_arrays,
    evaluate,
    optimizer_step,
    train,
    train_step,
)

__all__ = [
    "AdamState",
    "CellResult",
    "EpochRecord",
    "FoldResult",
    "GridSpec",
    "LossBreakdown",
    "Perturbation",
    "TrainConfig",
    "TrainResult",
    "batch_arrays",
    "combined_loss",
    "cross_entropy",
    "enumerate_grid",
    "evaluate",
    "fgsm",
    "grid_search",
    "kfold_cv",
    "nt_xent",
    "optimizer_step",
    "stratified_fold_assignment",
    "train",
    "train_step",
]
