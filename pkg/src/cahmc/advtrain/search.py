"""Grid search over the training hyperparameters and stratified k-fold CV.

Cells and folds are independent: each clones the same initial parameters
and owns its optimizer state, so they may run concurrently; results are
merged after completion, which keeps the output identical regardless of
the degree of parallelism.
"""

from __future__ import annotations

import itertools
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from ..encoder import ModelConfig, ModelParams, init_params
from ..errors import ConfigError
from .training import TrainConfig, train

# the published sweep: 5 lambdas x 4 epsilons x 6 temperatures x 3 batch
# sizes = 360 cells
DEFAULT_GRID = {
    "lambdas": (0.1, 0.2, 0.3, 0.4, 0.5),
    "epsilons": (0.02, 0.005, 0.001, 0.0001),
    "taus": (0.05, 0.06, 0.07, 0.08, 0.09, 0.1),
    "batch_sizes": (16, 24, 32),
}


@dataclass(frozen=True)
class GridSpec:
    lambdas: tuple
    epsilons: tuple
    taus: tuple
    batch_sizes: tuple

    def __post_init__(self):
        for name in ("lambdas", "epsilons", "taus", "batch_sizes"):
            if not getattr(self, name):
                raise ConfigError(f"grid axis {name!r} is empty")

    @classmethod
    def paper(cls) -> "GridSpec":
        return cls(**DEFAULT_GRID)


def enumerate_grid(base: TrainConfig, grid: GridSpec):
    """Full Cartesian product in axis order lambda, epsilon, tau, batch size."""
    return [
        replace(base, lam=lam, epsilon=eps, tau=tau, batch_size=bs)
        for lam, eps, tau, bs in itertools.product(
            grid.lambdas, grid.epsilons, grid.taus, grid.batch_sizes
        )
    ]


@dataclass
class CellResult:
    index: int
    lam: float
    epsilon: float
    tau: float
    batch_size: int
    val_f1: float
    val_precision: float
    val_recall: float
    best_epoch: int

    def as_dict(self) -> dict:
        return {
            "cell": self.index,
            "lambda": self.lam,
            "epsilon": self.epsilon,
            "tau": self.tau,
            "batch_size": self.batch_size,
            "val_f1": self.val_f1,
            "val_precision": self.val_precision,
            "val_recall": self.val_recall,
            "best_epoch": self.best_epoch,
        }


def _run_cells(jobs, runner, parallel: int):
    if parallel <= 1:
        return [runner(job) for job in jobs]
    with ThreadPoolExecutor(max_workers=parallel) as pool:
        return list(pool.map(runner, jobs))


def grid_search(
    mcfg: ModelConfig,
    base: TrainConfig,
    grid: GridSpec,
    train_set,
    val_set,
    parallel: int = 1,
):
    """Train every cell of the grid; return all cells ranked by validation F1.

    Every cell starts from the same seed-determined initial parameters.
    Ties keep enumeration order, and the ranking is a permutation of the
    full product (no cell is dropped); the selected configuration is the
    first row.
    """
    configs = enumerate_grid(base, grid)
    initial = init_params(mcfg, base.seed)

    def run(job):
        index, tcfg = job
        result = train(initial.copy(), mcfg, tcfg, train_set, val_set)
        best = result.history[result.best_epoch - 1] if result.history else None
        return CellResult(
            index=index,
            lam=tcfg.lam,
            epsilon=tcfg.epsilon,
            tau=tcfg.tau,
            batch_size=tcfg.batch_size,
            val_f1=result.best_f1,
            val_precision=best.val_precision if best else 0.0,
            val_recall=best.val_recall if best else 0.0,
            best_epoch=result.best_epoch,
        )

    cells = _run_cells(list(enumerate(configs)), run, parallel)
    return sorted(cells, key=lambda c: (-c.val_f1, c.index))


def stratified_fold_assignment(labels, k: int) -> np.ndarray:
    """Fold id per example: strata spread round-robin over a shared cursor.

    Examples are taken in dataset order within each stratum (no shuffling;
    callers shuffle the dataset beforehand if they want randomized folds).
    Processing strata through one global cursor keeps every stratum's fold
    counts within one of each other *and* the overall fold sizes within one
    of each other.  A class with fewer than k members cannot reach every
    fold; it is still assigned round-robin, with a warning.
    """
    labels = np.asarray(labels)
    n = labels.size
    if k < 2:
        raise ConfigError("k must be at least 2")
    if n < k:
        raise ConfigError(f"dataset of size {n} cannot be split into {k} folds")
    folds = np.empty(n, dtype=np.int64)
    cursor = 0
    for value in sorted(np.unique(labels).tolist()):
        members = np.flatnonzero(labels == value)
        if members.size < k:
            warnings.warn(
                f"class {value!r} has {members.size} < {k} members; "
                "assigning round-robin"
            )
        for idx in members:
            folds[idx] = cursor % k
            cursor += 1
    return folds


@dataclass
class FoldResult:
    fold: int
    val_precision: float
    val_recall: float
    val_f1: float
    best_epoch: int

    def as_dict(self) -> dict:
        return {
            "fold": self.fold,
            "val_precision": self.val_precision,
            "val_recall": self.val_recall,
            "val_f1": self.val_f1,
            "best_epoch": self.best_epoch,
        }


def kfold_cv(
    mcfg: ModelConfig,
    tcfg: TrainConfig,
    dataset,
    k: int,
    parallel: int = 1,
):
    """Stratified k-fold cross-validation.

    Each fold serves as the validation set once; parameters are freshly
    initialized per fold from the same seed.  Returns (per-fold results,
    means dict).
    """
    labels = [ex.label for ex in dataset]
    folds = stratified_fold_assignment(labels, k)

    def run(fold):
        val_set = [ex for ex, f in zip(dataset, folds) if f == fold]
        train_set = [ex for ex, f in zip(dataset, folds) if f != fold]
        result = train(init_params(mcfg, tcfg.seed), mcfg, tcfg, train_set, val_set)
        best = result.history[result.best_epoch - 1] if result.history else None
        return FoldResult(
            fold=fold,
            val_precision=best.val_precision if best else 0.0,
            val_recall=best.val_recall if best else 0.0,
            val_f1=result.best_f1,
            best_epoch=result.best_epoch,
        )

    results = _run_cells(list(range(k)), run, parallel)
    means = {
        "val_precision": float(np.mean([r.val_precision for r in results])),
        "val_recall": float(np.mean([r.val_recall for r in results])),
        "val_f1": float(np.mean([r.val_f1 for r in results])),
    }
    return results, means
