"""Dual-forward contrastive adversarial training step and epoch loop.

One step in the contrastive mode:

  1. clean forward, clean cross-entropy
  2. backward to read the gradient of the clean loss w.r.t. the embedding
     matrix (all other gradients are then cleared)
  3. sign perturbation of the embedding matrix, treated as a constant
  4. adversarial forward through the perturbed embeddings, second
     cross-entropy
  5. projection of both CLS representations, contrastive loss
  6. weighted combination, one backward through both passes
  7. perturbation rescinded by restoring the saved embedding array
     (bit-identical, not arithmetic undo), then the optimizer update

"baseline" runs only the clean pass; "adversarial_only" skips the
contrastive term and averages the two classification losses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .. import tensor as T
from ..encoder import ModelConfig, ModelParams, forward, project
from ..errors import ConfigError, NonFiniteLossError
from ..metrics import prf_from_predictions
from ..tensor import Tensor, zero_grads
from .losses import FGSM_DIRECTIONS, LossBreakdown, combined_loss, cross_entropy, fgsm, nt_xent

MODES = ("baseline", "adversarial_only", "contrastive_adversarial")

EVAL_BATCH = 128


@dataclass(frozen=True)
class TrainConfig:
    lam: float = 0.3
    epsilon: float = 0.005
    tau: float = 0.07
    lr: float = 1e-3
    batch_size: int = 32
    epochs: int = 10
    seed: int = 0
    mode: str = "contrastive_adversarial"
    fgsm_direction: str = "ascent"

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError(f"lambda must be in [0, 1], got {self.lam}")
        if self.epsilon < 0:
            raise ConfigError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.tau <= 0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.fgsm_direction not in FGSM_DIRECTIONS:
            raise ConfigError(f"fgsm_direction must be one of {FGSM_DIRECTIONS}")


@dataclass
class AdamState:
    """First/second moment estimates per parameter plus the step counter."""

    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def optimizer_step(
    named_params: dict,
    grads: dict,
    learning_rate: float,
    state: AdamState,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
):
    """In-place adaptive-moment update; missing/zero gradients leave the
    parameter unchanged."""
    state.t += 1
    t = state.t
    for name, param in named_params.items():
        g = grads.get(name)
        if g is None:
            continue
        if not np.all(np.isfinite(g)):
            raise NonFiniteLossError(f"non-finite gradient for parameter {name!r}")
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(param.data)
            v = np.zeros_like(param.data)
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        state.m[name] = m
        state.v[name] = v
        m_hat = m / (1.0 - beta1 ** t)
        v_hat = v / (1.0 - beta2 ** t)
        param.data = param.data - learning_rate * m_hat / (np.sqrt(v_hat) + eps)


def batch_arrays(batch):
    """Stack a list of TokenizedExample into (ids, attention_lens, labels)."""
    ids = np.stack([ex.ids for ex in batch])
    lens = np.array([ex.attention_len for ex in batch], dtype=np.int64)
    labels = np.array([ex.label for ex in batch], dtype=np.int64)
    return ids, lens, labels


def _check_finite(**terms):
    for name, value in terms.items():
        if not math.isfinite(value):
            raise NonFiniteLossError(f"loss term {name!r} is {value}")


def _mean_pair_cosine(z: np.ndarray, z_adv: np.ndarray) -> float:
    norms = np.linalg.norm(z, axis=1) * np.linalg.norm(z_adv, axis=1)
    norms = np.where(norms == 0.0, 1.0, norms)
    return float(np.mean(np.sum(z * z_adv, axis=1) / norms))


def train_step(
    params: ModelParams,
    mcfg: ModelConfig,
    tcfg: TrainConfig,
    batch,
    opt_state: AdamState,
) -> LossBreakdown:
    """One optimization step; returns the loss terms that were combined."""
    ids, lens, labels = batch_arrays(batch)
    named = params.named()
    zero_grads(named.values())

    h_clean, probs_clean = forward(params, mcfg, ids, lens)
    ce_clean = cross_entropy(probs_clean, labels)

    if tcfg.mode == "baseline":
        _check_finite(ce_clean=ce_clean.item())
        ce_clean.backward()
        optimizer_step(named, {n: t.grad for n, t in named.items()}, tcfg.lr, opt_state)
        value = ce_clean.item()
        return LossBreakdown(ce_clean=value, ce_adv=0.0, contrastive=0.0, combined=value)

    # gradient of the clean loss w.r.t. the embedding matrix only
    ce_clean.backward()
    grad_e = params.embedding.grad.copy()
    zero_grads(named.values())

    r = fgsm(grad_e, tcfg.epsilon, tcfg.fgsm_direction).r
    original_embedding = params.embedding.data
    params.embedding.data = original_embedding + r
    try:
        h_adv, probs_adv = forward(params, mcfg, ids, lens)
        ce_adv = cross_entropy(probs_adv, labels)

        if tcfg.mode == "contrastive_adversarial":
            z = project(params, h_clean)
            z_adv = project(params, h_adv)
            contrastive = nt_xent(z, z_adv, tcfg.tau)
            combined = combined_loss(ce_clean, ce_adv, contrastive, tcfg.lam)
            ctr_value = contrastive.item()
            pair_cos = _mean_pair_cosine(z.data, z_adv.data)
        else:  # adversarial_only
            combined = T.add(ce_clean, ce_adv).scale(0.5)
            ctr_value = 0.0
            pair_cos = float("nan")

        _check_finite(
            ce_clean=ce_clean.item(),
            ce_adv=ce_adv.item(),
            contrastive=ctr_value,
            combined=combined.item(),
        )
        combined.backward()
    finally:
        # rescind the perturbation exactly: restore the saved array instead
        # of subtracting r, which would not round-trip in floating point
        params.embedding.data = original_embedding

    optimizer_step(named, {n: t.grad for n, t in named.items()}, tcfg.lr, opt_state)
    return LossBreakdown(
        ce_clean=ce_clean.item(),
        ce_adv=ce_adv.item(),
        contrastive=ctr_value,
        combined=combined.item(),
        pair_cos=pair_cos,
    )


def mean_pair_cosine(
    params: ModelParams,
    mcfg: ModelConfig,
    tcfg: TrainConfig,
    examples,
    batch_size: int | None = None,
) -> float:
    """Mean clean/adversarial pair cosine at the projection head, measured
    without updating any parameter (the perturbation is built and rescinded
    exactly as in a training step)."""
    batch_size = batch_size or tcfg.batch_size
    named = params.named()
    values = []
    for start in range(0, len(examples), batch_size):
        batch = examples[start : start + batch_size]
        ids, lens, labels = batch_arrays(batch)
        zero_grads(named.values())
        h_clean, probs_clean = forward(params, mcfg, ids, lens)
        cross_entropy(probs_clean, labels).backward()
        r = fgsm(params.embedding.grad, tcfg.epsilon, tcfg.fgsm_direction).r
        zero_grads(named.values())
        original = params.embedding.data
        params.embedding.data = original + r
        try:
            h_adv, _ = forward(params, mcfg, ids, lens)
            z = project(params, h_clean)
            z_adv = project(params, h_adv)
        finally:
            params.embedding.data = original
        values.append(_mean_pair_cosine(z.data, z_adv.data))
    return float(np.mean(values)) if values else float("nan")


def evaluate(params: ModelParams, mcfg: ModelConfig, examples, batch_size: int = EVAL_BATCH):
    """(precision, recall, f1, predictions) on a list of TokenizedExample."""
    predictions = []
    labels = []
    for start in range(0, len(examples), batch_size):
        chunk = examples[start : start + batch_size]
        ids, lens, ys = batch_arrays(chunk)
        _, probs = forward(params, mcfg, ids, lens)
        predictions.append(np.argmax(probs.data, axis=1))
        labels.append(ys)
    predictions = np.concatenate(predictions) if predictions else np.zeros(0, dtype=np.int64)
    labels = np.concatenate(labels) if labels else np.zeros(0, dtype=np.int64)
    p, r, f1 = prf_from_predictions(predictions, labels, mcfg.n_classes)
    return p, r, f1, predictions


@dataclass
class EpochRecord:
    epoch: int
    ce_clean: float
    ce_adv: float
    ctr: float
    combined: float
    val_precision: float
    val_recall: float
    val_f1: float
    pair_cos: float = float("nan")

    def as_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "ce_clean": self.ce_clean,
            "ce_adv": self.ce_adv,
            "ctr": self.ctr,
            "combined": self.combined,
            "val_precision": self.val_precision,
            "val_recall": self.val_recall,
            "val_f1": self.val_f1,
            "pair_cos": self.pair_cos,
        }


@dataclass
class TrainResult:
    history: list
    best_epoch: int
    best_f1: float
    best_params: ModelParams
    initial_pair_cos: float = float("nan")


def train(
    params: ModelParams,
    mcfg: ModelConfig,
    tcfg: TrainConfig,
    train_set,
    val_set,
    log=None,
) -> TrainResult:
    """Epochs of shuffled train_step batches with per-epoch validation.

    Shuffling is seeded per epoch from (seed, epoch), so two runs with the
    same config produce identical trajectories.  The best checkpoint is the
    epoch with the highest validation F1, earlier epoch winning ties.  In
    the contrastive mode the pair cosine of the untrained model is recorded
    as ``initial_pair_cos`` so the robustification across training is
    measurable against the true starting point.
    """
    if tcfg.epochs > 0 and (not train_set or not val_set):
        raise ConfigError("train and validation sets must be nonempty")
    opt_state = AdamState()
    history = []
    best_f1 = -1.0
    best_epoch = 0
    best_params = params.copy()
    initial_pair_cos = float("nan")
    if tcfg.mode == "contrastive_adversarial" and tcfg.epochs > 0 and val_set:
        initial_pair_cos = mean_pair_cosine(params, mcfg, tcfg, val_set)

    for epoch in range(1, tcfg.epochs + 1):
        order = np.random.default_rng([tcfg.seed, epoch]).permutation(len(train_set))
        sums = np.zeros(4)
        pair_cos_sum, pair_cos_batches, n_batches = 0.0, 0, 0
        for start in range(0, len(order), tcfg.batch_size):
            batch = [train_set[i] for i in order[start : start + tcfg.batch_size]]
            lb = train_step(params, mcfg, tcfg, batch, opt_state)
            sums += (lb.ce_clean, lb.ce_adv, lb.contrastive, lb.combined)
            if math.isfinite(lb.pair_cos):
                pair_cos_sum += lb.pair_cos
                pair_cos_batches += 1
            n_batches += 1
        precision, recall, f1, _ = evaluate(params, mcfg, val_set)
        record = EpochRecord(
            epoch=epoch,
            ce_clean=sums[0] / n_batches,
            ce_adv=sums[1] / n_batches,
            ctr=sums[2] / n_batches,
            combined=sums[3] / n_batches,
            val_precision=precision,
            val_recall=recall,
            val_f1=f1,
            pair_cos=pair_cos_sum / pair_cos_batches if pair_cos_batches else float("nan"),
        )
        history.append(record)
        if log is not None:
            log(record)
        if f1 > best_f1:
            best_f1 = f1
            best_epoch = epoch
            best_params = params.copy()

    return TrainResult(
        history=history,
        best_epoch=best_epoch,
        best_f1=max(best_f1, 0.0) if history else 0.0,
        best_params=best_params,
        initial_pair_cos=initial_pair_cos,
    )
