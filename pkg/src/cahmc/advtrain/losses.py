"""Classification, perturbation and contrastive loss primitives.

The contrastive term is the normalized-temperature cross-entropy over the
pooled 2N projections of a batch: each clean example and its perturbed
counterpart form the positive pair, and every other vector in the pool is
a negative, giving 2(N-1) negatives per anchor.  The returned value is the
mean over all 2N anchors, which makes the loss symmetric in its two
arguments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import tensor as T
from ..errors import ConfigError, ContractError, DegenerateInputError
from ..tensor import NEG_INF, Tensor

FGSM_DIRECTIONS = ("ascent", "paper_literal")


@dataclass
class Perturbation:
    """Sign perturbation of the embedding matrix; every element is in
    {-epsilon, 0, +epsilon}."""

    r: np.ndarray


@dataclass
class LossBreakdown:
    """Per-step loss terms.  ``combined`` is exactly
    (1 - lam) / 2 * (ce_clean + ce_adv) + lam * contrastive in the
    contrastive mode; other modes leave unused terms at 0.  ``pair_cos``
    is the mean cosine similarity between clean and perturbed projections
    (NaN when the step has no adversarial pass)."""

    ce_clean: float
    ce_adv: float
    contrastive: float
    combined: float
    pair_cos: float = float("nan")


def cross_entropy(class_probs: Tensor, labels) -> Tensor:
    """Mean negative log-probability of the true class.

    Probabilities are clamped below 1e-12 before the log so that an
    underflowed softmax cannot produce an infinite loss.
    """
    labels = np.asarray(labels, dtype=np.int64)
    n, c = class_probs.data.shape
    if labels.shape != (n,):
        raise ContractError(f"expected {n} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise ContractError(f"label out of range [0, {c})")
    onehot = np.zeros((n, c))
    onehot[np.arange(n), labels] = 1.0
    picked = T.reduce_sum(T.mul(class_probs, Tensor(onehot)), axis=1)
    return T.log(T.clamp_min(picked, 1e-12)).mean().scale(-1.0)


def fgsm(grad_e: np.ndarray, epsilon: float, direction: str = "ascent") -> Perturbation:
    """Sign perturbation from the loss gradient w.r.t. the embedding matrix.

    "ascent" follows the maximization objective (+epsilon * sign(grad));
    "paper_literal" keeps the opposite sign.  sign(0) = 0, so rows the
    batch never touched stay unperturbed.
    """
    if epsilon < 0:
        raise ConfigError(f"epsilon must be >= 0, got {epsilon}")
    if direction not in FGSM_DIRECTIONS:
        raise ConfigError(f"fgsm direction must be one of {FGSM_DIRECTIONS}")
    sign = np.sign(grad_e)
    r = epsilon * sign if direction == "ascent" else -epsilon * sign
    return Perturbation(r=r)


def nt_xent(z_clean: Tensor, z_adv: Tensor, tau: float) -> Tensor:
    """Contrastive loss over the pooled 2N projections.

    For anchor i with positive partner p, the per-anchor term is
    -log(exp(s_ip / tau) / sum_{k != i} exp(s_ik / tau)) with s the cosine
    similarity; the result is the mean over all 2N anchors.
    """
    if tau <= 0:
        raise ConfigError(f"temperature must be positive, got {tau}")
    n, d = z_clean.data.shape
    if z_adv.data.shape != (n, d):
        raise ContractError(
            f"projection shapes disagree: {z_clean.data.shape} vs {z_adv.data.shape}"
        )
    if n < 1:
        raise ContractError("nt_xent needs at least one pair")

    pool = T.concat([z_clean, z_adv], axis=0)
    norms_sq = T.reduce_sum(T.mul(pool, pool), axis=1, keepdims=True)
    if np.any(norms_sq.data <= 0.0):
        raise DegenerateInputError("nt_xent is undefined for zero-norm projections")
    unit = T.mul(pool, T.power(norms_sq, -0.5))
    logits = T.matmul(unit, T.transpose(unit, (1, 0))).scale(1.0 / tau)

    # self-similarities are excluded by an additive mask whose exponential
    # underflows to exactly zero
    m = 2 * n
    diag_mask = Tensor(np.where(np.eye(m, dtype=bool), NEG_INF, 0.0))
    masked = logits + diag_mask

    row_max = Tensor(masked.data.max(axis=1, keepdims=True))  # constant shift
    lse = T.log(T.reduce_sum(T.exp(masked - row_max), axis=1)) + row_max[:, 0]

    partner = np.concatenate([np.arange(n) + n, np.arange(n)])
    pos_mask = np.zeros((m, m))
    pos_mask[np.arange(m), partner] = 1.0
    positive = T.reduce_sum(T.mul(logits, Tensor(pos_mask)), axis=1)

    return (lse - positive).mean()


def combined_loss(ce_clean, ce_adv, contrastive, lam: float):
    """(1 - lam) / 2 * (ce_clean + ce_adv) + lam * contrastive.

    Works on Tensors (training path) and on plain numbers.  The endpoints
    are exact: lam = 0 gives the mean of the two classification terms and
    lam = 1 gives the contrastive term, bit for bit.
    """
    if not 0.0 <= lam <= 1.0:
        raise ConfigError(f"lambda must be in [0, 1], got {lam}")
    w = (1.0 - lam) / 2.0
    if isinstance(ce_clean, Tensor):
        return T.add(T.add(ce_clean, ce_adv).scale(w), T.scale(contrastive, lam))
    return w * (ce_clean + ce_adv) + lam * contrastive
