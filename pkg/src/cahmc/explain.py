"""Word attribution via integrated gradients and 2-D embedding projection.

Attribution integrates the gradient of the target-class pre-softmax score
along the straight path from a baseline embedding sequence (the PAD row at
every position) to the input embedding sequence, midpoint rule.  The sum
of attributions approximates f(input) - f(baseline); the residual is
reported as the completeness gap, never hidden.  Attributions are computed
on the clean model; the adversarial machinery plays no role here.
"""

from __future__ import annotations

import html as html_lib
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .encoder import ModelConfig, ModelParams, class_logits, encode_from_embeddings
from .errors import ContractError, DegenerateInputError, ShapeMismatchError
from .tensor import Tensor
from .textprep import PAD, TokenizedExample, Vocab


@dataclass
class AttributionResult:
    tokens: list
    scores: list
    predicted_label: int
    true_label: int
    completeness_gap: float
    output_delta: float

    def as_dict(self) -> dict:
        return {
            "tokens": self.tokens,
            "scores": self.scores,
            "predicted_label": self.predicted_label,
            "true_label": self.true_label,
            "completeness_gap": self.completeness_gap,
            "output_delta": self.output_delta,
        }


def path_attributions(f, x: np.ndarray, baseline: np.ndarray, steps: int) -> np.ndarray:
    """Midpoint-rule path integral of grad f from baseline to x.

    ``f`` maps a Tensor of shape [steps, *x.shape] to a Tensor of [steps]
    scores, one per path point, so the whole path runs in a single forward
    and backward pass.  Returns an array shaped like x.
    """
    if steps < 1:
        raise ContractError("steps must be at least 1")
    if x.shape != baseline.shape:
        raise ShapeMismatchError(f"input {x.shape} and baseline {baseline.shape} disagree")
    alphas = (np.arange(steps) + 0.5) / steps
    delta = x - baseline
    points = baseline[None] + alphas.reshape((-1,) + (1,) * x.ndim) * delta[None]
    path = Tensor(points, requires_grad=True)
    scores = f(path)
    if scores.data.shape != (steps,):
        raise ContractError(f"f must return one score per path point, got {scores.data.shape}")
    scores.sum().backward()
    if not np.all(np.isfinite(path.grad)):
        raise DegenerateInputError("non-finite gradient along the attribution path")
    return delta * path.grad.mean(axis=0)


def integrated_gradients(
    params: ModelParams,
    mcfg: ModelConfig,
    example: TokenizedExample,
    vocab: Vocab,
    target_class: int | None = None,
    steps: int = 32,
) -> AttributionResult:
    """Per-token attribution of the target-class pre-softmax score.

    The baseline is the PAD-token embedding at every position.  Scores are
    reported for the non-PAD positions only (PAD positions coincide with
    the baseline and contribute exactly zero).
    """
    ids = np.asarray(example.ids, dtype=np.int64)
    n_tok = example.attention_len
    x_emb = params.embedding.data[ids]
    baseline = np.broadcast_to(params.embedding.data[PAD], x_emb.shape).copy()

    def logits_at(emb_batch: Tensor) -> Tensor:
        n = emb_batch.data.shape[0]
        lens = np.full(n, n_tok, dtype=np.int64)
        return class_logits(params, encode_from_embeddings(params, mcfg, emb_batch, lens))

    # prediction and the two path endpoints in one batch of two
    endpoint_logits = logits_at(Tensor(np.stack([x_emb, baseline]))).data
    predicted = int(np.argmax(endpoint_logits[0]))
    target = predicted if target_class is None else int(target_class)
    if not 0 <= target < mcfg.n_classes:
        raise ContractError(f"target class {target} out of range [0, {mcfg.n_classes})")
    f_x = float(endpoint_logits[0, target])
    f_baseline = float(endpoint_logits[1, target])

    per_element = path_attributions(
        lambda path: logits_at(path)[:, target], x_emb, baseline, steps
    )
    per_token = per_element.sum(axis=-1)

    delta = f_x - f_baseline
    total = float(per_token.sum())
    return AttributionResult(
        tokens=[vocab.token(int(i)) for i in ids[:n_tok]],
        scores=[float(s) for s in per_token[:n_tok]],
        predicted_label=predicted,
        true_label=example.label,
        completeness_gap=abs(total - delta),
        output_delta=delta,
    )


# -- rendering -------------------------------------------------------------


@dataclass
class RenderedAttribution:
    ansi: str
    html: str


def _intensities(scores) -> np.ndarray:
    scores = np.asarray(scores, dtype=np.float64)
    peak = np.abs(scores).max() if scores.size else 0.0
    if peak == 0.0:
        return np.zeros_like(scores)
    return scores / peak


def render_attribution(result: AttributionResult) -> RenderedAttribution:
    """Tokens colored by score sign (green supports, red opposes), intensity
    proportional to |score| / max |score|.  All-zero scores render plain."""
    rel = _intensities(result.scores)
    ansi_parts = []
    html_parts = []
    for token, r in zip(result.tokens, rel):
        if r == 0.0:
            ansi_parts.append(token)
            html_parts.append(f"<span>{html_lib.escape(token)}</span>")
            continue
        strength = abs(r)
        fade = int(255 * (1.0 - strength))
        if r > 0:
            rgb = (fade, 255, fade)
            css = f"rgba(0, 200, 0, {strength:.3f})"
        else:
            rgb = (255, fade, fade)
            css = f"rgba(220, 0, 0, {strength:.3f})"
        ansi_parts.append(f"\x1b[48;2;{rgb[0]};{rgb[1]};{rgb[2]}m\x1b[30m{token}\x1b[0m")
        html_parts.append(
            f'<span style="background-color: {css}">{html_lib.escape(token)}</span>'
        )
    return RenderedAttribution(ansi=" ".join(ansi_parts), html=" ".join(html_parts))


def attribution_page(rendered, title: str = "word attributions") -> str:
    """Standalone HTML page wrapping one rendering per line."""
    body = "<br>\n".join(f"<p>{r.html}</p>" for r in rendered)
    return (
        "<!doctype html>\n<html><head><meta charset=\"utf-8\">"
        f"<title>{html_lib.escape(title)}</title></head>\n"
        f"<body style=\"font-family: monospace\">\n{body}\n</body></html>\n"
    )


# -- 2-D projection ----------------------------------------------------------


def project_2d(vectors: np.ndarray) -> np.ndarray:
    """Principal-component projection onto the top-2 variance directions.

    Mean-centered SVD with a deterministic sign convention: each component
    has its largest-magnitude loading positive.  Deterministic and
    seed-free.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2 or vectors.shape[0] < 2:
        raise ContractError(f"project_2d needs an [N >= 2, d] matrix, got {vectors.shape}")
    if vectors.shape[1] < 2:
        raise ShapeMismatchError("project_2d needs at least 2 feature dimensions")
    centered = vectors - vectors.mean(axis=0, keepdims=True)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    components = vt[:2]
    for i in range(2):
        j = int(np.argmax(np.abs(components[i])))
        if components[i, j] < 0:
            components[i] = -components[i]
    return centered @ components.T
