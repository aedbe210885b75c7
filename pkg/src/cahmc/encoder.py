"""Small pre-norm transformer encoder with CLS pooling and two heads.

Token ids gather rows of the embedding matrix, learned positional
embeddings are added, and the sequence passes through pre-norm blocks
(attention and feedforward, each behind a layer norm, with residual
connections) followed by a final layer norm.  The classifier head reads
the position-0 representation; a two-layer projection head maps it to the
space where the contrastive loss is computed.

PAD positions are masked out of attention with a large negative additive
constant whose exponential underflows to exactly zero, so changing the
content of PAD positions can never change the CLS representation.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import tensor as T
from .errors import ConfigError, ContractError
from .tensor import NEG_INF, Tensor

CHECKPOINT_MAGIC = b"cahmc-checkpoint-v1\n"


@dataclass(frozen=True)
class ModelConfig:
    d_v: int
    d_h: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 128
    max_len: int = 64
    n_classes: int = 2
    d_proj: int = 32
    dropout: float = 0.0

    def __post_init__(self):
        for name in ("d_v", "d_h", "n_layers", "n_heads", "d_ff", "max_len", "n_classes", "d_proj"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.d_h % self.n_heads:
            raise ConfigError(f"d_h={self.d_h} is not divisible by n_heads={self.n_heads}")
        if self.d_proj > self.d_h:
            raise ConfigError(f"d_proj={self.d_proj} must not exceed d_h={self.d_h}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must be in [0, 1)")


@dataclass
class LayerParams:
    wq: Tensor
    bq: Tensor
    wk: Tensor
    bk: Tensor
    wv: Tensor
    bv: Tensor
    wo: Tensor
    bo: Tensor
    ln1_gain: Tensor
    ln1_bias: Tensor
    ln2_gain: Tensor
    ln2_bias: Tensor
    ffn_w1: Tensor
    ffn_b1: Tensor
    ffn_w2: Tensor
    ffn_b2: Tensor


@dataclass
class ModelParams:
    embedding: Tensor
    positional: Tensor
    layers: list
    final_gain: Tensor
    final_bias: Tensor
    classifier_w: Tensor
    classifier_b: Tensor
    proj_w1: Tensor
    proj_b1: Tensor
    proj_w2: Tensor
    proj_b2: Tensor

    def named(self) -> dict:
        """Stable name -> Tensor map covering every trainable parameter."""
        out = {"embedding": self.embedding, "positional": self.positional}
        for i, lp in enumerate(self.layers):
            for f in fields(LayerParams):
                out[f"layer{i}.{f.name}"] = getattr(lp, f.name)
        for name in (
            "final_gain",
            "final_bias",
            "classifier_w",
            "classifier_b",
            "proj_w1",
            "proj_b1",
            "proj_w2",
            "proj_b2",
        ):
            out[name] = getattr(self, name)
        return out

    def copy(self) -> "ModelParams":
        """Deep copy with fresh data arrays and cleared gradients."""
        named = {k: Tensor(t.data.copy(), requires_grad=True) for k, t in self.named().items()}
        return ModelParams.from_named(len(self.layers), named)

    @classmethod
    def from_named(cls, n_layers: int, named: dict) -> "ModelParams":
        layers = [
            LayerParams(**{f.name: named[f"layer{i}.{f.name}"] for f in fields(LayerParams)})
            for i in range(n_layers)
        ]
        return cls(
            embedding=named["embedding"],
            positional=named["positional"],
            layers=layers,
            final_gain=named["final_gain"],
            final_bias=named["final_bias"],
            classifier_w=named["classifier_w"],
            classifier_b=named["classifier_b"],
            proj_w1=named["proj_w1"],
            proj_b1=named["proj_b1"],
            proj_w2=named["proj_w2"],
            proj_b2=named["proj_b2"],
        )


EMBEDDING_INIT_STD = 0.02


def init_params(cfg: ModelConfig, seed: int) -> ModelParams:
    """Deterministic initialization: uniform zero-mean linear weights with
    standard deviation 1/sqrt(fan_in), zero biases, unit layer-norm gains.

    The embedding and positional lookup tables use the fixed small scale
    (std 0.02) conventional for transformer embedding tables; it also keeps
    the ratio of the sign-perturbation magnitude to embedding row norms in
    the same regime as the full-scale models this mirrors.
    """
    rng = np.random.default_rng(seed)
    bound = math.sqrt(3.0)

    def weight(fan_in, *shape):
        return Tensor(
            rng.uniform(-bound, bound, shape) / math.sqrt(fan_in), requires_grad=True
        )

    def table(*shape):
        return Tensor(
            rng.uniform(-bound, bound, shape) * EMBEDDING_INIT_STD, requires_grad=True
        )

    def zeros(*shape):
        return Tensor(np.zeros(shape), requires_grad=True)

    def ones(*shape):
        return Tensor(np.ones(shape), requires_grad=True)

    d = cfg.d_h
    layers = []
    embedding = table(cfg.d_v, d)
    positional = table(cfg.max_len, d)
    for _ in range(cfg.n_layers):
        layers.append(
            LayerParams(
                wq=weight(d, d, d),
                bq=zeros(d),
                wk=weight(d, d, d),
                bk=zeros(d),
                wv=weight(d, d, d),
                bv=zeros(d),
                wo=weight(d, d, d),
                bo=zeros(d),
                ln1_gain=ones(d),
                ln1_bias=zeros(d),
                ln2_gain=ones(d),
                ln2_bias=zeros(d),
                ffn_w1=weight(d, d, cfg.d_ff),
                ffn_b1=zeros(cfg.d_ff),
                ffn_w2=weight(cfg.d_ff, cfg.d_ff, d),
                ffn_b2=zeros(d),
            )
        )
    return ModelParams(
        embedding=embedding,
        positional=positional,
        layers=layers,
        final_gain=ones(d),
        final_bias=zeros(d),
        classifier_w=weight(d, d, cfg.n_classes),
        classifier_b=zeros(cfg.n_classes),
        proj_w1=weight(d, d, d),
        proj_b1=zeros(d),
        proj_w2=weight(d, d, cfg.d_proj),
        proj_b2=zeros(cfg.d_proj),
    )


def attention_mask(attention_lens, seq_len: int) -> Tensor:
    """Additive [N, 1, 1, T] mask: 0 on real positions, NEG_INF on PAD keys."""
    lens = np.asarray(attention_lens, dtype=np.int64)
    pad = np.arange(seq_len)[None, :] >= lens[:, None]
    return Tensor(np.where(pad, NEG_INF, 0.0)[:, None, None, :])


def _attention(lp: LayerParams, cfg: ModelConfig, x: Tensor, mask: Tensor) -> Tensor:
    n, t, d = x.data.shape
    h, dk = cfg.n_heads, d // cfg.n_heads

    def heads(m):
        return T.transpose(T.reshape(m, (n, t, h, dk)), (0, 2, 1, 3))

    q = heads(T.matmul(x, lp.wq) + lp.bq)
    k = heads(T.matmul(x, lp.wk) + lp.bk)
    v = heads(T.matmul(x, lp.wv) + lp.bv)
    scores = T.matmul(q, T.transpose(k, (0, 1, 3, 2))).scale(1.0 / math.sqrt(dk))
    weights = T.softmax(scores + mask, axis=-1)
    ctx = T.reshape(T.transpose(T.matmul(weights, v), (0, 2, 1, 3)), (n, t, d))
    return T.matmul(ctx, lp.wo) + lp.bo


def _feedforward(lp: LayerParams, x: Tensor) -> Tensor:
    return T.matmul(T.gelu(T.matmul(x, lp.ffn_w1) + lp.ffn_b1), lp.ffn_w2) + lp.ffn_b2


def encode_from_embeddings(
    params: ModelParams,
    cfg: ModelConfig,
    emb: Tensor,
    attention_lens,
    dropout_rng=None,
) -> Tensor:
    """Run the encoder stack on an already-gathered [N, T, d_h] embedding."""
    n, t, _ = emb.data.shape
    pos = T.gather(params.positional, np.arange(t))
    x = emb + pos
    mask = attention_mask(attention_lens, t)
    use_dropout = cfg.dropout > 0.0 and dropout_rng is not None
    for lp in params.layers:
        a = _attention(lp, cfg, T.layer_norm(x, lp.ln1_gain, lp.ln1_bias), mask)
        if use_dropout:
            a = T.dropout(a, cfg.dropout, dropout_rng)
        x = x + a
        f = _feedforward(lp, T.layer_norm(x, lp.ln2_gain, lp.ln2_bias))
        if use_dropout:
            f = T.dropout(f, cfg.dropout, dropout_rng)
        x = x + f
    x = T.layer_norm(x, params.final_gain, params.final_bias)
    return x[:, 0, :]


def class_logits(params: ModelParams, h_cls: Tensor) -> Tensor:
    return T.matmul(h_cls, params.classifier_w) + params.classifier_b


def forward(
    params: ModelParams,
    cfg: ModelConfig,
    ids,
    attention_lens,
    dropout_rng=None,
):
    """Token ids -> (h_cls [N, d_h], class_probs [N, n_classes])."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim != 2 or ids.shape[1] != cfg.max_len:
        raise ContractError(
            f"ids must be [N, {cfg.max_len}], got {ids.shape}"
        )
    emb = T.gather(params.embedding, ids)
    h_cls = encode_from_embeddings(params, cfg, emb, attention_lens, dropout_rng)
    return h_cls, T.softmax(class_logits(params, h_cls), axis=-1)


def project(params: ModelParams, h_cls: Tensor) -> Tensor:
    """Two-layer projection head (linear, relu, linear); output unnormalized."""
    hidden = T.relu(T.matmul(h_cls, params.proj_w1) + params.proj_b1)
    return T.matmul(hidden, params.proj_w2) + params.proj_b2


# -- checkpoint file format ------------------------------------------------
#
#   line 1   magic: "cahmc-checkpoint-v1\n"
#   line 2   JSON header: {"config": {...ModelConfig fields...},
#                          "vocab": [token, ...],
#                          "meta": {...},
#                          "params": [{"name": str, "shape": [int, ...]}, ...]}
#   then     the parameter arrays in listed order, each as row-major
#            little-endian float64 bytes with no separators.
#
# The header's "params" list fixes both order and shapes, so the file is
# fully self-describing and stable across versions.


def save_checkpoint(path, cfg: ModelConfig, params: ModelParams, vocab_tokens, meta=None):
    named = params.named()
    manifest = [
        {"name": name, "shape": list(t.data.shape)} for name, t in named.items()
    ]
    header = {
        "config": asdict(cfg),
        "vocab": list(vocab_tokens),
        "meta": meta or {},
        "params": manifest,
    }
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        for name, _ in ((m["name"], m) for m in manifest):
            fh.write(np.ascontiguousarray(named[name].data, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Returns (cfg, params, vocab_tokens, meta)."""
    with open(path, "rb") as fh:
        magic = fh.readline()
        if magic != CHECKPOINT_MAGIC:
            raise ContractError(f"{path} is not a checkpoint file")
        header = json.loads(fh.readline().decode("utf-8"))
        cfg = ModelConfig(**header["config"])
        named = {}
        for entry in header["params"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(count * 8)
            arr = np.frombuffer(buf, dtype="<f8").reshape(shape).astype(np.float64)
            named[entry["name"]] = Tensor(arr, requires_grad=True)
    params = ModelParams.from_named(cfg.n_layers, named)
    return cfg, params, header["vocab"], header["meta"]
