import numpy as np
import pytest

from cahmc.encoder import ModelConfig
from cahmc.textprep import CLS, PAD, SEP, TokenizedExample


def tiny_model_config(**overrides):
    base = dict(d_v=10, d_h=8, n_layers=2, n_heads=2, d_ff=16, max_len=6, n_classes=2, d_proj=4)
    base.update(overrides)
    return ModelConfig(**base)


def token_example(word_ids, max_len, label, disease="synthetic"):
    ids = [CLS] + list(word_ids) + [SEP]
    ids += [PAD] * (max_len - len(ids))
    return TokenizedExample(
        ids=np.array(ids, dtype=np.int64),
        attention_len=len(word_ids) + 2,
        label=label,
        disease=disease,
    )


def separable_dataset(cfg, n_per_class=16, seed=0):
    """Two linearly separable classes: class 0 draws words from {4, 5},
    class 1 from {6, 7}."""
    rng = np.random.default_rng(seed)
    examples = []
    for label, pool in ((0, (4, 5)), (1, (6, 7))):
        for _ in range(n_per_class):
            k = int(rng.integers(1, cfg.max_len - 1))
            words = rng.choice(pool, size=k)
            examples.append(token_example(words, cfg.max_len, label))
    order = rng.permutation(len(examples))
    return [examples[i] for i in order]


@pytest.fixture
def tiny_cfg():
    return tiny_model_config()
