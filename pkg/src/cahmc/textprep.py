"""Deterministic tweet preprocessing and word-level tokenization.

The pipeline is: transliterate emojis to underscore-joined names, then strip
user mentions, URLs, hashtag markers and any character outside
``[a-z0-9_' ]`` after lowercasing.  Emoji names survive the stripping step
because they are plain lowercase word characters, so they become ordinary
tokens of the text.  The pipeline is idempotent on its own output.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .errors import ContractError, CorpusError

_NAME_RE = re.compile(r"[a-z0-9_]+$")

# Codepoint ranges treated as emoji when removing symbols that are not in
# the transliteration table.  Covers the emoticon/symbol/pictograph blocks
# plus ZWJ, variation selectors and the combining keycap.
_EMOJI_RANGES = (
    (0x1F000, 0x1FAFF),
    (0x2600, 0x27BF),
    (0x2B00, 0x2BFF),
    (0xFE00, 0xFE0F),
    (0x200D, 0x200D),
    (0x20E3, 0x20E3),
)


def _is_emoji_char(ch: str) -> bool:
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in _EMOJI_RANGES)


@dataclass(frozen=True)
class EmojiTable:
    """Map from emoji codepoint sequence to a lowercase underscore name."""

    mapping: dict

    def __post_init__(self):
        for emoji, name in self.mapping.items():
            if not emoji:
                raise ContractError("emoji table has an empty key")
            if not name or not _NAME_RE.match(name):
                raise ContractError(
                    f"emoji name {name!r} must be nonempty and match [a-z0-9_]+"
                )

    def pattern(self) -> re.Pattern:
        # longest sequences first so multi-codepoint emojis win over prefixes
        keys = sorted(self.mapping, key=len, reverse=True)
        return re.compile("|".join(re.escape(k) for k in keys))


def load_emoji_table(path) -> EmojiTable:
    """Read a tab-separated "emoji<TAB>name" file (UTF-8, one per line)."""
    mapping = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise CorpusError(f"{path}:{lineno}: expected 'emoji<TAB>name'")
            if parts[0] in mapping:
                raise CorpusError(f"{path}:{lineno}: duplicate emoji key")
            mapping[parts[0]] = parts[1]
    return EmojiTable(mapping)


def default_emoji_table() -> EmojiTable:
    """The ~60-entry table shipped with the package."""
    ref = resources.files("cahmc").joinpath("data/emoji_table.tsv")
    with resources.as_file(ref) as path:
        return load_emoji_table(path)


def transliterate_emojis(text: str, table: EmojiTable) -> str:
    """Replace known emojis with " name "; drop unknown emoji characters.

    All other characters pass through unchanged; no whitespace cleanup
    happens here.
    """
    if table.mapping:
        text = table.pattern().sub(lambda m: f" {table.mapping[m.group(0)]} ", text)
    return "".join(ch for ch in text if not _is_emoji_char(ch))


def strip_entities(text: str) -> str:
    """Drop mentions and URLs, unwrap hashtags, keep only [a-z0-9_' ].

    Tokens (whitespace-delimited) starting with "@" or with "http://",
    "https://" or "www." are removed whole; a leading "#" is removed but the
    hashtag word kept.  The remainder is lowercased, characters outside
    [a-z0-9_' ] are dropped, and whitespace is collapsed to single spaces.
    """
    kept = []
    for token in text.split():
        if token.startswith("@"):
            continue
        lowered = token.lower()
        if lowered.startswith(("http://", "https://", "www.")):
            continue
        word = re.sub(r"[^a-z0-9_' ]", "", lowered.lstrip("#"))
        if word:
            kept.append(word)
    return " ".join(kept)


def preprocess(text: str, table: EmojiTable | None = None) -> str:
    """Full pipeline: transliterate emojis, then strip entities."""
    if table is None:
        table = default_emoji_table()
    return strip_entities(transliterate_emojis(text, table))


# -- vocabulary and encoding ---------------------------------------------

PAD, UNK, CLS, SEP = 0, 1, 2, 3
RESERVED_TOKENS = ("[PAD]", "[UNK]", "[CLS]", "[SEP]")


class Vocab:
    """Bijective token <-> id map with four reserved leading ids."""

    def __init__(self, tokens):
        tokens = list(tokens)
        if tuple(tokens[:4]) != RESERVED_TOKENS:
            raise ContractError(f"vocab must start with {RESERVED_TOKENS}")
        self.tokens = tokens
        self.index = {t: i for i, t in enumerate(tokens)}
        if len(self.index) != len(tokens):
            raise ContractError("vocab contains duplicate tokens")

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.index

    def id(self, token: str) -> int:
        return self.index.get(token, UNK)

    def token(self, idx: int) -> str:
        return self.tokens[idx]

    def save(self, path):
        """One token per line; the line number is the id."""
        with open(path, "w", encoding="utf-8") as fh:
            for token in self.tokens:
                fh.write(token + "\n")

    @classmethod
    def load(cls, path) -> "Vocab":
        with open(path, encoding="utf-8") as fh:
            return cls([line.rstrip("\n") for line in fh if line != "\n"])


def build_vocab(corpus, min_count: int = 1) -> Vocab:
    """Frequency vocabulary over whitespace tokens of preprocessed texts.

    Tokens with count >= min_count are ordered by descending count, ties
    broken lexicographically, after the four reserved ids.
    """
    counts: dict = {}
    for text in corpus:
        for token in text.split():
            counts[token] = counts.get(token, 0) + 1
    if not counts:
        raise ContractError("cannot build a vocabulary from an empty corpus")
    admitted = sorted(
        (t for t, c in counts.items() if c >= min_count),
        key=lambda t: (-counts[t], t),
    )
    return Vocab(list(RESERVED_TOKENS) + admitted)


@dataclass
class TokenizedExample:
    """Fixed-length token ids plus label and disease tag.

    ids[0] is CLS; SEP sits at position attention_len - 1; every position
    at or beyond attention_len is PAD.
    """

    ids: np.ndarray
    attention_len: int
    label: int
    disease: str

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64)
        if self.ids[0] != CLS:
            raise ContractError("tokenized example must start with CLS")
        if self.ids[self.attention_len - 1] != SEP:
            raise ContractError("SEP must sit at position attention_len - 1")


def encode(text: str, vocab: Vocab, max_len: int) -> np.ndarray:
    """[CLS] + first (max_len - 2) tokens + [SEP], PAD-filled to max_len."""
    if max_len < 3:
        raise ContractError("max_len must be at least 3")
    ids = [CLS]
    for token in text.split()[: max_len - 2]:
        ids.append(vocab.id(token))
    ids.append(SEP)
    ids.extend([PAD] * (max_len - len(ids)))
    return np.asarray(ids, dtype=np.int64)


def attention_length(ids: np.ndarray) -> int:
    """Count of non-PAD positions in an encoded sequence."""
    return int(np.sum(np.asarray(ids) != PAD))
