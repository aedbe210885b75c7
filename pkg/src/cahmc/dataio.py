"""Corpus ingestion, stratified splitting, statistics and synthesis.

Corpus file format: UTF-8, one record per line, three tab-separated fields
``text<TAB>label<TAB>disease``.  Inside the text field, backslash, tab and
newline are escaped as ``\\\\``, ``\\t`` and ``\\n`` so records stay one
per line.  The writer is canonical (fixed field order), so loading and
re-serializing a corpus is byte-identical.

The real tweet text behind the published statistics is not redistributable,
so a deterministic template generator produces desk-scale stand-ins with
the same label proportions, disease vocabulary and preprocessing hazards
(emojis, mentions, URLs, hashtags).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractError, CorpusError
from .textprep import EmojiTable, Vocab, TokenizedExample, attention_length, default_emoji_table, encode, preprocess

LABELS = ("health_mention", "non_health_mention", "figurative_mention")

DISEASES = (
    "alzheimers",
    "cancer",
    "cough",
    "depression",
    "fever",
    "headache",
    "heart_attack",
    "migraine",
    "parkinsons",
    "stroke",
)

# Published per-disease counts of the extended PHM2017 corpus:
# disease -> (health, non-health, figurative).  Totals: 15,742 tweets,
# 4,228 / 7,322 / 4,192 per label.
PHM2017_EXTENDED_COUNTS = {
    "alzheimers": (249, 1374, 92),
    "cancer": (302, 1239, 150),
    "cough": (331, 433, 688),
    "depression": (517, 711, 351),
    "fever": (517, 342, 625),
    "headache": (791, 112, 526),
    "heart_attack": (209, 349, 1060),
    "migraine": (904, 400, 215),
    "parkinsons": (153, 1362, 53),
    "stroke": (255, 1000, 432),
}


@dataclass
class Example:
    raw_text: str
    label: str
    disease: str

    def __post_init__(self):
        if not self.raw_text:
            raise ContractError("example text must be nonempty")
        if self.label not in LABELS:
            raise ContractError(f"unknown label {self.label!r}")
        if self.disease not in DISEASES and self.disease != "synthetic":
            raise ContractError(f"unknown disease {self.disease!r}")


@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.65
    val: float = 0.15
    test: float = 0.20
    seed: int = 0
    stratify_by_disease: bool = True

    def __post_init__(self):
        fractions = (self.train, self.val, self.test)
        if any(f <= 0 for f in fractions):
            raise ConfigError("split fractions must be positive")
        if abs(sum(fractions) - 1.0) > 1e-9:
            raise ConfigError(f"split fractions must sum to 1, got {fractions}")


def _escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace("\t", "\\t").replace("\n", "\\n")


def _unescape(text: str) -> str:
    out = []
    it = iter(range(len(text)))
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "\\" and i + 1 < len(text):
            nxt = text[i + 1]
            out.append({"\\": "\\", "t": "\t", "n": "\n"}.get(nxt, "\\" + nxt))
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def save_corpus(path, examples):
    """Canonical writer: text, label, disease, tab-separated, one per line."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ex in examples:
            fh.write(f"{_escape(ex.raw_text)}\t{ex.label}\t{ex.disease}\n")


def load_corpus(path):
    """Parse a corpus file; abort if more than 10% of lines are malformed.

    Returns (examples, error_report) where error_report lists
    (line_number, message) for rejected lines.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().split("\n")
    except OSError as exc:
        raise CorpusError(f"cannot read corpus {path}: {exc}") from exc
    if lines and lines[-1] == "":
        lines.pop()

    examples = []
    errors = []
    for lineno, line in enumerate(lines, start=1):
        parts = line.split("\t")
        if len(parts) != 3:
            errors.append((lineno, f"expected 3 tab-separated fields, got {len(parts)}"))
            continue
        text, label, disease = _unescape(parts[0]), parts[1], parts[2]
        try:
            examples.append(Example(raw_text=text, label=label, disease=disease))
        except ContractError as exc:
            errors.append((lineno, str(exc)))
    total = len(lines)
    if total and len(errors) > 0.10 * total:
        preview = "; ".join(f"line {n}: {m}" for n, m in errors[:5])
        raise CorpusError(
            f"{len(errors)} of {total} lines malformed (> 10%): {preview}"
        )
    return examples, errors


def stratified_split(examples, spec: SplitSpec):
    """Per-stratum shuffled split: train floor(f_train * n), val
    floor(f_val * n), test the remainder, within every stratum."""
    if not examples:
        raise ContractError("cannot split an empty dataset")
    strata: dict = {}
    for ex in examples:
        key = (ex.label, ex.disease) if spec.stratify_by_disease else (ex.label,)
        strata.setdefault(key, []).append(ex)

    rng = np.random.default_rng(spec.seed)
    train, val, test = [], [], []
    for key in sorted(strata):
        members = strata[key]
        order = rng.permutation(len(members))
        n = len(members)
        n_train = int(np.floor(spec.train * n))
        n_val = int(np.floor(spec.val * n))
        for rank, idx in enumerate(order):
            if rank < n_train:
                train.append(members[idx])
            elif rank < n_train + n_val:
                val.append(members[idx])
            else:
                test.append(members[idx])
    for part in (train, val, test):
        rng.shuffle(part)
    return train, val, test


def label_map(example: Example, scheme: str = "binary") -> int:
    """binary: health_mention -> 1, everything else -> 0 (the figurative
    class counts as negative); three_class: stable id per label."""
    if scheme == "binary":
        return 1 if example.label == "health_mention" else 0
    if scheme == "three_class":
        return LABELS.index(example.label)
    raise ConfigError(f"unknown label scheme {scheme!r}")


def n_classes_for(scheme: str) -> int:
    return {"binary": 2, "three_class": 3}[scheme]


# -- synthetic corpus ------------------------------------------------------

_DISEASE_TEXT = {
    "alzheimers": "alzheimers",
    "cancer": "cancer",
    "cough": "cough",
    "depression": "depression",
    "fever": "fever",
    "headache": "headache",
    "heart_attack": "heart attack",
    "migraine": "migraine",
    "parkinsons": "parkinsons",
    "stroke": "stroke",
}

_HEALTH_TEMPLATES = (
    "i have been fighting this {d} since monday {e}",
    "my {d} flared up again and i feel awful {e}",
    "stuck in bed all day with a terrible {d} {e}",
    "the doctor confirmed it is {d} starting treatment this week",
    "cant sleep at all this {d} is killing me {e}",
    "been suffering from {d} for three days now",
    "this {d} medication makes me so drowsy {e}",
    "my {d} got worse so mom is taking me to the hospital {e}",
    "woke up with {d} again third time this week {e}",
    "the {d} pain is unbearable i need my pills {e}",
)

_FIGURATIVE_TEMPLATES = (
    "this homework is giving me a {d} lol {e}",
    "my team played so bad they are a walking {d} {e}",
    "monday mornings are basically a {d} {e}",
    "that plot twist nearly gave me a {d} {e}",
    "slow wifi is pure {d} i swear {e}",
    "her singing cured my {d} no joke {e}",
    "this traffic jam is a {d} waiting to happen {e}",
    "watching this show gives me second hand {d} {e}",
    "the price of coffee these days almost gave me a {d}",
    "group projects are my {d} honestly {e}",
)

_NONHEALTH_TEMPLATES = (
    "new study on {d} published in the journal today",
    "the {d} awareness walk raises record funds {e}",
    "local lab announces progress on {d} research",
    "conference on {d} prevention opens downtown this weekend",
    "the documentary about {d} survivors wins an award {e}",
    "city council approves funding for {d} screening program",
    "volunteers sought for {d} clinical trial enrollment",
    "professor gives a lecture on {d} risk factors",
    "charity sells wristbands to support {d} patients {e}",
    "health department shares updated {d} statistics",
)

_HEALTH_EMOJIS = ("\U0001f637", "\U0001f912", "\U0001f915", "\U0001f62d", "\U0001f62b", "\U0001f629", "\U0001f48a", "\U0001f3e5", "\U0001f927", "\U0001f622")
_FIGURATIVE_EMOJIS = ("\U0001f602", "\U0001f923", "\U0001f605", "\U0001f480", "\U0001f525", "\U0001f609", "\U0001f643", "\U0001f644")
_NONHEALTH_EMOJIS = ("\u2728", "\U0001f4af", "\u2705", "\U0001f64f", "\U0001f4c8")

_HANDLES = ("friend", "newsbot", "user42", "doc_smith", "health_desk")
_HASHTAGS = ("#health", "#news", "#mood", "#monday", "#research")

_TEMPLATE_POOLS = {
    "health_mention": (_HEALTH_TEMPLATES, _HEALTH_EMOJIS),
    "non_health_mention": (_NONHEALTH_TEMPLATES, _NONHEALTH_EMOJIS),
    "figurative_mention": (_FIGURATIVE_TEMPLATES, _FIGURATIVE_EMOJIS),
}

# label proportions follow the published totals: 4228 / 7322 / 4192 of 15742
_LABEL_WEIGHTS = (4228, 7322, 4192)


def _apportion(n: int, weights) -> list:
    """Largest-remainder apportionment of n into len(weights) counts."""
    total = float(sum(weights))
    quotas = [n * w / total for w in weights]
    counts = [int(np.floor(q)) for q in quotas]
    remainders = sorted(
        range(len(weights)), key=lambda i: (-(quotas[i] - counts[i]), i)
    )
    for i in remainders[: n - sum(counts)]:
        counts[i] += 1
    return counts


def synthesize_corpus(n: int, seed: int, vocab_spec: dict | None = None):
    """Deterministic templated corpus with published label proportions.

    ``vocab_spec`` may override the word pools: recognized keys are
    "diseases" (tag -> surface text), "templates" (label -> tuple of
    templates) and "emojis" (label -> tuple of emoji strings).  Some texts
    carry mentions, URLs or hashtags so the preprocessing pipeline gets
    exercised; every text survives preprocessing with at least one token.
    """
    if n < 2:
        raise ContractError("synthesize_corpus needs n >= 2")
    vocab_spec = vocab_spec or {}
    diseases = vocab_spec.get("diseases", _DISEASE_TEXT)
    rng = np.random.default_rng(seed)

    labels = []
    for label, count in zip(LABELS, _apportion(n, _LABEL_WEIGHTS)):
        labels.extend([label] * count)
    labels = [labels[i] for i in rng.permutation(n)]

    disease_tags = list(diseases)
    examples = []
    for label in labels:
        templates, emojis = _TEMPLATE_POOLS[label]
        templates = vocab_spec.get("templates", {}).get(label, templates)
        emojis = vocab_spec.get("emojis", {}).get(label, emojis)
        tag = disease_tags[rng.integers(len(disease_tags))]
        template = templates[rng.integers(len(templates))]
        emoji = emojis[rng.integers(len(emojis))] if rng.random() < 0.7 else ""
        text = template.format(d=diseases[tag], e=emoji).strip()
        roll = rng.random()
        if roll < 0.15:
            text = f"@{_HANDLES[rng.integers(len(_HANDLES))]} {text}"
        elif roll < 0.25:
            text = f"{text} http://t.co/{rng.integers(10000):04d}"
        elif roll < 0.35:
            text = f"{text} {_HASHTAGS[rng.integers(len(_HASHTAGS))]}"
        examples.append(Example(raw_text=text, label=label, disease=tag))
    return examples


def synthesize_from_counts(counts: dict, seed: int = 0):
    """Stand-in corpus with exactly the given (disease -> per-label) counts.

    Useful for reproducing published dataset arithmetic without the
    original text; row order is shuffled deterministically.
    """
    rng = np.random.default_rng(seed)
    examples = []
    for disease in sorted(counts):
        per_label = counts[disease]
        for label, count in zip(LABELS, per_label):
            templates, emojis = _TEMPLATE_POOLS[label]
            for _ in range(count):
                template = templates[rng.integers(len(templates))]
                emoji = emojis[rng.integers(len(emojis))]
                text = template.format(d=_DISEASE_TEXT.get(disease, disease), e=emoji).strip()
                examples.append(Example(raw_text=text, label=label, disease=disease))
    return [examples[i] for i in np.random.default_rng(seed).permutation(len(examples))]


def dataset_stats(examples) -> dict:
    """Counts per (disease, label) plus row and column totals."""
    rows: dict = {}
    for ex in examples:
        row = rows.setdefault(ex.disease, dict.fromkeys(LABELS, 0))
        row[ex.label] += 1
    totals = dict.fromkeys(LABELS, 0)
    for row in rows.values():
        for label in LABELS:
            totals[label] += row[label]
    return {
        "per_disease": rows,
        "totals": totals,
        "total": sum(totals.values()),
    }


def format_stats_table(stats: dict) -> str:
    """Aligned text table: one row per disease, one column per label."""
    headers = ("disease", "total") + LABELS
    lines = ["  ".join(f"{h:>20}" if i else f"{h:<14}" for i, h in enumerate(headers))]
    for disease in sorted(stats["per_disease"]):
        row = stats["per_disease"][disease]
        cells = [f"{disease:<14}", f"{sum(row.values()):>20}"]
        cells += [f"{row[label]:>20}" for label in LABELS]
        lines.append("  ".join(cells))
    totals = stats["totals"]
    cells = [f"{'total':<14}", f"{stats['total']:>20}"]
    cells += [f"{totals[label]:>20}" for label in LABELS]
    lines.append("  ".join(cells))
    return "\n".join(lines)


def prepare_examples(
    examples,
    vocab: Vocab,
    max_len: int,
    scheme: str = "binary",
    table: EmojiTable | None = None,
):
    """Preprocess, encode and label a list of Example into TokenizedExample."""
    if table is None:
        table = default_emoji_table()
    prepared = []
    for ex in examples:
        ids = encode(preprocess(ex.raw_text, table), vocab, max_len)
        prepared.append(
            TokenizedExample(
                ids=ids,
                attention_len=attention_length(ids),
                label=label_map(ex, scheme),
                disease=ex.disease,
            )
        )
    return prepared
