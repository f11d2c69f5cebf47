"""Dataset records, JSONL ingestion, vocabulary and synthetic corpora.

The JSONL schema is one record per line:

    {"sentence_id": "...", "text": "...",
     "tokens": [[text, char_start, char_end], ...],
     "aspects": [{"s": 0, "e": 1, "label": "positive",
                  "gold_opinions": [[s, e], ...]}, ...]}

`gold_opinions` may be absent (no annotation), or an explicit empty list
(annotated as having no opinion term; these drive the dummy-opinion
metric). Char offsets are stored at ingestion so char-overlap metrics
never need to re-tokenize.
"""
from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .encoder import Token, tokenize
from .errors import ContractError, DataError
from .labels import SentimentLabel

logger = logging.getLogger(__name__)

PAD_ID = 0
UNK_ID = 1
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"


@dataclass(frozen=True)
class AspectInstance:
    start: int
    end: int
    label: SentimentLabel
    gold_opinions: tuple[tuple[int, int], ...] | None = None

    @property
    def span(self) -> tuple[int, int]:
        return (self.start, self.end)


@dataclass(frozen=True)
class DatasetRecord:
    sentence_id: str
    text: str
    tokens: tuple[Token, ...]
    aspects: tuple[AspectInstance, ...]

    @property
    def n_tokens(self) -> int:
        return len(self.tokens)

    def token_texts(self) -> list[str]:
        return [t.text for t in self.tokens]

    def span_text(self, span: tuple[int, int]) -> str:
        return " ".join(t.text for t in self.tokens[span[0] : span[1] + 1])

    def span_chars(self, span: tuple[int, int]) -> tuple[int, int]:
        """Half-open char interval covered by a token span."""
        return (self.tokens[span[0]].start, self.tokens[span[1]].end)


def _validate_record(record: DatasetRecord) -> None:
    n = record.n_tokens
    if n == 0:
        raise DataError(f"record {record.sentence_id!r} has no tokens")
    prev_end = 0
    for i, tok in enumerate(record.tokens):
        if not (0 <= tok.start < tok.end <= len(record.text)):
            raise DataError(f"record {record.sentence_id!r}: token {i} offsets out of bounds")
        if tok.start < prev_end:
            raise DataError(f"record {record.sentence_id!r}: token {i} overlaps its predecessor")
        if record.text[tok.start : tok.end].lower() != tok.text:
            raise DataError(
                f"record {record.sentence_id!r}: token {i} text {tok.text!r} does not match "
                f"chars [{tok.start}, {tok.end})"
            )
        prev_end = tok.end
    for a_idx, aspect in enumerate(record.aspects):
        if not (0 <= aspect.start <= aspect.end < n):
            raise DataError(
                f"record {record.sentence_id!r}: aspect {a_idx} span "
                f"({aspect.start}, {aspect.end}) invalid for {n} tokens"
            )
        if aspect.gold_opinions is None:
            continue
        for o_idx, (s, e) in enumerate(aspect.gold_opinions):
            if not (0 <= s <= e < n):
                raise DataError(
                    f"record {record.sentence_id!r}: aspect {a_idx} gold opinion {o_idx} "
                    f"span ({s}, {e}) invalid for {n} tokens"
                )
            if not (e < aspect.start or s > aspect.end):
                raise DataError(
                    f"record {record.sentence_id!r}: gold opinion ({s}, {e}) overlaps "
                    f"aspect ({aspect.start}, {aspect.end})"
                )


def record_from_json(obj: dict, where: str = "") -> DatasetRecord:
    try:
        tokens = tuple(Token(t[0], int(t[1]), int(t[2])) for t in obj["tokens"])
        aspects = []
        for a in obj["aspects"]:
            gold = a.get("gold_opinions")
            aspects.append(
                AspectInstance(
                    start=int(a["s"]),
                    end=int(a["e"]),
                    label=SentimentLabel.parse(a["label"]),
                    gold_opinions=None if gold is None else tuple((int(s), int(e)) for s, e in gold),
                )
            )
        record = DatasetRecord(
            sentence_id=str(obj["sentence_id"]),
            text=str(obj["text"]),
            tokens=tokens,
            aspects=tuple(aspects),
        )
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise DataError(f"malformed record{where}: {exc}") from exc
    _validate_record(record)
    return record


def record_to_json(record: DatasetRecord) -> dict:
    return {
        "sentence_id": record.sentence_id,
        "text": record.text,
        "tokens": [[t.text, t.start, t.end] for t in record.tokens],
        "aspects": [
            {
                "s": a.start,
                "e": a.end,
                "label": a.label.as_string(),
                **(
                    {}
                    if a.gold_opinions is None
                    else {"gold_opinions": [[s, e] for s, e in a.gold_opinions]}
                ),
            }
            for a in record.aspects
        ],
    }


def load_dataset(path: str | Path, max_seq_len: int = 64) -> list[DatasetRecord]:
    """Read and validate a JSONL dataset.

    Structural problems raise `DataError` naming the line or record.
    Records whose aspects or gold opinions lie beyond `max_seq_len`
    tokens are skipped with a logged diagnostic (the encoder would
    truncate them away).
    """
    records: list[DatasetRecord] = []
    skipped = 0
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"line {lineno}: invalid JSON: {exc}") from exc
        record = record_from_json(obj, where=f" at line {lineno}")
        beyond = [
            a
            for a in record.aspects
            if a.end >= max_seq_len
            or any(e >= max_seq_len for _, e in (a.gold_opinions or ()))
        ]
        if beyond:
            skipped += 1
            logger.warning(
                "skipping record %s: aspect/opinion spans beyond the %d-token cap",
                record.sentence_id,
                max_seq_len,
            )
            continue
        records.append(record)
    if skipped:
        logger.warning("skipped %d record(s) exceeding the sequence cap", skipped)
    return records


def save_dataset(path: str | Path, records: list[DatasetRecord]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record_to_json(record), sort_keys=True) + "\n")


def class_counts(records: list[DatasetRecord]) -> dict[SentimentLabel, int]:
    counts = Counter(a.label for r in records for a in r.aspects)
    return {label: counts.get(label, 0) for label in SentimentLabel}


# -- vocabulary -------------------------------------------------------------------


@dataclass
class Vocab:
    token_to_id: dict[str, int]

    @property
    def size(self) -> int:
        return len(self.token_to_id)

    def encode(self, tokens: list[str]) -> list[int]:
        return [self.token_to_id.get(t, UNK_ID) for t in tokens]

    def to_json(self) -> dict[str, int]:
        return dict(self.token_to_id)

    @classmethod
    def from_json(cls, obj: dict[str, int]) -> "Vocab":
        return cls(token_to_id={str(k): int(v) for k, v in obj.items()})


def build_vocab(records: list[DatasetRecord], min_freq: int = 1) -> Vocab:
    """Frequency-then-alphabetical vocabulary with reserved pad/unk ids."""
    if not records:
        raise ContractError("cannot build a vocabulary from an empty dataset")
    freq = Counter(tok.text for r in records for tok in r.tokens)
    token_to_id = {PAD_TOKEN: PAD_ID, UNK_TOKEN: UNK_ID}
    for token, _ in sorted(freq.items(), key=lambda kv: (-kv[1], kv[0])):
        if freq[token] >= min_freq:
            token_to_id[token] = len(token_to_id)
    return Vocab(token_to_id=token_to_id)


# -- synthetic corpus --------------------------------------------------------------

POSITIVE_OPINIONS = (
    "tasty", "great", "excellent", "amazing", "fantastic", "lovely",
    "superb", "delightful", "wonderful", "crisp", "fresh", "friendly",
    "fast", "brilliant",
)
NEGATIVE_OPINIONS = (
    "terrible", "awful", "horrible", "bland", "broken", "slow",
    "rude", "noisy", "stale", "buggy", "greasy", "flimsy",
    "cramped", "dreadful",
)
NEUTRAL_OPINIONS = ("average", "ordinary", "standard", "typical", "plain", "usual")

ASPECT_WORDS = (
    "food", "service", "battery", "screen", "keyboard", "pizza", "pasta",
    "staff", "wifi", "decor", "room", "juice", "coffee", "laptop",
    "camera", "phone", "menu", "salad", "soup", "bread", "cake",
    "driver", "speaker", "display",
)

# Aspect words carrying a non-neutral prior polarity in the shipped
# lexicon; bias injection pairs them with contexts that contradict it.
BIASED_ASPECTS: dict[str, SentimentLabel] = {
    "music": SentimentLabel.POSITIVE,
    "sunshine": SentimentLabel.POSITIVE,
    "gift": SentimentLabel.POSITIVE,
    "noise": SentimentLabel.NEGATIVE,
    "stain": SentimentLabel.NEGATIVE,
    "traffic": SentimentLabel.NEGATIVE,
}

# Sentence shells. {op} is the opinion slot, {asp} the aspect slot. The
# isolated shells keep the opinion word at a sentence edge right next to
# the aspect, so the only candidate containing it is the exact span.
POLAR_ISOLATED_TEMPLATES = (
    "{op} {asp} arrived today",
    "{op} {asp} again it seems",
    "{op} {asp} here overall",
    "{op} {asp} for us yesterday",
    "we found the {asp} {op}",
    "they called the {asp} {op}",
    "i consider this {asp} {op}",
    "people here think the {asp} {op}",
)
POLAR_PLAIN_TEMPLATES = (
    "the {asp} is {op} overall",
    "this {asp} was quite {op}",
    "honestly the {asp} seems {op} today",
)
POLAR_DOUBLE_TEMPLATE = "{op} {asp} and {op2} {asp2} here"
# No-opinion neutral sentences skew short, like their natural register
# ("desserts include flan"), which also keeps the candidate set small.
NEUTRAL_NO_OPINION_TEMPLATES = (
    "we ordered {asp}",
    "the {asp} arrived",
    "there is {asp}",
    "{asp} with rice",
    "they brought {asp}",
    "the {asp} came today",
    "i saw the {asp} at the counter",
)
NEUTRAL_OPINION_TEMPLATES = (
    "we found the {asp} {op}",
    "{op} {asp} here overall",
    "they called the {asp} {op}",
)


@dataclass
class SyntheticSpec:
    """Knobs for the template-based corpus generator."""

    aspect_words: tuple[str, ...] = ASPECT_WORDS
    positive_opinions: tuple[str, ...] = POSITIVE_OPINIONS
    negative_opinions: tuple[str, ...] = NEGATIVE_OPINIONS
    neutral_opinions: tuple[str, ...] = NEUTRAL_OPINIONS
    biased_aspects: dict[str, SentimentLabel] = field(default_factory=lambda: dict(BIASED_ASPECTS))
    bias_rate: float = 0.0
    no_opinion_neutral_rate: float = 1.0
    plain_polar_rate: float = 0.15
    double_aspect_rate: float = 0.1

    def __post_init__(self):
        for name in ("bias_rate", "no_opinion_neutral_rate", "plain_polar_rate", "double_aspect_rate"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ContractError(f"{name} must lie in [0, 1], got {value}")

    def lexicon_entries(self) -> dict[str, SentimentLabel]:
        """The prior lexicon matching this corpus (opinions + biased aspects)."""
        entries: dict[str, SentimentLabel] = {}
        for word in self.positive_opinions:
            entries[word] = SentimentLabel.POSITIVE
        for word in self.negative_opinions:
            entries[word] = SentimentLabel.NEGATIVE
        for word in self.neutral_opinions:
            entries[word] = SentimentLabel.NEUTRAL
        entries.update(self.biased_aspects)
        return entries


def _pick(rng: np.random.Generator, pool) -> str:
    return pool[int(rng.integers(len(pool)))]


def _pick_aspect(rng: np.random.Generator, spec: SyntheticSpec, label: SentimentLabel) -> str:
    """Aspect word for one instance, honoring the bias-injection rate."""
    if spec.biased_aspects and rng.random() < spec.bias_rate:
        pool = [w for w, prior in spec.biased_aspects.items() if prior != label]
        if pool:
            return pool[int(rng.integers(len(pool)))]
    return _pick(rng, spec.aspect_words)


def _fill(template: str, slots: dict[str, str]) -> tuple[list[str], dict[str, tuple[int, int]]]:
    """Expand a template into tokens, tracking each slot's token span."""
    tokens: list[str] = []
    spans: dict[str, tuple[int, int]] = {}
    for part in template.split():
        if part.startswith("{") and part.endswith("}"):
            name = part[1:-1]
            words = slots[name].split()
            spans[name] = (len(tokens), len(tokens) + len(words) - 1)
            tokens.extend(words)
        else:
            tokens.append(part)
    return tokens, spans


def _make_record(sentence_id: str, tokens: list[str], aspects: list[AspectInstance]) -> DatasetRecord:
    text = " ".join(tokens)
    return DatasetRecord(
        sentence_id=sentence_id,
        text=text,
        tokens=tuple(tokenize(text)),
        aspects=tuple(aspects),
    )


def gen_synthetic(spec: SyntheticSpec, count: int, seed: int) -> list[DatasetRecord]:
    """Generate `count` sentences; deterministic for a given (spec, seed).

    Positive/negative aspects always carry a planted gold opinion span;
    neutral aspects have no opinion with probability
    `no_opinion_neutral_rate` (and an explicit empty gold list), otherwise
    a neutral-word opinion span.
    """
    rng = np.random.default_rng(seed)
    records: list[DatasetRecord] = []
    opinions = {
        SentimentLabel.POSITIVE: spec.positive_opinions,
        SentimentLabel.NEGATIVE: spec.negative_opinions,
    }
    for i in range(count):
        sid = f"syn-{i:06d}"
        roll = rng.random()
        if roll < spec.double_aspect_rate:
            labels = [
                SentimentLabel.POSITIVE if rng.random() < 0.5 else SentimentLabel.NEGATIVE
                for _ in range(2)
            ]
            ops = [_pick(rng, opinions[lab]) for lab in labels]
            asps = [_pick_aspect(rng, spec, lab) for lab in labels]
            tokens, spans = _fill(
                POLAR_DOUBLE_TEMPLATE,
                {"op": ops[0], "asp": asps[0], "op2": ops[1], "asp2": asps[1]},
            )
            aspects = [
                AspectInstance(*spans["asp"], labels[0], gold_opinions=(spans["op"],)),
                AspectInstance(*spans["asp2"], labels[1], gold_opinions=(spans["op2"],)),
            ]
            records.append(_make_record(sid, tokens, aspects))
            continue
        label = SentimentLabel(int(rng.integers(3)))
        aspect_word = _pick_aspect(rng, spec, label)
        if label == SentimentLabel.NEUTRAL:
            if rng.random() < spec.no_opinion_neutral_rate:
                template = _pick(rng, NEUTRAL_NO_OPINION_TEMPLATES)
                tokens, spans = _fill(template, {"asp": aspect_word})
                aspects = [AspectInstance(*spans["asp"], label, gold_opinions=())]
            else:
                template = _pick(rng, NEUTRAL_OPINION_TEMPLATES)
                op = _pick(rng, spec.neutral_opinions)
                tokens, spans = _fill(template, {"asp": aspect_word, "op": op})
                aspects = [AspectInstance(*spans["asp"], label, gold_opinions=(spans["op"],))]
        else:
            op = _pick(rng, opinions[label])
            if rng.random() < spec.plain_polar_rate:
                template = _pick(rng, POLAR_PLAIN_TEMPLATES)
            else:
                template = _pick(rng, POLAR_ISOLATED_TEMPLATES)
            tokens, spans = _fill(template, {"asp": aspect_word, "op": op})
            aspects = [AspectInstance(*spans["asp"], label, gold_opinions=(spans["op"],))]
        records.append(_make_record(sid, tokens, aspects))
    return records
