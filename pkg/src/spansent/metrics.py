"""Evaluation metrics: classification, top-N extraction, dummy ranking, bias.

Extraction metrics are macro-averaged per aspect. Char-overlap P/R/F picks,
for every aspect, the (predicted span, gold span) pair with the highest F
among the top-N predictions; a dummy prediction overlaps nothing.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .errors import ContractError
from .labels import NUM_CLASSES, SentimentLabel

CharSpan = tuple[int, int]  # half-open character interval


@dataclass(frozen=True)
class ExtractionJudgment:
    """What the model ranked for one aspect, against the gold annotation."""

    ranked_spans: tuple[CharSpan | None, ...]  # None marks the dummy entry
    gold_spans: tuple[CharSpan, ...]
    ranked_token_spans: tuple[tuple[int, int] | None, ...]
    gold_token_spans: tuple[tuple[int, int], ...]
    dummy_rank: int  # 1-based position of the dummy entry
    aspect_label: SentimentLabel
    has_gold_annotation: bool = True

    @property
    def eligible_for_extraction(self) -> bool:
        return self.has_gold_annotation and len(self.gold_spans) > 0

    @property
    def eligible_for_dummy(self) -> bool:
        return (
            self.has_gold_annotation
            and self.aspect_label == SentimentLabel.NEUTRAL
            and len(self.gold_spans) == 0
        )


def accuracy_macro_f1(
    predictions: Sequence[SentimentLabel], golds: Sequence[SentimentLabel]
) -> tuple[float, float]:
    """(accuracy, macro-F1); per-class F1 is 0 when undefined."""
    if len(predictions) != len(golds):
        raise ContractError(f"{len(predictions)} predictions vs {len(golds)} golds")
    if not golds:
        raise ContractError("cannot score an empty prediction list")
    correct = sum(1 for p, g in zip(predictions, golds) if p == g)
    f1s = []
    for cls in range(NUM_CLASSES):
        tp = sum(1 for p, g in zip(predictions, golds) if p == cls and g == cls)
        fp = sum(1 for p, g in zip(predictions, golds) if p == cls and g != cls)
        fn = sum(1 for p, g in zip(predictions, golds) if p != cls and g == cls)
        denom = 2 * tp + fp + fn
        f1s.append(2 * tp / denom if denom else 0.0)
    return correct / len(golds), sum(f1s) / NUM_CLASSES


def em_at_n(judgments: Sequence[ExtractionJudgment], n: int) -> float:
    """Fraction of gold-bearing aspects with an exact span match in the top N."""
    if n < 1:
        raise ContractError(f"N must be at least 1, got {n}")
    eligible = [j for j in judgments if j.eligible_for_extraction]
    if not eligible:
        raise ContractError("no aspects with gold opinion spans to evaluate")
    hits = 0
    for j in eligible:
        golds = set(j.gold_token_spans)
        if any(span is not None and span in golds for span in j.ranked_token_spans[:n]):
            hits += 1
    return hits / len(eligible)


def _overlap(a: CharSpan, b: CharSpan) -> int:
    return max(0, min(a[1], b[1]) - max(a[0], b[0]))


def _prf(pred: CharSpan | None, gold: CharSpan) -> tuple[float, float, float]:
    if pred is None:
        return 0.0, 0.0, 0.0
    inter = _overlap(pred, gold)
    p = inter / (pred[1] - pred[0]) if pred[1] > pred[0] else 0.0
    r = inter / (gold[1] - gold[0]) if gold[1] > gold[0] else 0.0
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f


def prf_at_n(judgments: Sequence[ExtractionJudgment], n: int) -> tuple[float, float, float]:
    """Max-F char-overlap P/R/F over top-N predictions, macro-averaged."""
    if n < 1:
        raise ContractError(f"N must be at least 1, got {n}")
    eligible = [j for j in judgments if j.eligible_for_extraction]
    if not eligible:
        raise ContractError("no aspects with gold opinion spans to evaluate")
    totals = [0.0, 0.0, 0.0]
    for j in eligible:
        best = (0.0, 0.0, 0.0)
        for pred in j.ranked_spans[:n]:
            for gold in j.gold_spans:
                cand = _prf(pred, gold)
                if cand[2] > best[2]:
                    best = cand
        for i in range(3):
            totals[i] += best[i]
    k = len(eligible)
    return totals[0] / k, totals[1] / k, totals[2] / k


def hits_at_n(judgments: Sequence[ExtractionJudgment], n: int) -> float:
    """Fraction of no-opinion neutral aspects whose dummy ranks in the top N."""
    if n < 1:
        raise ContractError(f"N must be at least 1, got {n}")
    eligible = [j for j in judgments if j.eligible_for_dummy]
    if not eligible:
        raise ContractError("no eligible aspects: none are neutral with an empty gold opinion list")
    return sum(1 for j in eligible if j.dummy_rank <= n) / len(eligible)


@dataclass(frozen=True)
class BiasReport:
    """Counts of bias-prone aspects (S) and those actually misled (Q)."""

    s_count: int
    q_count: int

    @property
    def ratio(self) -> float | None:
        return None if self.s_count == 0 else self.q_count / self.s_count


def bias_report(
    triples: Sequence[tuple[SentimentLabel, SentimentLabel, SentimentLabel]]
) -> BiasReport:
    """From (prior, gold, predicted) label triples, count S and Q.

    S: aspects whose non-neutral prior disagrees with the gold label.
    Q: members of S predicted as their prior (the bias won).
    """
    s_count = 0
    q_count = 0
    for prior, gold, predicted in triples:
        if prior != SentimentLabel.NEUTRAL and prior != gold:
            s_count += 1
            if predicted == prior:
                q_count += 1
    return BiasReport(s_count=s_count, q_count=q_count)


def format_report(
    alsc: tuple[float, float] | None,
    n_aspects: int,
    extraction: dict[int, tuple[float, tuple[float, float, float]]] | None = None,
    hits: dict[int, float] | None = None,
    hits_eligible: int = 0,
    extraction_note: str | None = None,
) -> str:
    """Plain-text metrics report used by the CLI and written next to runs."""
    lines = []
    if alsc is not None:
        lines.append(f"ALSC: accuracy={alsc[0]:.6f} macro_f1={alsc[1]:.6f} aspects={n_aspects}")
    if extraction:
        for n in sorted(extraction):
            em, (p, r, f) = extraction[n]
            lines.append(f"Extraction@{n}: EM={em:.6f} P={p:.6f} R={r:.6f} F={f:.6f}")
    elif extraction_note:
        lines.append(f"Extraction: {extraction_note}")
    if hits:
        for n in sorted(hits):
            lines.append(f"Hits@{n}: {hits[n]:.6f} (eligible={hits_eligible})")
    return "\n".join(lines) + "\n"
