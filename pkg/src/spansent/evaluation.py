"""Turn model predictions into metric-ready judgments and reports."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .antibias import PriorLexicon, lookup_prior
from .data import DatasetRecord
from .labels import SentimentLabel
from .metrics import (
    BiasReport,
    ExtractionJudgment,
    accuracy_macro_f1,
    bias_report,
    em_at_n,
    format_report,
    hits_at_n,
    prf_at_n,
)
from .model import ModelParams, Prediction, TrainConfig, dummy_rank, extract_opinion, predict


def judgment_from_prediction(pred: Prediction) -> ExtractionJudgment | None:
    """Build an extraction judgment; None if the aspect has no annotation
    or the model ran without the aligner (no dependency scores)."""
    aspect = pred.aspect
    if pred.dependency is None or aspect.gold_opinions is None:
        return None
    dep = pred.dependency
    ranking = extract_opinion(dep, top_n=dep.num_candidates + 1)
    record = pred.record
    ranked_tokens = tuple(
        None if span is None else (span.start, span.end) for span, _ in ranking
    )
    ranked_chars = tuple(
        None if span is None else record.span_chars((span.start, span.end))
        for span, _ in ranking
    )
    return ExtractionJudgment(
        ranked_spans=ranked_chars,
        gold_spans=tuple(record.span_chars(g) for g in aspect.gold_opinions),
        ranked_token_spans=ranked_tokens,
        gold_token_spans=tuple(aspect.gold_opinions),
        dummy_rank=dummy_rank(dep),
        aspect_label=aspect.label,
        has_gold_annotation=True,
    )


@dataclass
class EvalResult:
    accuracy: float
    macro_f1: float
    n_aspects: int
    extraction: dict[int, tuple[float, tuple[float, float, float]]] | None
    hits: dict[int, float] | None
    hits_eligible: int
    extraction_note: str | None
    predictions: list[Prediction]
    judgments: list[ExtractionJudgment]

    def report(self) -> str:
        return format_report(
            alsc=(self.accuracy, self.macro_f1),
            n_aspects=self.n_aspects,
            extraction=self.extraction,
            hits=self.hits,
            hits_eligible=self.hits_eligible,
            extraction_note=self.extraction_note,
        )


def evaluate(
    records: Sequence[DatasetRecord],
    params: ModelParams,
    config: TrainConfig,
    distance=None,
    top_ns: Sequence[int] = (1, 3),
) -> EvalResult:
    predictions = predict(records, params, config, distance=distance)
    golds = [p.aspect.label for p in predictions]
    labels = [p.label for p in predictions]
    accuracy, macro_f1 = accuracy_macro_f1(labels, golds)
    judgments = [j for j in map(judgment_from_prediction, predictions) if j is not None]

    extraction = None
    extraction_note = None
    if any(j.eligible_for_extraction for j in judgments):
        extraction = {n: (em_at_n(judgments, n), prf_at_n(judgments, n)) for n in top_ns}
    elif config.no_aligner:
        extraction_note = "unavailable (model trained without the opinion aligner)"
    else:
        extraction_note = "skipped (no gold opinion annotations in this dataset)"

    hits = None
    hits_eligible = sum(1 for j in judgments if j.eligible_for_dummy)
    if hits_eligible:
        hits = {n: hits_at_n(judgments, n) for n in top_ns}

    return EvalResult(
        accuracy=accuracy,
        macro_f1=macro_f1,
        n_aspects=len(predictions),
        extraction=extraction,
        hits=hits,
        hits_eligible=hits_eligible,
        extraction_note=extraction_note,
        predictions=predictions,
        judgments=judgments,
    )


def bias_report_for(
    predictions: Sequence[Prediction], lexicon: PriorLexicon
) -> BiasReport:
    """Bias counts computed from lexicon priors, gold labels and predictions."""
    triples: list[tuple[SentimentLabel, SentimentLabel, SentimentLabel]] = []
    for pred in predictions:
        prior = lookup_prior(pred.record.span_text(pred.aspect.span), lexicon)
        triples.append((prior, pred.aspect.label, pred.label))
    return bias_report(triples)
