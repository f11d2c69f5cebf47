"""Full model assembly: parameters, forward pass, prediction, extraction.

One sentence is encoded exactly once per pass no matter how many aspects
it has; the per-aspect work (aspect pooling, discriminator, alignment,
gating, classification) reuses that shared context. Span representations
and mention scores of opinion candidates are likewise computed once per
sentence and gathered per aspect.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .aligner import (
    NUM_DISTANCE_BUCKETS,
    DependencyScores,
    LexiconTeacher,
    LinearDistance,
    alignment_scores,
    append_dummy,
    distillation_terms,
    dummy_only_scores,
    dummy_score,
    integrate_opinion,
    mention_scores,
    pair_repr_table,
)
from .antibias import discriminator_forward
from .autodiff import Tensor
from .checkpoint import load_checkpoint, restore_into, save_checkpoint
from .data import AspectInstance, DatasetRecord, Vocab
from .encoder import ContextMatrix, EncoderConfig, TrainableEncoder
from .errors import ContractError, DataError
from .labels import SentimentLabel
from .nn import GROUP_NAMES, Mlp, ParamGroup, init_mlp, truncated_normal
from .spans import SpanCandidate, all_spans, span_repr, span_repr_table

Z_DIM = 8


@dataclass
class TrainConfig:
    """Hyperparameters for one training run."""

    batch_size: int = 16
    epochs: int = 10
    max_span_width: int = 15
    alpha: Fraction = Fraction(1, 3)
    beta: float = 0.05
    gamma: float = 1.0
    delta_mode: str = "one_over_m"  # or "fixed"
    delta_value: float = 1.0
    seed: int = 0
    lr_ptm: float = 1e-3
    lr_others: float = 2e-3
    no_adv: bool = False
    no_aligner: bool = False
    no_distill: bool = False
    no_sentiment_score: bool = False
    neutral_reinforce: bool = False
    eval_each_epoch: bool = True

    def __post_init__(self):
        if isinstance(self.alpha, float):
            self.alpha = Fraction(str(self.alpha)).limit_denominator(1000)
        elif isinstance(self.alpha, str):
            self.alpha = parse_alpha(self.alpha)
        if not 0 < self.alpha < 1:
            raise ContractError(f"alpha must lie strictly inside (0, 1), got {self.alpha}")
        if self.beta < 0 or self.gamma < 0:
            raise ContractError("beta and gamma must be non-negative")
        if self.delta_mode not in ("one_over_m", "fixed"):
            raise ContractError(f"delta_mode must be 'one_over_m' or 'fixed', got {self.delta_mode!r}")
        if self.batch_size < 1 or self.epochs < 1 or self.max_span_width < 0:
            raise ContractError("batch_size and epochs must be positive, max_span_width >= 0")

    def delta(self, m: int) -> float:
        if self.delta_mode == "one_over_m":
            return 1.0 / m if m > 0 else 1.0
        return self.delta_value


def parse_alpha(text: str) -> Fraction:
    """Parse '1/3' or '0.2' into an exact fraction."""
    text = text.strip()
    if "/" in text:
        num, den = text.split("/", 1)
        return Fraction(int(num), int(den))
    return Fraction(text)


@dataclass
class ModelParams:
    """All trainable state plus the structured views used by the forward pass."""

    encoder_config: EncoderConfig
    vocab: Vocab
    groups: dict[str, ParamGroup]
    encoder: TrainableEncoder
    pool_aspect: Mlp
    pool_opinion: Mlp
    discriminator: Mlp
    mention: Mlp
    alignment: Mlp
    gate: Mlp
    classifier: Mlp
    z_table: Tensor

    @property
    def dim(self) -> int:
        return self.encoder_config.model_dim

    def all_groups(self) -> list[ParamGroup]:
        return [self.groups[name] for name in GROUP_NAMES]

    def model_groups(self, include_dis: bool = False) -> list[ParamGroup]:
        names = [n for n in GROUP_NAMES if include_dis or n != "dis"]
        return [self.groups[n] for n in names]


def init_params(
    encoder_config: EncoderConfig,
    vocab: Vocab,
    seed: int = 0,
    lr_ptm: float = 1e-3,
    lr_others: float = 2e-3,
) -> ModelParams:
    if encoder_config.vocab_size != vocab.size:
        raise ContractError(
            f"encoder vocab_size {encoder_config.vocab_size} != vocabulary size {vocab.size}"
        )
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xA11D]))
    d = encoder_config.model_dim
    groups = {
        name: ParamGroup(name=name, learning_rate=lr_ptm if name == "ptm" else lr_others)
        for name in GROUP_NAMES
    }
    encoder = TrainableEncoder(encoder_config, groups["ptm"], rng)
    pool_aspect = init_mlp(rng, groups["aa"], "pool", (d, d, 1))
    pool_opinion = init_mlp(rng, groups["ao"], "pool", (d, d, 1))
    discriminator = init_mlp(rng, groups["dis"], "dis", (3 * d, d, 3))
    mention = init_mlp(rng, groups["ms"], "mention", (3 * d, d, 3))
    alignment = init_mlp(rng, groups["as"], "align", (9 * d + Z_DIM, d, 1))
    z_table = groups["as"].add(
        "dist_emb", Tensor(truncated_normal(rng, (NUM_DISTANCE_BUCKETS, Z_DIM)))
    )
    gate = init_mlp(rng, groups["gm"], "gate", (6 * d, d, 3 * d))
    classifier = init_mlp(rng, groups["sc"], "clf", (3 * d, d, 3))
    return ModelParams(
        encoder_config=encoder_config,
        vocab=vocab,
        groups=groups,
        encoder=encoder,
        pool_aspect=pool_aspect,
        pool_opinion=pool_opinion,
        discriminator=discriminator,
        mention=mention,
        alignment=alignment,
        gate=gate,
        classifier=classifier,
        z_table=z_table,
    )


# -- forward pass -----------------------------------------------------------------


@dataclass
class AspectForward:
    """Everything the losses and extraction need for one aspect."""

    aspect: AspectInstance
    c: Tensor
    p_prior: Tensor
    candidates: list[SpanCandidate] = field(default_factory=list)
    cand_reprs: Tensor | None = None
    r: Tensor | None = None
    kl_sum: Tensor | None = None
    logits: Tensor | None = None
    alignment: Tensor | None = None
    f: Tensor | None = None
    u: Tensor | None = None
    g: Tensor | None = None
    v: Tensor | None = None
    p_sc: Tensor | None = None

    def dependency_scores(self) -> DependencyScores | None:
        if self.f is None:
            return None
        align = self.alignment.data.copy() if self.alignment is not None else np.zeros(0)
        return DependencyScores(
            candidates=list(self.candidates), alignment=align, scores=self.f.data.copy()
        )


@dataclass
class SentenceForward:
    record: DatasetRecord
    context: ContextMatrix
    aspects: list[AspectForward]


def forward_sentence(
    record: DatasetRecord,
    params: ModelParams,
    config: TrainConfig,
    teacher=None,
    distance=None,
    train_rng: np.random.Generator | None = None,
    need: str = "full",
    context: ContextMatrix | None = None,
) -> SentenceForward:
    """Run the pipeline for every aspect of one sentence.

    `need="repr"` stops after the aspect representation and discriminator
    (enough for discriminator training); `need="full"` runs everything.
    """
    if need not in ("repr", "full"):
        raise ContractError(f"unknown forward mode {need!r}")
    if context is None:
        ids = params.vocab.encode(record.token_texts())
        context = params.encoder.encode_sentence(
            ids, sentence_id=record.sentence_id, train_rng=train_rng
        )
    n = context.n_tokens
    distance = distance or LinearDistance()

    aspect_forwards: list[AspectForward] = []
    spans_list: list[SpanCandidate] = []
    table = None
    r_all = None
    kl_all = None
    need_aligner = need == "full" and not config.no_aligner
    if need_aligner:
        spans_list = all_spans(n, config.max_span_width)
        span_index = {sp: i for i, sp in enumerate(spans_list)}
        table = span_repr_table(context, spans_list, params.pool_opinion)
        p_ms_all, r_all = mention_scores(table, params.mention)
        if teacher is not None and not config.no_distill:
            teacher_rows = np.stack(
                [
                    teacher.predict(
                        record.sentence_id, (sp.start, sp.end), record.span_text((sp.start, sp.end))
                    )
                    for sp in spans_list
                ]
            )
            kl_all = distillation_terms(teacher_rows, p_ms_all)

    for aspect in record.aspects:
        c = span_repr(context, aspect.span, params.pool_aspect)
        p_prior = discriminator_forward(c, params.discriminator)
        af = AspectForward(aspect=aspect, c=c, p_prior=p_prior)
        if need == "repr":
            aspect_forwards.append(af)
            continue
        if config.no_aligner:
            af.v = c
            af.p_sc = ad.softmax(params.classifier(c.reshape((1, -1))), axis=-1).reshape((-1,))
            aspect_forwards.append(af)
            continue

        cand = [
            sp for sp in spans_list if sp.end < aspect.start or sp.start > aspect.end
        ]
        af.candidates = cand
        m = len(cand)
        if m == 0:
            af.f = dummy_only_scores()
            af.alignment = Tensor(np.zeros(0))
        else:
            idx = np.asarray([span_index[sp] for sp in cand], dtype=np.intp)
            af.cand_reprs = table[idx]
            r = r_all[idx]
            if kl_all is not None:
                af.kl_sum = ad.tsum(kl_all[idx])
            if config.no_sentiment_score:
                r = Tensor(np.ones(m))
            af.r = r
            buckets = np.asarray(
                [
                    distance.bucket(record.sentence_id, aspect.span, (sp.start, sp.end))
                    for sp in cand
                ],
                dtype=np.intp,
            )
            pairs = pair_repr_table(c, af.cand_reprs, buckets, params.z_table)
            logits, a, f_pre = alignment_scores(pairs, r, params.alignment)
            af.logits, af.alignment = logits, a
            f_dummy = dummy_score(a, r, config.delta(m))
            af.f = append_dummy(f_pre, f_dummy)
        af.v, af.u, af.g = integrate_opinion(c, af.cand_reprs, af.f, params.gate)
        af.p_sc = ad.softmax(params.classifier(af.v.reshape((1, -1))), axis=-1).reshape((-1,))
        aspect_forwards.append(af)
    return SentenceForward(record=record, context=context, aspects=aspect_forwards)


def forward_aspect(
    record: DatasetRecord,
    aspect_index: int,
    params: ModelParams,
    config: TrainConfig,
    **kwargs,
) -> AspectForward:
    """Convenience wrapper returning a single aspect's forward results."""
    sf = forward_sentence(record, params, config, **kwargs)
    return sf.aspects[aspect_index]


# -- prediction and extraction -------------------------------------------------------


@dataclass
class Prediction:
    record: DatasetRecord
    aspect_index: int
    distribution: np.ndarray
    label: SentimentLabel
    dependency: DependencyScores | None

    @property
    def aspect(self) -> AspectInstance:
        return self.record.aspects[self.aspect_index]


def argmax_label(distribution: np.ndarray) -> SentimentLabel:
    """Highest-probability class; ties break toward the lowest index."""
    return SentimentLabel(int(np.argmax(distribution)))


def predict(
    records: Sequence[DatasetRecord],
    params: ModelParams,
    config: TrainConfig,
    distance=None,
) -> list[Prediction]:
    """Frozen-parameter predictions for every aspect of every record."""
    out: list[Prediction] = []
    with ad.no_grad():
        for record in records:
            sf = forward_sentence(record, params, config, distance=distance, need="full")
            for i, af in enumerate(sf.aspects):
                dist = af.p_sc.data.copy()
                out.append(
                    Prediction(
                        record=record,
                        aspect_index=i,
                        distribution=dist,
                        label=argmax_label(dist),
                        dependency=af.dependency_scores(),
                    )
                )
    return out


RankedEntry = tuple[SpanCandidate | None, float]  # None marks the dummy


def extract_opinion(dep: DependencyScores, top_n: int) -> list[RankedEntry]:
    """Top-N entries by descending score; ties keep candidate order, dummy last."""
    if top_n < 1:
        raise ContractError(f"top_n must be at least 1, got {top_n}")
    entries: list[tuple[float, int, SpanCandidate | None]] = [
        (float(dep.scores[i]), i, sp) for i, sp in enumerate(dep.candidates)
    ]
    entries.append((float(dep.scores[dep.dummy_index]), dep.dummy_index, None))
    entries.sort(key=lambda t: (-t[0], t[1]))
    return [(span, score) for score, _, span in entries[:top_n]]


def dummy_rank(dep: DependencyScores) -> int:
    """1-based rank of the dummy opinion in the full extraction order."""
    full = extract_opinion(dep, top_n=dep.num_candidates + 1)
    for rank, (span, _) in enumerate(full, start=1):
        if span is None:
            return rank
    raise RuntimeError("dummy entry missing from its own ranking")


# -- checkpoint round-trip -------------------------------------------------------------


def save_model(path, params: ModelParams) -> None:
    meta = {
        "encoder": {
            "vocab_size": params.encoder_config.vocab_size,
            "model_dim": params.encoder_config.model_dim,
            "layers": params.encoder_config.layers,
            "heads": params.encoder_config.heads,
            "max_seq_len": params.encoder_config.max_seq_len,
            "dropout": params.encoder_config.dropout,
        },
        "z_dim": Z_DIM,
        "vocab": params.vocab.to_json(),
    }
    save_checkpoint(path, params.groups, meta)


def load_model(path) -> ModelParams:
    stored, meta = load_checkpoint(path)
    if "encoder" not in meta or "vocab" not in meta:
        raise DataError(f"checkpoint {path} lacks encoder/vocab metadata")
    cfg = EncoderConfig(**meta["encoder"])
    vocab = Vocab.from_json(meta["vocab"])
    params = init_params(cfg, vocab, seed=0)
    restore_into(params.groups, stored)
    return params
