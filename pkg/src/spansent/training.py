"""Alternating adversarial training with scheduled Adam.

The step stream is deterministic: with discriminator proportion p/q (in
lowest terms), every window of q batches starts with p discriminator-only
steps (prior-sentiment loss, updating only the "dis" group) followed by
q-p model steps (combined loss, updating every other group). Both kinds of
step consume the same shuffled batch stream and advance the same
learning-rate schedule.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .aligner import LexiconTeacher, LinearDistance
from .antibias import PriorLexicon, loss_dis, lookup_prior
from .autodiff import Tensor, backward
from .data import DatasetRecord, Vocab, build_vocab
from .encoder import EncoderConfig
from .errors import ContractError, NumericError
from .labels import SentimentLabel
from .metrics import accuracy_macro_f1
from .model import ModelParams, TrainConfig, forward_sentence, init_params, predict, save_model
from .nn import flatten_groups, nll_pick
from .optim import OptimizerState, adam_step

logger = logging.getLogger(__name__)


@dataclass
class EpochStats:
    epoch: int
    loss_sc: float = 0.0
    loss_adv: float = 0.0
    loss_kl: float = 0.0
    loss_dis: float = 0.0
    model_steps: int = 0
    dis_steps: int = 0
    train_accuracy: float | None = None
    train_macro_f1: float | None = None

    def as_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "loss_sc": self.loss_sc,
            "loss_adv": self.loss_adv,
            "loss_kl": self.loss_kl,
            "loss_dis": self.loss_dis,
            "model_steps": self.model_steps,
            "dis_steps": self.dis_steps,
            "train_accuracy": self.train_accuracy,
            "train_macro_f1": self.train_macro_f1,
        }


@dataclass
class TrainResult:
    params: ModelParams
    config: TrainConfig
    history: list[EpochStats]
    total_steps: int


def step_kind(step: int, config: TrainConfig) -> str:
    """'dis' or 'model' for the given global step index."""
    if config.no_adv or config.neutral_reinforce:
        return "model"
    p, q = config.alpha.numerator, config.alpha.denominator
    return "dis" if (step % q) < p else "model"


def batch_model_loss(
    forwards: Sequence,
    config: TrainConfig,
) -> tuple[Tensor, dict[str, float]]:
    """Combined loss over a batch of sentence forwards, plus its components."""
    l_sc = Tensor(0.0)
    l_adv = Tensor(0.0)
    l_kl = Tensor(0.0)
    n_kl = 0
    for sf in forwards:
        for af in sf.aspects:
            l_sc = l_sc + nll_pick(af.p_sc, int(af.aspect.label))
            if not config.no_adv:
                l_adv = l_adv + nll_pick(af.p_prior, int(SentimentLabel.NEUTRAL))
            if af.kl_sum is not None:
                l_kl = l_kl + af.kl_sum
                n_kl += 1
    total = l_sc
    if not config.no_adv:
        total = total + config.beta * l_adv
    if not config.no_distill and n_kl:
        total = total + config.gamma * l_kl
    components = {
        "loss_sc": float(l_sc.data),
        "loss_adv": float(l_adv.data),
        "loss_kl": float(l_kl.data),
        "loss_total": float(total.data),
    }
    return total, components


def train(
    records: Sequence[DatasetRecord],
    config: TrainConfig,
    encoder_config: EncoderConfig | None = None,
    vocab: Vocab | None = None,
    params: ModelParams | None = None,
    lexicon: PriorLexicon | None = None,
    teacher=None,
    distance=None,
    checkpoint_dir: str | Path | None = None,
) -> TrainResult:
    """Train a model on `records`; deterministic for a given config/seed."""
    if not records:
        raise ContractError("cannot train on an empty dataset")
    records = list(records)
    if params is None:
        vocab = vocab or build_vocab(records)
        encoder_config = encoder_config or EncoderConfig(vocab_size=vocab.size)
        params = init_params(
            encoder_config,
            vocab,
            seed=config.seed,
            lr_ptm=config.lr_ptm,
            lr_others=config.lr_others,
        )
    lexicon = lexicon if lexicon is not None else PriorLexicon()
    if teacher is None:
        teacher = LexiconTeacher(lexicon)
    distance = distance or LinearDistance()

    priors = {
        record.sentence_id: [
            lookup_prior(record.span_text(a.span), lexicon) for a in record.aspects
        ]
        for record in records
    }

    seq = np.random.SeedSequence([config.seed, 0x5EED])
    shuffle_rng = np.random.default_rng(seq.spawn(1)[0])
    dropout_rng = np.random.default_rng(seq.spawn(1)[0]) if params.encoder_config.dropout > 0 else None

    n_batches = math.ceil(len(records) / config.batch_size)
    total_steps = config.epochs * n_batches
    state = OptimizerState(total_steps=total_steps)
    history: list[EpochStats] = []
    global_step = 0

    for epoch in range(config.epochs):
        stats = EpochStats(epoch=epoch)
        order = shuffle_rng.permutation(len(records))
        for b in range(n_batches):
            batch = [records[i] for i in order[b * config.batch_size : (b + 1) * config.batch_size]]
            kind = step_kind(global_step, config)
            if kind == "dis":
                reprs = []
                batch_priors: list[SentimentLabel] = []
                for record in batch:
                    sf = forward_sentence(
                        record, params, config, need="repr", train_rng=dropout_rng
                    )
                    reprs.extend(af.c for af in sf.aspects)
                    batch_priors.extend(priors[record.sentence_id])
                loss = loss_dis(reprs, batch_priors, params.discriminator)
                value = float(loss.data)
                if not np.isfinite(value):
                    raise NumericError(
                        f"non-finite discriminator loss at step {global_step} "
                        f"(epoch {epoch}, batch {b})"
                    )
                backward(loss, params.groups["dis"].all_tensors())
                adam_step([params.groups["dis"]], state)
                stats.loss_dis += value
                stats.dis_steps += 1
            else:
                forwards = [
                    forward_sentence(
                        record,
                        params,
                        config,
                        teacher=teacher,
                        distance=distance,
                        train_rng=dropout_rng,
                        need="full",
                    )
                    for record in batch
                ]
                loss, components = batch_model_loss(forwards, config)
                if not np.isfinite(components["loss_total"]):
                    raise NumericError(
                        f"non-finite loss at step {global_step} (epoch {epoch}, batch {b}): "
                        f"{components}"
                    )
                groups = params.model_groups(include_dis=config.neutral_reinforce)
                backward(loss, flatten_groups(groups))
                adam_step(groups, state)
                stats.loss_sc += components["loss_sc"]
                stats.loss_adv += components["loss_adv"]
                stats.loss_kl += components["loss_kl"]
                stats.model_steps += 1
            global_step += 1
        if config.eval_each_epoch:
            preds = predict(records, params, config, distance=distance)
            golds = [p.aspect.label for p in preds]
            labels = [p.label for p in preds]
            stats.train_accuracy, stats.train_macro_f1 = accuracy_macro_f1(labels, golds)
        history.append(stats)
        logger.info(
            "epoch %d: sc=%.4f adv=%.4f kl=%.4f dis=%.4f acc=%s",
            epoch,
            stats.loss_sc,
            stats.loss_adv,
            stats.loss_kl,
            stats.loss_dis,
            f"{stats.train_accuracy:.4f}" if stats.train_accuracy is not None else "n/a",
        )
        if checkpoint_dir is not None:
            path = Path(checkpoint_dir)
            path.mkdir(parents=True, exist_ok=True)
            save_model(path / f"epoch{epoch:03d}.json", params)
    return TrainResult(params=params, config=config, history=history, total_steps=total_steps)


def collect_aspect_reprs(
    records: Sequence[DatasetRecord], params: ModelParams, config: TrainConfig
) -> tuple[np.ndarray, list[SentimentLabel], list[str]]:
    """Frozen aspect representations plus aspect texts, for probing."""
    vectors = []
    labels = []
    texts = []
    with ad.no_grad():
        for record in records:
            sf = forward_sentence(record, params, config, need="repr")
            for af in sf.aspects:
                vectors.append(af.c.data.copy())
                labels.append(af.aspect.label)
                texts.append(record.span_text(af.aspect.span))
    return np.stack(vectors), labels, texts
