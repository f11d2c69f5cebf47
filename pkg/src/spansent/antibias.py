"""Prior-sentiment lexicon and the adversarial bias discriminator.

A term's prior polarity (its context-free sentiment) is read from a plain
TSV lexicon. The discriminator is trained to recover that prior from the
aspect representation, while the encoder side is trained to push the
discriminator toward "neutral", scrubbing the prior out of the
representation. The two losses deliberately update disjoint parameter
groups; the trainer enforces that split.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from collections import Counter
from pathlib import Path
from typing import Iterable, Sequence

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractError, DataError
from .labels import SentimentLabel
from .nn import Mlp, nll_pick


@dataclass
class PriorLexicon:
    """Lowercase term -> polarity; lookups default to neutral."""

    entries: dict[str, SentimentLabel] = field(default_factory=dict)

    def add(self, term: str, label: SentimentLabel) -> None:
        self.entries[term.strip().lower()] = label

    def get(self, term: str) -> SentimentLabel:
        return self.entries.get(term.strip().lower(), SentimentLabel.NEUTRAL)

    def __contains__(self, term: str) -> bool:
        return term.strip().lower() in self.entries

    def __len__(self) -> int:
        return len(self.entries)


def load_lexicon(path: str | Path) -> PriorLexicon:
    """Read a `term<TAB>polarity` TSV; '#' lines are comments."""
    lexicon = PriorLexicon()
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise DataError(f"lexicon line {lineno}: expected 'term<TAB>polarity', got {raw!r}")
        term, polarity = parts
        try:
            label = SentimentLabel.parse(polarity)
        except ValueError as exc:
            raise DataError(f"lexicon line {lineno}: {exc}") from exc
        lexicon.add(term, label)
    return lexicon


def save_lexicon(path: str | Path, lexicon: PriorLexicon) -> None:
    lines = [f"{term}\t{label.as_string()}" for term, label in sorted(lexicon.entries.items())]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def lookup_prior(aspect_text: str, lexicon: PriorLexicon) -> SentimentLabel:
    """Prior polarity of a phrase: exact match first, then token majority.

    Only non-neutral token votes count; a tie or no hit at all is neutral.
    """
    text = aspect_text.strip().lower()
    if not text:
        raise ContractError("cannot look up the prior of an empty aspect")
    if text in lexicon:
        return lexicon.get(text)
    votes = Counter()
    for tok in text.split():
        label = lexicon.get(tok)
        if label != SentimentLabel.NEUTRAL:
            votes[label] += 1
    if not votes:
        return SentimentLabel.NEUTRAL
    ranked = votes.most_common()
    if len(ranked) > 1 and ranked[0][1] == ranked[1][1]:
        return SentimentLabel.NEUTRAL
    return ranked[0][0]


def discriminator_forward(c: Tensor, dis_mlp: Mlp) -> Tensor:
    """3-class distribution of the prior polarity from one span repr."""
    probs = ad.softmax(dis_mlp(c.reshape((1, -1))), axis=-1)
    return probs.reshape((-1,))


def loss_dis(reprs: Sequence[Tensor], priors: Sequence[SentimentLabel], dis_mlp: Mlp) -> Tensor:
    """Sum of -log p[prior] over the batch; intended for "dis" updates only.

    Representations are detached: this loss never trains the encoder side.
    """
    if len(reprs) != len(priors):
        raise ContractError(f"{len(reprs)} representations vs {len(priors)} prior labels")
    total = Tensor(0.0)
    for c, prior in zip(reprs, priors):
        probs = discriminator_forward(c.detach(), dis_mlp)
        total = total + nll_pick(probs, int(prior))
    return total


def loss_adv(reprs: Sequence[Tensor], dis_mlp: Mlp) -> Tensor:
    """Sum of -log p[neutral]: the encoder's side of the adversarial game.

    The discriminator participates in the graph but is meant to stay
    frozen; backpropagate this into "ptm" and "aa" only (or all three
    groups under the neutral-reinforce ablation).
    """
    total = Tensor(0.0)
    for c in reprs:
        probs = discriminator_forward(c, dis_mlp)
        total = total + nll_pick(probs, int(SentimentLabel.NEUTRAL))
    return total


def prior_labels(aspect_texts: Iterable[str], lexicon: PriorLexicon) -> list[SentimentLabel]:
    return [lookup_prior(text, lexicon) for text in aspect_texts]


def fit_prior_probe(
    vectors,
    labels: Sequence[SentimentLabel],
    seed: int = 0,
    steps: int = 300,
    hidden: int | None = None,
    learning_rate: float = 5e-3,
) -> tuple[float, Mlp]:
    """Train a fresh discriminator-shaped MLP on frozen representations.

    Returns (accuracy on the same vectors, probe). Used to measure how much
    prior-polarity information survives in aspect representations after
    training: low probe accuracy means the adversarial game scrubbed it.
    """
    import numpy as np

    from .nn import ParamGroup, init_mlp
    from .optim import OptimizerState, adam_step

    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2 or len(labels) != x.shape[0]:
        raise ContractError(f"{len(labels)} labels for vectors of shape {x.shape}")
    dim = x.shape[1]
    hidden = hidden or max(4, dim // 3)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x9B0E]))
    group = ParamGroup(name="probe", learning_rate=learning_rate)
    probe = init_mlp(rng, group, "probe", (dim, hidden, 3))
    targets = np.asarray([int(l) for l in labels])
    inputs = Tensor(x)
    state = OptimizerState(total_steps=steps)
    for _ in range(steps):
        logits = probe(inputs)
        probs = ad.softmax(logits, axis=-1)
        picked = probs[np.arange(len(targets)), targets]
        loss = -ad.tsum(ad.log(ad.clamp_min(picked, 1e-12)))
        ad.backward(loss, group.all_tensors())
        adam_step([group], state)
    with ad.no_grad():
        final = probe(inputs).data
    accuracy = float((final.argmax(axis=1) == targets).mean())
    return accuracy, probe
