"""Aspect-opinion alignment: mention scoring, pairwise scores, dummy opinion.

Candidates are scored two ways: a distilled mention scorer estimates how
strongly a span expresses sentiment (r = 1 - p[neutral]), and an alignment
MLP scores how well it modifies the aspect. Softmaxed alignment scores are
weighted by the mention scores, a "dummy" entry absorbs the neutral mass
(aspects with no opinion at all), and the winning mixture is gated back
into the aspect representation.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractError, DataError, NotFoundError, ShapeError
from .labels import SentimentLabel
from .antibias import PriorLexicon, lookup_prior
from .nn import Mlp, kl_rows
from .spans import SpanCandidate

# Token-distance buckets: 0, 1, 2, 3, 4, 5-7, 8-15, 16+
DISTANCE_BUCKET_EDGES = (0, 1, 2, 3, 4, 7, 15)
NUM_DISTANCE_BUCKETS = len(DISTANCE_BUCKET_EDGES) + 1


def distance_bucket(distance: float) -> int:
    d = int(np.floor(abs(distance)))
    for bucket, edge in enumerate(DISTANCE_BUCKET_EDGES):
        if d <= edge:
            return bucket
    return NUM_DISTANCE_BUCKETS - 1


class LinearDistance:
    """Default distance provider: token distance between span midpoints."""

    def bucket(self, sentence_id: str, aspect: tuple[int, int], span: tuple[int, int]) -> int:
        mid_a = (aspect[0] + aspect[1]) / 2.0
        mid_s = (span[0] + span[1]) / 2.0
        return distance_bucket(mid_a - mid_s)


class FileTreeDistance:
    """Distances read from a `sentence_id token_i token_j distance` file.

    Span-to-span distance is the minimum over token pairs.
    """

    def __init__(self, path: str | Path):
        self.table: dict[tuple[str, int, int], int] = {}
        for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 4:
                raise DataError(f"distance file line {lineno}: expected 4 fields, got {raw!r}")
            sid, i, j, dist = parts[0], int(parts[1]), int(parts[2]), int(parts[3])
            if dist < 0:
                raise DataError(f"distance file line {lineno}: negative distance {dist}")
            self.table[(sid, i, j)] = dist
            self.table[(sid, j, i)] = dist

    def bucket(self, sentence_id: str, aspect: tuple[int, int], span: tuple[int, int]) -> int:
        best: int | None = None
        for i in range(aspect[0], aspect[1] + 1):
            for j in range(span[0], span[1] + 1):
                d = self.table.get((sentence_id, i, j))
                if d is not None and (best is None or d < best):
                    best = d
        if best is None:
            raise NotFoundError(
                f"no tree distance for sentence {sentence_id!r}, aspect {aspect}, span {span}"
            )
        return distance_bucket(best)


# -- distillation teachers -------------------------------------------------------


class LexiconTeacher:
    """Phrase-polarity teacher backed by the prior lexicon.

    A polarity hit puts `confidence` mass on that class and splits the rest
    evenly; no hit (or a tie) is a neutral-peaked distribution.
    """

    def __init__(self, lexicon: PriorLexicon, confidence: float = 0.8):
        if not 0.0 < confidence < 1.0:
            raise ContractError(f"teacher confidence must lie in (0, 1), got {confidence}")
        self.lexicon = lexicon
        self.confidence = confidence

    def predict(self, sentence_id: str, span: tuple[int, int], span_text: str) -> np.ndarray:
        label = lookup_prior(span_text, self.lexicon)
        rest = (1.0 - self.confidence) / 2.0
        dist = np.full(3, rest)
        dist[int(label)] = self.confidence
        return dist


class FileTeacher:
    """Teacher distributions stored per (sentence_id, start, end)."""

    def __init__(self, path: str | Path):
        self.table: dict[tuple[str, int, int], np.ndarray] = {}
        for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 6:
                raise DataError(
                    f"teacher file line {lineno}: expected 'id<TAB>s<TAB>e<TAB>p_pos<TAB>p_neu<TAB>p_neg'"
                )
            sid, s, e = parts[0], int(parts[1]), int(parts[2])
            dist = np.asarray([float(parts[3]), float(parts[4]), float(parts[5])])
            if (dist < 0).any():
                raise DataError(f"teacher file line {lineno}: negative probability")
            self.table[(sid, s, e)] = dist

    def predict(self, sentence_id: str, span: tuple[int, int], span_text: str) -> np.ndarray:
        key = (sentence_id, span[0], span[1])
        if key not in self.table:
            raise NotFoundError(f"teacher has no entry for {key}")
        return self.table[key]


# -- scoring ---------------------------------------------------------------------


def mention_scores(span_reprs: Tensor, ms_mlp: Mlp) -> tuple[Tensor, Tensor]:
    """(p_mention, r) for a (m, 3d) matrix of span representations.

    r is the non-neutral probability 1 - p[neutral], one scalar per span.
    """
    if span_reprs.ndim != 2:
        raise ShapeError(f"mention_scores expects (m, 3d) input, got {span_reprs.shape}")
    p = ad.softmax(ms_mlp(span_reprs), axis=-1)
    r = 1.0 - p[:, int(SentimentLabel.NEUTRAL)]
    return p, r


def mention_score(u: Tensor, ms_mlp: Mlp) -> tuple[Tensor, Tensor]:
    """Single-span version of `mention_scores`."""
    p, r = mention_scores(u.reshape((1, -1)), ms_mlp)
    return p.reshape((-1,)), r.reshape(())


def distillation_terms(teacher_rows: np.ndarray, p_mention: Tensor) -> Tensor:
    """Per-span KL(teacher || mention) contributions, shape (m,)."""
    return kl_rows(teacher_rows, p_mention)


def pair_repr(c: Tensor, u: Tensor, bucket: int, z_table: Tensor) -> Tensor:
    """[c; u; c*u; z_bucket] for one aspect-candidate pair."""
    if c.shape != u.shape:
        raise ShapeError(f"aspect repr {c.shape} and candidate repr {u.shape} differ")
    if not 0 <= bucket < z_table.shape[0]:
        raise ContractError(
            f"distance bucket {bucket} outside table of {z_table.shape[0]} buckets"
        )
    return ad.concat([c, u, c * u, z_table[bucket]])


def pair_repr_table(c: Tensor, candidate_reprs: Tensor, buckets: np.ndarray, z_table: Tensor) -> Tensor:
    """Pair representations for all candidates of one aspect, (m, 9d+z)."""
    m = candidate_reprs.shape[0]
    if buckets.shape != (m,):
        raise ShapeError(f"{m} candidates but bucket vector of shape {buckets.shape}")
    if buckets.size and (buckets.min() < 0 or buckets.max() >= z_table.shape[0]):
        raise ContractError("distance bucket outside the embedding table")
    c_rows = ad.broadcast_to(c.reshape((1, -1)), (m, c.shape[0]))
    z_rows = z_table[buckets.astype(np.intp)]
    return ad.concat([c_rows, candidate_reprs, c_rows * candidate_reprs, z_rows], axis=1)


def alignment_scores(pair_reprs: Tensor, r: Tensor, as_mlp: Mlp) -> tuple[Tensor, Tensor, Tensor]:
    """Raw logits, softmaxed alignment, and mention-weighted scores.

    Returns (logits, a, f_pre) where a = softmax(logits) and
    f_pre = a * r. f_pre is deliberately not renormalized.
    """
    if pair_reprs.shape[0] == 0:
        raise ContractError("alignment_scores needs at least one candidate")
    logits = as_mlp(pair_reprs).reshape((-1,))
    a = ad.softmax(logits, axis=-1)
    return logits, a, a * r


def dummy_score(a: Tensor, r: Tensor, delta: float) -> Tensor:
    """Score of the no-opinion dummy: delta * sum(a * (1 - r))."""
    return delta * ad.tsum(a * (1.0 - r))


def append_dummy(f_pre: Tensor, f_dummy: Tensor) -> Tensor:
    """Final score vector [f_pre; f_dummy] of length m+1."""
    return ad.concat([f_pre, f_dummy.reshape((1,))])


def dummy_only_scores() -> Tensor:
    """Score vector for an aspect with zero candidates: the dummy is certain."""
    return Tensor(np.ones(1))


def integrate_opinion(
    c: Tensor, candidate_reprs: Tensor | None, f: Tensor, gate_mlp: Mlp
) -> tuple[Tensor, Tensor, Tensor]:
    """Gate the score-weighted opinion mixture into the aspect representation.

    The dummy opinion's column is the aspect representation itself.
    Returns (v, u, g) with v = g*c + (1-g)*u.
    """
    m = f.shape[0] - 1
    c_row = c.reshape((1, -1))
    if m == 0:
        columns = c_row
    else:
        if candidate_reprs is None or candidate_reprs.shape[0] != m:
            have = None if candidate_reprs is None else candidate_reprs.shape
            raise ShapeError(f"scores imply {m} candidates but representations are {have}")
        columns = ad.concat([candidate_reprs, c_row], axis=0)
    u = (f.reshape((1, -1)) @ columns).reshape((-1,))
    g = ad.sigmoid(gate_mlp(ad.concat([c, u]).reshape((1, -1)))).reshape((-1,))
    v = g * c + (1.0 - g) * u
    return v, u, g


@dataclass
class DependencyScores:
    """Final aspect-opinion dependency scores for one aspect."""

    candidates: list[SpanCandidate]
    alignment: np.ndarray  # softmax(logits), length m
    scores: np.ndarray  # mention-weighted scores plus dummy, length m+1

    @property
    def num_candidates(self) -> int:
        return len(self.candidates)

    @property
    def dummy_index(self) -> int:
        return len(self.candidates)
