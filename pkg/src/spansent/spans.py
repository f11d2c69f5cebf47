"""Opinion-candidate enumeration and span representations.

A span is represented as [start vector; end vector; attention-pooled
interior], giving a 3d vector. Aspects and opinion candidates use the same
scheme but separate pooling parameters ("aa" vs "ao").
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .encoder import ContextMatrix
from .errors import ContractError, ShapeError
from .nn import Mlp


@dataclass(frozen=True, order=True)
class SpanCandidate:
    """Token span, 0-based inclusive on both ends."""

    start: int
    end: int

    @property
    def width(self) -> int:
        return self.end - self.start + 1


def enumerate_candidates(n: int, aspect: tuple[int, int], max_width: int) -> list[SpanCandidate]:
    """All spans with end-start <= max_width that do not touch the aspect.

    Returned sorted by (start, end); the aspect bounds are inclusive.
    """
    s_a, e_a = aspect
    if not (0 <= s_a <= e_a < n):
        raise ContractError(f"aspect span ({s_a}, {e_a}) invalid for sentence of {n} tokens")
    out = []
    for s in range(n):
        for e in range(s, min(n, s + max_width + 1)):
            if e < s_a or s > e_a:
                out.append(SpanCandidate(s, e))
    return out


def all_spans(n: int, max_width: int) -> list[SpanCandidate]:
    """Every span with end-start <= max_width, sorted by (start, end)."""
    return [
        SpanCandidate(s, e) for s in range(n) for e in range(s, min(n, s + max_width + 1))
    ]


def attn_pool(h_slice: Tensor, pool_mlp: Mlp) -> Tensor:
    """Pool a (d, k) slice into a d-vector with MLP-scored softmax weights."""
    if h_slice.ndim != 2:
        raise ShapeError(f"attn_pool expects a (d, k) matrix, got shape {h_slice.shape}")
    if h_slice.shape[1] == 0:
        raise ContractError("attn_pool of an empty span")
    rows = h_slice.T
    scores = pool_mlp(rows).reshape((1, -1))
    weights = ad.softmax(scores, axis=-1)
    return (weights @ rows).reshape((-1,))


def span_repr(context: ContextMatrix, span: tuple[int, int], pool_mlp: Mlp) -> Tensor:
    """[h_start; h_end; attn_pool(interior)] for one span, length 3d."""
    s, e = span
    n = context.n_tokens
    if not (0 <= s <= e < n):
        raise ContractError(f"span ({s}, {e}) out of range for sentence of {n} tokens")
    rows = context.rows()
    interior = rows[s : e + 1]
    scores = pool_mlp(interior).reshape((1, -1))
    weights = ad.softmax(scores, axis=-1)
    pooled = (weights @ interior).reshape((-1,))
    return ad.concat([rows[s], rows[e], pooled])


def span_repr_table(context: ContextMatrix, spans: list[SpanCandidate], pool_mlp: Mlp) -> Tensor:
    """Representations for many spans at once, one (3d) row per span.

    Row order matches `spans`. Spans are processed grouped by width so the
    pooling MLP runs on a handful of stacked matrices instead of per span.
    """
    if not spans:
        raise ContractError("span_repr_table needs at least one span")
    rows = context.rows()
    n, d = rows.shape
    starts = np.asarray([sp.start for sp in spans], dtype=np.intp)
    ends = np.asarray([sp.end for sp in spans], dtype=np.intp)
    if starts.min() < 0 or ends.max() >= n or (starts > ends).any():
        raise ContractError("span table contains a span outside the sentence")

    boundary_start = rows[starts]
    boundary_end = rows[ends]

    widths = ends - starts + 1
    pooled_parts: list[Tensor] = []
    order: list[np.ndarray] = []
    for w in np.unique(widths):
        sel = np.nonzero(widths == w)[0]
        order.append(sel)
        group_starts = starts[sel]
        if w == 1:
            pooled_parts.append(rows[group_starts])
            continue
        idx = group_starts[:, None] + np.arange(w)[None, :]
        flat = rows[idx.reshape(-1)]
        scores = pool_mlp(flat).reshape((len(sel), int(w)))
        weights = ad.softmax(scores, axis=-1)
        placed = ad.scatter_cols(weights, idx, n)
        pooled_parts.append(placed @ rows)
    stacked = pooled_parts[0] if len(pooled_parts) == 1 else ad.concat(pooled_parts, axis=0)
    perm = np.concatenate(order)
    inverse = np.empty_like(perm)
    inverse[perm] = np.arange(len(perm))
    pooled = stacked[inverse]
    return ad.concat([boundary_start, boundary_end, pooled], axis=1)
