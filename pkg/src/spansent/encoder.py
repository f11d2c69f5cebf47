"""Contextual token encoding: a small trainable Transformer or fixtures.

The trainable encoder is a post-norm Transformer with learned absolute
position embeddings, so a zero-layer configuration degenerates to plain
token+position embeddings. Sentences are encoded one at a time (no padding
to reason about) and each sentence of a batch is encoded exactly once, no
matter how many aspects it carries.
"""
from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractError, DataError, NotFoundError, ShapeError
from .nn import Mlp, ParamGroup, forward_mlp, truncated_normal

LAYER_NORM_EPS = 1e-5


class TruncationWarning(UserWarning):
    """A sentence exceeded the maximum sequence length and was cut."""


@dataclass(frozen=True)
class Token:
    text: str
    start: int
    end: int


_TOKEN_RX = re.compile(r"\w+|[^\w\s]")


def tokenize(text: str) -> list[Token]:
    """Lowercased word/punctuation tokens with character offsets."""
    lowered = text.lower()
    return [Token(m.group(0), m.start(), m.end()) for m in _TOKEN_RX.finditer(lowered)]


@dataclass
class EncoderConfig:
    vocab_size: int
    model_dim: int = 32
    layers: int = 2
    heads: int = 4
    max_seq_len: int = 64
    dropout: float = 0.0

    def __post_init__(self):
        if self.model_dim % self.heads != 0:
            raise ContractError(
                f"model_dim {self.model_dim} must be divisible by heads {self.heads}"
            )
        if not 0.0 <= self.dropout < 1.0:
            raise ContractError(f"dropout must lie in [0, 1), got {self.dropout}")


@dataclass
class ContextMatrix:
    """Per-token context vectors, stored dim-major as a (d, n) tensor."""

    h: Tensor
    mask: np.ndarray
    sentence_id: str | None = None
    _rows: Tensor | None = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.h.shape[0]

    @property
    def n_tokens(self) -> int:
        return self.h.shape[1]

    def rows(self) -> Tensor:
        """The same context as (n, d) row vectors (cached transpose)."""
        if self._rows is None:
            self._rows = self.h.T
        return self._rows

    @classmethod
    def from_rows(cls, rows: Tensor, sentence_id: str | None = None) -> "ContextMatrix":
        cm = cls(h=rows.T, mask=np.ones(rows.shape[0], dtype=bool), sentence_id=sentence_id)
        cm._rows = rows
        return cm


def _layer_norm(x: Tensor, gain: Tensor, bias: Tensor) -> Tensor:
    mu = x.mean(axis=-1, keepdims=True)
    centered = x - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = ad.pow_const(var + LAYER_NORM_EPS, -0.5)
    return centered * inv * gain + bias


def _dropout(x: Tensor, rate: float, rng: np.random.Generator | None) -> Tensor:
    if rate <= 0.0 or rng is None:
        return x
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * Tensor(mask)


class TrainableEncoder:
    """Transformer encoder whose weights live in the "ptm" parameter group."""

    def __init__(self, config: EncoderConfig, group: ParamGroup, rng: np.random.Generator):
        self.config = config
        self.group = group
        self.calls = 0
        d = config.model_dim
        group.add("tok_emb", Tensor(truncated_normal(rng, (config.vocab_size, d))))
        group.add("pos_emb", Tensor(truncated_normal(rng, (config.max_seq_len, d))))
        for i in range(config.layers):
            for name in ("wq", "wk", "wv", "wo"):
                group.add(f"layer{i}.{name}", Tensor(truncated_normal(rng, (d, d))))
                group.add(f"layer{i}.{name[1]}b", Tensor(np.zeros(d)))
            group.add(f"layer{i}.ln1_g", Tensor(np.ones(d)))
            group.add(f"layer{i}.ln1_b", Tensor(np.zeros(d)))
            group.add(f"layer{i}.ff_w1", Tensor(truncated_normal(rng, (d, 4 * d))))
            group.add(f"layer{i}.ff_b1", Tensor(np.zeros(4 * d)))
            group.add(f"layer{i}.ff_w2", Tensor(truncated_normal(rng, (4 * d, d))))
            group.add(f"layer{i}.ff_b2", Tensor(np.zeros(d)))
            group.add(f"layer{i}.ln2_g", Tensor(np.ones(d)))
            group.add(f"layer{i}.ln2_b", Tensor(np.zeros(d)))

    def _t(self, name: str) -> Tensor:
        return self.group.tensors[name]

    def encode_ids(
        self,
        token_ids: list[int],
        train_rng: np.random.Generator | None = None,
        attn_sink: list | None = None,
    ) -> Tensor:
        """Encode a token-id sequence into an (n, d) row matrix."""
        cfg = self.config
        if len(token_ids) == 0:
            raise ContractError("cannot encode an empty sentence")
        if len(token_ids) > cfg.max_seq_len:
            warnings.warn(
                f"sentence of {len(token_ids)} tokens truncated to {cfg.max_seq_len}",
                TruncationWarning,
                stacklevel=2,
            )
            token_ids = token_ids[: cfg.max_seq_len]
        ids = np.asarray(token_ids, dtype=np.intp)
        if (ids < 0).any() or (ids >= cfg.vocab_size).any():
            raise ContractError(
                f"token id out of range for vocab of {cfg.vocab_size}: {token_ids}"
            )
        self.calls += 1
        n, d = len(ids), cfg.model_dim
        x = self._t("tok_emb")[ids] + self._t("pos_emb")[:n]
        x = _dropout(x, cfg.dropout, train_rng)
        n_heads, dh = cfg.heads, d // cfg.heads
        scale = 1.0 / np.sqrt(dh)
        for i in range(cfg.layers):
            q = x @ self._t(f"layer{i}.wq") + self._t(f"layer{i}.qb")
            k = x @ self._t(f"layer{i}.wk") + self._t(f"layer{i}.kb")
            v = x @ self._t(f"layer{i}.wv") + self._t(f"layer{i}.vb")
            heads = []
            for hh in range(n_heads):
                sl = slice(hh * dh, (hh + 1) * dh)
                scores = (q[:, sl] @ k[:, sl].T) * scale
                attn = ad.softmax(scores, axis=-1)
                if attn_sink is not None:
                    attn_sink.append(attn.data.copy())
                heads.append(attn @ v[:, sl])
            attn_out = ad.concat(heads, axis=1) @ self._t(f"layer{i}.wo") + self._t(f"layer{i}.ob")
            attn_out = _dropout(attn_out, cfg.dropout, train_rng)
            x = _layer_norm(x + attn_out, self._t(f"layer{i}.ln1_g"), self._t(f"layer{i}.ln1_b"))
            ff = ad.gelu(x @ self._t(f"layer{i}.ff_w1") + self._t(f"layer{i}.ff_b1"))
            ff = ff @ self._t(f"layer{i}.ff_w2") + self._t(f"layer{i}.ff_b2")
            ff = _dropout(ff, cfg.dropout, train_rng)
            x = _layer_norm(x + ff, self._t(f"layer{i}.ln2_g"), self._t(f"layer{i}.ln2_b"))
        return x

    def encode_sentence(
        self,
        token_ids: list[int],
        sentence_id: str | None = None,
        train_rng: np.random.Generator | None = None,
        attn_sink: list | None = None,
    ) -> ContextMatrix:
        rows = self.encode_ids(token_ids, train_rng=train_rng, attn_sink=attn_sink)
        return ContextMatrix.from_rows(rows, sentence_id=sentence_id)


class FixtureEncoder:
    """Serves stored context matrices verbatim; gradients never flow in."""

    def __init__(self, matrices: dict[str, np.ndarray], model_dim: int | None = None):
        self.matrices = matrices
        self.calls = 0
        for sid, arr in matrices.items():
            if arr.ndim != 2:
                raise DataError(f"fixture {sid!r} must be a (d, n) matrix, got shape {arr.shape}")
            if model_dim is not None and arr.shape[0] != model_dim:
                raise DataError(
                    f"fixture {sid!r} has dim {arr.shape[0]}, expected model_dim {model_dim}"
                )

    def encode_id(self, sentence_id: str) -> ContextMatrix:
        if sentence_id not in self.matrices:
            raise NotFoundError(f"no fixture embedding for sentence id {sentence_id!r}")
        self.calls += 1
        arr = self.matrices[sentence_id]
        return ContextMatrix(
            h=Tensor(arr), mask=np.ones(arr.shape[1], dtype=bool), sentence_id=sentence_id
        )


def save_fixture_embeddings(path: str | Path, matrices: dict[str, np.ndarray]) -> None:
    """One record per line: id, d, n, then the (d, n) values row-major."""
    lines = []
    for sid in sorted(matrices):
        arr = np.asarray(matrices[sid], dtype=np.float64)
        flat = " ".join(repr(v) for v in arr.reshape(-1))
        lines.append(f"{sid} {arr.shape[0]} {arr.shape[1]} {flat}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_fixture_embeddings(path: str | Path, model_dim: int | None = None) -> FixtureEncoder:
    matrices: dict[str, np.ndarray] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) < 3:
            raise DataError(f"fixture line {lineno} is malformed: {line[:60]!r}")
        sid, d, n = parts[0], int(parts[1]), int(parts[2])
        values = np.asarray([float(v) for v in parts[3:]], dtype=np.float64)
        if values.size != d * n:
            raise DataError(
                f"fixture line {lineno}: expected {d * n} values for {sid!r}, got {values.size}"
            )
        matrices[sid] = values.reshape(d, n)
    return FixtureEncoder(matrices, model_dim=model_dim)
