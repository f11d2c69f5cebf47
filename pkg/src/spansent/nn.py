"""Parameter groups, initialization and the small neural building blocks.

Trainable tensors are organized into eight named groups so losses can be
backpropagated into an explicit subset (the selective-update scheme the
trainer relies on): encoder weights ("ptm"), aspect pooling ("aa"),
prior-sentiment discriminator ("dis"), opinion pooling ("ao"), mention
scorer ("ms"), alignment scorer ("as"), gate ("gm") and classifier ("sc").
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractError, ShapeError

GROUP_NAMES = ("ptm", "aa", "dis", "ao", "ms", "as", "gm", "sc")

PROB_FLOOR = 1e-12


@dataclass
class ParamGroup:
    """A named set of trainable tensors sharing one learning rate."""

    name: str
    learning_rate: float
    tensors: dict[str, Tensor] = field(default_factory=dict)

    def add(self, name: str, tensor: Tensor) -> Tensor:
        if name in self.tensors:
            raise ContractError(f"duplicate tensor name {name!r} in group {self.name!r}")
        tensor.requires_grad = True
        self.tensors[name] = tensor
        return tensor

    def all_tensors(self) -> list[Tensor]:
        return list(self.tensors.values())

    def named_tensors(self) -> list[tuple[str, Tensor]]:
        return list(self.tensors.items())


def flatten_groups(groups: Iterable[ParamGroup]) -> list[Tensor]:
    out: list[Tensor] = []
    for g in groups:
        out.extend(g.all_tensors())
    return out


def zero_grads(groups: Iterable[ParamGroup]) -> None:
    for g in groups:
        for t in g.all_tensors():
            t.grad = None


def truncated_normal(rng: np.random.Generator, shape, std: float = 0.02) -> np.ndarray:
    """Normal(0, std) resampled until everything lies within two deviations."""
    out = rng.normal(0.0, std, size=shape)
    bad = np.abs(out) > 2.0 * std
    while bad.any():
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > 2.0 * std
    return out


# -- multi-layer perceptrons ---------------------------------------------------


@dataclass
class Mlp:
    """A stack of affine layers; hidden layers pass through the activation."""

    layers: list[tuple[Tensor, Tensor]]
    activation: str = "gelu"

    def __call__(self, x: Tensor) -> Tensor:
        return forward_mlp(x, self.layers, activation=self.activation)

    @property
    def in_dim(self) -> int:
        return self.layers[0][0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.layers[-1][0].shape[1]


def init_mlp(
    rng: np.random.Generator,
    group: ParamGroup,
    prefix: str,
    dims: Sequence[int],
    activation: str = "gelu",
) -> Mlp:
    """Create weights `dims[0] -> dims[1] -> ... -> dims[-1]` inside `group`."""
    if len(dims) < 2:
        raise ContractError(f"an MLP needs at least input and output dims, got {dims}")
    layers = []
    for i in range(len(dims) - 1):
        w = group.add(f"{prefix}.w{i}", Tensor(truncated_normal(rng, (dims[i], dims[i + 1]))))
        b = group.add(f"{prefix}.b{i}", Tensor(np.zeros(dims[i + 1])))
        layers.append((w, b))
    return Mlp(layers=layers, activation=activation)


_ACTIVATIONS = {
    "gelu": ad.gelu,
    "identity": lambda t: t,
}


def forward_mlp(x: Tensor, layers: Sequence[tuple[Tensor, Tensor]], activation: str = "gelu") -> Tensor:
    """Affine chain with the activation between layers (linear output).

    `x` may be a single vector or a matrix of row vectors.
    """
    act = _ACTIVATIONS[activation]
    single = x.ndim == 1
    h = x.reshape((1, -1)) if single else x
    for i, (w, b) in enumerate(layers):
        if h.shape[1] != w.shape[0]:
            raise ShapeError(f"MLP layer {i}: input width {h.shape} does not match weight {w.shape}")
        h = h @ w + b
        if i < len(layers) - 1:
            h = act(h)
    return h.reshape((-1,)) if single else h


# -- probability helpers --------------------------------------------------------


def safe_log(p: Tensor) -> Tensor:
    """log with the project-wide probability floor applied first."""
    return ad.log(ad.clamp_min(p, PROB_FLOOR))


def softmax(logits: Tensor, axis: int = -1) -> Tensor:
    return ad.softmax(logits, axis=axis)


def kl_divergence(p_teacher: Tensor, p_student: Tensor) -> Tensor:
    """KL(teacher || student), summed; student probabilities are floored.

    Teacher entries are treated as constants (the graph flows only into the
    student side), matching how distillation targets are used.
    """
    if p_teacher.shape != p_student.shape:
        raise ShapeError(f"KL operands differ in shape: {p_teacher.shape} vs {p_student.shape}")
    if (p_teacher.data < 0).any() or (p_student.data < 0).any():
        raise ContractError("KL operands must be non-negative probability vectors")
    t = p_teacher.data
    log_t = np.log(np.maximum(t, PROB_FLOOR))
    const = Tensor((t * log_t).sum())
    cross = ad.tsum(Tensor(t) * safe_log(p_student))
    return const - cross


def kl_rows(teacher: np.ndarray, p_student: Tensor) -> Tensor:
    """Per-row KL(teacher || student) for matrices of distributions."""
    if teacher.shape != p_student.shape:
        raise ShapeError(f"KL operands differ in shape: {teacher.shape} vs {p_student.shape}")
    log_t = np.log(np.maximum(teacher, PROB_FLOOR))
    const = Tensor((teacher * log_t).sum(axis=1))
    cross = ad.tsum(Tensor(teacher) * safe_log(p_student), axis=1)
    return const - cross


def nll_pick(probabilities: Tensor, class_index: int) -> Tensor:
    """-log p[class_index] with the probability floor applied."""
    if probabilities.ndim != 1:
        raise ShapeError(f"nll_pick expects a vector, got shape {probabilities.shape}")
    n = probabilities.shape[0]
    if not 0 <= class_index < n:
        raise IndexError(f"class index {class_index} out of range for {n} classes")
    picked = probabilities[class_index]
    return -safe_log(picked)
