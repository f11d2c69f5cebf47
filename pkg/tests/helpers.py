"""Shared test utilities: finite-difference checking and brute-force oracles."""
from __future__ import annotations

import numpy as np

from spansent import autodiff as ad
from spansent.autodiff import Tensor, backward


def numeric_gradient(loss_fn, tensor: Tensor, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of `loss_fn()` w.r.t. every entry of `tensor`."""
    grad = np.zeros_like(tensor.data)
    flat = tensor.data.reshape(-1)
    gflat = grad.reshape(-1)
    with ad.no_grad():
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + h
            up = float(loss_fn().data)
            flat[i] = original - h
            down = float(loss_fn().data)
            flat[i] = original
            gflat[i] = (up - down) / (2.0 * h)
    return grad


def check_gradients(loss_fn, tensors, rtol: float = 1e-3, h: float = 1e-5, atol: float = 1e-8):
    """Assert analytic gradients match central differences for each tensor.

    `loss_fn` must rebuild the graph from scratch on every call. A
    coordinate passes when |analytic - numeric| <= atol + rtol * scale;
    the absolute term absorbs finite-difference cancellation noise
    (~1e-10 here) on coordinates whose true gradient is essentially zero.
    """
    for t in tensors:
        t.grad = None
    loss = loss_fn()
    backward(loss, list(tensors))
    for idx, t in enumerate(tensors):
        analytic = t.grad.copy()
        numeric = numeric_gradient(loss_fn, t, h=h)
        scale = np.maximum(np.abs(analytic), np.abs(numeric))
        err = np.abs(analytic - numeric) - (atol + rtol * scale)
        worst = float(err.max())
        assert worst <= 0.0, (
            f"tensor #{idx} shape {t.shape}: finite-difference mismatch "
            f"(worst excess {worst:.3e}, rtol={rtol}, atol={atol})"
        )
        t.grad = None


# -- brute-force oracles -------------------------------------------------------


def oracle_candidates(n: int, aspect: tuple[int, int], max_width: int) -> set[tuple[int, int]]:
    """Triple-loop enumeration of valid opinion candidate spans."""
    s_a, e_a = aspect
    out = set()
    for s in range(n):
        for e in range(n):
            if s <= e and e - s <= max_width and (e < s_a or s > e_a):
                out.add((s, e))
    return out


def oracle_ranking(scores, dummy_index: int) -> list[int]:
    """Indices sorted by descending score; ties by index, dummy last on ties."""
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return order


def oracle_accuracy_macro_f1(preds, golds):
    n = len(golds)
    acc = sum(1 for p, g in zip(preds, golds) if p == g) / n
    f1s = []
    for cls in range(3):
        tp = fp = fn = 0
        for p, g in zip(preds, golds):
            if int(p) == cls and int(g) == cls:
                tp += 1
            elif int(p) == cls:
                fp += 1
            elif int(g) == cls:
                fn += 1
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        f1s.append(2 * prec * rec / (prec + rec) if prec + rec else 0.0)
    return acc, sum(f1s) / 3.0


def oracle_char_prf(pred: tuple[int, int], gold: tuple[int, int]):
    inter = max(0, min(pred[1], gold[1]) - max(pred[0], gold[0]))
    p = inter / (pred[1] - pred[0])
    r = inter / (gold[1] - gold[0])
    f = 0.0 if p + r == 0 else 2 * p * r / (p + r)
    return p, r, f
