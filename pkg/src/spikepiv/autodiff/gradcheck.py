"""Central finite-difference oracles for the analytic gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


def rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """max |a - n| normalised by the larger gradient magnitude of the pair."""
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), 1e-12)
    return float(np.max(np.abs(analytic - numeric)) / scale)


def numeric_grad(f: Callable[[], float], x: Tensor, h: float = 1e-5,
                 entries: Sequence[tuple[int, ...]] | None = None) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. the entries of leaf ``x``.

    When ``entries`` is given only those positions are perturbed (others stay 0).
    """
    g = np.zeros_like(x.data)
    it = entries if entries is not None else list(np.ndindex(*x.shape))
    for idx in it:
        old = x.data[idx]
        x.data[idx] = old + h
        fp = f()
        x.data[idx] = old - h
        fm = f()
        x.data[idx] = old
        g[idx] = (fp - fm) / (2 * h)
    return g


def check_gradients(fn: Callable[..., Tensor], inputs: Sequence[Tensor], seed: int = 0,
                    h: float = 1e-5) -> float:
    """Worst relative error over all ``inputs`` for ``sum(fn(*inputs) * R)`` with random R."""
    rng = np.random.default_rng([seed, 0x5EED])  # independent of the caller's input stream
    out = fn(*inputs)
    proj = rng.standard_normal(out.shape)

    def scalar() -> float:
        return float(np.sum(fn(*inputs).data * proj))

    for x in inputs:
        x.grad = None
    out.backward(proj)
    worst = 0.0
    for x in inputs:
        if not x.requires_grad:
            continue
        num = numeric_grad(scalar, x, h)
        worst = max(worst, rel_error(x.grad, num))
    return worst


def directional_errors(loss: Callable[[], Tensor], params: Sequence[Tensor], seed: int = 0,
                       steps: Sequence[float] = (1e-5, 1e-6), one_sided: bool = True) -> dict[int, float]:
    """Per-tensor relative error of ``<grad, R>`` against finite differences along random ``R``.

    Checks every entry of every tensor with two extra forward passes per step size.
    The best estimate is scored. Larger steps suit tiny gradients (roundoff), smaller
    ones suit kinks; with ``one_sided`` a piecewise-smooth loss (ReLU, abs, max-pool)
    with a kink inside ``[-h, h]`` still has one side on a single smooth piece.
    """
    rng = np.random.default_rng([seed, 0xD1EC])
    for p in params:
        p.grad = None
    root = loss()
    f0 = root.item()
    root.backward()
    out = {}
    for i, p in enumerate(params):
        r = rng.standard_normal(p.shape)
        analytic = float(np.sum((p.grad if p.grad is not None else 0.0) * r))
        base = p.data.copy()
        estimates = []
        for h in steps:
            p.data = base + h * r
            fp = loss().item()
            p.data = base - h * r
            fm = loss().item()
            estimates.append((fp - fm) / (2 * h))
            if one_sided:
                estimates += [(fp - f0) / h, (f0 - fm) / h]
        p.data = base
        out[i] = min(abs(analytic - n) / max(abs(analytic), abs(n), 1e-12) for n in estimates)
    return out


def sampled_entry_errors(loss: Callable[[], Tensor], params: Sequence[Tensor], per_tensor: int = 4,
                         seed: int = 0, h: float = 1e-5) -> dict[int, float]:
    """Worst entrywise relative error of central differences at ``per_tensor`` random entries of each tensor."""
    rng = np.random.default_rng([seed, 0xE27])
    for p in params:
        p.grad = None
    loss().backward()
    out = {}
    for i, p in enumerate(params):
        grad = p.grad if p.grad is not None else np.zeros_like(p.data)
        worst = 0.0
        for _ in range(per_tensor):
            idx = tuple(int(rng.integers(0, s)) for s in p.shape)
            old = p.data[idx]
            p.data[idx] = old + h
            fp = loss().item()
            p.data[idx] = old - h
            fm = loss().item()
            p.data[idx] = old
            n = (fp - fm) / (2 * h)
            worst = max(worst, abs(grad[idx] - n) / max(abs(grad[idx]), abs(n), 1e-12))
        out[i] = worst
    return out
