"""Sequence loss: gamma-weighted L1 on flows plus beta-weighted L1 on their spatial gradients."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..autodiff import Tensor, as_tensor, ops


def _grads(d: Tensor) -> tuple[Tensor, Tensor]:
    """Forward differences; the last row/column repeats its neighbour, so its difference is zero."""
    gx = ops.pad(ops.sub(d[:, :, :, 1:], d[:, :, :, :-1]), [(0, 0), (0, 0), (0, 0), (0, 1)])
    gy = ops.pad(ops.sub(d[:, :, 1:, :], d[:, :, :-1, :]), [(0, 0), (0, 0), (0, 1), (0, 0)])
    return gx, gy


def _l1(x: Tensor) -> Tensor:
    """Spatial mean of per-pixel L1 norm over the two flow components."""
    n, _, h, w = x.shape
    return ops.mul(1.0 / (n * h * w), ops.sum(ops.abs(x)))


def term_weights(count: int, gamma: float = 0.8) -> np.ndarray:
    return gamma ** (count - 1 - np.arange(count))


def siv_loss(flows: Sequence[Tensor], gt, gamma: float = 0.8, beta: float = 0.3):
    """Returns (total, flow term, gradient term) for the sequence ``u_1 .. u_{N+1}``."""
    gt = as_tensor(np.asarray(gt.data if isinstance(gt, Tensor) else gt, dtype=np.float64))
    if not flows:
        raise ValueError("empty flow sequence")
    weights = term_weights(len(flows), gamma)
    l_flow = l_grad = None
    for wt, u in zip(weights, flows):
        if u.shape != gt.shape:
            raise ValueError(f"flow shape {u.shape} does not match ground truth {gt.shape}")
        d = ops.sub(u, gt)
        gx, gy = _grads(d)
        tf = ops.mul(float(wt), _l1(d))
        tg = ops.mul(float(wt), ops.add(_l1(gx), _l1(gy)))
        l_flow = tf if l_flow is None else ops.add(l_flow, tf)
        l_grad = tg if l_grad is None else ops.add(l_grad, tg)
    return ops.add(l_flow, ops.mul(beta, l_grad)), l_flow, l_grad
