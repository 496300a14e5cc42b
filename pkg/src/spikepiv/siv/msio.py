"""Iterative flow optimiser: static local correlation, conv-GRU updates, convex upsampling."""

from __future__ import annotations

import numpy as np

from ..autodiff import Conv2d, GRUParams, Module, Tensor, ops


class MotionEncoder(Module):
    """Shared two-layer conv stack applied to both sub-stream representations."""

    def __init__(self, channels: int, rng: np.random.Generator):
        self.c1 = Conv2d(channels, channels, 3, rng)
        self.c2 = Conv2d(channels, channels, 3, rng)

    def forward(self, r: Tensor) -> Tensor:
        return self.c2(ops.leaky_relu(self.c1(r)))


class Msio(Module):
    """Emits ``N`` full-resolution flows ``u_i = up(f_i)`` with ``f_i = f_{i-1} + df_i`` at 1/4 scale."""

    def __init__(self, channels: int, hidden: int, radius: int, rng: np.random.Generator, factor: int = 4):
        d2 = (2 * radius + 1) ** 2
        self.radius = radius
        self.factor = factor
        self.hidden = hidden
        self.init_h = Conv2d(channels, hidden, 3, rng)
        self.ctx = Conv2d(channels, hidden, 3, rng)
        self.motion = Conv2d(d2 + 2, hidden, 3, rng)
        self.gru = GRUParams(hidden, 2 * hidden + 2, rng)
        self.head1 = Conv2d(hidden, hidden, 3, rng)
        self.head2 = Conv2d(hidden, 2, 3, rng, zero=True)
        self.mask1 = Conv2d(hidden, hidden, 3, rng)
        self.mask2 = Conv2d(hidden, 9 * factor * factor, 1, rng)

    def forward(self, f_c: Tensor, fm_s: Tensor, fm_t: Tensor, iterations: int):
        """Returns (full-resolution flows, coarse flows), each of length ``iterations``."""
        if iterations < 1:
            raise ValueError("need at least one update iteration")
        n, _, h, w = f_c.shape
        corr = ops.local_correlation(fm_s, fm_t, self.radius)
        hid = ops.tanh(self.init_h(f_c))
        ctx = ops.leaky_relu(self.ctx(f_c))
        flow = Tensor(np.zeros((n, 2, h, w)))
        full, coarse = [], []
        for _ in range(iterations):
            mot = ops.leaky_relu(self.motion(ops.concat([corr, flow], axis=1)))
            hid = self.gru(hid, ops.concat([mot, ctx, flow], axis=1))
            flow = ops.add(flow, self.head2(ops.leaky_relu(self.head1(hid))))
            mask = ops.mul(0.25, self.mask2(ops.leaky_relu(self.mask1(hid))))
            coarse.append(flow)
            full.append(ops.convex_upsample(flow, mask, self.factor))
        return full, coarse
