"""Multi-scale refinement: coarse-to-fine cross convolution into a residual flow and a quality gate."""

from __future__ import annotations

import numpy as np

from ..autodiff import Conv2d, Module, Tensor, ops


def gate(u_n: Tensor, u_res: Tensor, q: Tensor) -> Tensor:
    """u_ref = u_N + u_res * Q, with the one-channel Q repeated over both flow components."""
    if u_n.shape != u_res.shape:
        raise ValueError(f"flow shapes differ: {u_n.shape} vs {u_res.shape}")
    if q.shape != (u_n.shape[0], 1) + u_n.shape[2:]:
        raise ValueError(f"quality map shape {q.shape} does not match flow {u_n.shape}")
    return ops.add(u_n, ops.mul(u_res, ops.concat([q, q], axis=1)))


class Msvr(Module):
    def __init__(self, channels: int, rng: np.random.Generator):
        self.quarter = Conv2d(2, channels, 3, rng)
        self.half = Conv2d(2, channels, 3, rng)
        self.full = Conv2d(2, channels, 3, rng)
        self.cross_half = Conv2d(2 * channels, channels, 3, rng)
        self.cross_full = Conv2d(2 * channels, channels, 3, rng)
        self.res_head = Conv2d(channels, 2, 3, rng, zero=True)
        self.q_head = Conv2d(channels, 1, 3, rng)

    def forward(self, coarse_n: Tensor, u_n: Tensor, factor: int = 4):
        """Returns (u_res, Q, u_ref) from the last coarse flow and its full-resolution upsample."""
        n, _, h, w = u_n.shape
        if coarse_n.shape[2] * factor != h or coarse_n.shape[3] * factor != w:
            raise ValueError(f"coarse flow {coarse_n.shape} is not 1/{factor} of {u_n.shape}")
        q_in = ops.mul(float(factor), coarse_n)  # full-resolution pixel units
        h_in = ops.bilinear_resize(u_n, h // 2, w // 2)
        xq = ops.leaky_relu(self.quarter(q_in))
        xh = ops.leaky_relu(self.half(h_in))
        xf = ops.leaky_relu(self.full(u_n))
        xh = ops.leaky_relu(self.cross_half(ops.concat([xh, ops.bilinear_resize(xq, h // 2, w // 2)], axis=1)))
        xf = ops.leaky_relu(self.cross_full(ops.concat([xf, ops.bilinear_resize(xh, h, w)], axis=1)))
        u_res = self.res_head(xf)
        q = ops.sigmoid(self.q_head(xf))
        return u_res, q, gate(u_n, u_res, q)
