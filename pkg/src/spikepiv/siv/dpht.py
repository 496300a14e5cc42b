"""Dynamic pyramid hierarchical temporal feature extractor."""

from __future__ import annotations

import numpy as np

from ..autodiff import Conv2d, Conv3d, Module, Tensor, as_tensor, ops


class DphtLevel(Module):
    """x_out = F2C(F3C(x) + F3MP(x)): strided 5x3x3 conv plus max-pool branch, then a 1x3x3 conv."""

    def __init__(self, cin: int, cout: int, rng: np.random.Generator):
        self.f3c = Conv3d(cin, cout, (5, 3, 3), rng, stride=2, padding=(2, 1, 1))
        self.mp_proj = Conv3d(cin, cout, (5, 1, 1), rng, padding=(2, 0, 0))
        self.f2c = Conv3d(cout, cout, (1, 3, 3), rng, padding=(0, 1, 1))

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[2] % 2:
            x = ops.pad(x, [(0, 0), (0, 0), (0, 1), (0, 0), (0, 0)])
        conv = self.f3c(x)
        pooled = self.mp_proj(ops.maxpool3d(x, 2, 2))
        return ops.leaky_relu(self.f2c(ops.add(conv, pooled)))


class Dpht(Module):
    """Three temporal-spatial levels, each flattened over time, refined, resampled to 1/4 and fused.

    Input is a voxel batch ``(N, B, H, W)`` with ``H`` and ``W`` divisible by 8.
    Output ``R`` has shape ``(N, C, H/4, W/4)``.
    """

    def __init__(self, bins: int, channels: int, rng: np.random.Generator, levels: int = 3,
                 level_channels: int | None = None):
        if bins < 1:
            raise ValueError("DPHT needs at least one temporal bin")
        lc = level_channels or max(channels // 2, 4)
        self.levels = []
        self.refine = []
        depth, cin = bins, 1
        for _ in range(levels):
            depth = (depth + depth % 2) // 2
            self.levels.append(DphtLevel(cin, lc, rng))
            self.refine.append(Conv2d(lc * depth, channels, 3, rng))
            cin = lc
        self.fuse = Conv2d(channels * levels, channels, 3, rng)  # A_m
        self.bins = bins
        self.factor = 2 ** levels

    def forward(self, vox) -> Tensor:
        vox = as_tensor(vox)
        n, b, h, w = vox.shape
        if b != self.bins:
            raise ValueError(f"DPHT built for {self.bins} bins, got {b}")
        if h % self.factor or w % self.factor:
            raise ValueError(f"input {h}x{w} must be divisible by {self.factor}")
        x = ops.reshape(vox, (n, 1, b, h, w))
        outs = []
        for level, refine in zip(self.levels, self.refine):
            x = level(x)
            _, c, d, hl, wl = x.shape
            flat = ops.reshape(x, (n, c * d, hl, wl))
            outs.append(ops.bilinear_resize(ops.leaky_relu(refine(flat)), h // 4, w // 4))
        return self.fuse(ops.concat(outs, axis=1))


class PlainEncoder(Module):
    """Ablation stand-in: the time bins as channels, two stride-2 convs."""

    def __init__(self, bins: int, channels: int, rng: np.random.Generator):
        self.c1 = Conv2d(bins, channels, 3, rng, stride=2)
        self.c2 = Conv2d(channels, channels, 3, rng, stride=2)
        self.bins = bins

    def forward(self, vox) -> Tensor:
        vox = as_tensor(vox)
        if vox.shape[1] != self.bins:
            raise ValueError(f"encoder built for {self.bins} bins, got {vox.shape[1]}")
        return self.c2(ops.leaky_relu(self.c1(vox)))
