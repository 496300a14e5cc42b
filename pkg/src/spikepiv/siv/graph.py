"""Graph encoder: pixel-to-node projection, two GAT layers over a dynamic adjacency, reprojection."""

from __future__ import annotations

import numpy as np

from ..autodiff import Conv2d, Module, Parameter, Tensor, ops
from ..autodiff.nn import _kaiming


def project(r: Tensor, logits: Tensor) -> tuple[Tensor, Tensor]:
    """Nodes ``V`` (N, C, K) with unit columns and row-stochastic weights ``Z`` (N, hw, K)."""
    n, c, h, w = r.shape
    k = logits.shape[1]
    z = ops.softmax(ops.transpose(ops.reshape(logits, (n, k, h * w)), (0, 2, 1)), axis=-1)
    v = ops.matmul(ops.reshape(r, (n, c, h * w)), z)
    return ops.l2_normalize(v, axis=1), z


def adjacency(v: Tensor) -> Tensor:
    return ops.matmul(ops.transpose(v, (0, 2, 1)), v)


class GatLayer(Module):
    """Fully connected graph attention with the adjacency as an additive logit bias."""

    def __init__(self, channels: int, rng: np.random.Generator, slope: float = 0.2):
        self.w = Parameter(_kaiming(rng, (channels, channels), channels))
        self.a_src = Parameter(_kaiming(rng, (1, channels), channels))
        self.a_dst = Parameter(_kaiming(rng, (1, channels), channels))
        self.slope = slope

    def attention(self, v: Tensor, adj: Tensor) -> tuple[Tensor, Tensor]:
        n, _, k = v.shape
        hm = ops.matmul(self.w, v)  # (N, C, K)
        s_i = ops.transpose(ops.matmul(self.a_src, hm), (0, 2, 1))  # (N, K, 1)
        s_j = ops.matmul(self.a_dst, hm)  # (N, 1, K)
        ones_r, ones_c = np.ones((1, k)), np.ones((k, 1))
        # e_ij = s_i + s_j without broadcasting: outer products with ones
        e = ops.add(ops.matmul(s_i, ones_r), ops.matmul(ones_c, s_j))
        att = ops.softmax(ops.add(ops.leaky_relu(e, self.slope), adj), axis=-1)
        return att, hm

    def forward(self, v: Tensor, adj: Tensor) -> Tensor:
        att, hm = self.attention(v, adj)
        return ops.elu(ops.matmul(hm, ops.transpose(att, (0, 2, 1))))


def graph_conv(v: Tensor, g1: GatLayer, g2: GatLayer) -> Tensor:
    """out = G2[G1(V) + V] + G1(V) + V, both layers sharing the adjacency of ``V``."""
    adj = adjacency(v)
    first = ops.add(g1(v, adj), v)
    return ops.add(g2(first, adj), first)


def reproject(v_out: Tensor, z: Tensor, shape: tuple[int, int]) -> Tensor:
    """Pixel features Z V^T reshaped to (N, C, h, w)."""
    n, c, _ = v_out.shape
    pix = ops.matmul(z, ops.transpose(v_out, (0, 2, 1)))  # (N, hw, C)
    return ops.reshape(ops.transpose(pix, (0, 2, 1)), (n, c) + tuple(shape))


class ResidualBlock(Module):
    def __init__(self, channels: int, rng: np.random.Generator):
        self.c1 = Conv2d(channels, channels, 3, rng)
        self.c2 = Conv2d(channels, channels, 3, rng)

    def forward(self, x: Tensor) -> Tensor:
        return ops.add(x, self.c2(ops.leaky_relu(self.c1(x))))


class ResidualExtractor(Module):
    def __init__(self, channels: int, rng: np.random.Generator, blocks: int = 2):
        self.blocks = [ResidualBlock(channels, rng) for _ in range(blocks)]

    def forward(self, x: Tensor) -> Tensor:
        for b in self.blocks:
            x = b(x)
        return x


class GraphEncoder(Module):
    def __init__(self, channels: int, nodes: int, rng: np.random.Generator):
        self.proj = Conv2d(channels, nodes, 1, rng)
        self.g1 = GatLayer(channels, rng)
        self.g2 = GatLayer(channels, rng)
        self.alpha = Parameter(np.zeros(1))  # fusion weight, starts at zero
        self.extract = ResidualExtractor(channels, rng)

    def forward(self, r: Tensor) -> Tensor:
        v, z = project(r, self.proj(r))
        v_out = graph_conv(v, self.g1, self.g2)
        r_tilde = reproject(v_out, z, r.shape[2:])
        return self.extract(ops.add(r, ops.mul(self.alpha, r_tilde)))
