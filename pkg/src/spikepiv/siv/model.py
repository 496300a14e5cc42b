"""The full spike image velocimetry network."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import Module, Tensor, as_tensor, no_grad
from ..encoding import to_voxel
from .dpht import Dpht, PlainEncoder
from .graph import GraphEncoder, ResidualExtractor
from .msio import MotionEncoder, Msio
from .msvr import Msvr


@dataclass
class SivConfig:
    bins: int = 7
    channels: int = 16  # C
    nodes: int = 8  # K
    iterations: int = 2  # N
    hidden: int = 16
    corr_radius: int = 2
    dpht_levels: int = 3
    use_dpht: bool = True
    use_ge: bool = True
    use_msvr: bool = True
    seed: int = 0

    def __post_init__(self):
        if min(self.bins, self.channels, self.nodes, self.iterations, self.hidden) < 1:
            raise ValueError("bins, channels, nodes, iterations and hidden must be >= 1")
        if self.corr_radius < 0:
            raise ValueError("corr_radius must be >= 0")

    @classmethod
    def paper(cls, **kw) -> "SivConfig":
        base = dict(channels=128, nodes=128, iterations=12, hidden=128, corr_radius=4)
        base.update(kw)
        return cls(**base)


@dataclass
class FlowSequence:
    flows: list  # u_1 .. u_N then u_ref when refinement is on; (N, 2, H, W) tensors
    coarse: list
    u_res: Tensor | None
    quality: Tensor | None

    @property
    def final(self) -> Tensor:
        return self.flows[-1]


class SivNet(Module):
    def __init__(self, cfg: SivConfig):
        rng = np.random.default_rng(cfg.seed)
        self.cfg = cfg
        c = cfg.channels
        self.encoder = Dpht(cfg.bins, c, rng, cfg.dpht_levels) if cfg.use_dpht else PlainEncoder(cfg.bins, c, rng)
        self.graph = GraphEncoder(c, cfg.nodes, rng) if cfg.use_ge else None
        self.context = None if cfg.use_ge else ResidualExtractor(c, rng)
        self.motion = MotionEncoder(c, rng)
        self.msio = Msio(c, cfg.hidden, cfg.corr_radius, rng)
        self.msvr = Msvr(c, rng) if cfg.use_msvr else None
        self.assign_names()

    def features(self, vox_s, vox_t) -> tuple[Tensor, Tensor, Tensor]:
        """(F_c, F_m source, F_m target)."""
        r_s, r_t = self.encoder(as_tensor(vox_s)), self.encoder(as_tensor(vox_t))
        f_c = self.graph(r_s) if self.graph is not None else self.context(r_s)
        return f_c, self.motion(r_s), self.motion(r_t)

    def forward(self, vox_s, vox_t) -> FlowSequence:
        f_c, fm_s, fm_t = self.features(vox_s, vox_t)
        full, coarse = self.msio(f_c, fm_s, fm_t, self.cfg.iterations)
        if self.msvr is None:
            return FlowSequence(full, coarse, None, None)
        u_res, q, u_ref = self.msvr(coarse[-1], full[-1])
        return FlowSequence(full + [u_ref], coarse, u_res, q)

    def predict(self, vox_s, vox_t) -> np.ndarray:
        with no_grad():
            return self.forward(vox_s, vox_t).final.data.copy()


def stack_inputs(samples, bins: int) -> tuple[np.ndarray, np.ndarray]:
    """Voxel batches (N, B, H, W) for lists of (source, target) spike streams."""
    vs = np.stack([to_voxel(s, 0, s.n_frames, bins).values for s, _ in samples])
    vt = np.stack([to_voxel(t, 0, t.n_frames, bins).values for _, t in samples])
    return vs, vt

