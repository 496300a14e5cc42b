"""Synthetic particle scenes: analytic flows, advection, Gaussian rendering, sample I/O."""

from __future__ import annotations

import hashlib
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from . import fileio
from .config import flatten
from .spike import SensorConfig, SpikeStream, read_spk, simulate, write_spk

FLOW_KINDS = ("uniform", "lamb_oseen_vortex", "taylor_green", "sinusoidal_shear", "grid_file")
ILLUMINATIONS = ("uniform", "hdr_ramp")

Sampler = Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]


# ---------------------------------------------------------------- flow fields

@dataclass
class FlowField:
    """Displacement (pixels over ``dt_frames``) on the pixel grid; x = column, y = row."""

    u: np.ndarray
    v: np.ndarray
    dt_frames: int = 21
    sampler: Sampler | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=np.float64)
        self.v = np.asarray(self.v, dtype=np.float64)
        if self.u.shape != self.v.shape or self.u.ndim != 2:
            raise ValueError(f"u and v must be equal 2-d arrays, got {self.u.shape}, {self.v.shape}")
        if not (np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.v))):
            raise ValueError("flow contains non-finite values")

    @property
    def shape(self) -> tuple[int, int]:
        return self.u.shape

    def stack(self) -> np.ndarray:
        return np.stack([self.u, self.v])

    def sample(self, x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Displacement at arbitrary positions (analytic when available, else bilinear, edge-clamped)."""
        if self.sampler is not None:
            return self.sampler(np.asarray(x, float), np.asarray(y, float))
        return bilinear_sample(self.u, x, y), bilinear_sample(self.v, x, y)


def bilinear_sample(img: np.ndarray, x, y) -> np.ndarray:
    h, w = img.shape
    x = np.clip(np.asarray(x, float), 0, w - 1)
    y = np.clip(np.asarray(y, float), 0, h - 1)
    x0 = np.minimum(np.floor(x).astype(int), w - 2) if w > 1 else np.zeros_like(x, int)
    y0 = np.minimum(np.floor(y).astype(int), h - 2) if h > 1 else np.zeros_like(y, int)
    fx, fy = x - x0, y - y0
    x1, y1 = np.minimum(x0 + 1, w - 1), np.minimum(y0 + 1, h - 1)
    return ((1 - fy) * ((1 - fx) * img[y0, x0] + fx * img[y0, x1])
            + fy * ((1 - fx) * img[y1, x0] + fx * img[y1, x1]))


def lamb_oseen_peak_ratio() -> float:
    """r_peak / r_core for the Lamb-Oseen tangential profile (root of 1 + 2s = e^s, s = (r/rc)^2)."""
    s = brentq(lambda s: np.exp(s) - 1.0 - 2.0 * s, 0.5, 3.0, xtol=1e-15)
    return float(np.sqrt(s))


def _analytic(kind: str, p: dict, height: int, width: int) -> Sampler:
    if kind == "uniform":
        du, dv = float(p.get("u", 0.0)), float(p.get("v", 0.0))
        return lambda x, y: (np.full(np.shape(x), du), np.full(np.shape(y), dv))

    if kind == "lamb_oseen_vortex":
        cx = float(p.get("cx", (width - 1) / 2))
        cy = float(p.get("cy", (height - 1) / 2))
        rc = float(p.get("core_radius", min(height, width) / 8))
        if rc <= 0:
            raise ValueError("core_radius must be > 0")
        if "gamma" in p:
            gamma = float(p["gamma"])
        else:
            peak = float(p.get("peak", 2.0))
            rp = lamb_oseen_peak_ratio() * rc
            gamma = peak * 2 * np.pi * rp / (1 - np.exp(-(rp / rc) ** 2))

        def lamb(x, y):
            dx, dy = x - cx, y - cy
            r2 = dx * dx + dy * dy
            safe = np.where(r2 > 0, r2, 1.0)
            # u_theta / r, finite at the axis (limit gamma / (2 pi rc^2))
            k = np.where(r2 > 0, gamma / (2 * np.pi * safe) * -np.expm1(-safe / rc ** 2),
                         gamma / (2 * np.pi * rc ** 2))
            return -k * dy, k * dx

        return lamb

    if kind == "taylor_green":
        amp = float(p.get("amplitude", 1.5))
        lam = float(p.get("wavelength", width / 2))
        x0, y0 = float(p.get("x0", 0.0)), float(p.get("y0", 0.0))
        k = 2 * np.pi / lam

        def tg(x, y):
            sx, cx_ = np.sin(k * (x - x0)), np.cos(k * (x - x0))
            sy, cy_ = np.sin(k * (y - y0)), np.cos(k * (y - y0))
            return amp * sx * cy_, -amp * cx_ * sy

        return tg

    if kind == "sinusoidal_shear":
        amp = float(p.get("amplitude", 2.0))
        lam = float(p.get("wavelength", height))
        phase = float(p.get("phase", 0.0))
        return lambda x, y: (amp * np.sin(2 * np.pi * y / lam + phase), np.zeros(np.shape(x)))

    raise ValueError(f"unknown flow kind {kind!r}; expected one of {FLOW_KINDS}")


def make_flow(kind: str, params: dict | None, height: int, width: int, dt_frames: int = 21) -> FlowField:
    """Evaluate an analytic flow on the pixel grid, or resample a .flo grid file."""
    params = dict(params or {})
    if kind == "grid_file":
        path = params.get("path")
        if not path:
            raise ValueError("grid_file flow needs a 'path' parameter")
        try:
            gu, gv = fileio.read_flo(path)
        except OSError as exc:
            raise OSError(f"cannot read flow grid {path}: {exc}") from exc
        gh, gw = gu.shape
        ys = (np.arange(height) + 0.5) * gh / height - 0.5
        xs = (np.arange(width) + 0.5) * gw / width - 0.5
        yy, xx = np.meshgrid(ys, xs, indexing="ij")
        u, v = bilinear_sample(gu, xx, yy), bilinear_sample(gv, xx, yy)
        grid = FlowField(u, v, dt_frames)
        return grid
    sampler = _analytic(kind, params, height, width)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    u, v = sampler(xx, yy)
    return FlowField(u, v, dt_frames, sampler)


def random_flow_params(rng: np.random.Generator, kind: str, max_disp: float,
                       height: int, width: int) -> dict:
    """Draw parameters for ``kind`` with peak displacement at most ``max_disp``."""
    mag = max_disp * rng.uniform(0.4, 1.0)
    if kind == "uniform":
        ang = rng.uniform(0, 2 * np.pi)
        return {"u": mag * np.cos(ang), "v": mag * np.sin(ang)}
    if kind == "lamb_oseen_vortex":
        return {"cx": rng.uniform(0.3, 0.7) * (width - 1), "cy": rng.uniform(0.3, 0.7) * (height - 1),
                "core_radius": rng.uniform(0.15, 0.3) * min(height, width),
                "peak": mag * rng.choice([-1.0, 1.0])}
    if kind == "taylor_green":
        return {"amplitude": mag, "wavelength": rng.uniform(0.6, 1.2) * max(height, width),
                "x0": rng.uniform(0, width), "y0": rng.uniform(0, height)}
    if kind == "sinusoidal_shear":
        return {"amplitude": mag, "wavelength": rng.uniform(0.6, 1.2) * height,
                "phase": rng.uniform(0, 2 * np.pi)}
    raise ValueError(f"cannot randomise flow kind {kind!r}")


# ---------------------------------------------------------------- particles

@dataclass
class ParticleEnsemble:
    """Tracer particles at the reference instant, inside an extended (margin) domain."""

    x: np.ndarray
    y: np.ndarray
    intensity: np.ndarray
    sigma: np.ndarray
    bounds: tuple[float, float, float, float]  # x_lo, x_hi, y_lo, y_hi

    @property
    def count(self) -> int:
        return self.x.size

    @classmethod
    def empty(cls) -> "ParticleEnsemble":
        z = np.zeros(0)
        return cls(z, z, z, z, (0.0, 1.0, 0.0, 1.0))


def seed_particles(rng: np.random.Generator, height: int, width: int, density: float,
                   sigma_range=(0.8, 1.5), intensity_range=(0.7, 1.0), margin: float = 8.0) -> ParticleEnsemble:
    if density <= 0:
        raise ValueError("particle density must be > 0")
    bounds = (-margin, width - 1 + margin, -margin, height - 1 + margin)
    area = (bounds[1] - bounds[0]) * (bounds[3] - bounds[2])
    n = rng.poisson(density * area)
    x = rng.uniform(bounds[0], bounds[1], n)
    y = rng.uniform(bounds[2], bounds[3], n)
    inten = rng.uniform(*intensity_range, n)
    sig = rng.uniform(*sigma_range, n)
    return ParticleEnsemble(x, y, inten, sig, bounds)


def advect(particles: ParticleEnsemble, flow: FlowField, frame_index: float, dt_frames: int) -> ParticleEnsemble:
    """Move each particle by ``(frame_index / dt_frames) * D(p0)``, ``D`` sampled at its reference position.

    Particles leaving the extended domain re-enter at the opposite margin.
    """
    if particles.count == 0 or frame_index == 0:
        return particles
    du, dv = flow.sample(particles.x, particles.y)
    s = frame_index / dt_frames
    x_lo, x_hi, y_lo, y_hi = particles.bounds
    x = particles.x + s * du
    y = particles.y + s * dv
    x = np.where((x < x_lo) | (x > x_hi), x_lo + np.mod(x - x_lo, x_hi - x_lo), x)
    y = np.where((y < y_lo) | (y > y_hi), y_lo + np.mod(y - y_lo, y_hi - y_lo), y)
    return replace(particles, x=x, y=y)


def render(particles: ParticleEnsemble, illumination: np.ndarray | float, height: int, width: int) -> np.ndarray:
    """Sum of Gaussian spots truncated at 4 sigma, scaled pointwise by the illumination map."""
    frame = np.zeros(height * width)
    if particles.count:
        r = int(np.ceil(4 * particles.sigma.max()))
        offs = np.arange(-r, r + 1)
        gx = np.round(particles.x).astype(int)[:, None] + offs
        gy = np.round(particles.y).astype(int)[:, None] + offs
        dx2 = (gx - particles.x[:, None]) ** 2
        dy2 = (gy - particles.y[:, None]) ** 2
        d2 = dy2[:, :, None] + dx2[:, None, :]
        s2 = (particles.sigma ** 2)[:, None, None]
        val = particles.intensity[:, None, None] * np.exp(-d2 / (2 * s2))
        inside = (d2 <= 16 * s2) \
            & ((gy >= 0) & (gy < height))[:, :, None] & ((gx >= 0) & (gx < width))[:, None, :]
        idx = gy[:, :, None] * width + gx[:, None, :]
        frame = np.bincount(idx[inside], weights=val[inside], minlength=height * width)
    illum = np.broadcast_to(np.asarray(illumination, float), (height, width))
    if np.any(illum <= 0):
        raise ValueError("illumination must be positive")
    return frame.reshape(height, width) * illum


def make_illumination(mode: str, height: int, width: int, ratio: float = 100.0) -> np.ndarray:
    """``uniform`` ones, or ``hdr_ramp``: log-linear from 1/ratio (left) to 1 (right)."""
    if mode == "uniform":
        return np.ones((height, width))
    if mode == "hdr_ramp":
        t = np.arange(width) / max(width - 1, 1)
        return np.broadcast_to(ratio ** (t - 1.0), (height, width)).copy()
    raise ValueError(f"unknown illumination {mode!r}; expected one of {ILLUMINATIONS}")


# ---------------------------------------------------------------- samples

@dataclass
class SceneConfig:
    height: int = 32
    width: int = 32
    flow: str = "uniform"
    flow_params: dict = field(default_factory=dict)
    randomize_flow: bool = False
    flow_kinds: tuple[str, ...] = ("uniform", "lamb_oseen_vortex", "taylor_green", "sinusoidal_shear")
    max_displacement: float = 3.0
    dt_frames: int = 21
    substream: int = 21
    n_frames: int | None = None
    density: float = 0.02
    sigma_min: float = 0.8
    sigma_max: float = 1.5
    intensity_min: float = 0.7
    intensity_max: float = 1.0
    illumination: str = "uniform"
    hdr_ratio: float = 100.0
    background: float = 0.0
    spike_gain: float = 0.5
    threshold: float = 64.0
    photon_gain: float = 1.0
    frame_period: float = 5e-5
    spike_noise: bool = True
    image_noise: float = 0.01
    exposure8: float | None = None
    scenario: str = "problem1"
    seed: int = 0

    def __post_init__(self):
        if self.n_frames is None:
            self.n_frames = self.dt_frames + self.substream
        if self.density <= 0:
            raise ValueError("density must be > 0")
        if self.n_frames < self.dt_frames + self.substream:
            raise ValueError(f"n_frames={self.n_frames} < dt_frames + substream = {self.dt_frames + self.substream}")
        if self.illumination not in ILLUMINATIONS:
            raise ValueError(f"unknown illumination {self.illumination!r}")
        if self.flow not in FLOW_KINDS:
            raise ValueError(f"unknown flow kind {self.flow!r}")

    def sensor(self, seed: int) -> SensorConfig:
        cfg = SensorConfig(self.height, self.width, photon_gain=self.photon_gain,
                           threshold=self.threshold, frame_period=self.frame_period, seed=seed)
        return cfg if self.spike_noise else cfg.noiseless()

    @property
    def irradiance_scale(self) -> float:
        """Converts unit scene radiance into sensor irradiance giving ``spike_gain * threshold`` per frame."""
        return self.spike_gain * self.threshold / (self.photon_gain * self.frame_period)


# desk-scale analogs of the three benchmark sub-datasets
SCENARIOS: dict[str, dict] = {
    "problem1": dict(randomize_flow=True, max_displacement=3.0),  # steady turbulence
    "problem2": dict(randomize_flow=True, max_displacement=8.0),  # high-speed flow
    "problem3": dict(randomize_flow=True, max_displacement=3.0, illumination="hdr_ramp",
                     background=0.1, spike_gain=7.0),  # HDR scenes
}


def scenario_config(name: str, **overrides) -> SceneConfig:
    """Preset for ``name``; preset displacements refer to dt=21 and scale with ``dt_frames``
    so that both intervals see the same velocities."""
    if name not in SCENARIOS:
        raise ValueError(f"unknown scenario {name!r}; expected one of {sorted(SCENARIOS)}")
    kw = {**SCENARIOS[name], "scenario": name}
    kw["max_displacement"] *= overrides.get("dt_frames", 21) / 21
    return SceneConfig(**{**kw, **overrides})


@dataclass
class Sample:
    source: SpikeStream
    target: SpikeStream
    img0: np.ndarray  # uint16, clean-plus-noise, source mid-point
    img1: np.ndarray  # uint16, target mid-point
    img0_8bit: np.ndarray
    img1_8bit: np.ndarray
    flow: FlowField
    meta: dict


def derive_seed(base_seed: int, index: int) -> int:
    digest = hashlib.sha256(f"{base_seed}:{index}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def exposure_8bit(cfg: SceneConfig, illum: np.ndarray) -> float:
    """Auto exposure: a peak-intensity particle at the 10th-percentile illumination maps to 255."""
    if cfg.exposure8 is not None:
        return cfg.exposure8
    return 255.0 / (np.percentile(illum, 10) * (cfg.background + cfg.intensity_max))


def generate_sample(cfg: SceneConfig) -> Sample:
    """Render one source/target sub-stream pair with its image pair and ground truth.

    The reference instant is the source sub-stream mid-point; movie frame ``k`` of the
    source sits at offset ``k - (L-1)/2`` frames and the target is ``dt_frames`` later.
    Each sub-stream is recorded from an empty accumulator.
    """
    ss = np.random.SeedSequence(cfg.seed)
    r_scene, r_img = (np.random.default_rng(s) for s in ss.spawn(2))
    s_src, s_tgt = (int(s.generate_state(1)[0]) for s in ss.spawn(2))
    h, w, dt, L = cfg.height, cfg.width, cfg.dt_frames, cfg.substream

    kind, params = cfg.flow, dict(cfg.flow_params)
    if cfg.randomize_flow:
        kind = str(r_scene.choice(list(cfg.flow_kinds)))
        params = random_flow_params(r_scene, kind, cfg.max_displacement, h, w)
    flow = make_flow(kind, params, h, w, dt)

    span = (dt + L) / dt
    max_disp = float(np.max(np.hypot(flow.u, flow.v))) if flow.u.size else 0.0
    margin = np.ceil(max_disp * span + 4 * cfg.sigma_max) + 2
    particles = seed_particles(r_scene, h, w, cfg.density, (cfg.sigma_min, cfg.sigma_max),
                               (cfg.intensity_min, cfg.intensity_max), margin)
    illum = make_illumination(cfg.illumination, h, w, cfg.hdr_ratio)

    def radiance(offset: float) -> np.ndarray:
        return render(advect(particles, flow, offset, dt), illum, h, w) + cfg.background * illum

    mid = (L - 1) / 2
    scale = cfg.irradiance_scale
    source = simulate((radiance(k - mid) * scale for k in range(L)), cfg.sensor(s_src))
    target = simulate((radiance(dt + k - mid) * scale for k in range(L)), cfg.sensor(s_tgt))

    peak = float(illum.max()) * (cfg.background + cfg.intensity_max)
    scale16 = 20000.0 / peak
    exp8 = exposure_8bit(cfg, illum)
    imgs16, imgs8 = [], []
    for offset in (0.0, float(dt)):
        img = radiance(offset)
        if cfg.image_noise > 0:
            img = img + r_img.normal(0.0, cfg.image_noise * peak, img.shape)
        imgs16.append(np.clip(np.round(img * scale16), 0, 65535).astype(np.uint16))
        imgs8.append(np.clip(np.round(img * exp8), 0, 255).astype(np.uint8))

    meta = {"flow": kind, "dt_frames": dt, "seed": cfg.seed, "illumination": cfg.illumination,
            "scenario": cfg.scenario, "substream": L}
    meta.update({f"flow.{k}": v for k, v in params.items()})
    return Sample(source, target, imgs16[0], imgs16[1], imgs8[0], imgs8[1], flow, meta)


def write_sample(sample: Sample, directory: str | os.PathLike, cfg: SceneConfig | None = None) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_spk(d / "source.spk", sample.source)
    write_spk(d / "target.spk", sample.target)
    fileio.write_pgm(d / "img0.pgm", sample.img0)
    fileio.write_pgm(d / "img1.pgm", sample.img1)
    fileio.write_pgm(d / "img0_8bit.pgm", sample.img0_8bit)
    fileio.write_pgm(d / "img1_8bit.pgm", sample.img1_8bit)
    fileio.write_flo(d / "flow.flo", sample.flow.u, sample.flow.v)
    fileio.write_kv(d / "meta.txt", sample.meta)
    if cfg is not None:
        fileio.write_kv(d / "config.txt", flatten(cfg, "scene."))
    return d


def read_sample(directory: str | os.PathLike) -> Sample:
    d = Path(directory)
    meta = fileio.read_kv(d / "meta.txt")
    dt = int(meta.get("dt_frames", 21))
    u, v = fileio.read_flo(d / "flow.flo")
    img8 = [fileio.read_pgm(d / f"img{i}_8bit.pgm") if (d / f"img{i}_8bit.pgm").exists() else None
            for i in (0, 1)]
    return Sample(read_spk(d / "source.spk"), read_spk(d / "target.spk"),
                  fileio.read_pgm(d / "img0.pgm"), fileio.read_pgm(d / "img1.pgm"),
                  img8[0], img8[1], FlowField(u, v, dt), meta)


def sample_dirs(dataset: str | os.PathLike) -> list[Path]:
    return sorted(p for p in Path(dataset).iterdir() if p.is_dir() and p.name.startswith("sample_"))


def generate_dataset(cfg: SceneConfig, out_dir: str | os.PathLike, n: int, seed: int,
                     threads: int = 1, start_index: int = 0) -> list[Path]:
    """Write ``n`` samples; sample ``i`` uses seed ``derive_seed(seed, i)`` regardless of scheduling."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    def job(i: int) -> Path:
        scfg = replace(cfg, seed=derive_seed(seed, i))
        return write_sample(generate_sample(scfg), out / f"sample_{i:06d}", scfg)

    idx = range(start_index, start_index + n)
    if threads <= 1:
        return [job(i) for i in idx]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(job, idx))
