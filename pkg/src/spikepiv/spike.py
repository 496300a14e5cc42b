"""Virtual spike camera: integrate-and-fire conversion of irradiance movies to binary streams."""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

SPK_MAGIC = b"PSSD"
SPK_VERSION = 1


@dataclass
class SensorConfig:
    """Pixel model parameters.

    ``photon_gain`` and ``threshold`` are in accumulator units (photo-electrons when
    shot noise is on). ``dark_current`` defaults to half a percent of the threshold
    per frame when left as ``None``.
    """

    height: int
    width: int
    photon_gain: float = 1.0
    threshold: float = 64.0
    frame_period: float = 5e-5  # 20 kHz
    dark_current: float | None = None
    shot_noise: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.dark_current is None:
            self.dark_current = 0.005 * self.threshold
        if self.threshold <= 0:
            raise ValueError(f"threshold must be > 0, got {self.threshold}")
        if self.photon_gain <= 0:
            raise ValueError(f"photon_gain must be > 0, got {self.photon_gain}")
        if self.frame_period <= 0:
            raise ValueError(f"frame_period must be > 0, got {self.frame_period}")
        if self.height < 1 or self.width < 1:
            raise ValueError(f"invalid sensor size {self.height}x{self.width}")

    def noiseless(self) -> "SensorConfig":
        return replace(self, dark_current=0.0, shot_noise=False)


@dataclass
class AccumulatorState:
    """Per-pixel integrated input.

    Spikes are derived from ``floor(total / threshold)`` so that the emitted count
    matches the cumulative-integral definition exactly; ``residual`` is the
    accumulator voltage ``total mod threshold``.
    """

    total: np.ndarray
    crossings: np.ndarray
    threshold: float

    @classmethod
    def zeros(cls, cfg: SensorConfig) -> "AccumulatorState":
        shape = (cfg.height, cfg.width)
        return cls(np.zeros(shape), np.zeros(shape), cfg.threshold)

    @property
    def residual(self) -> np.ndarray:
        return np.fmod(self.total, self.threshold)


@dataclass
class SpikeStream:
    """Bit-packed binary stream; ``bits`` holds one packed plane per frame (LSB-first)."""

    height: int
    width: int
    n_frames: int
    bits: np.ndarray
    config: SensorConfig = field(repr=False)

    @classmethod
    def from_array(cls, frames: np.ndarray, config: SensorConfig) -> "SpikeStream":
        frames = np.asarray(frames)
        if frames.ndim != 3:
            raise ValueError(f"expected (N, H, W) spike array, got shape {frames.shape}")
        n, h, w = frames.shape
        bits = np.packbits(frames.reshape(n, h * w).astype(bool), axis=1, bitorder="little")
        return cls(h, w, n, bits, config)

    def to_array(self) -> np.ndarray:
        """Unpack to a (N, H, W) uint8 array of 0/1."""
        hw = self.height * self.width
        flat = np.unpackbits(self.bits, axis=1, count=hw, bitorder="little")
        return flat.reshape(self.n_frames, self.height, self.width)

    def counts(self, start: int = 0, stop: int | None = None) -> np.ndarray:
        return self.to_array()[start:stop].sum(axis=0, dtype=np.int64)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SpikeStream):
            return NotImplemented
        return (self.height, self.width, self.n_frames) == (other.height, other.width, other.n_frames) \
            and np.array_equal(self.bits, other.bits)


def frame_input(irradiance: np.ndarray, cfg: SensorConfig) -> np.ndarray:
    """Noise-free accumulator increment ``alpha * I * dtau`` for one frame."""
    return cfg.photon_gain * irradiance * cfg.frame_period


def integrate_frame(state: AccumulatorState, irradiance: np.ndarray, cfg: SensorConfig,
                    rng: np.random.Generator | None = None) -> tuple[AccumulatorState, np.ndarray]:
    """Advance every pixel by one frame period; returns the new state and the spike plane.

    A pixel fires (a single bit, however many thresholds were crossed) when its
    integrated input reaches the next multiple of the threshold.
    """
    irradiance = np.asarray(irradiance, dtype=np.float64)
    if irradiance.shape != (cfg.height, cfg.width):
        raise ValueError(f"irradiance shape {irradiance.shape} != sensor {(cfg.height, cfg.width)}")
    if np.any(irradiance < 0):
        raise ValueError("irradiance must be nonnegative")
    inc = frame_input(irradiance, cfg)
    if cfg.shot_noise:
        if rng is None:
            raise ValueError("shot noise enabled but no random generator given")
        inc = rng.poisson(inc).astype(np.float64)
    if cfg.dark_current:
        inc = inc + cfg.dark_current
    total = state.total + inc
    crossings = np.floor(total / cfg.threshold)
    spikes = crossings > state.crossings
    return AccumulatorState(total, crossings, cfg.threshold), spikes


def simulate(movie: Iterable[np.ndarray], cfg: SensorConfig,
             state: AccumulatorState | None = None) -> SpikeStream:
    """Fold :func:`integrate_frame` over ``movie`` starting from an empty accumulator."""
    rng = np.random.default_rng(cfg.seed) if cfg.shot_noise else None
    state = AccumulatorState.zeros(cfg) if state is None else state
    planes = []
    for frame in movie:
        state, spikes = integrate_frame(state, frame, cfg, rng)
        planes.append(spikes)
    if not planes:
        raise ValueError("movie has no frames")
    return SpikeStream.from_array(np.stack(planes), cfg)


def write_spk(path: str | os.PathLike, stream: SpikeStream) -> None:
    cfg = stream.config
    header = SPK_MAGIC + struct.pack(
        "<IIIIddd", SPK_VERSION, stream.height, stream.width, stream.n_frames,
        cfg.threshold, cfg.photon_gain, cfg.frame_period,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(stream.bits, dtype=np.uint8).tobytes())


def read_spk(path: str | os.PathLike) -> SpikeStream:
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != SPK_MAGIC:
        raise ValueError(f"{path}: bad magic {buf[:4]!r}")
    version, h, w, n, theta, gain, period = struct.unpack_from("<IIIIddd", buf, 4)
    if version != SPK_VERSION:
        raise ValueError(f"{path}: unsupported .spk version {version}")
    plane = (h * w + 7) // 8
    body = np.frombuffer(buf, dtype=np.uint8, offset=44)
    if body.size != n * plane:
        raise ValueError(f"{path}: expected {n * plane} payload bytes, found {body.size}")
    cfg = SensorConfig(h, w, photon_gain=gain, threshold=theta, frame_period=period,
                       dark_current=0.0, shot_noise=False)
    return SpikeStream(h, w, n, body.reshape(n, plane).copy(), cfg)
