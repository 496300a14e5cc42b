"""Temporal binning of spike sub-streams into voxel grids."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spike import SpikeStream

DEFAULT_BINS = 7


@dataclass
class VoxelGrid:
    values: np.ndarray  # (bins, H, W) spike counts as float64

    @property
    def bins(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]


def bin_frames(frames: np.ndarray, bins: int) -> np.ndarray:
    n = frames.shape[0]
    if bins < 1 or n % bins:
        raise ValueError(f"bins={bins} must divide the number of frames ({n})")
    per = n // bins
    return frames.reshape(bins, per, *frames.shape[1:]).sum(axis=1, dtype=np.float64)


def to_voxel(stream: SpikeStream, start_frame: int, n_frames: int, bins: int = DEFAULT_BINS) -> VoxelGrid:
    """Hard-count binning: bin ``b`` sums frames ``[start + b*n/B, start + (b+1)*n/B)``."""
    if start_frame < 0 or n_frames < 1 or start_frame + n_frames > stream.n_frames:
        raise ValueError(
            f"frame range [{start_frame}, {start_frame + n_frames}) outside stream of {stream.n_frames} frames"
        )
    frames = stream.to_array()[start_frame:start_frame + n_frames]
    return VoxelGrid(bin_frames(frames, bins))
