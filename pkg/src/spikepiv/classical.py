"""Non-learned baselines: FFT cross-correlation PIV and coarse-to-fine Horn-Schunck."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .scene import FlowField
from .spike import SpikeStream

SUBPIXEL_FITS = ("none", "gaussian3")


@dataclass
class WindowConfig:
    window: int = 32
    overlap: float = 0.5
    subpixel: str = "gaussian3"
    passes: int = 3  # later passes re-read the second window at the current estimate

    def __post_init__(self):
        if self.passes < 1:
            raise ValueError(f"passes must be >= 1, got {self.passes}")
        if self.window < 2 or self.window & (self.window - 1):
            raise ValueError(f"window size must be a power of two >= 2, got {self.window}")
        if not 0.0 <= self.overlap < 1.0:
            raise ValueError(f"overlap must lie in [0, 1), got {self.overlap}")
        if self.subpixel not in SUBPIXEL_FITS:
            raise ValueError(f"subpixel fit must be one of {SUBPIXEL_FITS}, got {self.subpixel!r}")

    @property
    def step(self) -> int:
        return max(1, int(round(self.window * (1.0 - self.overlap))))


@dataclass
class HsConfig:
    """Defaults were tuned once on the uniform-shift oracles in the test suite."""

    levels: int = 5
    smoothness: float = 0.1  # lambda, with images scaled to [0, 1]
    iterations: int = 200
    warps: int = 3

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError("levels must be >= 1")
        if self.smoothness <= 0:
            raise ValueError("smoothness weight must be > 0")
        if self.iterations < 1 or self.warps < 1:
            raise ValueError("iterations and warps must be >= 1")


@dataclass
class XcorrResult:
    x: np.ndarray  # window centres, columns
    y: np.ndarray  # window centres, rows
    u: np.ndarray  # (ny, nx)
    v: np.ndarray
    valid: np.ndarray  # bool (ny, nx); constant windows are False
    dense: FlowField


def _check_pair(img0, img1):
    a, b = np.asarray(img0, np.float64), np.asarray(img1, np.float64)
    if a.shape != b.shape or a.ndim != 2:
        raise ValueError(f"images must be equal 2-d arrays, got {a.shape} and {b.shape}")
    return a, b


def _peak_offset(cm: float, c0: float, cp: float, fit: str) -> float:
    if fit == "gaussian3" and cm > 0 and c0 > 0 and cp > 0:
        lm, l0, lp = np.log(cm), np.log(c0), np.log(cp)
        den = 2.0 * (lm - 2.0 * l0 + lp)
        if den < 0:
            return float((lm - lp) / den)
    den = 2.0 * (cm - 2.0 * c0 + cp)
    if den < 0:  # parabolic fallback
        return float((cm - cp) / den)
    return 0.0


def window_displacement(w0: np.ndarray, w1: np.ndarray, fit: str = "gaussian3",
                        eps: float = 1e-12) -> tuple[float, float] | None:
    """Displacement ``d`` maximising circular correlation, i.e. ``w1(x + d) ~ w0(x)``; None if degenerate."""
    a = w0 - w0.mean()
    b = w1 - w1.mean()
    if np.abs(a).max() <= eps or np.abs(b).max() <= eps:
        return None
    corr = np.fft.irfft2(np.conj(np.fft.rfft2(a)) * np.fft.rfft2(b), s=a.shape)
    n, m = corr.shape
    i, j = np.unravel_index(np.argmax(corr), corr.shape)
    dy = i if i < n // 2 else i - n
    dx = j if j < m // 2 else j - m
    if fit != "none":
        dy += _peak_offset(corr[(i - 1) % n, j], corr[i, j], corr[(i + 1) % n, j], fit)
        dx += _peak_offset(corr[i, (j - 1) % m], corr[i, j], corr[i, (j + 1) % m], fit)
    return float(dx), float(dy)


def _fill_invalid(vals: np.ndarray, valid: np.ndarray) -> np.ndarray:
    if valid.all():
        return vals
    if not valid.any():
        return np.zeros_like(vals)
    _, (iy, ix) = ndimage.distance_transform_edt(~valid, return_indices=True)
    return vals[iy, ix]


def _window_at(img: np.ndarray, coeffs: np.ndarray | None, y: float, x: float, ws: int) -> np.ndarray:
    """``ws`` x ``ws`` block with top-left corner (y, x), periodic; cubic spline for fractional corners."""
    h, w = img.shape
    if y.is_integer() and x.is_integer():
        return img[np.ix_((np.arange(ws) + int(y)) % h, (np.arange(ws) + int(x)) % w)]
    gy, gx = np.mgrid[0:ws, 0:ws].astype(np.float64)
    return ndimage.map_coordinates(coeffs, [gy + y, gx + x], order=3, mode="grid-wrap", prefilter=False)


def fft_xcorr(img0: np.ndarray, img1: np.ndarray, cfg: WindowConfig | None = None) -> XcorrResult:
    """Windowed FFT cross-correlation with window shifting over ``cfg.passes`` passes.

    Each pass after the first re-reads the second window at the current estimate and adds
    the measured residual, removing most of the bias from particles leaving the window.
    The dense field interpolates window centres bilinearly.
    """
    cfg = cfg or WindowConfig()
    a, b = _check_pair(img0, img1)
    h, w = a.shape
    ws, step = cfg.window, cfg.step
    if ws > h or ws > w:
        raise ValueError(f"window {ws} does not fit a {h}x{w} image")
    ys = np.arange(0, h - ws + 1, step)
    xs = np.arange(0, w - ws + 1, step)
    u = np.zeros((ys.size, xs.size))
    v = np.zeros_like(u)
    valid = np.ones(u.shape, bool)
    coeffs = ndimage.spline_filter(b, order=3, mode="grid-wrap") if cfg.passes > 1 else None
    for p in range(cfg.passes):
        for r, y0 in enumerate(ys):
            for c, x0 in enumerate(xs):
                if not valid[r, c]:
                    continue
                ou, ov = float(u[r, c]), float(v[r, c])
                if cfg.subpixel == "none":
                    ou, ov = float(np.round(ou)), float(np.round(ov))
                w1 = _window_at(b, coeffs, y0 + ov, x0 + ou, ws)
                d = window_displacement(a[y0:y0 + ws, x0:x0 + ws], w1, cfg.subpixel)
                if d is None:
                    valid[r, c] = p > 0  # later passes keep the previous estimate
                    continue
                u[r, c], v[r, c] = ou + d[0], ov + d[1]
    cx = xs + (ws - 1) / 2
    cy = ys + (ws - 1) / 2
    # dense field: bilinear in window-grid coordinates, clamped beyond the outer centres
    gy = np.clip((np.arange(h) - cy[0]) / step, 0, ys.size - 1)
    gx = np.clip((np.arange(w) - cx[0]) / step, 0, xs.size - 1)
    coords = np.meshgrid(gy, gx, indexing="ij")
    fu, fv = _fill_invalid(u, valid), _fill_invalid(v, valid)
    du = ndimage.map_coordinates(fu, coords, order=1, mode="nearest")
    dv = ndimage.map_coordinates(fv, coords, order=1, mode="nearest")
    return XcorrResult(cx, cy, u, v, valid, FlowField(du, dv))


# ---------------------------------------------------------------- Horn-Schunck

def _neighbour_sum(f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sum over the 4-neighbourhood (no wrap) and the neighbour count per pixel."""
    s = np.zeros_like(f)
    n = np.zeros_like(f)
    s[1:] += f[:-1]
    n[1:] += 1
    s[:-1] += f[1:]
    n[:-1] += 1
    s[:, 1:] += f[:, :-1]
    n[:, 1:] += 1
    s[:, :-1] += f[:, 1:]
    n[:, :-1] += 1
    return s, n


def hs_energy(u, v, ix, iy, c, lam) -> float:
    """Sum of (Ix u + Iy v + c)^2 plus lam times squared forward differences of u and v."""
    data = np.sum((ix * u + iy * v + c) ** 2)
    smooth = sum(np.sum(np.diff(f, axis=ax) ** 2) for f in (u, v) for ax in (0, 1))
    return float(data + lam * smooth)


def hs_solve(ix, iy, c, lam, iterations, u=None, v=None, energies: list | None = None):
    """Jacobi sweeps minimising ``hs_energy``; the energy never increases (checked in the tests)."""
    u = np.zeros_like(ix) if u is None else u.copy()
    v = np.zeros_like(ix) if v is None else v.copy()
    _, n = _neighbour_sum(u)
    den = lam * n + ix * ix + iy * iy
    for _ in range(iterations):
        su, _ = _neighbour_sum(u)
        sv, _ = _neighbour_sum(v)
        ub, vb = su / n, sv / n
        t = (ix * ub + iy * vb + c) / den
        u, v = ub - ix * t, vb - iy * t
        if energies is not None:
            energies.append(hs_energy(u, v, ix, iy, c, lam))
    return u, v


def _downsample(img: np.ndarray) -> np.ndarray:
    h, w = img.shape
    blurred = ndimage.gaussian_filter(img, 1.0, mode="nearest")
    return ndimage.zoom(blurred, ((h + 1) // 2 / h, (w + 1) // 2 / w), order=1, mode="nearest", grid_mode=True)


def _resize(f: np.ndarray, shape) -> np.ndarray:
    return ndimage.zoom(f, (shape[0] / f.shape[0], shape[1] / f.shape[1]), order=1, mode="nearest",
                        grid_mode=True)


def warp(img: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``img(x + u, y + v)`` sampled bilinearly with edge replication."""
    h, w = img.shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    return ndimage.map_coordinates(img, [yy + v, xx + u], order=1, mode="nearest")


def _normalise(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = min(a.min(), b.min()), max(a.max(), b.max())
    scale = 1.0 / (hi - lo) if hi > lo else 1.0
    return (a - lo) * scale, (b - lo) * scale


def horn_schunck_pyramid(img0: np.ndarray, img1: np.ndarray, cfg: HsConfig | None = None) -> FlowField:
    """Coarse-to-fine HS with warping; flow ``d`` satisfies ``img1(x + d) ~ img0(x)``."""
    cfg = cfg or HsConfig()
    a, b = _normalise(*_check_pair(img0, img1))
    pyr = [(a, b)]
    for _ in range(cfg.levels - 1):
        pa, pb = pyr[-1]
        if min(pa.shape) < 8:
            break
        pyr.append((_downsample(pa), _downsample(pb)))
    u = v = None
    for la, lb in reversed(pyr):
        if u is None:
            u, v = np.zeros_like(la), np.zeros_like(la)
        else:
            sy, sx = la.shape[0] / u.shape[0], la.shape[1] / u.shape[1]
            u, v = _resize(u, la.shape) * sx, _resize(v, la.shape) * sy
        gy0, gx0 = np.gradient(la)
        for _ in range(cfg.warps):
            bw = warp(lb, u, v)
            gy1, gx1 = np.gradient(bw)
            ix, iy = 0.5 * (gx0 + gx1), 0.5 * (gy0 + gy1)
            it = bw - la
            # linearised about (u, v): residual Ix du + Iy dv + It, smoothness on the total flow
            c = it - ix * u - iy * v
            u, v = hs_solve(ix, iy, c, cfg.smoothness, cfg.iterations, u, v)
    return FlowField(u, v)


# ---------------------------------------------------------------- spike adapter

def count_images(source: SpikeStream, target: SpikeStream) -> tuple[np.ndarray, np.ndarray]:
    """Per-sub-stream spike counts (all voxel bins collapsed)."""
    if (source.height, source.width) != (target.height, target.width):
        raise ValueError("source and target streams differ in sensor shape")
    a, b = source.counts().astype(np.float64), target.counts().astype(np.float64)
    if not a.any() or not b.any():
        raise ValueError("empty spike stream: no spikes to estimate from")
    return a, b


def estimate_from_spikes(source: SpikeStream, target: SpikeStream, method: str = "xcorr",
                         cfg: WindowConfig | HsConfig | None = None) -> FlowField:
    a, b = count_images(source, target)
    if method == "xcorr":
        return fft_xcorr(a, b, cfg).dense
    if method == "hs":
        return horn_schunck_pyramid(a, b, cfg)
    raise ValueError(f"unknown classical method {method!r}; expected 'xcorr' or 'hs'")
