"""Quick oracle checks runnable from an installed package (``spikepiv selftest``)."""

from __future__ import annotations

import tempfile
import time
from pathlib import Path
from typing import Callable

import numpy as np

from . import fileio
from .autodiff import Tensor, ops
from .autodiff.gradcheck import check_gradients
from .classical import WindowConfig, fft_xcorr
from .spike import SensorConfig, read_spk, simulate, write_spk


def spike_conservation() -> None:
    rng = np.random.default_rng(1)
    cfg = SensorConfig(12, 10, threshold=1.0, frame_period=1.0).noiseless()
    movie = rng.uniform(0, 0.99, (40, 12, 10))  # below one threshold per frame
    counts = simulate(movie, cfg).counts()
    expect = np.floor(np.cumsum(movie, axis=0)[-1] / cfg.threshold)
    assert np.array_equal(counts, expect), "spike counts differ from floor(integral / threshold)"


def xcorr_integer_shift() -> None:
    rng = np.random.default_rng(2)
    img = rng.random((64, 64))
    for dx, dy in [(3, -2), (-7, 5), (0, 8)]:
        res = fft_xcorr(img, np.roll(img, (dy, dx), axis=(0, 1)), WindowConfig(64, 0.0, "none"))
        assert (res.u[0, 0], res.v[0, 0]) == (dx, dy), f"shift ({dx}, {dy}) recovered as {res.u, res.v}"


def format_round_trips() -> None:
    rng = np.random.default_rng(3)
    with tempfile.TemporaryDirectory() as tmp:
        u, v = rng.normal(size=(2, 9, 7)).astype(np.float32)
        fileio.write_flo(Path(tmp) / "f.flo", u, v)
        bu, bv = fileio.read_flo(Path(tmp) / "f.flo")
        assert np.array_equal(bu, u) and np.array_equal(bv, v), ".flo round trip changed values"
        stream = simulate(rng.uniform(0, 200, (5, 6, 11)), SensorConfig(6, 11, seed=4))
        write_spk(Path(tmp) / "s.spk", stream)
        assert read_spk(Path(tmp) / "s.spk") == stream, ".spk round trip changed bits"


def autodiff_gradients() -> None:
    rng = np.random.default_rng(5)
    x = Tensor(rng.normal(size=(2, 3, 5, 5)), requires_grad=True)
    w = Tensor(rng.normal(size=(4, 3, 3, 3)), requires_grad=True)
    cases = {
        "conv2d": (lambda a, b: ops.conv2d(a, b, padding=1), [x, w]),
        "softmax": (lambda a: ops.softmax(a, axis=1), [x]),
        "tanh": (ops.tanh, [x]),
        "bilinear_resize": (lambda a: ops.bilinear_resize(a, 7, 9), [x]),
    }
    for name, (fn, inputs) in cases.items():
        err = check_gradients(fn, inputs, seed=0)
        assert err < 1e-4, f"{name}: relative gradient error {err:.2e}"


CHECKS: dict[str, Callable[[], None]] = {
    "spike conservation": spike_conservation,
    "xcorr integer shifts": xcorr_integer_shift,
    "format round trips": format_round_trips,
    "autodiff gradients": autodiff_gradients,
}


def run(verbose: bool = True) -> list[str]:
    """Run every check; returns the names of the failures."""
    failures = []
    for name, check in CHECKS.items():
        t0 = time.perf_counter()
        try:
            check()
            status = "PASS"
        except AssertionError as exc:
            status = f"FAIL ({exc})"
            failures.append(name)
        if verbose:
            print(f"{status:<6} {name} [{time.perf_counter() - t0:.2f} s]")
    return failures
