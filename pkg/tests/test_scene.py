import filecmp
from dataclasses import replace

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from spikepiv import fileio
from spikepiv.scene import (
    ParticleEnsemble, SceneConfig, advect, generate_dataset, generate_sample, make_flow,
    make_illumination, read_sample, render, scenario_config, write_sample,
)


def test_uniform_flow():
    f = make_flow("uniform", {"u": 3, "v": -2}, 10, 12)
    assert np.all(f.u == 3.0) and np.all(f.v == -2.0)


def test_taylor_green_vortex_centres_are_still():
    f = make_flow("taylor_green", {"amplitude": 2.0, "wavelength": 32.0}, 64, 64)
    for cy in (8, 24, 40):
        for cx in (8, 24, 40):
            assert abs(f.u[cy, cx]) < 1e-12 and abs(f.v[cy, cx]) < 1e-12
    assert np.abs(f.u).max() > 1.9


def test_lamb_oseen_peak_closed_form():
    rc, peak = 5.0, 2.5
    # independent oracle: numerically maximise the closed-form profile gamma/(2 pi r) (1 - exp(-r^2/rc^2))
    shape = lambda r: (1 - np.exp(-(r / rc) ** 2)) / r  # noqa: E731
    res = minimize_scalar(lambda r: -shape(r), bounds=(0.1, 4 * rc), method="bounded",
                          options={"xatol": 1e-12})
    r_peak = res.x
    gamma = peak * 2 * np.pi / shape(r_peak)
    # put a pixel exactly r_peak to the right of the centre
    cx, cy = 20.0 - r_peak, 15.0
    f = make_flow("lamb_oseen_vortex", {"cx": cx, "cy": cy, "core_radius": rc, "gamma": gamma}, 30, 40)
    mag = np.hypot(f.u[15, 20], f.v[15, 20])
    assert mag == pytest.approx(gamma / (2 * np.pi * r_peak) * (1 - np.exp(-(r_peak / rc) ** 2)), abs=1e-9)
    assert mag == pytest.approx(peak, abs=1e-9)
    # counter-clockwise for positive circulation: pixel to the right moves +y
    assert f.v[15, 20] > 0 and abs(f.u[15, 20]) < 1e-12
    g = make_flow("lamb_oseen_vortex", {"cx": cx, "cy": cy, "core_radius": rc, "peak": peak}, 30, 40)
    assert np.hypot(g.u[15, 20], g.v[15, 20]) == pytest.approx(peak, abs=1e-6)


def test_flow_errors(tmp_path):
    with pytest.raises(ValueError, match="unknown flow"):
        make_flow("jhtdb", {}, 4, 4)
    with pytest.raises(OSError):
        make_flow("grid_file", {"path": str(tmp_path / "missing.flo")}, 4, 4)


def test_grid_file_resample(tmp_path):
    u = np.arange(12, dtype=float).reshape(3, 4)
    fileio.write_flo(tmp_path / "g.flo", u, -u)
    same = make_flow("grid_file", {"path": str(tmp_path / "g.flo")}, 3, 4)
    np.testing.assert_allclose(same.u, u)
    up = make_flow("grid_file", {"path": str(tmp_path / "g.flo")}, 6, 8)
    assert up.shape == (6, 8) and up.u.min() >= 0 and up.u.max() <= 11


def particles(n=30, seed=0):
    # interior particles in a wide domain so no wrap happens
    rng = np.random.default_rng(seed)
    return ParticleEnsemble(rng.uniform(4, 28, n), rng.uniform(4, 28, n), np.ones(n), np.ones(n),
                            (-20.0, 51.0, -20.0, 51.0))


def test_advect_identity_and_full_step():
    p = particles()
    assert advect(p, make_flow("uniform", {"u": 3, "v": -2}, 32, 32), 0, 21) is p
    q = advect(p, make_flow("uniform", {"u": 3, "v": -2}, 32, 32), 21, 21)
    np.testing.assert_allclose(q.x - p.x, 3.0, atol=1e-12)
    np.testing.assert_allclose(q.y - p.y, -2.0, atol=1e-12)


def test_advect_mid_frame_linear():
    p = particles(seed=3)
    f = make_flow("lamb_oseen_vortex", {"peak": 2.0}, 32, 32)
    end = advect(p, f, 21, 21)
    mid = advect(p, f, 7, 21)
    np.testing.assert_allclose(mid.x, p.x + (7 / 21) * (end.x - p.x), atol=1e-12)
    np.testing.assert_allclose(mid.y, p.y + (7 / 21) * (end.y - p.y), atol=1e-12)


def test_advect_wraps_into_domain():
    p = ParticleEnsemble(np.array([9.5]), np.array([0.0]), np.ones(1), np.ones(1), (-2.0, 10.0, -2.0, 10.0))
    q = advect(p, make_flow("uniform", {"u": 5}, 8, 8), 21, 21)
    assert -2.0 <= q.x[0] <= 10.0 and q.x[0] == pytest.approx(2.5)


def test_render_single_and_empty():
    p = ParticleEnsemble(np.array([5.0]), np.array([4.0]), np.array([0.8]), np.array([1.2]), (0, 10, 0, 10))
    illum = np.full((9, 11), 2.0)
    img = render(p, illum, 9, 11)
    assert img[4, 5] == pytest.approx(1.6)
    assert img.max() == img[4, 5]
    assert np.all(render(ParticleEnsemble.empty(), 1.0, 5, 6) == 0)


def test_render_energy_gaussian_integral():
    rng = np.random.default_rng(4)
    n = 40
    x, y = rng.uniform(8, 56, n), rng.uniform(8, 56, n)
    a, s = rng.uniform(0.5, 1.0, n), rng.uniform(0.8, 1.5, n)
    p = ParticleEnsemble(x, y, a, s, (0, 64, 0, 64))
    illum = np.full((64, 64), 1.7)
    total = render(p, illum, 64, 64).sum()
    expect = np.sum(2 * np.pi * a * s ** 2) * illum.mean()
    assert abs(total - expect) / expect < 0.02


def noise_free(**kw):
    base = dict(spike_noise=False, image_noise=0.0, seed=5)
    base.update(kw)
    return SceneConfig(**base)


def test_zero_flow_streams_identical():
    s = generate_sample(noise_free(flow="uniform", flow_params={"u": 0.0, "v": 0.0}))
    assert s.source == s.target
    noisy = generate_sample(SceneConfig(flow="uniform", flow_params={"u": 0.0, "v": 0.0}, seed=5))
    diff = noisy.target.counts() - noisy.source.counts()
    assert np.median(diff) == 0


def test_integer_shift_counts():
    s = generate_sample(noise_free(flow="uniform", flow_params={"u": 4.0, "v": 0.0}, height=40, width=40))
    a, b = s.source.counts(), s.target.counts()
    np.testing.assert_array_equal(b[:, 8:-4], a[:, 4:-8])
    assert a.sum() > 0


def test_hdr_ramp_count_identity():
    # particle-free glow: counts follow floor(L * gain * illumination) exactly
    cfg = noise_free(illumination="hdr_ramp", hdr_ratio=100.0, height=2, width=50, density=1e-12,
                     background=1.0, spike_gain=0.9, substream=2100, dt_frames=21)
    s = generate_sample(cfg)
    illum = make_illumination("hdr_ramp", 2, 50, 100.0)
    inc = illum * cfg.irradiance_scale * cfg.photon_gain * cfg.frame_period
    expect = np.floor(np.cumsum(np.repeat(inc[None], 2100, 0), axis=0)[-1] / cfg.threshold)
    np.testing.assert_array_equal(s.source.counts(), expect)
    rate = s.source.counts() / 2100
    assert rate[0, -1] / rate[0, 0] == pytest.approx(100.0, rel=0.05)


def test_hdr_rate_increases_with_illumination():
    cfg = SceneConfig(illumination="hdr_ramp", height=64, width=256, background=0.1, spike_gain=7.0,
                      spike_noise=False, image_noise=0.0, seed=2, flow="uniform",
                      flow_params={"u": 1.0, "v": 0.0})
    s = generate_sample(cfg)
    counts = s.source.counts()
    rates = counts.reshape(64, 8, 32).mean(axis=(0, 2))
    assert np.all(np.diff(rates) > 0)
    assert rates.min() > 0 and rates.max() < cfg.substream
    img8 = s.img0_8bit.astype(int)
    assert (img8 == 255).mean() > 0.2  # the 8-bit variant clips


def test_sample_determinism_and_io(tmp_path):
    cfg = SceneConfig(randomize_flow=True, seed=9)
    a, b = generate_sample(cfg), generate_sample(cfg)
    assert a.source == b.source and np.array_equal(a.img0, b.img0) and np.array_equal(a.flow.u, b.flow.u)
    d = write_sample(a, tmp_path / "s", cfg)
    names = sorted(p.name for p in d.iterdir())
    assert {"source.spk", "target.spk", "img0.pgm", "img1.pgm", "flow.flo", "meta.txt"} <= set(names)
    back = read_sample(d)
    assert back.source == a.source and back.target == a.target
    np.testing.assert_array_equal(back.img1, a.img1)
    np.testing.assert_array_equal(back.flow.u, a.flow.u.astype(np.float32))
    assert back.meta["dt_frames"] == "21"


def test_dataset_byte_identical(tmp_path):
    cfg = SceneConfig(randomize_flow=True)
    generate_dataset(cfg, tmp_path / "a", 2, seed=7)
    generate_dataset(cfg, tmp_path / "b", 2, seed=7, threads=2)
    cmp = filecmp.dircmp(tmp_path / "a", tmp_path / "b")
    assert not cmp.left_only and not cmp.right_only
    for sub in ("sample_000000", "sample_000001"):
        files = sorted(p.name for p in (tmp_path / "a" / sub).iterdir())
        match, mismatch, errors = filecmp.cmpfiles(tmp_path / "a" / sub, tmp_path / "b" / sub, files, shallow=False)
        assert not mismatch and not errors


def test_config_validation():
    with pytest.raises(ValueError):
        SceneConfig(density=0)
    with pytest.raises(ValueError):
        SceneConfig(n_frames=10)
    with pytest.raises(ValueError):
        SceneConfig(illumination="strobe")
    assert replace(SceneConfig(), dt_frames=11).n_frames == 42  # n_frames fixed once resolved


def test_scenario_presets():
    p1, p3 = scenario_config("problem1"), scenario_config("problem3", height=48)
    assert p1.scenario == "problem1" and p1.randomize_flow
    assert p3.illumination == "hdr_ramp" and p3.height == 48
    assert scenario_config("problem2").max_displacement > p1.max_displacement
    # same velocities at both intervals: displacement scales with dt
    assert scenario_config("problem1", dt_frames=11).max_displacement == pytest.approx(p1.max_displacement * 11 / 21)
    with pytest.raises(ValueError, match="scenario"):
        scenario_config("problem9")
