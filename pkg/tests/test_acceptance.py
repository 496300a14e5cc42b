"""End-to-end acceptance criteria 1-8, each reported as one PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v`` or ``python tests/test_acceptance.py``.
"""

import sys
import time
from dataclasses import replace

import numpy as np
import pytest

from spikepiv import fileio
from spikepiv.autodiff import GRUParams, Tensor, ops
from spikepiv.autodiff.gradcheck import check_gradients, directional_errors, sampled_entry_errors
from spikepiv.classical import HsConfig, WindowConfig, count_images, fft_xcorr, horn_schunck_pyramid
from spikepiv.cli import main as cli_main
from spikepiv.scene import ParticleEnsemble, SceneConfig, generate_dataset, generate_sample, render
from spikepiv.siv import Dataset, SivConfig, SivNet, TrainConfig, evaluate, gate, siv_loss, term_weights, train
from spikepiv.siv.graph import GraphEncoder, project
from spikepiv.spike import SensorConfig, SpikeStream, read_spk, simulate, write_spk


@pytest.fixture
def report(capsys):
    """Print one verdict line per criterion, visible without -s."""
    def emit(n: int, title: str, ok: bool, detail: str, elapsed: float, budget: float):
        ok = ok and elapsed < budget
        with capsys.disabled():
            print(f"\n[criterion {n}] {'PASS' if ok else 'FAIL'}  {title}: {detail} "
                  f"({elapsed:.1f} s, budget {budget:.0f} s)")
        return ok
    return emit


def particle_image(h, w, seed, dx=0.0, dy=0.0, density=0.05, sigma=(1.2, 2.0)):
    rng = np.random.default_rng(seed)
    pad = 20
    n = int(density * (h + 2 * pad) * (w + 2 * pad))
    x, y = rng.uniform(-pad, w + pad, n), rng.uniform(-pad, h + pad, n)
    p = ParticleEnsemble(x + dx, y + dy, rng.uniform(0.6, 1.0, n), rng.uniform(*sigma, n), (0, w, 0, h))
    return render(p, 1.0, h, w)


# ---------------------------------------------------------------- 1

def test_criterion_1_spike_conservation(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    mismatched = 0
    for _ in range(100):
        n, h, w = rng.integers(5, 60), rng.integers(1, 24), rng.integers(1, 24)
        theta = float(rng.integers(1, 200))
        gain = float(2.0 ** rng.integers(-2, 3))
        period = float(2.0 ** rng.integers(-4, 1))
        # increments alpha*I*dtau are multiples of 1/64 below theta, so every partial sum is exact
        ticks = rng.integers(0, int(64 * theta), (n, h, w))
        irr = ticks / 64.0 / (gain * period)
        cfg = SensorConfig(int(h), int(w), photon_gain=gain, threshold=theta, frame_period=period).noiseless()
        counts = simulate(irr, cfg).counts()
        oracle = np.floor(np.sum(gain * irr * period, axis=0) / theta)
        mismatched += int(np.sum(counts != oracle))
    ok = report(1, "spike conservation", mismatched == 0, f"{mismatched} mismatched pixels over 100 movies",
                time.perf_counter() - t0, 10)
    assert ok


# ---------------------------------------------------------------- 2

def test_criterion_2_classical_oracles(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    exact = 0
    for i in range(50):
        dx, dy = (int(v) for v in rng.integers(-8, 9, 2))
        a = particle_image(128, 128, 100 + i)
        b = particle_image(128, 128, 100 + i, dx, dy)
        res = fft_xcorr(a, b, WindowConfig(64, 0.5, "none"))
        exact += bool(np.all(res.u == dx) and np.all(res.v == dy))

    sub_err = []
    for i in range(20):
        d = rng.uniform(-8, 8, 2)
        a = particle_image(128, 128, 200 + i)
        b = particle_image(128, 128, 200 + i, *d)
        res = fft_xcorr(a, b, WindowConfig(32, 0.5, "gaussian3"))
        sub_err.append(np.hypot(res.u - d[0], res.v - d[1]).mean())
    sub = float(np.mean(sub_err))

    hs_epe = []
    for i, d in enumerate([(8, 0), (0, 8), (-8, 0), (0, -8), (5.66, -5.66)]):
        a = particle_image(128, 128, 300 + i)
        b = particle_image(128, 128, 300 + i, *d)
        f = horn_schunck_pyramid(a, b, HsConfig())
        hs_epe.append(np.hypot(f.u - d[0], f.v - d[1])[12:-12, 12:-12].mean())
    worst_hs = float(np.max(hs_epe))

    ok = report(2, "classical oracles", exact == 50 and sub < 0.2 and worst_hs < 0.3,
                f"integer shifts exact {exact}/50, sub-pixel mean error {sub:.3f} px, "
                f"worst HS interior EPE at 8 px {worst_hs:.3f}", time.perf_counter() - t0, 30)
    assert ok


# ---------------------------------------------------------------- 3

def leaf(rng, *shape):
    return Tensor(rng.standard_normal(shape), requires_grad=True)


def primitive_cases(seed):
    r = np.random.default_rng(seed)
    a, b, s = leaf(r, 3, 4), leaf(r, 3, 4), leaf(r)
    gru = GRUParams(2, 3, r)
    h, x = leaf(r, 1, 2, 4, 4), leaf(r, 1, 3, 4, 4)
    return {
        "add": (ops.add, [a, b]),
        "sub": (ops.sub, [a, b]),
        "mul": (ops.mul, [a, b]),
        "mul_scalar": (ops.mul, [a, s]),
        **{name: (getattr(ops, name), [leaf(r, 4, 5)])
           for name in ("relu", "leaky_relu", "elu", "sigmoid", "tanh", "exp", "abs")},
        "sum": (lambda t: ops.sum(t, axis=seed % 2), [a]),
        "mean": (lambda t: ops.mean(t, axis=seed % 2), [a]),
        "reshape": (lambda t: ops.reshape(t, (2, 6)), [a]),
        "transpose": (lambda t: ops.transpose(t, (1, 0)), [a]),
        "concat": (lambda p, q: ops.concat([p, q], axis=seed % 2), [a, b]),
        "index": (lambda t: ops.index(t, (slice(1, None), slice(None, None, 2))), [a]),
        "pad": (lambda t: ops.pad(t, ((1, 0), (0, 2))), [a]),
        "matmul": (ops.matmul, [leaf(r, 2, 3, 4), leaf(r, 4, 5)]),
        "softmax": (lambda t: ops.softmax(t, seed % 3), [leaf(r, 3, 4, 5)]),
        "l2_normalize": (lambda t: ops.l2_normalize(t, seed % 3), [leaf(r, 3, 4, 5)]),
        "conv2d": (lambda p, q, c: ops.conv2d(p, q, c, 1 + seed % 2, 1),
                   [leaf(r, 1, 2, 8, 8), leaf(r, 3, 2, 3, 3), leaf(r, 3)]),
        "conv3d": (lambda p, q, c: ops.conv3d(p, q, c, 2, (2, 1, 1)),
                   [leaf(r, 1, 2, 6, 5, 5), leaf(r, 2, 2, 5, 3, 3), leaf(r, 2)]),
        "maxpool3d": (lambda t: ops.maxpool3d(t, (2, 2, 2)), [leaf(r, 1, 2, 4, 4, 6)]),
        "bilinear_resize": (lambda t: ops.bilinear_resize(t, 5, 7), [leaf(r, 1, 2, 4, 6)]),
        "local_correlation": (lambda p, q: ops.local_correlation(p, q, 2), [leaf(r, 1, 3, 5, 5), leaf(r, 1, 3, 5, 5)]),
        "convex_upsample": (lambda f, m: ops.convex_upsample(f, m, 2), [leaf(r, 1, 2, 3, 4), leaf(r, 1, 36, 3, 4)]),
        "gru_cell": (lambda hh, xx, *_: ops.gru_cell(hh, xx, gru), [h, x] + gru.parameters()),
    }


def randomised_toy(seed):
    net = SivNet(SivConfig(channels=16, nodes=8, iterations=2, seed=seed))
    g = np.random.default_rng(seed + 100)
    for p in net.parameters():
        if not np.any(p.data):  # zero-initialised heads and the fusion weight
            p.data = 0.05 * g.standard_normal(p.shape)
    return net


def test_criterion_3_autodiff(report):
    t0 = time.perf_counter()
    worst_op: dict[str, float] = {}
    for seed in range(20):
        for name, (fn, inputs) in primitive_cases(seed).items():
            worst_op[name] = max(worst_op.get(name, 0.0), check_gradients(fn, inputs, seed))
    bad_ops = {k: v for k, v in worst_op.items() if not v < 1e-4}
    worst_name = max(worst_op, key=worst_op.get)

    # every entry through random directions, plus plain central differences on sampled entries
    e2e = entry = 0.0
    for seed in range(3):
        net = randomised_toy(seed)
        g = np.random.default_rng(50 + seed)
        vs, vt = g.integers(0, 4, (2, 1, 7, 16, 16)).astype(float)
        gt = g.normal(size=(1, 2, 16, 16))
        loss = lambda: siv_loss(net(vs, vt).flows, gt)[0]  # noqa: E731
        e2e = max(e2e, max(directional_errors(loss, net.parameters(), seed=seed).values()))
        entry = max(entry, max(sampled_entry_errors(loss, net.parameters(), 4, seed=seed).values()))

    ok = report(3, "autodiff", not bad_ops and e2e < 1e-3 and entry < 1e-3,
                f"{len(worst_op)} primitives x 20 seeds, worst {worst_name} {worst_op[worst_name]:.1e}"
                f"{', failing ' + str(sorted(bad_ops)) if bad_ops else ''}; toy model end-to-end "
                f"directional {e2e:.1e}, sampled entries {entry:.1e}",
                time.perf_counter() - t0, 300)
    assert ok


# ---------------------------------------------------------------- 4

def test_criterion_4_architectural_identities(report):
    t0 = time.perf_counter()
    g = np.random.default_rng(4)
    enc = GraphEncoder(16, 8, g)
    r = Tensor(g.normal(size=(1, 16, 4, 4)))
    ref = enc(r).data
    for layer in (enc.g1, enc.g2):
        for p in (layer.w, layer.a_src, layer.a_dst):
            p.data = g.normal(size=p.shape)
    invariant = np.array_equal(enc(r).data, ref)

    u_n, u_res = Tensor(g.normal(size=(2, 2, 8, 8))), Tensor(g.normal(size=(2, 2, 8, 8)))
    q = Tensor(g.uniform(size=(2, 1, 8, 8)))
    gate_ok = (np.array_equal(gate(u_n, u_res, Tensor(np.zeros((2, 1, 8, 8)))).data, u_n.data)
               and np.array_equal(gate(u_n, Tensor(np.zeros((2, 2, 8, 8))), q).data, u_n.data))

    weights_ok = np.allclose(term_weights(13), 0.8 ** np.arange(12, -1, -1), rtol=0, atol=1e-15)
    off = np.zeros((1, 2, 4, 4))
    off[:, 0] = 1.0
    total, l_flow, l_grad = siv_loss([Tensor(off)] * 3, np.zeros((1, 2, 4, 4)))
    hand_ok = abs(l_flow.item() - 2.44) < 1e-12 and l_grad.item() == 0.0 and total.item() == l_flow.item()
    bump = np.zeros((1, 2, 4, 4))
    bump[0, 0, 1, 1] = 1.0
    total, l_flow, l_grad = siv_loss([Tensor(bump)], np.zeros((1, 2, 4, 4)))
    beta_ok = abs(total.item() - (l_flow.item() + 0.3 * l_grad.item())) < 1e-15 and l_grad.item() > 0

    ok = report(4, "architectural identities", invariant and gate_ok and weights_ok and hand_ok and beta_ok,
                f"alpha=0 invariance {invariant}, gate identities {gate_ok}, gamma weights {weights_ok}, "
                f"2.44 example {hand_ok}, beta=0.3 {beta_ok}", time.perf_counter() - t0, 60)
    assert ok


# ---------------------------------------------------------------- 5

def test_criterion_5_full_size_dimensions(report):
    t0 = time.perf_counter()
    cfg = SivConfig.paper()
    net = SivNet(cfg)
    vox = np.random.default_rng(5).integers(0, 3, (1, 7, 32, 32)).astype(float)
    r = net.encoder(vox)
    v, z = project(r, net.graph.proj(r))
    seq = net(vox, vox)
    shapes = (r.shape, v.shape, z.shape, len(seq.coarse))
    ok = report(5, "full-size dimensions",
                shapes == ((1, 128, 8, 8), (1, 128, 128), (1, 64, 128), 12)
                and all(f.shape == (1, 2, 32, 32) for f in seq.flows),
                f"DPHT {r.shape}, node features {v.shape}, assignment {z.shape}, MSIO fields {len(seq.coarse)}",
                time.perf_counter() - t0, 60)
    assert ok


# ---------------------------------------------------------------- 6

TOY_SCENE = SceneConfig(height=32, width=32, randomize_flow=True, density=0.04)


def test_criterion_6_toy_training(report, tmp_path):
    t0 = time.perf_counter()
    generate_dataset(TOY_SCENE, tmp_path / "toy", 20, seed=0)
    model_cfg = SivConfig()
    data = Dataset.load(tmp_path / "toy", model_cfg.bins)
    cfg = TrainConfig(iterations=200)
    loss0, epe0 = evaluate(SivNet(model_cfg), data)
    run = train(data, model_cfg, cfg)
    loss1, epe1 = evaluate(run.net, data)
    again = train(data, model_cfg, cfg)
    repro = again.curve == run.curve
    ratio = loss1 / loss0
    ok = report(6, "toy training", ratio <= 0.5 and epe1 < epe0 and repro,
                f"loss {loss0:.3f} -> {loss1:.3f} (ratio {ratio:.2f}), EPE {epe0:.3f} -> {epe1:.3f}, "
                f"seeded rerun bit-exact {repro}", time.perf_counter() - t0, 1200)
    assert ok


# ---------------------------------------------------------------- 7

def test_criterion_7_hdr(report):
    t0 = time.perf_counter()
    cfg = SceneConfig(height=64, width=256, illumination="hdr_ramp", hdr_ratio=100.0, background=0.1,
                      spike_gain=7.0, spike_noise=False, image_noise=0.0, flow="uniform",
                      flow_params={"u": 1.0, "v": 0.0}, seed=6)
    s = generate_sample(cfg)
    n_spk = int(fft_xcorr(*count_images(s.source, s.target)).valid.sum())
    n_8 = int(fft_xcorr(s.img0_8bit, s.img1_8bit).valid.sum())
    ok = report(7, "HDR validity", n_spk >= 1.3 * n_8,
                f"valid windows: spike counts {n_spk}, 8-bit images {n_8} (+{100 * (n_spk / n_8 - 1):.0f}%)",
                time.perf_counter() - t0, 60)
    assert ok


# ---------------------------------------------------------------- 8

def test_criterion_8_formats_and_table(report, tmp_path):
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    spk_ok = flo_ok = True
    for i in range(20):
        n, h, w = (int(v) for v in rng.integers(1, 30, 3))
        cfg = SensorConfig(h, w, threshold=float(rng.uniform(1, 100)), seed=i)
        stream = SpikeStream.from_array(rng.random((n, h, w)) < rng.random(), cfg)
        write_spk(tmp_path / "s.spk", stream)
        back = read_spk(tmp_path / "s.spk")
        spk_ok &= back == stream and np.array_equal(back.to_array(), stream.to_array())
        u, v = rng.normal(0, 10, (2, h, w)).astype(np.float32)
        fileio.write_flo(tmp_path / "f.flo", u, v)
        bu, bv = fileio.read_flo(tmp_path / "f.flo")
        flo_ok &= np.array_equal(bu, u) and np.array_equal(bv, v)

    ds = tmp_path / "bench"
    kinds = ("uniform", "lamb_oseen_vortex", "taylor_green")
    base = SceneConfig(height=32, width=32, randomize_flow=True, density=0.04)
    i = 0
    for dt in (21, 11):
        for kind in kinds:
            generate_dataset(replace(base, flow_kinds=(kind,), dt_frames=dt), ds, 2, seed=dt, start_index=i)
            i += 2
    code = cli_main(["--threads", "1", "eval", "--dataset", str(ds), "--methods", "xcorr", "hs",
                     "--out", str(tmp_path / "table")])
    rows = [line.split(",") for line in (tmp_path / "table.csv").read_text().splitlines()] if code == 0 else [[]]
    expect = (["method"] + [f"{k} dt={d}" for k in sorted(kinds) for d in (21, 11)]
              + ["average dt=21", "average dt=11"])
    table_ok = code == 0 and rows[0] == expect and [r[0] for r in rows[1:]] == ["xcorr", "hs"]
    ok = report(8, "format round trips and table", spk_ok and flo_ok and table_ok,
                f".spk identity {spk_ok}, .flo identity {flo_ok}, table {len(rows) - 1}x{len(rows[0])} "
                f"layout {table_ok}", time.perf_counter() - t0, 600)
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
