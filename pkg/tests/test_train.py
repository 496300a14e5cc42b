import csv
import time
from dataclasses import replace

import numpy as np
import pytest

from spikepiv.autodiff import load_checkpoint
from spikepiv.scene import SceneConfig, generate_dataset, generate_sample
from spikepiv.siv import Dataset, SivConfig, SivNet, TrainConfig, evaluate, load_model, train, train_toy


@pytest.fixture(scope="module")
def small_data():
    base = SceneConfig(height=16, width=16, randomize_flow=True, density=0.05)
    return Dataset.from_samples([generate_sample(replace(base, seed=i)) for i in range(4)], 7)


def test_lr_zero_keeps_parameters(small_data):
    cfg = SivConfig(channels=8, nodes=4, hidden=8)
    net = SivNet(cfg)
    before = net.state_dict()
    train(small_data, cfg, TrainConfig(iterations=3, batch_size=2, lr=0.0), net)
    after = net.state_dict()
    assert all(np.array_equal(before[k], after[k]) for k in before)


def test_seeded_runs_identical(small_data):
    cfg = SivConfig(channels=8, nodes=4, hidden=8)
    tc = TrainConfig(iterations=4, batch_size=2, seed=3)
    a, b = train(small_data, cfg, tc), train(small_data, cfg, tc)
    assert a.curve == b.curve
    c = train(small_data, cfg, replace(tc, seed=4))
    assert c.curve != a.curve


def test_training_errors(small_data):
    with pytest.raises(ValueError, match="batch size"):
        train(small_data, SivConfig(), TrainConfig(batch_size=8))
    with pytest.raises(ValueError, match="empty"):
        Dataset.from_samples([], 7)
    with pytest.raises(ValueError):
        TrainConfig(lr=-1.0)


def test_run_directory_roundtrip(tmp_path):
    cfg = SceneConfig(height=16, width=16, randomize_flow=True)
    generate_dataset(cfg, tmp_path / "data", 2, seed=1)
    mc = SivConfig(channels=8, nodes=4, hidden=8, use_ge=False)
    res = train_toy(tmp_path / "data", tmp_path / "run", mc, TrainConfig(iterations=2, batch_size=2))
    rows = list(csv.reader(open(tmp_path / "run" / "loss.csv")))
    assert rows[0] == ["iteration", "L_flow", "L_grad", "L"] and len(rows) == 3
    assert float(rows[1][3]) == res.curve[0][3]
    net = load_model(tmp_path / "run")
    assert net.cfg == mc
    state = load_checkpoint(tmp_path / "run" / "model.sivw")
    assert all(np.array_equal(state[k], v) for k, v in res.net.state_dict().items())
    data = Dataset.load(tmp_path / "data", 7)
    assert evaluate(net, data) == evaluate(res.net, data)


def test_full_size_dimensions():
    t = time.time()
    cfg = SivConfig.paper()
    net = SivNet(cfg)
    vox = np.random.default_rng(0).integers(0, 3, (1, 7, 32, 32)).astype(float)
    r = net.encoder(vox)
    assert r.shape == (1, 128, 8, 8)
    assert net.graph.proj.weight.shape[0] == 128
    seq = net(vox, vox)
    assert len(seq.flows) - 1 == 12 and len(seq.coarse) == 12
    assert all(f.shape == (1, 2, 32, 32) for f in seq.flows)
    assert time.time() - t < 60
