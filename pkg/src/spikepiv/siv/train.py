"""Desk-scale training loop with loss logging, checkpoints and config capture."""

from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import fileio
from ..autodiff import Adam, LRSchedule, load_checkpoint, no_grad, save_checkpoint
from ..config import apply_overrides, flatten
from ..scene import Sample, read_sample, sample_dirs
from .loss import siv_loss
from .model import SivConfig, SivNet, stack_inputs

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    iterations: int = 200
    batch_size: int = 4
    lr: float = 1e-3
    warmup_iters: int = 20
    decay: float = 0.85
    decay_every_epochs: int = 10
    gamma: float = 0.8
    beta: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 0 or self.batch_size < 1:
            raise ValueError("iterations must be >= 0 and batch_size >= 1")
        if self.lr < 0:
            raise ValueError("learning rate must be >= 0")


@dataclass
class Dataset:
    source: np.ndarray  # (S, B, H, W) voxels
    target: np.ndarray
    flow: np.ndarray  # (S, 2, H, W)

    def __len__(self) -> int:
        return self.source.shape[0]

    @classmethod
    def from_samples(cls, samples: list[Sample], bins: int) -> "Dataset":
        if not samples:
            raise ValueError("empty dataset")
        vs, vt = stack_inputs([(s.source, s.target) for s in samples], bins)
        return cls(vs, vt, np.stack([s.flow.stack() for s in samples]))

    @classmethod
    def load(cls, directory: str | os.PathLike, bins: int) -> "Dataset":
        dirs = sample_dirs(directory)
        if not dirs:
            raise ValueError(f"no sample_* directories under {directory}")
        return cls.from_samples([read_sample(d) for d in dirs], bins)


@dataclass
class TrainResult:
    net: SivNet
    curve: list[tuple[int, float, float, float]] = field(default_factory=list)  # iteration, L_flow, L_grad, L


def evaluate(net: SivNet, data: Dataset, gamma: float = 0.8, beta: float = 0.3,
             batch_size: int = 4) -> tuple[float, float]:
    """Dataset mean (loss, EPE of the final field)."""
    losses, epes, counts = [], [], []
    with no_grad():
        for lo in range(0, len(data), batch_size):
            sl = slice(lo, lo + batch_size)
            seq = net(data.source[sl], data.target[sl])
            total, _, _ = siv_loss(seq.flows, data.flow[sl], gamma, beta)
            d = seq.final.data - data.flow[sl]
            n = d.shape[0]
            losses.append(total.item() * n)
            epes.append(np.hypot(d[:, 0], d[:, 1]).mean() * n)
            counts.append(n)
    m = float(np.sum(counts))
    return float(np.sum(losses) / m), float(np.sum(epes) / m)


def train(data: Dataset, model_cfg: SivConfig, cfg: TrainConfig, net: SivNet | None = None) -> TrainResult:
    """Adam with warm-up and step decay; batches are drawn from a seeded per-epoch permutation."""
    if len(data) < cfg.batch_size:
        raise ValueError(f"dataset of {len(data)} samples is smaller than the batch size {cfg.batch_size}")
    net = net or SivNet(model_cfg)
    params = net.parameters()
    opt = Adam(params)
    sched = LRSchedule(cfg.lr, cfg.warmup_iters, cfg.decay, cfg.decay_every_epochs)
    rng = np.random.default_rng(cfg.seed)
    per_epoch = len(data) // cfg.batch_size
    order = np.empty(0, int)
    result = TrainResult(net)
    for it in range(cfg.iterations):
        epoch, slot = divmod(it, per_epoch)
        if slot == 0:
            order = rng.permutation(len(data))
        idx = np.sort(order[slot * cfg.batch_size:(slot + 1) * cfg.batch_size])
        opt.zero_grad()
        try:
            seq = net(data.source[idx], data.target[idx])
            total, l_flow, l_grad = siv_loss(seq.flows, data.flow[idx], cfg.gamma, cfg.beta)
            total.backward()
        except FloatingPointError as exc:
            raise FloatingPointError(f"non-finite value at iteration {it} (samples {idx.tolist()}): {exc}") from exc
        for p in params:
            if p.grad is not None and not np.all(np.isfinite(p.grad)):
                raise FloatingPointError(f"non-finite gradient in {p.name} at iteration {it}")
        opt.step(sched(it, epoch))
        result.curve.append((it, l_flow.item(), l_grad.item(), total.item()))
        if it % 20 == 0:
            log.info("iter %d  loss %.4f", it, total.item())
    return result


def write_curve(path: str | os.PathLike, curve) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["iteration", "L_flow", "L_grad", "L"])
        for it, lf, lg, lt in curve:
            wr.writerow([it, repr(lf), repr(lg), repr(lt)])


def save_run(out_dir: str | os.PathLike, result: TrainResult, cfg: TrainConfig) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / "model.sivw", result.net.state_dict())
    write_curve(out / "loss.csv", result.curve)
    items = flatten(result.net.cfg, "model.")
    items.update(flatten(cfg, "train."))
    fileio.write_kv(out / "config.txt", items)
    return out


def load_model(run_dir: str | os.PathLike) -> SivNet:
    """Rebuild a network from a run directory's config.txt and model.sivw."""
    run = Path(run_dir)
    kv = fileio.read_kv(run / "config.txt")
    cfg = apply_overrides(SivConfig(), kv, prefix="model.")
    net = SivNet(cfg)
    net.load_state_dict(load_checkpoint(run / "model.sivw"))
    return net


def train_toy(dataset_dir: str | os.PathLike, out_dir: str | os.PathLike | None = None,
              model_cfg: SivConfig | None = None, cfg: TrainConfig | None = None) -> TrainResult:
    model_cfg = model_cfg or SivConfig()
    cfg = cfg or TrainConfig()
    data = Dataset.load(dataset_dir, model_cfg.bins)
    result = train(data, model_cfg, cfg)
    if out_dir is not None:
        save_run(out_dir, result, cfg)
    return result
