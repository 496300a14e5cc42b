"""Toy training run: 20 generated 32x32 samples, 200 iterations of the default small model.

Prints the dataset loss and EPE before and after training and writes the run directory
(model.sivw, loss.csv, config.txt) so that `spikepiv estimate --method siv --ckpt RUN` works.
"""

import argparse
import time
from pathlib import Path

from spikepiv.scene import SceneConfig, generate_dataset, sample_dirs
from spikepiv.siv import Dataset, SivConfig, SivNet, TrainConfig, evaluate, save_run, train


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--data", default="data/toy")
    ap.add_argument("--out", default="runs/toy")
    ap.add_argument("--n", type=int, default=20)
    ap.add_argument("--iterations", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    data_dir = Path(args.data)
    if not data_dir.is_dir() or not sample_dirs(data_dir):
        generate_dataset(SceneConfig(height=32, width=32, randomize_flow=True, density=0.04), data_dir, args.n, seed=0)
    model_cfg = SivConfig(seed=args.seed)
    cfg = TrainConfig(iterations=args.iterations, seed=args.seed)
    data = Dataset.load(data_dir, model_cfg.bins)

    loss0, epe0 = evaluate(SivNet(model_cfg), data)
    t0 = time.perf_counter()
    result = train(data, model_cfg, cfg)
    elapsed = time.perf_counter() - t0
    loss1, epe1 = evaluate(result.net, data)
    save_run(args.out, result, cfg)
    print(f"trained {args.iterations} iterations on {len(data)} samples in {elapsed:.1f} s")
    print(f"loss {loss0:.4f} -> {loss1:.4f} (ratio {loss1 / loss0:.3f})")
    print(f"EPE  {epe0:.4f} -> {epe1:.4f}")
    print(f"run written to {args.out}")


if __name__ == "__main__":
    main()
