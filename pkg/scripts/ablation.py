"""Module ablation: train the five DPHT / GE / MSVR settings per scenario and tabulate EPE.

Each setting trains on a small training split and is scored on a held-out split at dt=21.
Desk-scale numbers only show the harness works; they are not comparable to full-scale runs.
"""

import argparse
import time
from dataclasses import replace
from pathlib import Path

from spikepiv.metrics import ABLATION_SETTINGS, ablation_table
from spikepiv.scene import SCENARIOS, generate_dataset, scenario_config
from spikepiv.siv import Dataset, SivConfig, TrainConfig, evaluate, train


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="data/ablation")
    ap.add_argument("--train-n", type=int, default=20)
    ap.add_argument("--test-n", type=int, default=8)
    ap.add_argument("--iterations", type=int, default=200)
    ap.add_argument("--scenarios", nargs="+", default=sorted(SCENARIOS))
    args = ap.parse_args()

    root = Path(args.out)
    base = SivConfig()
    results: dict[str, dict[str, float]] = {}
    for name in args.scenarios:
        cfg = scenario_config(name, height=32, width=32, density=0.04)
        generate_dataset(cfg, root / name / "train", args.train_n, seed=1)
        generate_dataset(cfg, root / name / "test", args.test_n, seed=2)
        tr = Dataset.load(root / name / "train", base.bins)
        te = Dataset.load(root / name / "test", base.bins)
        for tag, flags in ABLATION_SETTINGS:
            t0 = time.perf_counter()
            run = train(tr, replace(base, **flags), TrainConfig(iterations=args.iterations))
            _, test_epe = evaluate(run.net, te)
            results.setdefault(tag, {})[name] = test_epe
            print(f"{name} ({tag}) EPE {test_epe:.3f}  [{time.perf_counter() - t0:.0f} s]", flush=True)
    table = ablation_table(results, args.scenarios)
    table.write(root / "ablation")
    print(table.text())


if __name__ == "__main__":
    main()
