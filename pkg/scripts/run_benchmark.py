"""Benchmark tables (methods x scenes x frame interval) for every scenario directory.

    python scripts/generate_dataset.py --out data/bench
    python scripts/run_benchmark.py --data data/bench --ckpt runs/toy

Also writes colour-coded flow and error maps of the first sample per scenario, with a
shared error scale across methods.
"""

import argparse
from pathlib import Path

from spikepiv.cli import build_method
from spikepiv.metrics import (
    benchmark_table, epe, error_map_image, evaluate_method, flow_to_color, load_dataset, save_image,
)


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--data", required=True, help="root holding one directory per scenario")
    ap.add_argument("--out", default=None, help="defaults to DATA/results")
    ap.add_argument("--methods", nargs="+", default=["xcorr", "hs"])
    ap.add_argument("--ckpt", help="train run directory; adds the siv method")
    args = ap.parse_args()

    names = list(args.methods) + (["siv"] if args.ckpt and "siv" not in args.methods else [])
    methods = {m: build_method(m, ckpt=args.ckpt) for m in names}
    out = Path(args.out or Path(args.data) / "results")
    for scen_dir in sorted(p for p in Path(args.data).iterdir() if p.is_dir() and p.name.startswith("problem")):
        samples = [s for _, s in load_dataset(scen_dir)]
        reports = [evaluate_method(n, m, samples, scenario=scen_dir.name) for n, m in methods.items()]
        table = benchmark_table(reports)
        table.write(out / scen_dir.name)
        print(f"== {scen_dir.name}\n{table.text()}")

        first = samples[0]
        flows = {n: m(first) for n, m in methods.items()}
        errs = {n: epe(f, first.flow)[1] for n, f in flows.items()}
        vmax = max(float(e.max()) for e in errs.values())
        mag = float(abs(first.flow.stack()).max()) or None
        save_image(out / f"{scen_dir.name}_gt.png", flow_to_color(first.flow, mag))
        for n in flows:
            save_image(out / f"{scen_dir.name}_{n}_flow.png", flow_to_color(flows[n], mag))
            save_image(out / f"{scen_dir.name}_{n}_error.png", error_map_image(errs[n], vmax))


if __name__ == "__main__":
    main()
