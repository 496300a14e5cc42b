"""Command-line entry point: generate, estimate, train, eval, viz, selftest.

Exit codes: 0 ok, 1 usage, 2 I/O, 3 validation, 4 numeric.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__, fileio
from .autodiff import checkpoint
from .classical import HsConfig, WindowConfig, estimate_from_spikes
from .config import apply_overrides, flatten
from .metrics import (
    benchmark_table, epe, error_map_image, evaluate_method, flow_to_color, load_dataset, save_image,
)
from .scene import FlowField, Sample, SceneConfig, generate_dataset, read_sample
from .spike import SPK_VERSION

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_VALIDATION, EXIT_NUMERIC = 0, 1, 2, 3, 4
SECTIONS = ("generate", "scene", "model", "train", "xcorr", "hs", "estimate", "eval")
METHODS = ("xcorr", "hs", "siv")

log = logging.getLogger("spikepiv")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def load_config(path: str | None, sets: Sequence[str]) -> dict[str, str]:
    """Config file entries followed by ``--set key=value`` overrides."""
    kv = fileio.read_kv(path) if path else {}
    for item in sets:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        kv[k.strip()] = v.strip()
    for k in kv:
        if k.partition(".")[0] not in SECTIONS:
            raise KeyError(f"unknown config key {k!r}; keys start with one of {', '.join(SECTIONS)}")
    return kv


def _section(kv: dict[str, str], name: str) -> dict[str, str]:
    return {k: v for k, v in kv.items() if k.startswith(name + ".")}


def _threads(n: int | None) -> int:
    return max(1, n if n is not None else (os.cpu_count() or 1))


# ---------------------------------------------------------------- methods

Method = Callable[[Sample], FlowField]


def build_method(name: str, kv: dict[str, str] | None = None, ckpt: str | None = None) -> Method:
    kv = kv or {}
    if name == "xcorr":
        wcfg = apply_overrides(WindowConfig(), _section(kv, "xcorr"), prefix="xcorr.")
        return lambda s: estimate_from_spikes(s.source, s.target, "xcorr", wcfg)
    if name == "hs":
        hcfg = apply_overrides(HsConfig(), _section(kv, "hs"), prefix="hs.")
        return lambda s: estimate_from_spikes(s.source, s.target, "hs", hcfg)
    if name == "siv":
        if ckpt is None:
            raise UsageError("method siv needs --ckpt RUN_DIR (a train output directory)")
        from .siv import load_model
        from .siv.model import stack_inputs

        net = load_model(ckpt)

        def run(s: Sample) -> FlowField:
            vs, vt = stack_inputs([(s.source, s.target)], net.cfg.bins)
            u, v = net.predict(vs, vt)[0]
            if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
                raise FloatingPointError("network produced non-finite flow")
            return FlowField(u, v, s.flow.dt_frames)
        return run
    raise UsageError(f"unknown method {name!r}; choose from {', '.join(METHODS)}")


def _method_config(name: str, kv: dict[str, str]) -> dict:
    if name == "xcorr":
        return flatten(apply_overrides(WindowConfig(), _section(kv, "xcorr"), prefix="xcorr."), "xcorr.")
    if name == "hs":
        return flatten(apply_overrides(HsConfig(), _section(kv, "hs"), prefix="hs."), "hs.")
    return {}


# ---------------------------------------------------------------- subcommands

def cmd_generate(args) -> int:
    kv = load_config(args.config, args.set)
    cfg = apply_overrides(SceneConfig(), _section(kv, "scene"), prefix="scene.")
    n = args.n if args.n is not None else int(kv.get("generate.n", 1))
    seed = args.seed if args.seed is not None else int(kv.get("generate.seed", 0))
    if n < 1:
        raise ValueError(f"--n must be >= 1, got {n}")
    out = Path(args.out)
    t0 = time.perf_counter()
    generate_dataset(cfg, out, n, seed, threads=_threads(args.threads))
    items = {"generate.n": n, "generate.seed": seed}
    items.update(flatten(cfg, "scene."))
    fileio.write_kv(out / "config.txt", items)
    print(f"wrote {n} samples to {out} in {time.perf_counter() - t0:.1f} s")
    return EXIT_OK


def _collect_samples(args) -> list[tuple[Path, Sample]]:
    if (args.sample is None) == (args.dataset is None):
        raise UsageError("give exactly one of --sample DIR or --dataset DIR")
    if args.sample is not None:
        if not Path(args.sample).is_dir():
            raise FileNotFoundError(f"sample directory {args.sample} not found")
        return [(Path(args.sample), read_sample(args.sample))]
    return load_dataset(args.dataset)


def cmd_estimate(args) -> int:
    kv = load_config(args.config, args.set)
    method = build_method(args.method, kv, args.ckpt)
    samples = _collect_samples(args)
    out = Path(args.out)
    single_file = args.sample is not None and out.suffix == ".flo"
    out_dir = out.parent if single_file else out
    out_dir.mkdir(parents=True, exist_ok=True)

    def job(item):
        d, s = item
        f = method(s)
        path = out if single_file else out_dir / f"{d.name}.flo"
        fileio.write_flo(path, f.u, f.v)
        return path, epe(f, s.flow)[0]

    n = 1 if args.method == "siv" else _threads(args.threads)
    if n == 1:
        results = [job(x) for x in samples]
    else:
        with ThreadPoolExecutor(max_workers=n) as pool:
            results = list(pool.map(job, samples))
    items = {"estimate.method": args.method, "estimate.ckpt": args.ckpt}
    items.update(_method_config(args.method, kv))
    fileio.write_kv(out_dir / "config.txt", items)
    for path, e in results:
        print(f"{path}  EPE {e:.4f}")
    return EXIT_OK


def cmd_train(args) -> int:
    from .siv import SivConfig, TrainConfig, train_toy

    kv = load_config(args.config, args.set)
    mcfg = apply_overrides(SivConfig(), _section(kv, "model"), prefix="model.")
    tcfg = apply_overrides(TrainConfig(), _section(kv, "train"), prefix="train.")
    if args.iterations is not None:
        tcfg = apply_overrides(tcfg, {"iterations": str(args.iterations)})
    if args.seed is not None:
        tcfg = apply_overrides(tcfg, {"seed": str(args.seed)})
    if not Path(args.dataset).is_dir():
        raise FileNotFoundError(f"dataset directory {args.dataset} not found")
    t0 = time.perf_counter()
    result = train_toy(args.dataset, args.out, mcfg, tcfg)
    if result.curve:
        first, last = result.curve[0][3], result.curve[-1][3]
        print(f"loss {first:.4f} -> {last:.4f} over {len(result.curve)} iterations "
              f"({time.perf_counter() - t0:.1f} s); run written to {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    if not args.methods:
        raise UsageError("eval needs at least one method: --methods xcorr hs siv")
    kv = load_config(args.config, args.set)
    methods = {m: build_method(m, kv, args.ckpt) for m in args.methods}
    samples = [s for _, s in load_dataset(args.dataset)]
    reports = [evaluate_method(name, m, samples, args.dts, args.scenario) for name, m in methods.items()]
    table = benchmark_table(reports, args.dts)
    sys.stdout.write(table.text())
    if args.out:
        csv_path, txt_path = table.write(args.out)
        items = {"eval.methods": ",".join(args.methods), "eval.dataset": args.dataset, "eval.ckpt": args.ckpt}
        for m in args.methods:
            items.update(_method_config(m, kv))
        fileio.write_kv(csv_path.with_name(csv_path.stem + "_config.txt"), items)
        print(f"wrote {csv_path} and {txt_path}")
    return EXIT_OK


def cmd_viz(args) -> int:
    u, v = fileio.read_flo(args.flow)
    f = FlowField(u, v)
    save_image(args.out, flow_to_color(f, args.max_magnitude))
    msg = f"wrote {args.out}"
    if args.gt:
        gu, gv = fileio.read_flo(args.gt)
        mean, err = epe(f, FlowField(gu, gv))
        err_out = args.error_out or str(Path(args.out).with_name(Path(args.out).stem + "_error.png"))
        save_image(err_out, error_map_image(err, args.error_max if args.error_max else max(float(err.max()), 1e-12)))
        msg += f" and {err_out} (EPE {mean:.4f})"
    print(msg)
    return EXIT_OK


def cmd_selftest(args) -> int:
    from . import selftest

    failures = selftest.run(verbose=not args.quiet)
    return EXIT_OK if not failures else EXIT_VALIDATION


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="spikepiv", description="Spike-camera PIV toolkit.")
    p.add_argument("--version", action="version",
                   version=f"spikepiv {__version__} (spk format v{SPK_VERSION}, flo PIEH float32, "
                           f"sivw checkpoint v{checkpoint.VERSION})")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: all cores; 1 is fully serial)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", help="key=value config file")
            sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                            help="override one config key (repeatable)")
        return sp

    g = common(sub.add_parser("generate", help="write a synthetic dataset"))
    g.add_argument("--out", required=True)
    g.add_argument("--n", type=int)
    g.add_argument("--seed", type=int)
    g.set_defaults(func=cmd_generate)

    e = common(sub.add_parser("estimate", help="estimate flow for one sample or a dataset"))
    e.add_argument("--method", required=True, choices=METHODS)
    e.add_argument("--sample")
    e.add_argument("--dataset")
    e.add_argument("--ckpt", help="train run directory (siv only)")
    e.add_argument("--out", required=True, help="output directory, or a .flo path with --sample")
    e.set_defaults(func=cmd_estimate)

    t = common(sub.add_parser("train", help="train the network on a dataset"))
    t.add_argument("--dataset", required=True)
    t.add_argument("--out", required=True, help="run directory for model.sivw, loss.csv, config.txt")
    t.add_argument("--iterations", type=int)
    t.add_argument("--seed", type=int)
    t.set_defaults(func=cmd_train)

    v = common(sub.add_parser("eval", help="benchmark methods on a dataset"))
    v.add_argument("--dataset", required=True)
    v.add_argument("--methods", nargs="*", default=[], choices=METHODS)
    v.add_argument("--ckpt")
    v.add_argument("--dts", type=int, nargs="+")
    v.add_argument("--scenario", default="problem1")
    v.add_argument("--out", help="table path stem; .csv and .txt are written")
    v.set_defaults(func=cmd_eval)

    z = sub.add_parser("viz", help="colour-code a .flo file")
    z.add_argument("--flow", required=True)
    z.add_argument("--out", required=True)
    z.add_argument("--max-magnitude", type=float)
    z.add_argument("--gt", help="ground-truth .flo; also writes an error map")
    z.add_argument("--error-out")
    z.add_argument("--error-max", type=float)
    z.set_defaults(func=cmd_viz)

    s = sub.add_parser("selftest", help="run the built-in oracle checks")
    s.add_argument("--quiet", action="store_true")
    s.set_defaults(func=cmd_selftest)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FloatingPointError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (KeyError, ValueError) as exc:
        print(f"invalid input: {exc.args[0] if exc.args else exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
