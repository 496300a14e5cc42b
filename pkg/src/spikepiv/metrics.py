"""Endpoint error, flow colour coding, error maps and benchmark tables."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from PIL import Image

from .scene import FlowField, Sample, read_sample, sample_dirs


def _as_uv(f) -> np.ndarray:
    if isinstance(f, FlowField):
        return f.stack()
    a = np.asarray(f, dtype=np.float64)
    if a.ndim != 3 or a.shape[0] != 2:
        raise ValueError(f"expected a FlowField or a (2, H, W) array, got shape {a.shape}")
    return a


def epe(pred, gt) -> tuple[float, np.ndarray]:
    """(spatial mean, per-pixel map) of the Euclidean distance between two flow fields."""
    p, g = _as_uv(pred), _as_uv(gt)
    if p.shape != g.shape:
        raise ValueError(f"flow shapes differ: {p.shape[1:]} vs {g.shape[1:]}")
    m = np.hypot(p[0] - g[0], p[1] - g[1])
    return float(m.mean()), m


# ---------------------------------------------------------------- colour coding

def color_wheel() -> np.ndarray:
    """The 55-entry Middlebury wheel (red, yellow, green, cyan, blue, magenta segments)."""
    segs = [(15, (255, 0, 0), (255, 255, 0)), (6, (255, 255, 0), (0, 255, 0)),
            (4, (0, 255, 0), (0, 255, 255)), (11, (0, 255, 255), (0, 0, 255)),
            (13, (0, 0, 255), (255, 0, 255)), (6, (255, 0, 255), (255, 0, 0))]
    rows = []
    for n, a, b in segs:
        t = np.arange(n)[:, None] / n
        rows.append((1 - t) * np.array(a) + t * np.array(b))
    return np.floor(np.concatenate(rows)) / 255.0


def flow_to_color(flow, max_magnitude: float | None = None) -> np.ndarray:
    """uint8 RGB image; hue encodes direction, saturation magnitude relative to ``max_magnitude``.

    Zero flow is white. ``None`` scales by the largest magnitude in the field.
    """
    uv = _as_uv(flow)
    if not np.all(np.isfinite(uv)):
        raise ValueError("flow contains non-finite values")
    u, v = uv
    mag = np.hypot(u, v)
    scale = float(mag.max()) if max_magnitude is None else float(max_magnitude)
    rad = mag / scale if scale > 0 else np.zeros_like(mag)
    wheel = color_wheel()
    n = wheel.shape[0]
    a = np.arctan2(-v, -u) / np.pi  # in [-1, 1]; direction (+1, 0) lands on a = +-1, the red end
    fk = (a + 1) / 2 * (n - 1)
    k0 = np.floor(fk).astype(int)
    k1 = (k0 + 1) % n
    frac = (fk - k0)[..., None]
    col = (1 - frac) * wheel[k0] + frac * wheel[k1]
    inside = (rad <= 1)[..., None]
    col = np.where(inside, 1 - rad[..., None] * (1 - col), col * 0.75)
    return np.clip(np.floor(255 * col + 0.5), 0, 255).astype(np.uint8)


def error_map_image(err: np.ndarray, vmax: float) -> np.ndarray:
    """Fixed dark-to-hot ramp; share ``vmax`` across methods so maps compare directly."""
    t = np.clip(np.asarray(err, float) / vmax if vmax > 0 else 0.0, 0, 1)
    r = np.clip(3 * t, 0, 1)
    g = np.clip(3 * t - 1, 0, 1)
    b = np.clip(3 * t - 2, 0, 1)
    return np.round(255 * np.stack([r, g, b], axis=-1)).astype(np.uint8)


def save_image(path: str | os.PathLike, rgb: np.ndarray) -> None:
    """PNG or PPM, chosen by suffix."""
    Image.fromarray(np.asarray(rgb, np.uint8), "RGB").save(path)


# ---------------------------------------------------------------- benchmark

Method = Callable[[Sample], FlowField]


@dataclass
class EvalReport:
    method: str
    scenario: str
    per_sample: dict[tuple[str, int], list[float]] = field(default_factory=dict)  # (scene, dt) -> EPEs

    def add(self, scene: str, dt: int, value: float) -> None:
        if value < 0 or not np.isfinite(value):
            raise ValueError(f"invalid EPE {value}")
        self.per_sample.setdefault((scene, dt), []).append(value)

    def scene_mean(self, scene: str, dt: int) -> float:
        return float(np.mean(self.per_sample[(scene, dt)]))

    def average(self, dt: int) -> float:
        """Unweighted mean over scenes."""
        return float(np.mean([self.scene_mean(s, d) for s, d in self.per_sample if d == dt]))


class MissingSamplesError(FileNotFoundError):
    pass


@dataclass
class Table:
    header: list[str]
    rows: list[list[str]]

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.rows), len(self.header)

    def text(self) -> str:
        cols = [self.header] + self.rows
        widths = [max(len(r[i]) for r in cols) for i in range(len(self.header))]
        fmt = lambda r: "  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths)))  # noqa: E731
        lines = [fmt(self.header), "  ".join("-" * w for w in widths)]
        return "\n".join(lines + [fmt(r) for r in self.rows]) + "\n"

    def write(self, stem: str | os.PathLike) -> tuple[Path, Path]:
        stem = Path(stem)
        stem.parent.mkdir(parents=True, exist_ok=True)
        csv_path, txt_path = stem.with_suffix(".csv"), stem.with_suffix(".txt")
        with open(csv_path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(self.header)
            wr.writerows(self.rows)
        txt_path.write_text(self.text())
        return csv_path, txt_path


def load_dataset(dataset: str | os.PathLike) -> list[tuple[Path, Sample]]:
    """All samples of a dataset; every incomplete sample directory is reported, none skipped."""
    if not Path(dataset).is_dir():
        raise MissingSamplesError(f"dataset directory {dataset} does not exist")
    dirs = sample_dirs(dataset)
    if not dirs:
        raise MissingSamplesError(f"no sample_* directories under {dataset}")
    out, missing = [], []
    for d in dirs:
        try:
            out.append((d, read_sample(d)))
        except (OSError, ValueError) as exc:
            missing.append(f"{d.name}: {exc}")
    if missing:
        raise MissingSamplesError("unreadable samples:\n  " + "\n  ".join(missing))
    return out


def evaluate_method(name: str, method: Method, samples: Sequence[Sample],
                    dts: Sequence[int] | None = None, scenario: str = "problem1") -> EvalReport:
    rep = EvalReport(name, scenario)
    for s in samples:
        dt = int(s.meta.get("dt_frames", s.flow.dt_frames))
        if dts is not None and dt not in dts:
            continue
        rep.add(str(s.meta.get("flow", "scene")), dt, epe(method(s), s.flow)[0])
    return rep


def benchmark_table(reports: Sequence[EvalReport], dts: Sequence[int] | None = None,
                    scenes: Sequence[str] | None = None) -> Table:
    """Rows are methods; columns are every scene at every dt, then the average at every dt."""
    if not reports:
        raise ValueError("no methods to tabulate")
    keys = sorted({k for r in reports for k in r.per_sample})
    dts = list(dts) if dts is not None else sorted({d for _, d in keys}, reverse=True)
    scenes = list(scenes) if scenes is not None else sorted({s for s, _ in keys})
    missing = [f"{r.method}: {s} dt={d}" for r in reports for s in scenes for d in dts if (s, d) not in r.per_sample]
    if missing:
        raise MissingSamplesError("no samples for:\n  " + "\n  ".join(missing))
    header = ["method"] + [f"{s} dt={d}" for s in scenes for d in dts] + [f"average dt={d}" for d in dts]
    rows = []
    for r in reports:
        cells = [f"{r.scene_mean(s, d):.3f}" for s in scenes for d in dts]
        cells += [f"{np.mean([r.scene_mean(s, d) for s in scenes]):.3f}" for d in dts]
        rows.append([r.method] + cells)
    return Table(header, rows)


ABLATION_SETTINGS = (
    ("A", dict(use_dpht=False, use_ge=False, use_msvr=False)),
    ("B", dict(use_dpht=True, use_ge=False, use_msvr=False)),
    ("C", dict(use_dpht=True, use_ge=True, use_msvr=False)),
    ("D", dict(use_dpht=True, use_ge=False, use_msvr=True)),
    ("E", dict(use_dpht=True, use_ge=True, use_msvr=True)),
)


def ablation_table(results: Mapping[str, Mapping[str, float]], scenarios: Sequence[str], dt: int = 21) -> Table:
    """Five settings rows with module check marks, one EPE column per scenario."""
    mark = lambda on: "yes" if on else "no"  # noqa: E731
    header = ["#", "DPHT", "GE", "MSVR"] + [f"{s} dt={dt}" for s in scenarios]
    rows = []
    for tag, flags in ABLATION_SETTINGS:
        vals = results.get(tag, {})
        rows.append([f"({tag})", mark(flags["use_dpht"]), mark(flags["use_ge"]), mark(flags["use_msvr"])]
                    + [f"{vals[s]:.3f}" if s in vals else "-" for s in scenarios])
    return Table(header, rows)
