"""Middlebury .flo, binary PGM and key=value text files."""

from __future__ import annotations

import os
from typing import Mapping

import numpy as np

FLO_MAGIC = 202021.25  # b"PIEH" read as float32


def write_flo(path: str | os.PathLike, u: np.ndarray, v: np.ndarray) -> None:
    if u.shape != v.shape or u.ndim != 2:
        raise ValueError(f"u/v must be equal 2-d arrays, got {u.shape} and {v.shape}")
    h, w = u.shape
    with open(path, "wb") as fh:
        np.array([FLO_MAGIC], dtype="<f4").tofile(fh)
        np.array([w, h], dtype="<i4").tofile(fh)
        np.stack([u, v], axis=-1).astype("<f4").tofile(fh)


def read_flo(path: str | os.PathLike) -> tuple[np.ndarray, np.ndarray]:
    with open(path, "rb") as fh:
        magic = np.fromfile(fh, dtype="<f4", count=1)
        if magic.size != 1 or magic[0] != np.float32(FLO_MAGIC):
            raise ValueError(f"{path}: not a .flo file")
        w, h = np.fromfile(fh, dtype="<i4", count=2)
        data = np.fromfile(fh, dtype="<f4", count=2 * w * h)
    if data.size != 2 * w * h:
        raise ValueError(f"{path}: truncated flow payload")
    data = data.reshape(h, w, 2).astype(np.float64)
    return data[..., 0], data[..., 1]


def write_pgm(path: str | os.PathLike, img: np.ndarray) -> None:
    """Binary P5; uint8 stays 8-bit, anything else is written as 16-bit big-endian."""
    img = np.asarray(img)
    if img.ndim != 2:
        raise ValueError(f"PGM needs a 2-d image, got shape {img.shape}")
    if img.dtype == np.uint8:
        maxval, payload = 255, img.tobytes()
    else:
        if img.min() < 0 or img.max() > 65535:
            raise ValueError("16-bit PGM values must lie in [0, 65535]")
        maxval, payload = 65535, img.astype(">u2").tobytes()
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n{maxval}\n".encode("ascii"))
        fh.write(payload)


def read_pgm(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        buf = fh.read()
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4:
        while buf[pos:pos + 1].isspace():
            pos += 1
        if buf[pos:pos + 1] == b"#":
            pos = buf.index(b"\n", pos) + 1
            continue
        start = pos
        while not buf[pos:pos + 1].isspace():
            pos += 1
        tokens.append(buf[start:pos])
    pos += 1
    if tokens[0] != b"P5":
        raise ValueError(f"{path}: only binary P5 PGM is supported")
    w, h, maxval = (int(t) for t in tokens[1:])
    dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
    img = np.frombuffer(buf, dtype=dtype, count=w * h, offset=pos).reshape(h, w)
    return img.astype(np.uint8 if maxval < 256 else np.uint16)


def write_ppm(path: str | os.PathLike, rgb: np.ndarray) -> None:
    rgb = np.asarray(rgb, dtype=np.uint8)
    h, w, _ = rgb.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(rgb.tobytes())


def write_kv(path: str | os.PathLike, items: Mapping[str, object]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for k, v in items.items():
            fh.write(f"{k}={format_value(v)}\n")


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return ",".join(format_value(x) for x in v)
    return "" if v is None else str(v)


def read_kv(path: str | os.PathLike) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out
