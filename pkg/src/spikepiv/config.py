"""Flat dotted key=value configs mapped onto dataclasses."""

from __future__ import annotations

import dataclasses
import types
import typing
from typing import Any, Mapping


def _coerce(raw: str, tp: Any, key: str):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin is typing.Union or origin is types.UnionType:
        if raw.lower() in ("", "none", "null", "auto"):
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(raw, inner[0], key)
    if tp is bool:
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{key}: expected a boolean, got {raw!r}")
    if tp is int:
        return int(raw)
    if tp is float:
        return float(raw)
    if tp is str:
        return raw
    if origin is tuple:
        elem = args[0] if args else str
        return tuple(_coerce(x.strip(), elem, key) for x in raw.split(",") if x.strip())
    if tp is dict or origin is dict:
        raise ValueError(f"{key}: dict fields take dotted sub-keys")
    return raw


def apply_overrides(obj, items: Mapping[str, str], prefix: str = ""):
    """Return a copy of dataclass ``obj`` with ``items`` (string values) applied.

    Keys are matched after stripping ``prefix``; dict-typed fields collect
    ``field.sub=value`` entries, parsed as floats when possible. Unknown keys raise.
    """
    hints = typing.get_type_hints(type(obj))
    names = {f.name for f in dataclasses.fields(obj)}
    changes: dict[str, Any] = {}
    for key, raw in items.items():
        if prefix:
            if not key.startswith(prefix):
                continue
            key = key[len(prefix):]
        head, _, sub = key.partition(".")
        if head not in names:
            raise KeyError(f"unknown config key {prefix}{key}")
        if sub:
            if dict not in (hints[head], typing.get_origin(hints[head])):
                raise KeyError(f"config key {prefix}{key}: {head} takes no sub-keys")
            d = dict(changes.get(head, getattr(obj, head)) or {})
            try:
                d[sub] = float(raw)
            except ValueError:
                d[sub] = raw
            changes[head] = d
        else:
            try:
                changes[head] = _coerce(raw, hints[head], prefix + key)
            except ValueError as exc:
                raise ValueError(f"config key {prefix}{key}: {exc}") from None
    return dataclasses.replace(obj, **changes)


def flatten(obj, prefix: str = "") -> dict[str, Any]:
    out: dict[str, Any] = {}
    for f in dataclasses.fields(obj):
        val = getattr(obj, f.name)
        if isinstance(val, dict):
            for k, v in val.items():
                out[f"{prefix}{f.name}.{k}"] = v
        else:
            out[f"{prefix}{f.name}"] = val
    return out
