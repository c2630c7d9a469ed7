"""Canonical JSON serialization and the attribution result bundle."""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any

SCHEMA_VERSION = "1"

# Keys whose values vary run to run and are excluded from byte comparisons.
VOLATILE_KEYS = ("timing",)


def format_float(value: float) -> str:
    """Fixed float rendering at 17 significant digits (round-trips float64).

    Integral values keep a trailing ".0" so the token re-parses as a float
    and the rendering is idempotent across write/read cycles.
    """
    if math.isnan(value) or math.isinf(value):
        raise ValueError(f"non-finite float in canonical JSON: {value}")
    text = format(value, ".17g")
    if not any(c in text for c in ".eE"):
        text += ".0"
    return text


def canonical_dumps(obj: Any, indent: int = 2) -> str:
    """Deterministic JSON: sorted keys, fixed float formatting, stable layout."""
    pieces: list[str] = []
    _write(obj, pieces, indent, 0)
    return "".join(pieces)


def _write(obj: Any, out: list[str], indent: int, level: int) -> None:
    pad = " " * (indent * (level + 1))
    close_pad = " " * (indent * level)
    if obj is None:
        out.append("null")
    elif obj is True:
        out.append("true")
    elif obj is False:
        out.append("false")
    elif isinstance(obj, str):
        out.append(json.dumps(obj, ensure_ascii=False))
    elif isinstance(obj, int):
        out.append(str(obj))
    elif isinstance(obj, float):
        out.append(format_float(obj))
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        keys = sorted(obj)
        for i, key in enumerate(keys):
            if not isinstance(key, str):
                raise TypeError(f"canonical JSON keys must be strings, got {key!r}")
            out.append(pad)
            out.append(json.dumps(key, ensure_ascii=False))
            out.append(": ")
            _write(obj[key], out, indent, level + 1)
            out.append(",\n" if i + 1 < len(keys) else "\n")
        out.append(close_pad + "}")
    elif isinstance(obj, (list, tuple)):
        if not obj:
            out.append("[]")
            return
        out.append("[\n")
        for i, item in enumerate(obj):
            out.append(pad)
            _write(item, out, indent, level + 1)
            out.append(",\n" if i + 1 < len(obj) else "\n")
        out.append(close_pad + "]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__} canonically")


def canonical_bytes(obj: Any) -> bytes:
    return (canonical_dumps(obj) + "\n").encode("utf-8")


def strip_volatile(bundle: dict) -> dict:
    """Copy of the bundle without run-varying keys, for byte comparisons."""
    return {k: v for k, v in bundle.items() if k not in VOLATILE_KEYS}


def write_bundle(bundle: dict, path: str | Path) -> None:
    Path(path).write_bytes(canonical_bytes(bundle))


def load_bundle(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())
