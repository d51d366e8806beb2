"""Serialization helpers shared by the scheme, bench and command-line modules."""

from __future__ import annotations

import hashlib
import json
import math
import os
import platform
from pathlib import Path
from typing import Any

import numpy as np

from .errors import FracSPDEError


class OutputError(FracSPDEError):
    category = "io"


def fmt_float(x: float) -> str:
    """Shortest text that names ``x`` exactly, never more than 17 significant digits."""
    x = float(x)
    if not math.isfinite(x):
        raise ValueError("non-finite value in JSON output")
    return repr(x)


def _encode(obj: Any, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{_encode(str(k), indent, level + 1)}: {_encode(v, indent, level + 1)}"
                 for k, v in sorted(obj.items(), key=lambda kv: str(kv[0]))]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        items = [pad + _encode(v, indent, level + 1) for v in seq]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj: Any, indent: int = 2) -> str:
    """Deterministic JSON: sorted keys, floats in shortest round-trip form."""
    return _encode(obj, indent, 0) + "\n"


def canonical(obj: Any) -> str:
    return _encode(obj, 0, 0).replace("\n", "")


def config_hash(config: dict) -> str:
    return hashlib.sha256(canonical(config).encode()).hexdigest()


def versions() -> dict[str, str]:
    import scipy

    from . import __version__

    return {
        "fracspde": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def write_text(path: str | Path, text: str) -> Path:
    """Write via a temporary file and rename, so a failure leaves no partial file."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(tmp, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        try:
            tmp.unlink()
        except OSError:
            pass
        raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path
