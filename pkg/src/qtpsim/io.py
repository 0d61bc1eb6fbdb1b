"""Atomic CSV/JSON output with stable formatting."""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

FLOAT_FMT = "%.17g"


def _atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        # mkstemp creates 0600; give the result ordinary umask permissions
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


def write_json(path, obj) -> None:
    _atomic_write(path, dumps(obj))


def format_row(values) -> str:
    return ",".join(FLOAT_FMT % float(v) for v in values)


def write_csv(path, header, rows, metadata: dict | None = None) -> None:
    """Header row then one line per row; metadata goes to '# key=value' comments."""
    lines = []
    for key, val in sorted((metadata or {}).items()):
        lines.append(f"# {key}={json.dumps(_jsonable(val), sort_keys=True)}")
    lines.append(",".join(header))
    lines.extend(format_row(r) for r in np.atleast_2d(rows))
    _atomic_write(path, "\n".join(lines) + "\n")


def read_csv(path):
    """Inverse of :func:`write_csv`: (header, data array, metadata dict)."""
    meta = {}
    header = None
    rows = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("# "):
            key, _, val = line[2:].partition("=")
            meta[key] = json.loads(val)
        elif header is None:
            header = line.split(",")
        elif line:
            rows.append([float(v) for v in line.split(",")])
    return header, np.array(rows), meta
