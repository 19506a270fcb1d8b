"""
Flat-file persistence: curve files, CSV and JSON reports, key=value configs.

Curve files start with ``T=<circumference>``, then one ``t x y z`` line per
vertex.  Curves built from an open path carry a ``# open <n>`` comment
giving the number of path vertices.
"""

from __future__ import annotations

import csv
import io as _io
import json
import math
from pathlib import Path

import numpy as np

from .curves import Curve
from .heisenberg import MetricCtx

__all__ = [
    "SCHEMA",
    "CurveFileError",
    "fmt",
    "write_curve",
    "read_curve",
    "rounded",
    "dumps_json",
    "write_json",
    "read_json",
    "csv_text",
    "write_csv",
    "read_csv",
    "read_config",
]

SCHEMA = "heis-tsp/1"
DIGITS = 12


class CurveFileError(OSError):
    pass


def fmt(x) -> str:
    """Number with 12 significant digits, locale-free."""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.{DIGITS}g}"


# curves --------------------------------------------------------------------


def write_curve(path, curve: Curve) -> None:
    lines = [f"T={float(curve.T)!r}"]
    if curve.n_path is not None:
        lines.append(f"# open {curve.n_path}")
    for t, p in zip(curve.t.tolist(), curve.points.tolist()):
        lines.append(" ".join(repr(v) for v in (t, *p)))
    Path(path).write_text("\n".join(lines) + "\n")


def read_curve(path, ctx: MetricCtx | None = None, tol: float = 1e-9) -> Curve:
    """Parse a curve file and check the Lipschitz certificate under ``ctx`` (``eta = 1`` by default)."""
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise CurveFileError(f"cannot read {path}: {e}") from e
    T = None
    n_path = None
    rows = []
    for k, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if len(parts) == 2 and parts[0] == "open":
                n_path = int(parts[1])
            continue
        if T is None:
            if not line.startswith("T="):
                raise CurveFileError(f"{path}:{k}: first line must be T=<circumference>")
            T = float(line[2:])
            continue
        parts = line.split()
        if len(parts) != 4:
            raise CurveFileError(f"{path}:{k}: expected 't x y z'")
        try:
            rows.append([float(v) for v in parts])
        except ValueError as e:
            raise CurveFileError(f"{path}:{k}: {e}") from e
    if T is None or not rows:
        raise CurveFileError(f"{path}: no curve data")
    arr = np.array(rows)
    try:
        curve = Curve(arr[:, 0], arr[:, 1:], T, n_path)
    except ValueError as e:
        raise CurveFileError(f"{path}: {e}") from e
    try:
        curve.check_lipschitz(ctx or MetricCtx(1.0), tol)
    except ValueError as e:
        raise CurveFileError(f"{path}: {e}") from e
    return curve


# reports -------------------------------------------------------------------


def rounded(obj):
    """Copy of a JSON-like object with floats cut to 12 significant digits."""
    if isinstance(obj, dict):
        return {str(k): rounded(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [rounded(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return rounded(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return None
        return float(f"{x:.{DIGITS}g}")
    return obj


def dumps_json(obj: dict) -> str:
    body = {"schema": SCHEMA}
    body.update(rounded(obj))
    return json.dumps(body, indent=2, sort_keys=False) + "\n"


def write_json(path, obj: dict) -> None:
    Path(path).write_text(dumps_json(obj))


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def csv_text(header: list[str], rows) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) if isinstance(v, (int, float, np.number, bool, np.bool_)) else v for v in r])
    return buf.getvalue()


def write_csv(path, header: list[str], rows) -> None:
    Path(path).write_text(csv_text(header, rows))


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise CurveFileError(f"{path}: empty CSV")
    return rows[0], rows[1:]


def read_config(path) -> dict[str, str]:
    """``key=value`` lines; ``#`` starts a comment, keys may be written like CLI flags."""
    out = {}
    for k, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{k}: expected key=value")
        key, val = (s.strip() for s in line.split("=", 1))
        out[key.lstrip("-").replace("-", "_")] = val
    return out
