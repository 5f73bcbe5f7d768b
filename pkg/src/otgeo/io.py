"""Instance files and reproducible output.

Instances are JSON objects ``{"p": [...], "q": [...], "M": [[...]], "lambda": x}``.
``M`` may also be a path (relative to the JSON file) to a CSV matrix.  CSV
matrices are row-major with an optional header row.  All numbers written by
:func:`dumps_json` and :func:`format_csv` carry 17 significant digits, which
round-trips every double exactly.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from numpy.typing import NDArray

from .errors import DimensionMismatch, InvalidProbability, ParseError
from .simplex import SUM_TOL


@dataclass(frozen=True)
class Instance:
    p: NDArray[np.float64]
    q: NDArray[np.float64]
    M: NDArray[np.float64]
    lam: float | None = None
    metadata: dict[str, str] = field(default_factory=dict)
    warnings: list[dict[str, Any]] = field(default_factory=list)


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def _encode(obj, out: list[str], indent: int, level: int):
    pad = "\n" + " " * (indent * (level + 1))
    end = "\n" + " " * (indent * level)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (bool, np.bool_)) or obj is None:
        out.append(json.dumps(None if obj is None else bool(obj)))
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(fmt(obj) if math.isfinite(obj) else "null")
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{")
        for i, (k, v) in enumerate(obj.items()):
            out.append(("," if i else "") + pad + json.dumps(str(k)) + ": ")
            _encode(v, out, indent, level + 1)
        out.append(end + "}")
    elif isinstance(obj, (list, tuple)):
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            out.append("[")
            for i, v in enumerate(obj):
                if i:
                    out.append(", ")
                _encode(v, out, indent, level + 1)
            out.append("]")
            return
        out.append("[")
        for i, v in enumerate(obj):
            out.append(("," if i else "") + pad)
            _encode(v, out, indent, level + 1)
        out.append(end + "]")
    elif hasattr(obj, "value") and isinstance(obj.value, str):      # enums
        out.append(json.dumps(obj.value))
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps_json(obj, indent: int = 2) -> str:
    """JSON text with every float written to 17 significant digits (non-finite -> null)."""
    out: list[str] = []
    _encode(obj, out, indent, 0)
    return "".join(out) + "\n"


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return fmt(v) if math.isfinite(v) else ("nan" if math.isnan(v) else ("inf" if v > 0 else "-inf"))
    return "" if v is None else str(v)


def format_csv(rows, header: list[str] | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if header:
        w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def read_json(path) -> Any:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read file: {exc.strerror}", str(path)) from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, str(path), exc.lineno, exc.colno) from exc


def read_csv_matrix(path) -> NDArray[np.float64]:
    """Row-major CSV matrix; a first row that is not numeric is taken as a header."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read file: {exc.strerror}", str(path)) from exc
    rows = []
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or all(not c.strip() for c in row):
            continue
        try:
            rows.append([float(c) for c in row])
        except ValueError:
            if lineno == 1:
                continue
            col = next(i for i, c in enumerate(row, start=1) if not _is_float(c))
            raise ParseError(f"not a number: {row[col - 1]!r}", str(path), lineno, col) from None
    if not rows:
        raise ParseError("empty matrix", str(path))
    width = len(rows[0])
    for i, r in enumerate(rows):
        if len(r) != width:
            raise DimensionMismatch(f"{path}: row {i} has {len(r)} entries, expected {width}")
    return np.array(rows, dtype=np.float64)


def _is_float(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def _numeric(value, name: str, path: str, ndim: int) -> NDArray[np.float64]:
    try:
        arr = np.array(value, dtype=np.float64)
    except (TypeError, ValueError):
        raise ParseError(f"field {name!r} must be a {'vector' if ndim == 1 else 'matrix'} of numbers",
                         path) from None
    if arr.ndim != ndim:
        raise DimensionMismatch(f"field {name!r} must be {ndim}-dimensional, got shape {arr.shape}")
    return arr


def _check_entries(arr, name: str):
    bad = np.argwhere(~np.isfinite(arr) | (arr < 0))
    if bad.size:
        idx = tuple(int(i) for i in bad[0])
        val = float(arr[idx])
        what = "non-finite" if not math.isfinite(val) else "negative"
        raise InvalidProbability(f"{what} entry {val!r} (entries must be finite and >= 0)", name,
                                 idx if len(idx) > 1 else idx[0])


def validate_distribution(v, name: str, renormalize: bool, warnings: list) -> NDArray[np.float64]:
    """Check a loaded distribution; zeros are allowed (closure of the simplex)."""
    v = np.asarray(v, dtype=np.float64)
    _check_entries(v, name)
    if v.size < 2:
        raise InvalidProbability(f"need at least 2 entries, got {v.size}", name)
    total = float(v.sum())
    if abs(total - 1.0) > SUM_TOL:
        if not renormalize or total <= 0:
            raise InvalidProbability(f"entries sum to {total!r}, not 1 (tolerance {SUM_TOL:g}); "
                                     "use --renormalize to rescale", name)
        warnings.append({"field": name, "warning": "renormalized", "sum": total})
        v = v / total
    return v


def parse_pair(text: str, name: str) -> tuple[float, float]:
    """``"mu,variance"`` as used on the command line."""
    parts = text.split(",")
    if len(parts) != 2:
        raise ParseError(f"--{name} expects 'mean,variance', got {text!r}")
    try:
        return float(parts[0]), float(parts[1])
    except ValueError:
        raise ParseError(f"--{name} expects numbers, got {text!r}") from None


def parse_vector(text: str, name: str) -> NDArray[np.float64]:
    try:
        return np.array([float(t) for t in text.split(",")], dtype=np.float64)
    except ValueError:
        raise ParseError(f"--{name} expects comma-separated numbers, got {text!r}") from None


def load_matrix(value, base: Path, name: str = "M") -> NDArray[np.float64]:
    if isinstance(value, str):
        return read_csv_matrix(base / value)
    return _numeric(value, name, str(base), 2)


def load_instance(path, renormalize: bool = False) -> Instance:
    """Read and validate an instance file.

    Raises
    ------
    ParseError
        Unreadable file, malformed JSON (with line and column), missing or
        non-numeric fields.
    DimensionMismatch
        ``M`` does not have shape ``(len(p), len(q))``.
    InvalidProbability
        Negative or non-finite entries (the message names the cell), or a
        distribution that does not sum to 1 while ``renormalize`` is off.
    """
    path = Path(path)
    doc = read_json(path)
    if not isinstance(doc, dict):
        raise ParseError("instance must be a JSON object", str(path))
    for key in ("p", "q", "M"):
        if key not in doc:
            raise ParseError(f"missing field {key!r}", str(path))
    warnings: list[dict[str, Any]] = []
    p = _numeric(doc["p"], "p", str(path), 1)
    q = _numeric(doc["q"], "q", str(path), 1)
    M = load_matrix(doc["M"], path.parent)
    if M.shape != (p.size, q.size):
        raise DimensionMismatch(f"M has shape {M.shape} but p, q have sizes {p.size}, {q.size}")
    _check_entries(M, "M")
    p = validate_distribution(p, "p", renormalize, warnings)
    q = validate_distribution(q, "q", renormalize, warnings)
    lam = doc.get("lambda")
    if lam is not None:
        if not isinstance(lam, (int, float)) or isinstance(lam, bool) or not math.isfinite(lam) or lam < 0:
            raise InvalidProbability(f"must be a finite number >= 0, got {lam!r}", "lambda")
        lam = float(lam)
    meta = {str(k): str(v) for k, v in (doc.get("metadata") or {}).items()}
    return Instance(p, q, M, lam, meta, warnings)


def load_points(path, renormalize: bool = False) -> tuple[list[NDArray[np.float64]], dict, list]:
    """Barycenter input: ``{"points": [[...], ...], ...}`` or a bare list of vectors.

    Returns ``(points, document, warnings)``; the document may carry ``M``
    and ``lambda``.
    """
    path = Path(path)
    doc = read_json(path)
    if isinstance(doc, list):
        doc = {"points": doc}
    if not isinstance(doc, dict) or "points" not in doc:
        raise ParseError("expected a list of vectors or an object with 'points'", str(path))
    warnings: list = []
    pts = [validate_distribution(_numeric(v, f"points[{i}]", str(path), 1), f"points[{i}]",
                                 renormalize, warnings)
           for i, v in enumerate(doc["points"])]
    return pts, doc, warnings
