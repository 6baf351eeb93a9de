"""Deterministic JSON/CSV writers.

Floats are written with 17 significant digits so a value survives a
round trip bit for bit. Non-finite floats become the strings "inf",
"-inf" and "nan" because JSON has no literal for them.
"""

from __future__ import annotations

import csv
import dataclasses
import enum
import hashlib
import io
import json
import math

import numpy as np

SCHEMA_VERSION = 1


def fmt_float(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def plain(obj):
    """Convert dataclasses, enums, numpy scalars and complex numbers to JSON-ready data."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": float(obj.real), "im": float(obj.imag)}
    return obj


def _encode(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None or isinstance(obj, bool):
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        s = fmt_float(obj)
        return s if math.isfinite(obj) else json.dumps(s)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k), ensure_ascii=False)}: {_encode(v, indent, level + 1)}"
                 for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        return "[\n" + ",\n".join(pad + _encode(v, indent, level + 1) for v in obj) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    """JSON text for ``obj``; a dict at top level gets ``schema_version`` first."""
    data = plain(obj)
    if isinstance(data, dict) and "schema_version" not in data:
        data = {"schema_version": SCHEMA_VERSION, **data}
    return _encode(data, indent, 0) + "\n"


def csv_text(rows: list[dict], columns: list[str] | None = None) -> str:
    """RFC 4180 CSV (CRLF line ends, header row) from a list of flat dicts."""
    if columns is None:
        columns = []
        for r in rows:
            for k in r:
                if k not in columns:
                    columns.append(k)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(columns)
    for r in rows:
        out = []
        for c in columns:
            v = plain(r.get(c, ""))
            if isinstance(v, float):
                v = fmt_float(v)
            elif isinstance(v, dict):
                v = json.dumps(v, sort_keys=True)
            elif v is None:
                v = ""
            out.append(v)
        w.writerow(out)
    return buf.getvalue()


def config_hash(params: dict) -> str:
    text = dumps(params)
    return hashlib.sha256(text.encode()).hexdigest()[:16]
