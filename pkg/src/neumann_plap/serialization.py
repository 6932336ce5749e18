"""Deterministic JSON and CSV writers.

Floats are written with 17 significant digits (``%.17g``) so that a report
round-trips exactly and identical runs give identical bytes. Non-finite
floats become ``null`` in JSON and empty cells in CSV.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math

import numpy as np


def to_jsonable(obj):
    """Plain dict/list/scalar tree for dataclasses, numpy values and tuples."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)
                if f.repr}
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    return obj


def format_float(x):
    return "%.17g" % x if math.isfinite(x) else "null"


def _encode(obj, indent, level, out):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None:
        out.append("null")
    elif obj is True:
        out.append("true")
    elif obj is False:
        out.append("false")
    elif isinstance(obj, int):
        out.append(str(obj))
    elif isinstance(obj, float):
        out.append(format_float(obj))
    elif isinstance(obj, str):
        out.append(json.dumps(obj, ensure_ascii=False))
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        for i, (k, v) in enumerate(obj.items()):
            out.append(f"{pad}{json.dumps(str(k), ensure_ascii=False)}: ")
            _encode(v, indent, level + 1, out)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(end + "}")
    elif isinstance(obj, list):
        if not obj:
            out.append("[]")
            return
        if all(not isinstance(v, (dict, list)) for v in obj):
            out.append("[")
            for i, v in enumerate(obj):
                _encode(v, indent, level + 1, out)
                if i < len(obj) - 1:
                    out.append(", ")
            out.append("]")
            return
        out.append("[\n")
        for i, v in enumerate(obj):
            out.append(pad)
            _encode(v, indent, level + 1, out)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(end + "]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent=2):
    out = []
    _encode(to_jsonable(obj), indent, 0, out)
    return "".join(out) + "\n"


def write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(obj))


def _cell(v):
    v = to_jsonable(v)
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return "%.17g" % v if math.isfinite(v) else ""
    return v


def csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(row.get(h) if isinstance(row, dict) else row[i])
                    for i, h in enumerate(header)])
    return buf.getvalue()


def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(csv_text(header, rows))
