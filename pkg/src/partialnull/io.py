"""Atomic file output and deterministic CSV/JSON formatting."""
from __future__ import annotations

import csv
import io
import json
import math
import os
import re
import tempfile

import numpy as np


def fmt(v) -> str:
    """Shortest round-trip text for floats, plain text otherwise ('.' decimal separator)."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    return buf.getvalue()


def atomic_write(path: str, text: str) -> None:
    """Write to a temporary file in the target directory, then rename over the target."""
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    if isinstance(o, (np.bool_, bool)):
        return bool(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (float, np.floating)):
        f = float(o)
        if math.isnan(f) or math.isinf(f):
            return str(f)
        return f
    return o


def json_text(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


_PI = re.compile(r"^\s*(?P<num>[0-9]*\.?[0-9]*)\s*\*?\s*pi\s*(?:/\s*(?P<den>[0-9]*\.?[0-9]+))?\s*$")


def parse_number(v) -> float:
    """Numbers pass through; strings like 'pi', '2pi', '2*pi/50' are evaluated."""
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return float(v)
    m = _PI.match(str(v))
    if not m:
        raise ValueError(f"cannot parse number {v!r}")
    num = float(m.group("num")) if m.group("num") not in ("", None, ".") else 1.0
    den = float(m.group("den")) if m.group("den") else 1.0
    return num * math.pi / den
