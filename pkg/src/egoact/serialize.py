"""Deterministic JSON / CSV writers shared by checkpoints and reports."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np


def to_jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    return obj


def dumps_json(obj) -> str:
    # float repr round-trips float64 exactly, so checkpoints reload bit-identical
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=1) + "\n"


def write_json(obj, path: str | Path) -> None:
    Path(path).write_text(dumps_json(obj), encoding="utf-8")


def read_json(path: str | Path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def dumps_csv(header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    return buf.getvalue()


def write_csv(header: list[str], rows, path: str | Path) -> None:
    Path(path).write_text(dumps_csv(header, rows), encoding="utf-8")
