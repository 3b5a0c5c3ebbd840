"""Table and report writers.

Every file starts with the hash of the experiment config and the master seed,
so outputs can be matched to the run that made them. Floats are written with
``repr`` so that identical runs give byte-identical files.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math

import numpy as np


def config_hash(config: dict) -> str:
    """SHA-256 (first 16 hex chars) of the canonical JSON form."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=_plain)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def header_rows(config: dict, seed: int) -> list[str]:
    return [f"config_hash={config_hash(config)}", f"seed={seed}"]


def _plain(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (set, frozenset)):
        return sorted(x)
    raise TypeError(f"not serialisable: {type(x).__name__}")


def _cell(x):
    if isinstance(x, np.generic):
        x = x.item()
    if isinstance(x, float):
        return repr(x)
    if isinstance(x, bool):
        return str(x).lower()
    return x


def write_csv(path, rows: list[dict], header=(), columns=None) -> None:
    if columns is None:
        columns = []
        for row in rows:
            columns.extend(k for k in row if k not in columns)
    with open(path, "w", newline="") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(row.get(c, "")) for c in columns])


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))


def _finite(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def write_json(path, report: dict, config: dict, seed: int) -> None:
    doc = {"config_hash": config_hash(config), "seed": seed, **report}
    doc = json.loads(json.dumps(doc, default=_plain))
    with open(path, "w") as fh:
        json.dump(_finite(doc), fh, indent=2, sort_keys=False)
        fh.write("\n")
