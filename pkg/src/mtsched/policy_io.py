"""Versioned JSON serialization of solved policy tables.

The file is a single JSON object with sorted keys and a trailing newline::

    {"format": "mtsched-policy", "version": 1,
     "market": {...}, "grids": {...},
     "values": [[...]], "immediate": [[...]],
     "s_index": [[...]], "u_index": [[...]],
     "zeta": [...], "lower_values": [...],
     "metadata": {...}}

Arrays are nested lists; floats use Python's shortest round-trip repr, so
``load(dump(t))`` reproduces every array exactly and equal tables produce
equal bytes.
"""
from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .models import MarketParams
from .persistent import PersistentGrids, PolicyTable

FORMAT = "mtsched-policy"
VERSION = 1


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def to_dict(table: PolicyTable) -> dict:
    return _plain({
        "format": FORMAT,
        "version": VERSION,
        "market": dataclasses.asdict(table.params),
        "grids": dataclasses.asdict(table.grids),
        "values": table.values,
        "immediate": table.immediate,
        "s_index": table.s_index,
        "u_index": table.u_index,
        "zeta": table.zeta,
        "lower_values": table.lower_values,
        "metadata": table.metadata,
    })


def dumps(table: PolicyTable) -> str:
    return json.dumps(to_dict(table), sort_keys=True, indent=1, allow_nan=False) + "\n"


def dump(table: PolicyTable, path) -> Path:
    path = Path(path)
    path.write_text(dumps(table), encoding="utf-8")
    return path


def from_dict(data: dict) -> PolicyTable:
    if data.get("format") != FORMAT:
        raise ConfigError(f"not a policy file (format={data.get('format')!r})")
    if data.get("version") != VERSION:
        raise ConfigError(f"unsupported policy file version {data.get('version')!r}")
    return PolicyTable(
        params=MarketParams(**data["market"]),
        grids=PersistentGrids(**data["grids"]),
        values=np.asarray(data["values"], dtype=float),
        immediate=np.asarray(data["immediate"], dtype=float),
        s_index=np.asarray(data["s_index"], dtype=np.int64),
        u_index=np.asarray(data["u_index"], dtype=np.int64),
        zeta=np.asarray(data["zeta"], dtype=np.int64),
        lower_values=np.asarray(data["lower_values"], dtype=float),
        metadata=data.get("metadata", {}),
    )


def loads(text: str) -> PolicyTable:
    return from_dict(json.loads(text))


def load(path) -> PolicyTable:
    return loads(Path(path).read_text(encoding="utf-8"))
