"""Binary (de)serialization of DensityState with a JSON sidecar.

Layout, all little-endian:

    offset  size  content
    0       12    magic b"GBDENSITY\\0\\0\\0"
    12      4     uint32 format version
    16      16    int64 n1, int64 n2
    32      24    float64 slope_L, epsilon, time
    56      ...   float64 rho_plus_per (n1*n2, row-major), then rho_minus_per
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .fields import DensityState
from .spectral import RealField, TorusGrid

MAGIC = b"GBDENSITY\x00\x00\x00"
VERSION = 1
_HEADER = struct.Struct("<12sI")
_META = struct.Struct("<qqddd")

__all__ = ["MAGIC", "VERSION", "StateFormatError", "dumps_state", "loads_state", "save_state", "load_state"]


class StateFormatError(ValueError):
    pass


def _metadata(state: DensityState) -> dict:
    n1, n2 = state.grid.shape
    return {
        "format": "GBDENSITY",
        "version": VERSION,
        "n1": n1,
        "n2": n2,
        "slope_L": state.slope_L,
        "epsilon": state.epsilon,
        "time": state.time,
        "dtype": "<f8",
        "order": "C",
    }


def dumps_state(state: DensityState) -> bytes:
    n1, n2 = state.grid.shape
    parts = [
        _HEADER.pack(MAGIC, VERSION),
        _META.pack(n1, n2, state.slope_L, state.epsilon, state.time),
        np.ascontiguousarray(state.rho_plus_per.values, dtype="<f8").tobytes(),
        np.ascontiguousarray(state.rho_minus_per.values, dtype="<f8").tobytes(),
    ]
    return b"".join(parts)


def loads_state(blob: bytes) -> DensityState:
    if len(blob) < _HEADER.size + _META.size:
        raise StateFormatError("truncated header")
    magic, version = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise StateFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise StateFormatError(f"unsupported version {version}")
    n1, n2, slope_L, epsilon, time = _META.unpack_from(blob, _HEADER.size)
    off = _HEADER.size + _META.size
    count = n1 * n2
    if len(blob) != off + 16 * count:
        raise StateFormatError(f"payload size {len(blob) - off} does not match grid {n1}x{n2}")
    data = np.frombuffer(blob, dtype="<f8", count=2 * count, offset=off).astype(np.float64)
    grid = TorusGrid(n1, n2)
    plus = RealField(grid, data[:count].reshape(n1, n2))
    minus = RealField(grid, data[count:].reshape(n1, n2))
    return DensityState(plus, minus, slope_L, epsilon, time)


def save_state(state: DensityState, path: str | Path) -> Path:
    """Write ``path`` and the sidecar ``path + '.json'``; returns ``path``."""
    path = Path(path)
    path.write_bytes(dumps_state(state))
    sidecar = path.with_name(path.name + ".json")
    sidecar.write_text(json.dumps(_metadata(state), indent=2) + "\n")
    return path


def load_state(path: str | Path) -> DensityState:
    return loads_state(Path(path).read_bytes())
