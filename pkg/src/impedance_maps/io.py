"""File formats: binary fields and maps, CSV tables and canonical JSON."""

from __future__ import annotations

import csv
import json
import math
import struct
from pathlib import Path
from typing import Any, Iterable, Mapping

import numpy as np

from .maps import ImpedanceMapMatrix
from .solver import ComplexField

FIELD_MAGIC = b"IMPL"
MAP_MAGIC = b"IMPM"
FORMAT_VERSION = 1
HEADER_BYTES = 64

# magic, version, nx, ny, hx, hy, k  (padded to 64 bytes)
_FIELD_HEADER = struct.Struct("<4sIQQddd")
# magic, version, rows, cols, k, model tag, iota, h, d_l, d_r
_MAP_HEADER = struct.Struct("<4sIIId8siddd")


def _pad(raw: bytes) -> bytes:
    return raw + b"\0" * (HEADER_BYTES - len(raw))


def write_field(path: str | Path, u: ComplexField) -> None:
    """Full grid (absorbing layers included) as interleaved little-endian float64."""
    ny, nx = u.values.shape
    head = _FIELD_HEADER.pack(FIELD_MAGIC, FORMAT_VERSION, nx, ny, u.grid.hx, u.grid.hy, u.k)
    body = np.ascontiguousarray(u.values, dtype="<c16").tobytes()
    Path(path).write_bytes(_pad(head) + body)


def read_field(path: str | Path) -> tuple[dict, np.ndarray]:
    raw = Path(path).read_bytes()
    magic, version, nx, ny, hx, hy, k = _FIELD_HEADER.unpack_from(raw)
    if magic != FIELD_MAGIC:
        raise ValueError(f"{path}: not a field file")
    values = np.frombuffer(raw, dtype="<c16", offset=HEADER_BYTES).reshape(ny, nx)
    return {"version": version, "nx": nx, "ny": ny, "hx": hx, "hy": hy, "k": k}, values.copy()


def write_map(path: str | Path, m: ImpedanceMapMatrix) -> None:
    rows, cols = m.entries.shape
    g = m.spec.geom
    tag = m.spec.model.encode()[:8]
    head = _MAP_HEADER.pack(MAP_MAGIC, FORMAT_VERSION, rows, cols, g.k, tag, m.spec.iota, g.h, g.d_l, g.d_r)
    body = np.ascontiguousarray(m.entries, dtype="<c16").tobytes()
    Path(path).write_bytes(_pad(head) + body)


def read_map(path: str | Path) -> tuple[dict, np.ndarray]:
    raw = Path(path).read_bytes()
    magic, version, rows, cols, k, tag, iota, h, d_l, d_r = _MAP_HEADER.unpack_from(raw)
    if magic != MAP_MAGIC:
        raise ValueError(f"{path}: not a map file")
    meta = {"version": version, "rows": rows, "cols": cols, "k": k, "model": tag.rstrip(b"\0").decode(),
            "iota": iota, "h": h, "d_l": d_l, "d_r": d_r}
    entries = np.frombuffer(raw, dtype="<c16", offset=HEADER_BYTES).reshape(rows, cols)
    return meta, entries.copy()


def field_rows(u: ComplexField) -> list[dict]:
    X, Y = np.meshgrid(u.grid.x, u.grid.y)
    return [{"x": float(x), "y": float(y), "re": float(v.real), "im": float(v.imag)}
            for x, y, v in zip(X.ravel(), Y.ravel(), u.values.ravel())]


def map_rows(m: ImpedanceMapMatrix) -> list[dict]:
    return [{"row": i, "col": j, "y_out": float(m.out_y[i]), "y_in": float(m.in_y[j]),
             "re": float(v.real), "im": float(v.imag)}
            for (i, j), v in np.ndenumerate(m.entries)]


# ---------------------------------------------------------------------- text formats
def _plain(v: Any) -> Any:
    """JSON-safe, deterministic scalar conversion."""
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, complex):
        return {"re": v.real, "im": v.imag}
    if isinstance(v, Mapping):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_plain(x) for x in v]
    return v


def dumps(obj: Any) -> str:
    return json.dumps(_plain(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path: str | Path, obj: Any) -> None:
    Path(path).write_text(dumps(obj), encoding="utf-8")


def _cell(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(_plain(v))


def write_csv(path: str | Path, rows: Iterable[Mapping[str, Any]]) -> None:
    """Union of keys in first-seen order; '.' decimals via ``repr``."""
    rows = list(rows)
    columns: list[str] = []
    for r in rows:
        columns.extend(c for c in r if c not in columns)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_cell(r.get(c)) for c in columns])
