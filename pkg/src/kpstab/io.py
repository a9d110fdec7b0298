"""File formats: field snapshots, checkpoints, CSV time series and JSON reports.

Snapshot: four little-endian float64 header values ``nx, ny, lx, time``,
then the physical array, row-major in x then y (``shape (nx, ny)``).

Checkpoint: a snapshot followed by the step (little-endian int64), the
16-character config hash and the raw spectral coefficients (complex128).
Resuming from the coefficients is bit-exact.

Every writer goes through a temporary file in the target directory and an
atomic rename, so a failed run never leaves a half-written output.
"""

from __future__ import annotations

import contextlib
import csv
import io
import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import spectral as sp
from .spectral import Grid, SpectralField

HEADER = np.dtype("<f8")
HASH_LEN = 16


@contextlib.contextmanager
def atomic_write(path: str | os.PathLike, mode: str = "wb"):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        newline = "" if "b" not in mode else None
        with os.fdopen(fd, mode, newline=newline) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def _snapshot_bytes(f: SpectralField, time: float) -> bytes:
    g = f.grid
    head = np.array([g.nx, g.ny, g.lx, time], dtype=HEADER).tobytes()
    body = np.ascontiguousarray(sp.to_physical(f), dtype=HEADER).tobytes()
    return head + body


def write_snapshot(path, f: SpectralField, time: float) -> None:
    with atomic_write(path) as fh:
        fh.write(_snapshot_bytes(f, time))


def _parse_snapshot(buf: bytes) -> tuple[Grid, float, np.ndarray, int]:
    if len(buf) < 32:
        raise ValueError("snapshot too short for its header")
    nx, ny, lx, time = np.frombuffer(buf[:32], dtype=HEADER)
    nx, ny = int(nx), int(ny)
    grid = Grid(nx, ny, float(lx))
    end = 32 + 8 * nx * ny
    if len(buf) < end:
        raise ValueError("snapshot truncated")
    data = np.frombuffer(buf[32:end], dtype=HEADER).reshape(nx, ny).copy()
    return grid, float(time), data, end


def read_snapshot(path, dealias_fraction: float | None = None) -> tuple[SpectralField, float]:
    buf = Path(path).read_bytes()
    grid, time, data, _ = _parse_snapshot(buf)
    if dealias_fraction is not None:
        grid = Grid(grid.nx, grid.ny, grid.lx, dealias_fraction)
    return sp.to_spectral(data, grid), time


@dataclass
class Checkpoint:
    field: SpectralField
    time: float
    step: int
    config_hash: str


def write_checkpoint(path, f: SpectralField, time: float, step: int, config_hash: str) -> None:
    tag = config_hash.encode("ascii")[:HASH_LEN].ljust(HASH_LEN, b" ")
    with atomic_write(path) as fh:
        fh.write(_snapshot_bytes(f, time))
        fh.write(np.array([step], dtype="<i8").tobytes())
        fh.write(tag)
        fh.write(np.ascontiguousarray(f.coeffs, dtype="<c16").tobytes())


def read_checkpoint(path, grid: Grid | None = None) -> Checkpoint:
    buf = Path(path).read_bytes()
    g, time, _, end = _parse_snapshot(buf)
    if grid is not None:
        if (grid.nx, grid.ny, grid.lx) != (g.nx, g.ny, g.lx):
            raise ValueError("checkpoint grid does not match the configured grid")
        g = grid
    step = int(np.frombuffer(buf[end : end + 8], dtype="<i8")[0])
    tag = buf[end + 8 : end + 8 + HASH_LEN].decode("ascii").strip()
    raw = np.frombuffer(buf[end + 8 + HASH_LEN :], dtype="<c16")
    coeffs = raw.reshape(g.spectral_shape).copy()
    return Checkpoint(SpectralField(coeffs, g), time, step, tag)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def series_csv(series, columns: list[str] | None = None) -> str:
    """CSV text with ``time`` and ``config_hash`` first; floats use ``repr`` (round-trip exact)."""
    recs = series.records
    if columns is None:
        columns = []
        for r in recs:
            for k in r:
                if k not in ("time", "config_hash") and k not in columns:
                    columns.append(k)
    head = ["time", "config_hash", *columns]
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(head)
    for r in recs:
        wr.writerow([_fmt(r.get(k)) for k in head])
    return buf.getvalue()


def write_series_csv(path, series, columns: list[str] | None = None) -> None:
    text = series_csv(series, columns)
    with atomic_write(path, "w") as fh:
        fh.write(text)


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return [o.real, o.imag]
    return str(o)


def write_json(path, payload) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True, default=_json_default)
    with atomic_write(path, "w") as fh:
        fh.write(text + "\n")
