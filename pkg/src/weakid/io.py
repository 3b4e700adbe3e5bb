"""Dataset serialization (CSV text and ``WFSD`` binary)."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from weakid.errors import DatasetFormatError, GridError
from weakid.grid import Dataset, make_grid

MAGIC = b"WFSD"
VERSION = 1


def _format_from_path(path) -> str:
    return "csv" if str(path).endswith(".csv") else "binary"


def write_dataset(d: Dataset, path, format: str | None = None) -> None:
    fmt = format or _format_from_path(path)
    path = Path(path)
    if fmt == "csv":
        head = " ; ".join(f"{a.n} {a.lo!r} {a.hi!r}" for a in d.grid.axes)
        rows = d.values.reshape(-1, d.components)
        with path.open("w", encoding="utf-8") as fh:
            fh.write(f"# grid: {head} ; components: {d.components}\n")
            for row in rows:
                fh.write(",".join(repr(float(v)) for v in row))
                fh.write("\n")
    elif fmt == "binary":
        parts = [MAGIC, struct.pack("<II", VERSION, d.grid.ndim)]
        for a in d.grid.axes:
            parts.append(struct.pack("<Qdd", a.n, a.lo, a.hi))
        parts.append(struct.pack("<Q", d.components))
        parts.append(np.ascontiguousarray(d.values, dtype="<f8").tobytes())
        path.write_bytes(b"".join(parts))
    else:
        raise ValueError(f"unknown dataset format {fmt!r}")


def _parse_csv_header(line: str):
    if not line.startswith("# grid:"):
        raise DatasetFormatError("missing '# grid:' header line")
    fields = [f.strip() for f in line[len("# grid:"):].split(";")]
    if not fields or not fields[-1].startswith("components:"):
        raise DatasetFormatError("header must end with 'components: c'")
    try:
        comps = int(fields[-1].split(":", 1)[1])
        axes = []
        for f in fields[:-1]:
            n, lo, hi = f.split()
            axes.append((int(n), float(lo), float(hi)))
    except ValueError as exc:
        raise DatasetFormatError(f"malformed header: {exc}") from None
    return axes, comps


def read_dataset(path, format: str | None = None) -> Dataset:
    fmt = format or _format_from_path(path)
    path = Path(path)
    try:
        if fmt == "csv":
            with path.open("r", encoding="utf-8") as fh:
                axes, comps = _parse_csv_header(fh.readline())
                grid = make_grid(axes)
                rows = []
                for lineno, line in enumerate(fh, start=2):
                    line = line.strip()
                    if not line:
                        continue
                    parts = line.split(",")
                    if len(parts) != comps:
                        raise DatasetFormatError(
                            f"line {lineno}: expected {comps} columns, got {len(parts)}"
                        )
                    rows.append([float(p) for p in parts])
            vals = np.array(rows, dtype=np.float64).reshape(-1, comps)
            if vals.shape[0] != int(np.prod(grid.shape)):
                raise DatasetFormatError(
                    f"expected {int(np.prod(grid.shape))} rows, got {vals.shape[0]}"
                )
            return Dataset(grid, vals.reshape(grid.shape + (comps,)))
        if fmt == "binary":
            raw = path.read_bytes()
            if raw[:4] != MAGIC:
                raise DatasetFormatError("bad magic bytes")
            version, ndim = struct.unpack_from("<II", raw, 4)
            if version != VERSION:
                raise DatasetFormatError(f"unsupported version {version}")
            off = 12
            axes = []
            for _ in range(ndim):
                axes.append(struct.unpack_from("<Qdd", raw, off))
                off += 24
            (comps,) = struct.unpack_from("<Q", raw, off)
            off += 8
            grid = make_grid(axes)
            count = int(np.prod(grid.shape)) * comps
            if len(raw) - off != 8 * count:
                raise DatasetFormatError("payload size does not match header")
            vals = np.frombuffer(raw, dtype="<f8", count=count, offset=off)
            return Dataset(grid, vals.reshape(grid.shape + (comps,)).astype(np.float64))
    except (GridError, struct.error) as exc:
        raise DatasetFormatError(str(exc)) from None
    raise ValueError(f"unknown dataset format {fmt!r}")
