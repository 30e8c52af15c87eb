"""FYFD binary field dumps.

Layout: b"FYFD", uint32 LE format version, uint32 LE header length, UTF-8 JSON
header, then the raw little-endian payload of the coefficient array with shape
(ncomp, N, ..., N) in C order (multi-index major, then grid axes).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .forms import FormField, GridSpec, ncomp

MAGIC = b"FYFD"
VERSION = 1
LAYOUT = "row-major multi-index-major"
_DTYPES = {"c128": np.dtype("<c16"), "f64": np.dtype("<f8")}


@dataclass(frozen=True)
class FieldDump:
    grid: GridSpec
    bidegree: tuple[int, int]
    name: str
    coeffs: np.ndarray

    def as_form(self) -> FormField:
        return FormField(self.grid, self.bidegree[0], self.bidegree[1], self.coeffs.astype(complex), self.name)

    def as_scalar(self) -> np.ndarray:
        if self.bidegree != (0, 0):
            raise ValueError(f"dump {self.name!r} has bidegree {self.bidegree}, not a scalar")
        return self.coeffs[0]


def encode(grid: GridSpec, coeffs: np.ndarray, bidegree=(0, 0), name: str = "") -> bytes:
    p, q = bidegree
    nc = ncomp(grid.n, p, q)
    arr = np.asarray(coeffs)
    if arr.ndim == grid.ndim:
        arr = arr[None]
    arr = np.broadcast_to(arr, (nc,) + grid.shape)
    if np.iscomplexobj(arr):
        tag = "c128"
    else:
        tag = "f64"
    payload = np.ascontiguousarray(arr, dtype=_DTYPES[tag]).tobytes(order="C")
    header = {
        "grid": {"n": grid.n, "N": grid.N},
        "bidegree": [p, q],
        "name": name,
        "dtype": tag,
        "layout": LAYOUT,
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<II", VERSION, len(hbytes)) + hbytes + payload


def decode(buf: bytes) -> FieldDump:
    if buf[:4] != MAGIC:
        raise ValueError("not an FYFD dump (bad magic)")
    version, hlen = struct.unpack("<II", buf[4:12])
    if version != VERSION:
        raise ValueError(f"unsupported FYFD version {version}")
    header = json.loads(buf[12:12 + hlen].decode("utf-8"))
    if header.get("layout") != LAYOUT:
        raise ValueError(f"unsupported layout {header.get('layout')!r}")
    grid = GridSpec(int(header["grid"]["n"]), int(header["grid"]["N"]))
    p, q = (int(v) for v in header["bidegree"])
    dt = _DTYPES[header["dtype"]]
    shape = (ncomp(grid.n, p, q),) + grid.shape
    expected = int(np.prod(shape)) * dt.itemsize
    payload = buf[12 + hlen:]
    if len(payload) != expected:
        raise ValueError(f"payload has {len(payload)} bytes, expected {expected}")
    coeffs = np.frombuffer(payload, dtype=dt).reshape(shape).astype(dt.newbyteorder("="))
    return FieldDump(grid, (p, q), header.get("name", ""), coeffs)


def dump_field(path, grid: GridSpec, coeffs, bidegree=(0, 0), name: str = "") -> Path:
    path = Path(path)
    path.write_bytes(encode(grid, coeffs, bidegree, name))
    return path


def dump_form(path, form: FormField, name: str | None = None) -> Path:
    return dump_field(path, form.grid, form.coeffs, form.bidegree, name if name is not None else form.name)


def load_field(path) -> FieldDump:
    return decode(Path(path).read_bytes())
