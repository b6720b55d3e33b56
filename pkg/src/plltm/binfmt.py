"""Versioned binary container used for trained models and synthetic ground truth.

Layout (all integers little-endian)::

    magic        8 bytes      e.g. b"PLLTMMOD"
    version      uint32
    header_len   uint32
    header       header_len bytes of UTF-8 JSON (sorted keys)
    arrays       concatenated raw little-endian buffers, row-major

The header's ``arrays`` entry lists ``{"name", "dtype", "shape"}`` for every
buffer in storage order. Only ``<f8`` and ``<i8`` are written.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

VERSION = 1
_DTYPES = {"<f8": np.dtype("<f8"), "<i8": np.dtype("<i8")}


class FormatError(ValueError):
    pass


def write_container(path, magic: bytes, header: dict, arrays: dict[str, np.ndarray]) -> None:
    if len(magic) != 8:
        raise ValueError("magic must be 8 bytes")
    specs, buffers = [], []
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        dt = "<f8" if arr.dtype.kind == "f" else "<i8"
        data = np.ascontiguousarray(arr, dtype=_DTYPES[dt])
        specs.append({"name": name, "dtype": dt, "shape": list(data.shape)})
        buffers.append(data.tobytes(order="C"))
    head = json.dumps({**header, "arrays": specs}, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<II", VERSION, len(head)))
        fh.write(head)
        for b in buffers:
            fh.write(b)


def read_container(path, magic: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    if raw[:8] != magic:
        raise FormatError(f"{path}: bad magic {raw[:8]!r}, expected {magic!r}")
    if len(raw) < 16:
        raise FormatError(f"{path}: truncated header")
    version, head_len = struct.unpack("<II", raw[8:16])
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    header = json.loads(raw[16:16 + head_len].decode("utf-8"))
    pos = 16 + head_len
    arrays = {}
    for spec in header.pop("arrays"):
        dt = _DTYPES[spec["dtype"]]
        count = int(np.prod(spec["shape"], dtype=np.int64))
        nbytes = count * dt.itemsize
        if pos + nbytes > len(raw):
            raise FormatError(f"{path}: truncated array {spec['name']!r}")
        arrays[spec["name"]] = np.frombuffer(raw, dtype=dt, count=count, offset=pos).reshape(spec["shape"]).astype(dt.newbyteorder("="))
        pos += nbytes
    if pos != len(raw):
        raise FormatError(f"{path}: {len(raw) - pos} trailing bytes")
    return header, arrays
