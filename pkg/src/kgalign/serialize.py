"""Versioned binary container for caches and checkpoints.

Layout: 4-byte magic (kind tag), 1 version byte, 8-byte little-endian JSON
length, the JSON metadata block (sorted keys), then each array's raw bytes in
metadata order. Arrays are stored little-endian, C-contiguous, so two writes
of the same content are byte-identical.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import DataError

VERSION = 1

CACHE_MAGIC = b"KBCH"
CHECKPOINT_MAGIC = b"CKPT"

_ALLOWED_DTYPES = {"<i8", "<f8", "<f4", "|u1", "|b1"}


def _canonical_dtype(arr: np.ndarray) -> str:
    dt = arr.dtype.newbyteorder("<") if arr.dtype.byteorder == ">" else arr.dtype
    code = dt.str
    if code == "<b1":  # bools report '|b1'
        code = "|b1"
    if code not in _ALLOWED_DTYPES:
        raise DataError(f"unsupported array dtype {arr.dtype}")
    return code


def write_container(
    path: str | Path, magic: bytes, meta: dict, arrays: dict[str, np.ndarray]
) -> None:
    if len(magic) != 4:
        raise DataError("magic tag must be 4 bytes")
    specs = []
    blobs = []
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        code = _canonical_dtype(arr)
        arr = arr.astype(code, copy=False)
        specs.append({"name": name, "dtype": code, "shape": list(arr.shape)})
        blobs.append(arr.tobytes())
    header = json.dumps(
        {"meta": meta, "arrays": specs}, sort_keys=True, separators=(",", ":")
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(bytes([VERSION]))
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def read_container(
    path: str | Path, magic: bytes
) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        got = fh.read(4)
        if got != magic:
            raise DataError(f"{path}: bad magic {got!r}, expected {magic!r}")
        version = fh.read(1)
        if not version or version[0] != VERSION:
            raise DataError(f"{path}: unsupported container version {version!r}")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        arrays: dict[str, np.ndarray] = {}
        for spec in header["arrays"]:
            shape = tuple(spec["shape"])
            count = int(np.prod(shape)) if shape else 1
            dt = np.dtype(spec["dtype"])
            raw = fh.read(count * dt.itemsize)
            if len(raw) != count * dt.itemsize:
                raise DataError(f"{path}: truncated array {spec['name']}")
            arrays[spec["name"]] = np.frombuffer(raw, dtype=dt).reshape(shape).copy()
    return header["meta"], arrays


def pack_strings(items: list[str]) -> np.ndarray:
    """Newline-joined UTF-8 bytes as a uint8 array (IRIs cannot contain \\n)."""
    for s in items:
        if "\n" in s:
            raise DataError("string table entry contains a newline")
    return np.frombuffer("\n".join(items).encode("utf-8"), dtype=np.uint8).copy()


def unpack_strings(arr: np.ndarray, count: int) -> list[str]:
    if count == 0:
        return []
    text = arr.tobytes().decode("utf-8")
    items = text.split("\n")
    if len(items) != count:
        raise DataError("string table count mismatch")
    return items
