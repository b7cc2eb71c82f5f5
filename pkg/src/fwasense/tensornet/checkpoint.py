"""Versioned binary checkpoints of named arrays (params, buffers, optimizer
state) plus a JSON meta block; round-trips are bit-exact."""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"FWNT"
VERSION = 1

_DTYPE_TAGS = {1: "<f4", 2: "<f8", 3: "<i8", 4: "|u1"}
_TAG_OF = {np.dtype(v): k for k, v in _DTYPE_TAGS.items()}


class CheckpointError(ValueError):
    """Checkpoint file is malformed; message names the failing byte offset."""


def save_checkpoint(path: str, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    meta_blob = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HI", VERSION, len(meta_blob)))
        fh.write(meta_blob)
        fh.write(struct.pack("<I", len(arrays)))
        for name in sorted(arrays):
            arr = np.ascontiguousarray(arrays[name])
            if arr.dtype == np.float32:
                arr = arr.astype("<f4")
            elif arr.dtype == np.float64:
                arr = arr.astype("<f8")
            elif arr.dtype == np.int64:
                arr = arr.astype("<i8")
            elif arr.dtype == np.uint8:
                arr = arr.astype("|u1")
            else:
                raise CheckpointError(f"unsupported dtype {arr.dtype} for entry {name!r}")
            blob = arr.tobytes()
            name_b = name.encode("utf-8")
            fh.write(struct.pack("<H", len(name_b)))
            fh.write(name_b)
            fh.write(struct.pack("<BB", _TAG_OF[arr.dtype], arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape) if arr.ndim else b"")
            fh.write(struct.pack("<Q", len(blob)))
            fh.write(blob)


class _Cursor:
    def __init__(self, raw: bytes, path: str):
        self.raw = raw
        self.off = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.raw):
            raise CheckpointError(
                f"{self.path}: truncated at byte {self.off} (need {n} more bytes)"
            )
        out = self.raw[self.off : self.off + n]
        self.off += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path: str) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        cur = _Cursor(fh.read(), path)
    if cur.take(4) != MAGIC:
        raise CheckpointError(f"{path}: bad magic at byte 0")
    (version, meta_len) = cur.unpack("<HI")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version} at byte 4")
    try:
        meta = json.loads(cur.take(meta_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: bad meta block at byte 10: {exc}") from exc
    (n_entries,) = cur.unpack("<I")
    arrays: dict[str, np.ndarray] = {}
    for _ in range(n_entries):
        (name_len,) = cur.unpack("<H")
        name = cur.take(name_len).decode("utf-8")
        tag, ndim = cur.unpack("<BB")
        if tag not in _DTYPE_TAGS:
            raise CheckpointError(f"{path}: unknown dtype tag {tag} at byte {cur.off - 2}")
        shape = cur.unpack(f"<{ndim}I") if ndim else ()
        (nbytes,) = cur.unpack("<Q")
        dtype = np.dtype(_DTYPE_TAGS[tag])
        expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize if ndim else dtype.itemsize
        if nbytes != expected:
            raise CheckpointError(
                f"{path}: entry {name!r} claims {nbytes} bytes, shape demands "
                f"{expected} (at byte {cur.off - 8})"
            )
        data_off = cur.off
        arr = np.frombuffer(cur.take(nbytes), dtype=dtype).reshape(shape).copy()
        if arr.nbytes != nbytes:
            raise CheckpointError(f"{path}: entry {name!r} corrupt at byte {data_off}")
        arrays[name] = arr
    if cur.off != len(cur.raw):
        raise CheckpointError(f"{path}: {len(cur.raw) - cur.off} trailing bytes at {cur.off}")
    return meta, arrays
