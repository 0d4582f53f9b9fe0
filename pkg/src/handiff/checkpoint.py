"""Binary checkpoint container shared by both trainable models.

Layout (little-endian):

    magic     5 bytes ASCII  ("GDMv1" generator, "OCRv1" recognizer)
    meta_len  u32
    meta      meta_len bytes of UTF-8 JSON (sorted keys; includes the
              parameter names and shapes in declaration order)
    params    concatenated float32 arrays, declaration order

Writing the same parameters twice produces byte-identical files, so
save -> load -> save round-trips exactly.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .errors import ParameterError

GENERATOR_MAGIC = b"GDMv1"
RECOGNIZER_MAGIC = b"OCRv1"


def write_container(path: Path, magic: bytes, meta: dict, params: list) -> None:
    """``params`` is an ordered list of (name, float32 array) pairs."""
    if len(magic) != 5:
        raise ParameterError("magic must be exactly 5 bytes")
    meta = dict(meta)
    meta["params"] = [{"name": n, "shape": list(a.shape)} for n, a in params]
    blob = bytearray(magic)
    meta_bytes = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    blob += struct.pack("<I", len(meta_bytes))
    blob += meta_bytes
    for _, arr in params:
        if arr.dtype != np.float32:
            raise ParameterError(f"parameters must be float32, got {arr.dtype}")
        blob += np.ascontiguousarray(arr).astype("<f4").tobytes()
    Path(path).write_bytes(bytes(blob))


def read_container(path: Path, magic: bytes) -> tuple[dict, list]:
    """Returns (meta, ordered list of (name, float32 array))."""
    blob = Path(path).read_bytes()
    if blob[:5] != magic:
        raise ParameterError(f"bad magic {blob[:5]!r}, expected {magic!r}")
    (meta_len,) = struct.unpack("<I", blob[5:9])
    meta = json.loads(blob[9 : 9 + meta_len].decode("utf-8"))
    flat = np.frombuffer(blob[9 + meta_len :], dtype="<f4")
    params = []
    offset = 0
    for entry in meta["params"]:
        shape = tuple(entry["shape"])
        size = int(np.prod(shape)) if shape else 1
        params.append((entry["name"], flat[offset : offset + size].reshape(shape).copy()))
        offset += size
    if offset != flat.size:
        raise ParameterError(f"trailing parameter data: {flat.size - offset} floats")
    return meta, params


def file_sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
