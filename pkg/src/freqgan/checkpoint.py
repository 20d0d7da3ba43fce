"""Named-tensor checkpoint container.

Layout: magic b"FDCG", version u32, then per-tensor records of
(name_len u32, utf-8 name, rank u32, extents u64 each, little-endian f32
payload) until EOF. Round trips are bit-exact.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"FDCG"
VERSION = 1


class CheckpointError(IOError):
    pass


def save_tensors(path, tensors: dict[str, np.ndarray]):
    """Write a name -> array mapping; arrays are stored as float32."""
    path = Path(path)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        for name in sorted(tensors):
            arr = np.ascontiguousarray(tensors[name], dtype=np.float32)
            nb = name.encode("utf-8")
            f.write(struct.pack("<I", len(nb)))
            f.write(nb)
            f.write(struct.pack("<I", arr.ndim))
            for ext in arr.shape:
                f.write(struct.pack("<Q", ext))
            f.write(arr.astype("<f4", copy=False).tobytes())


def load_tensors(path) -> dict[str, np.ndarray]:
    path = Path(path)
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {blob[:4]!r}")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    out: dict[str, np.ndarray] = {}
    off = 8
    total = len(blob)
    while off < total:
        (nlen,) = struct.unpack_from("<I", blob, off)
        off += 4
        name = blob[off : off + nlen].decode("utf-8")
        off += nlen
        (rank,) = struct.unpack_from("<I", blob, off)
        off += 4
        shape = struct.unpack_from(f"<{rank}Q", blob, off)
        off += 8 * rank
        count = 1
        for ext in shape:
            count *= ext
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=off).reshape(shape)
        off += 4 * count
        out[name] = arr.astype(np.float32)
    return out
