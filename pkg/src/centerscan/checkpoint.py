"""Self-describing binary container for named float64 arrays.

Layout: 8-byte magic, little-endian uint64 header length, UTF-8 JSON
header mapping each name to {offset, shape, frozen}, then the raw
float64 little-endian payload. Entry order is preserved.
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"CSCKPT01"


def save_checkpoint(path, entries):
    """Write ``{name: (array, frozen)}`` to ``path``."""
    header = {}
    offset = 0
    blobs = []
    for name, (array, frozen) in entries.items():
        arr = np.ascontiguousarray(array, dtype="<f8")
        header[name] = {"offset": offset, "shape": list(arr.shape), "frozen": bool(frozen)}
        blob = arr.tobytes()
        blobs.append(blob)
        offset += len(blob)
    head = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(head)))
        fh.write(head)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path):
    """Read a container back into ``{name: (array, frozen)}``."""
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError(f"{path}: not a checkpoint container (bad magic {magic!r})")
        (head_len,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(head_len).decode("utf-8"))
        payload = fh.read()
    out = {}
    for name, meta in header.items():
        shape = tuple(meta["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = meta["offset"]
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=start).reshape(shape)
        out[name] = (arr.astype(np.float64), bool(meta["frozen"]))
    return out
