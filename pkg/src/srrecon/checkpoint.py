"""Checkpoint files: text index plus raw little-endian float64 blocks.

Layout: line 1 is the magic string, line 2 a single-line JSON object
with a free-form ``config`` and a ``params`` list of
{name, dims, offset} entries (offsets into the binary section that
starts right after the second newline). Round-trips are bit-exact.
"""

from __future__ import annotations

import json

import numpy as np

MAGIC = b"SRRCKPT/1"


class CheckpointError(Exception):
    pass


def save_checkpoint(path: str, values: dict, config: dict | None = None) -> None:
    index = []
    offset = 0
    blobs = []
    for name, arr in values.items():
        # note: ascontiguousarray would promote 0-d arrays to shape (1,)
        arr = np.asarray(arr, dtype="<f8")
        index.append({"name": name, "dims": list(arr.shape), "offset": offset})
        blobs.append(arr.tobytes())
        offset += arr.nbytes
    header = json.dumps({"config": config or {}, "params": index})
    with open(path, "wb") as f:
        f.write(MAGIC + b"\n")
        f.write(header.encode("utf-8") + b"\n")
        for blob in blobs:
            f.write(blob)


def load_checkpoint(path: str):
    """Returns (values dict, config dict)."""
    with open(path, "rb") as f:
        magic = f.readline().rstrip(b"\n")
        if magic != MAGIC:
            raise CheckpointError(f"{path}: bad magic {magic!r}")
        try:
            header = json.loads(f.readline().decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise CheckpointError(f"{path}: bad index line") from e
        blob = f.read()
    values = {}
    for entry in header["params"]:
        dims = tuple(entry["dims"])
        n = int(np.prod(dims)) if dims else 1
        start = entry["offset"]
        end = start + 8 * n
        if end > len(blob):
            raise CheckpointError(f"{path}: truncated data for {entry['name']!r}")
        values[entry["name"]] = (
            np.frombuffer(blob[start:end], dtype="<f8").reshape(dims).copy()
        )
    return values, header.get("config", {})
