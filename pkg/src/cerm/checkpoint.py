"""Named-tensor container with a versioned magic header.

Layout::

    CERM-CKPT-1\\n
    <decimal length of JSON header>\\n
    <JSON header: metadata + [{name, shape, offset}]>
    <raw little-endian float64 payload>
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Mapping

import numpy as np

MAGIC = b"CERM-CKPT-1"


class CheckpointError(ValueError):
    pass


def save_tensors(path, tensors: Mapping[str, np.ndarray], metadata: Mapping[str, Any] | None = None) -> None:
    entries = []
    chunks = []
    offset = 0
    for name in sorted(tensors):
        # ascontiguousarray would promote 0-d arrays to 1-d
        arr = np.array(tensors[name], dtype="<f8", order="C")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        chunks.append(arr.tobytes())
        offset += arr.nbytes
    header = json.dumps({"metadata": dict(metadata or {}), "tensors": entries}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC + b"\n")
        fh.write(str(len(header)).encode() + b"\n")
        fh.write(header)
        for c in chunks:
            fh.write(c)


def load_tensors(path) -> tuple[dict[str, np.ndarray], dict[str, Any]]:
    raw = Path(path).read_bytes()
    magic, _, rest = raw.partition(b"\n")
    if magic != MAGIC:
        raise CheckpointError(f"{path}: not a CERM checkpoint (bad magic header)")
    size, _, rest = rest.partition(b"\n")
    try:
        n = int(size)
        header = json.loads(rest[:n].decode("utf-8"))
    except ValueError as exc:
        raise CheckpointError(f"{path}: corrupt checkpoint header") from exc
    payload = rest[n:]
    tensors = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        buf = payload[start : start + 8 * count]
        if len(buf) != 8 * count:
            raise CheckpointError(f"{path}: truncated payload for {entry['name']}")
        tensors[entry["name"]] = np.frombuffer(buf, dtype="<f8").reshape(shape).astype(np.float64)
    return tensors, header["metadata"]
