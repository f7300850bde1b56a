"""Shared checkpoint container: a JSON header followed by an f32 blob.

Layout: 4-byte magic ``MTB1``, u32 little-endian header length, UTF-8 JSON
header, then the concatenated little-endian float32 arrays.  The header's
``arrays`` entry lists (name, shape) in blob order so readers can slice the
blob without guessing.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

_MAGIC = b"MTB1"


def write_container(path, header: dict, arrays: list[tuple[str, np.ndarray]]) -> None:
    header = dict(header)
    header["arrays"] = [{"name": name, "shape": list(a.shape)} for name, a in arrays]
    header_bytes = json.dumps(header).encode("utf-8")
    blob = b"".join(np.ascontiguousarray(a, dtype="<f4").tobytes() for _, a in arrays)
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", len(header_bytes)))
        f.write(header_bytes)
        f.write(blob)


def read_container(path) -> tuple[dict, dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    if len(raw) < 8 or raw[:4] != _MAGIC:
        raise ValueError(f"{path}: not a checkpoint container (bad magic)")
    (header_len,) = struct.unpack_from("<I", raw, 4)
    header_end = 8 + header_len
    if len(raw) < header_end:
        raise ValueError(f"{path}: truncated header")
    header = json.loads(raw[8:header_end].decode("utf-8"))

    arrays = {}
    offset = header_end
    for entry in header.get("arrays", []):
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        end = offset + 4 * count
        if len(raw) < end:
            raise ValueError(f"{path}: truncated blob at array {entry['name']!r}")
        arrays[entry["name"]] = (
            np.frombuffer(raw, dtype="<f4", count=count, offset=offset).reshape(shape)
        )
        offset = end
    if offset != len(raw):
        raise ValueError(f"{path}: {len(raw) - offset} trailing bytes")
    return header, arrays
