"""Binary container for named float64 tensors.

Layout (little-endian throughout):

    magic   4 bytes  b"GBOT"
    version u32      currently 1
    count   u32      number of entries
    table   count times:
                name_len u16, name utf-8 bytes,
                ndim u8, dims ndim * u64
    payload count contiguous float64 blocks, in table order

Entries are written in sorted-name order so identical contents produce
identical bytes.  Used for model checkpoints and dataset tensor blocks.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"GBOT"
VERSION = 1


def save_arrays(path, arrays):
    names = sorted(arrays)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(names)))
        for name in names:
            raw = name.encode("utf-8")
            arr = np.asarray(arrays[name], dtype=np.float64)
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        for name in names:
            arr = np.ascontiguousarray(arrays[name], dtype=np.float64)
            fh.write(arr.astype("<f8", copy=False).tobytes())


def load_arrays(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise ValueError(f"{path}: not a tensor container (bad magic)")
    version, count = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported container version {version}")
    off = 12
    table = []
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", data, off)
        off += 2
        name = data[off:off + nlen].decode("utf-8")
        off += nlen
        (ndim,) = struct.unpack_from("<B", data, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}Q", data, off)
        off += 8 * ndim
        table.append((name, shape))
    out = {}
    for name, shape in table:
        size = int(np.prod(shape)) if shape else 1
        end = off + 8 * size
        if end > len(data):
            raise ValueError(f"{path}: truncated payload for {name!r}")
        arr = np.frombuffer(data[off:end], dtype="<f8").reshape(shape).copy()
        out[name] = arr
        off = end
    if off != len(data):
        raise ValueError(f"{path}: {len(data) - off} trailing bytes")
    return out
