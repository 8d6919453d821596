"""Binary parameter checkpoints.

Layout (little-endian): magic ``b"DMN1"``, then one record per parameter
until end of file::

    u32 name_len | name (utf-8) | u32 rank | u32 dims[rank] | f32 payload
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"DMN1"


class CheckpointError(ValueError):
    pass


def save_params(path, params: dict) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        for name, value in params.items():
            arr = np.asarray(value, dtype="<f4")  # tobytes() is C order; keeps rank 0
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_params(path) -> dict:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {data[:4]!r}")
    pos, out = 4, {}
    while pos < len(data):
        try:
            (nlen,) = struct.unpack_from("<I", data, pos)
            pos += 4
            name = data[pos : pos + nlen].decode("utf-8")
            pos += nlen
            (rank,) = struct.unpack_from("<I", data, pos)
            pos += 4
            dims = struct.unpack_from(f"<{rank}I", data, pos)
            pos += 4 * rank
            count = int(np.prod(dims)) if rank else 1
            if pos + 4 * count > len(data):
                raise CheckpointError(f"{path}: truncated payload for {name!r}")
            out[name] = np.frombuffer(data, dtype="<f4", count=count, offset=pos).reshape(dims).copy()
            pos += 4 * count
        except struct.error as exc:
            raise CheckpointError(f"{path}: truncated record") from exc
    return out
