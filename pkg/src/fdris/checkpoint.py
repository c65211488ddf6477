"""Flat binary container for named float64 tensors.

Layout: magic b"RFLB1", version u32 LE, then per-tensor records of
(u32 name length, name bytes utf-8, u32 rank, rank * u64 dims,
row-major little-endian f64 payload) until end of file.  Round-trips are
bit-exact.
"""

import struct

import numpy as np

from .errors import CheckpointError

MAGIC = b"RFLB1"
VERSION = 1


def save_tensors(path, tensors: dict):
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        for name, arr in tensors.items():
            arr = np.ascontiguousarray(arr, dtype="<f8")
            name_b = name.encode("utf-8")
            f.write(struct.pack("<I", len(name_b)))
            f.write(name_b)
            f.write(struct.pack("<I", arr.ndim))
            for d in arr.shape:
                f.write(struct.pack("<Q", d))
            f.write(arr.tobytes())


def load_tensors(path) -> dict:
    with open(path, "rb") as f:
        data = f.read()
    if data[:5] != MAGIC:
        raise CheckpointError("bad magic; not a tensor container")
    (version,) = struct.unpack_from("<I", data, 5)
    if version != VERSION:
        raise CheckpointError(f"unsupported container version {version}")
    tensors = {}
    off = 9
    while off < len(data):
        try:
            (nlen,) = struct.unpack_from("<I", data, off)
            off += 4
            name = data[off : off + nlen].decode("utf-8")
            off += nlen
            (rank,) = struct.unpack_from("<I", data, off)
            off += 4
            dims = struct.unpack_from(f"<{rank}Q", data, off) if rank else ()
            off += 8 * rank
            count = int(np.prod(dims)) if rank else 1
            arr = np.frombuffer(data, dtype="<f8", count=count, offset=off)
            off += 8 * count
        except (struct.error, UnicodeDecodeError, ValueError) as e:
            raise CheckpointError(f"truncated or corrupt record: {e}") from e
        if rank == 0:
            tensors[name] = arr.reshape(())
        else:
            tensors[name] = arr.reshape(dims)
    return tensors
