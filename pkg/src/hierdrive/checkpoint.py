"""Versioned binary container of named float64 tensors.

Layout (all integers little-endian, documented in docs/formats.md):

    magic   4 bytes  b"HDRV"
    version u32      currently 1
    cfg_len u32      followed by cfg_len bytes of UTF-8 JSON metadata
    count   u32      number of tensor records
    record  u16 name_len | name UTF-8 | u8 ndim | u32 dim[ndim] | f64 data (C order)
"""

import json
import struct

import numpy as np

MAGIC = b"HDRV"
VERSION = 1


class CheckpointError(Exception):
    pass


def save_checkpoint(path, meta, arrays):
    """Write metadata dict and an ordered name->ndarray mapping."""
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        f.write(struct.pack("<I", len(arrays)))
        for name, arr in arrays.items():
            arr = np.asarray(arr, dtype=np.float64)
            if arr.ndim and not arr.flags["C_CONTIGUOUS"]:
                arr = np.ascontiguousarray(arr)
            encoded = name.encode("utf-8")
            f.write(struct.pack("<H", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<B", arr.ndim))
            for d in arr.shape:
                f.write(struct.pack("<I", d))
            f.write(arr.astype("<f8").tobytes())


def load_checkpoint(path):
    """Read back (meta, name->ndarray) from save_checkpoint output."""
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    off = 4
    version, cfg_len = struct.unpack_from("<II", raw, off)
    off += 8
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    meta = json.loads(raw[off : off + cfg_len].decode("utf-8"))
    off += cfg_len
    (count,) = struct.unpack_from("<I", raw, off)
    off += 4
    arrays = {}
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", raw, off)
            off += 2
            name = raw[off : off + name_len].decode("utf-8")
            off += name_len
            (ndim,) = struct.unpack_from("<B", raw, off)
            off += 1
            shape = struct.unpack_from(f"<{ndim}I", raw, off) if ndim else ()
            off += 4 * ndim
            n = int(np.prod(shape)) if ndim else 1
            arr = np.frombuffer(raw, dtype="<f8", count=n, offset=off).reshape(shape)
            off += 8 * n
            arrays[name] = arr.astype(np.float64)
    except (struct.error, ValueError) as err:
        raise CheckpointError(f"{path}: truncated or corrupt checkpoint ({err})") from err
    return meta, arrays
