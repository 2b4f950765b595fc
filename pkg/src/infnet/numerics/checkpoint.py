"""Binary parameter checkpoints.

Layout (all integers little-endian)::

    magic      8 bytes  b"INFNETCK"
    version    u32
    count      u32
    per array:
        name_len u32, name utf-8
        dtype_len u32, dtype str (numpy ``str``, e.g. "<f8")
        ndim u32, shape u64 * ndim
        nbytes u64, raw C-order bytes

A sidecar ``<path>.manifest.txt`` lists ``name  dtype  shape`` per line.
The format has no timestamps, so identical parameters give identical bytes.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"INFNETCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_arrays(path, arrays: dict[str, np.ndarray]) -> None:
    path = Path(path)
    chunks = [MAGIC, struct.pack("<II", VERSION, len(arrays))]
    manifest = []
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        dt = arr.dtype.str.encode()
        nb = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(nb)) + nb)
        chunks.append(struct.pack("<I", len(dt)) + dt)
        chunks.append(struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape))
        raw = arr.tobytes()
        chunks.append(struct.pack("<Q", len(raw)) + raw)
        manifest.append(f"{name}  {arr.dtype.str}  {'x'.join(map(str, arr.shape)) or 'scalar'}")
    path.write_bytes(b"".join(chunks))
    Path(str(path) + ".manifest.txt").write_text(
        f"# infnet checkpoint v{VERSION}\n" + "\n".join(manifest) + "\n", encoding="utf-8"
    )


def load_arrays(path) -> dict[str, np.ndarray]:
    buf = Path(path).read_bytes()
    if buf[:8] != MAGIC:
        raise CheckpointError(f"{path}: not an infnet checkpoint")
    version, count = struct.unpack_from("<II", buf, 8)
    if version != VERSION:
        raise CheckpointError(f"{path}: checkpoint version {version}, expected {VERSION}")
    pos = 16
    out: dict[str, np.ndarray] = {}

    def take(fmt):
        nonlocal pos
        vals = struct.unpack_from(fmt, buf, pos)
        pos += struct.calcsize(fmt)
        return vals

    for _ in range(count):
        (n,) = take("<I")
        name = buf[pos : pos + n].decode("utf-8")
        pos += n
        (n,) = take("<I")
        dtype = np.dtype(buf[pos : pos + n].decode())
        pos += n
        (ndim,) = take("<I")
        shape = take(f"<{ndim}Q") if ndim else ()
        (nbytes,) = take("<Q")
        out[name] = np.frombuffer(buf[pos : pos + nbytes], dtype=dtype).reshape(shape).copy()
        pos += nbytes
    return out
