"""Binary checkpoint container.

Layout (all integers little-endian u32): magic "HERD", version, entry count,
then per entry: name length, UTF-8 name, rank, dims, raw little-endian f32
payload. Byte-identical across save/load/save round trips.
"""

from __future__ import annotations

import struct

import numpy as np

from .layers import Param

MAGIC = b"HERD"
VERSION = 1


class CheckpointError(Exception):
    pass


def save_params(path, params) -> None:
    """params: iterable of (name, Param-or-ndarray)."""
    entries = []
    for name, p in params:
        arr = p.data if isinstance(p, Param) else np.asarray(p)
        entries.append((name, np.ascontiguousarray(arr, dtype="<f4")))
    names = [n for n, _ in entries]
    if len(set(names)) != len(names):
        raise CheckpointError("duplicate parameter names")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(entries)))
        for name, arr in entries:
            nb = name.encode("utf-8")
            f.write(struct.pack("<I", len(nb)))
            f.write(nb)
            f.write(struct.pack("<I", arr.ndim))
            if arr.ndim:
                f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.tobytes())


def load_params(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != MAGIC:
        raise CheckpointError(f"bad magic {raw[:4]!r}")
    version, count = struct.unpack_from("<II", raw, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported version {version}")
    off = 12
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<I", raw, off)
        off += 4
        name = raw[off : off + nlen].decode("utf-8")
        off += nlen
        (rank,) = struct.unpack_from("<I", raw, off)
        off += 4
        dims = struct.unpack_from(f"<{rank}I", raw, off) if rank else ()
        off += 4 * rank
        n = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(raw, dtype="<f4", count=n, offset=off).reshape(dims)
        off += 4 * n
        if name in out:
            raise CheckpointError(f"duplicate entry {name!r}")
        out[name] = arr.copy()
    if off != len(raw):
        raise CheckpointError("trailing bytes after last entry")
    return out


def assign_params(params, loaded: dict[str, np.ndarray]) -> None:
    """Copy loaded arrays into (name, Param) pairs; names and shapes must
    match exactly."""
    params = list(params)
    names = {n for n, _ in params}
    missing = names - set(loaded)
    extra = set(loaded) - names
    if missing or extra:
        raise CheckpointError(f"name mismatch: missing {sorted(missing)}, extra {sorted(extra)}")
    for name, p in params:
        if loaded[name].shape != p.data.shape:
            raise CheckpointError(
                f"{name}: shape {loaded[name].shape} does not match {p.data.shape}"
            )
        p.data[...] = loaded[name]
