"""Binary tensor container used for checkpoints, dataset shards and trajectory shards.

Layout: magic "MWM1", version u16, then per entry
    name_len u32 | name utf-8 | rank u32 | dims u32*rank | payload f32 little-endian
String metadata (e.g. the training-stage tag) is stored as a reserved
"__meta__.<key>" entry whose payload is the utf-8 bytes widened to f32.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"MWM1"
VERSION = 1
_META_PREFIX = "__meta__."


class ContainerError(RuntimeError):
    pass


def write_container(path, arrays: dict, meta: dict | None = None) -> None:
    """Write named float32 arrays (plus optional string metadata) to `path`."""
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<H", VERSION))
        items = list(arrays.items())
        for key, val in (meta or {}).items():
            payload = np.frombuffer(str(val).encode("utf-8"), dtype=np.uint8)
            items.append((_META_PREFIX + key, payload.astype(np.float32)))
        for name, arr in items:
            arr = np.asarray(arr, dtype=np.float32)
            if not arr.flags.c_contiguous:
                arr = np.ascontiguousarray(arr)
            raw = name.encode("utf-8")
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.astype("<f4").tobytes())


def read_container(path) -> tuple[dict, dict]:
    """Read a container, returning (arrays, meta)."""
    arrays, meta = {}, {}
    with open(path, "rb") as f:
        if f.read(4) != MAGIC:
            raise ContainerError(f"{path}: bad magic, not an MWM1 container")
        (version,) = struct.unpack("<H", f.read(2))
        if version != VERSION:
            raise ContainerError(f"{path}: unsupported container version {version}")
        while True:
            head = f.read(4)
            if not head:
                break
            (name_len,) = struct.unpack("<I", head)
            name = f.read(name_len).decode("utf-8")
            (rank,) = struct.unpack("<I", f.read(4))
            dims = struct.unpack(f"<{rank}I", f.read(4 * rank)) if rank else ()
            count = int(np.prod(dims)) if rank else 1
            payload = np.frombuffer(f.read(4 * count), dtype="<f4").reshape(dims)
            if name.startswith(_META_PREFIX):
                key = name[len(_META_PREFIX):]
                meta[key] = payload.astype(np.uint8).tobytes().decode("utf-8")
            else:
                arrays[name] = payload.astype(np.float32)
    return arrays, meta
