"""Versioned binary checkpoints of a :class:`ParamStore`.

Layout (little-endian): magic ``PDDM``, version u8, record count u32, then
per record: path length u32, UTF-8 path, ndim u32, ndim x u32 extents and
the float32 values in C order.
"""

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

MAGIC = b"PDDM"
VERSION = 1
_HEADER = struct.Struct("<4sBI")
_U32 = struct.Struct("<I")


def encode_state(state):
    """Serialise a ``{path: array}`` mapping; values are stored as float32."""
    parts = [_HEADER.pack(MAGIC, VERSION, len(state))]
    for path, arr in state.items():
        name = path.encode("utf-8")
        arr = np.ascontiguousarray(arr, dtype="<f4")
        parts.append(_U32.pack(len(name)))
        parts.append(name)
        parts.append(_U32.pack(arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def decode_state(raw, source="checkpoint"):
    """Inverse of :func:`encode_state`; float32 arrays in file order."""
    if len(raw) < 4 or raw[:4] != MAGIC:
        raise FormatError(f"{source}: bad magic {raw[:4]!r}, expected {MAGIC!r}", offset=0)
    if len(raw) < _HEADER.size:
        raise FormatError(f"{source}: truncated header", offset=len(raw))
    _, version, count = _HEADER.unpack_from(raw)
    if version != VERSION:
        raise FormatError(f"{source}: unsupported version {version}", offset=4)
    pos = _HEADER.size

    def need(n, what):
        if pos + n > len(raw):
            raise FormatError(f"{source}: truncated {what}", offset=len(raw))

    state = {}
    for _ in range(count):
        need(4, "path length")
        (n,) = _U32.unpack_from(raw, pos)
        pos += 4
        need(n, "path")
        try:
            path = raw[pos:pos + n].decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"{source}: parameter path is not UTF-8", offset=pos) from exc
        pos += n
        need(4, f"rank of {path!r}")
        (ndim,) = _U32.unpack_from(raw, pos)
        pos += 4
        need(4 * ndim, f"shape of {path!r}")
        shape = struct.unpack_from(f"<{ndim}I", raw, pos)
        pos += 4 * ndim
        size = 4 * int(np.prod(shape, dtype=np.int64))
        need(size, f"data of {path!r}")
        state[path] = np.frombuffer(raw, dtype="<f4", count=size // 4, offset=pos).reshape(shape).copy()
        pos += size
    if pos != len(raw):
        raise FormatError(f"{source}: {len(raw) - pos} trailing bytes", offset=pos)
    return state


def save_checkpoint(path, store):
    Path(path).write_bytes(encode_state(store.state()))


def read_checkpoint(path):
    return decode_state(Path(path).read_bytes(), str(path))


def load_checkpoint(path, store, strict=True):
    """Read ``path`` into ``store`` (float32 values widened to float64)."""
    state = read_checkpoint(path)
    store.load_state({k: v.astype(np.float64) for k, v in state.items()}, strict=strict)
    return store
