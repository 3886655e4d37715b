"""File formats: DMAP depth rasters, sparse-sample CSV, PPM/PGM exports."""

import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError, ValidationError
from .sampling import SparseDepthSamples

DMAP_MAGIC = b"DMAP"
DMAP_VERSION = 1
_DMAP_HEADER = struct.Struct("<4sBII")
CSV_HEADER = "u,v,d"
PGM_SCALE_FILE_SUFFIX = ".scale.txt"


def write_dmap(path, depth):
    """Write a (height, width) depth map as little-endian float32."""
    depth = np.asarray(depth)
    if depth.ndim != 2:
        raise ValidationError(f"depth map must be 2-d, got shape {depth.shape}")
    h, w = depth.shape
    payload = np.ascontiguousarray(depth, dtype="<f4").tobytes()
    Path(path).write_bytes(_DMAP_HEADER.pack(DMAP_MAGIC, DMAP_VERSION, w, h) + payload)


def read_dmap(path):
    """Read a DMAP file into a float32 (height, width) array."""
    raw = Path(path).read_bytes()
    if len(raw) < 4 or raw[:4] != DMAP_MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}, expected {DMAP_MAGIC!r}", offset=0)
    if len(raw) < _DMAP_HEADER.size:
        raise FormatError(f"{path}: truncated header", offset=len(raw))
    _, version, w, h = _DMAP_HEADER.unpack_from(raw)
    if version != DMAP_VERSION:
        raise FormatError(f"{path}: unsupported version {version}", offset=4)
    need = _DMAP_HEADER.size + 4 * w * h
    if len(raw) != need:
        raise FormatError(f"{path}: expected {need} bytes for {w}x{h}, found {len(raw)}",
                          offset=min(len(raw), need))
    return np.frombuffer(raw, dtype="<f4", offset=_DMAP_HEADER.size).reshape(h, w).astype(np.float32)


def write_sparse_csv(path, samples):
    lines = [CSV_HEADER]
    lines += [f"{u},{v},{d:.9g}" for u, v, d in zip(samples.u, samples.v, samples.d)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_sparse_csv(path, width=None, height=None):
    """Parse a sparse CSV; extents default to the bounding box of the samples."""
    text = Path(path).read_text().splitlines()
    if not text or text[0].strip() != CSV_HEADER:
        got = text[0] if text else ""
        raise FormatError(f"{path}: header must be {CSV_HEADER!r}, got {got!r}")
    us, vs, ds = [], [], []
    for lineno, line in enumerate(text[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise FormatError(f"{path}: line {lineno}: expected 3 fields, got {len(parts)}")
        try:
            u, v, d = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise FormatError(f"{path}: line {lineno}: cannot parse {line!r}") from None
        if not np.isfinite(d) or d <= 0:
            raise ValidationError(f"{path}: line {lineno}: depth must be positive, got {d}")
        if u < 0 or v < 0:
            raise ValidationError(f"{path}: line {lineno}: negative pixel coordinate")
        us.append(u)
        vs.append(v)
        ds.append(d)
    if width is None:
        width = max(us) + 1 if us else 0
    if height is None:
        height = max(vs) + 1 if vs else 0
    return SparseDepthSamples(width, height, us, vs, ds, pattern="csv")


def write_ppm(path, image):
    """Binary P6 from an (h, w, 3) image in [0, 1]."""
    img = np.clip(np.rint(np.asarray(image) * 255.0), 0, 255).astype(np.uint8)
    h, w = img.shape[:2]
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode() + img.tobytes())


def _pnm_header(raw, magic):
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated PNM header", offset=pos)
        tokens.append(raw[start:pos])
    if tokens[0] != magic:
        raise FormatError(f"expected {magic!r}, got {tokens[0]!r}", offset=0)
    return int(tokens[1]), int(tokens[2]), int(tokens[3]), pos + 1


def read_ppm(path):
    raw = Path(path).read_bytes()
    w, h, maxval, off = _pnm_header(raw, b"P6")
    if maxval != 255:
        raise FormatError(f"{path}: only 8-bit PPM supported", offset=off)
    if len(raw) - off != w * h * 3:
        raise FormatError(f"{path}: truncated pixel data", offset=len(raw))
    return np.frombuffer(raw, dtype=np.uint8, offset=off).reshape(h, w, 3) / 255.0


def write_pgm16(path, depth, scale=None):
    """16-bit P5 visualisation; pixel = round(depth * scale).

    ``scale`` defaults to 65535 / max(depth) and is recorded in a sidecar
    ``<path>.scale.txt`` so meters can be recovered as pixel / scale.
    """
    depth = np.asarray(depth, dtype=np.float64)
    if scale is None:
        top = float(depth.max()) if depth.size and depth.max() > 0 else 1.0
        scale = 65535.0 / top
    px = np.clip(np.rint(depth * scale), 0, 65535).astype(">u2")
    h, w = depth.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n65535\n".encode() + px.tobytes())
    Path(str(path) + PGM_SCALE_FILE_SUFFIX).write_text(
        f"scale = {scale!r}\n# meters = pixel_value / scale\n")
    return scale


def read_pgm16(path):
    raw = Path(path).read_bytes()
    w, h, maxval, off = _pnm_header(raw, b"P5")
    if maxval != 65535:
        raise FormatError(f"{path}: expected maxval 65535", offset=off)
    return np.frombuffer(raw, dtype=">u2", offset=off).reshape(h, w).astype(np.int64)
