"""Binary and text file formats.

KGRID (little-endian)::

    b"KGRD"  u8 version(=1)  u8 naxes
    per axis: u8 len, name bytes (utf-8), f64 min, f64 step, u32 count, u8 periodic
    f64 values, row-major in axis order

FBANK (little-endian)::

    b"FBK1"  u32 count  u32 height  u32 width  u8 complex  f64 delta
    count*height*width f64 values, row-major; (re, im) pairs when complex

Rasters are binary PGM (P5) and PPM (P6) with maxval 255.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .geometry import Axis, FeatureGrid

KGRID_MAGIC = b"KGRD"
KGRID_VERSION = 1
FBANK_MAGIC = b"FBK1"


class FormatError(ValueError):
    """Malformed or unsupported file contents."""


# ---------------------------------------------------------------------------
# KGRID


def encode_kgrid(axes, values) -> bytes:
    axes = tuple(axes)
    values = np.asarray(values, dtype="<f8")
    shape = tuple(a.count for a in axes)
    if values.shape != shape:
        raise ValueError(f"values have shape {values.shape}, axes give {shape}")
    if len(axes) > 255:
        raise ValueError("too many axes")
    out = [KGRID_MAGIC, struct.pack("<BB", KGRID_VERSION, len(axes))]
    for a in axes:
        name = a.name.encode("utf-8")
        if len(name) > 255:
            raise ValueError(f"axis name too long: {a.name!r}")
        out.append(struct.pack("<B", len(name)) + name)
        out.append(struct.pack("<ddIB", a.min, a.step, a.count, int(a.periodic)))
    out.append(np.ascontiguousarray(values).tobytes())
    return b"".join(out)


def decode_kgrid(data: bytes):
    """Return ``(axes, values)``."""
    buf = memoryview(data)
    if bytes(buf[:4]) != KGRID_MAGIC:
        raise FormatError("not a KGRID file (bad magic)")
    try:
        version, naxes = struct.unpack_from("<BB", buf, 4)
        if version != KGRID_VERSION:
            raise FormatError(f"unsupported KGRID version {version}")
        pos = 6
        axes = []
        for _ in range(naxes):
            (ln,) = struct.unpack_from("<B", buf, pos)
            pos += 1
            name = bytes(buf[pos:pos + ln]).decode("utf-8")
            pos += ln
            lo, step, count, periodic = struct.unpack_from("<ddIB", buf, pos)
            pos += struct.calcsize("<ddIB")
            axes.append(Axis(name, lo, step, count, bool(periodic)))
    except struct.error as exc:
        raise FormatError(f"truncated KGRID header: {exc}") from None
    shape = tuple(a.count for a in axes)
    n = int(np.prod(shape))
    if len(buf) - pos != 8 * n:
        raise FormatError(f"KGRID payload has {len(buf) - pos} bytes, expected {8 * n}")
    values = np.frombuffer(buf[pos:], dtype="<f8").astype(float).reshape(shape)
    return tuple(axes), values


def write_kgrid(path, grid_or_axes, values=None) -> Path:
    """Write a field.  Accepts ``(grid, values)``, ``(axes, values)`` or an object with ``.grid``/``.values``."""
    if values is None:
        grid_or_axes, values = grid_or_axes.grid, grid_or_axes.values
    axes = grid_or_axes.axes if isinstance(grid_or_axes, FeatureGrid) else grid_or_axes
    path = Path(path)
    path.write_bytes(encode_kgrid(axes, values))
    return path


def read_kgrid(path):
    return decode_kgrid(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# PGM / PPM


def to_uint8(img) -> np.ndarray:
    """Map [0, 1] floats to bytes; integer input is range-checked and passed through."""
    img = np.asarray(img)
    if np.issubdtype(img.dtype, np.integer):
        if img.size and (img.min() < 0 or img.max() > 255):
            raise ValueError("8-bit raster values must lie in 0..255")
        return img.astype(np.uint8)
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def encode_pnm(img) -> bytes:
    img = to_uint8(img)
    if img.ndim == 2:
        magic = b"P5"
    elif img.ndim == 3 and img.shape[2] == 3:
        magic = b"P6"
    else:
        raise ValueError(f"raster must be (h, w) or (h, w, 3), got {img.shape}")
    h, w = img.shape[:2]
    return magic + f"\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(img).tobytes()


def _pnm_tokens(data: bytes, count: int):
    tokens, pos = [], 2
    while len(tokens) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise FormatError("truncated PNM header")
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates the header from the raster
    return tokens, pos + 1


def decode_pnm(data: bytes) -> np.ndarray:
    magic = data[:2]
    if magic not in (b"P5", b"P6"):
        raise FormatError("only binary PGM (P5) and PPM (P6) are supported")
    tokens, pos = _pnm_tokens(data, 3)
    try:
        w, h, maxval = (int(t) for t in tokens)
    except ValueError:
        raise FormatError("non-numeric PNM header field") from None
    if w <= 0 or h <= 0:
        raise FormatError("PNM dimensions must be positive")
    if maxval != 255:
        raise FormatError(f"only 8-bit rasters are supported (maxval {maxval})")
    channels = 1 if magic == b"P5" else 3
    n = w * h * channels
    raster = data[pos:pos + n]
    if len(raster) != n:
        raise FormatError(f"PNM raster has {len(raster)} bytes, expected {n}")
    img = np.frombuffer(raster, dtype=np.uint8).copy()
    return img.reshape((h, w)) if channels == 1 else img.reshape((h, w, 3))


def write_pgm(path, img) -> Path:
    img = to_uint8(img)
    if img.ndim != 2:
        raise ValueError("PGM needs a 2D grayscale raster")
    path = Path(path)
    path.write_bytes(encode_pnm(img))
    return path


def write_ppm(path, img) -> Path:
    img = to_uint8(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError("PPM needs an (h, w, 3) raster")
    path = Path(path)
    path.write_bytes(encode_pnm(img))
    return path


def read_pnm(path) -> np.ndarray:
    return decode_pnm(Path(path).read_bytes())


def normalize_gray(values, lo=None, hi=None) -> np.ndarray:
    """Linear map of ``values`` onto [0, 1]; a flat array maps to 0."""
    values = np.asarray(values, dtype=float)
    lo = float(values.min()) if lo is None else lo
    hi = float(values.max()) if hi is None else hi
    if hi <= lo:
        return np.zeros_like(values)
    return np.clip((values - lo) / (hi - lo), 0.0, 1.0)


# ---------------------------------------------------------------------------
# CSV


def write_csv(path, values, fmt: str = "%.17g") -> Path:
    values = np.atleast_2d(np.asarray(values, dtype=float))
    path = Path(path)
    np.savetxt(path, values, fmt=fmt, delimiter=",")
    return path


def read_csv(path) -> np.ndarray:
    try:
        return np.atleast_2d(np.loadtxt(Path(path), delimiter=",", dtype=float))
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None


# ---------------------------------------------------------------------------
# filter banks


def encode_fbank(filters, delta: float = 1.0) -> bytes:
    stack = np.asarray([np.asarray(f) for f in filters])
    if stack.ndim != 3 or len(stack) == 0:
        raise ValueError("a bank is a non-empty list of equally shaped 2D filters")
    is_complex = np.iscomplexobj(stack)
    count, h, w = stack.shape
    head = FBANK_MAGIC + struct.pack("<IIIBd", count, h, w, int(is_complex), float(delta))
    if is_complex:
        body = np.stack([stack.real, stack.imag], axis=-1).astype("<f8")
    else:
        body = stack.astype("<f8")
    return head + np.ascontiguousarray(body).tobytes()


def decode_fbank(data: bytes):
    """Return ``(filters, delta)`` with ``filters`` an array ``(count, h, w)``."""
    if data[:4] != FBANK_MAGIC:
        raise FormatError("not an FBANK file (bad magic)")
    size = struct.calcsize("<IIIBd")
    if len(data) < 4 + size:
        raise FormatError("truncated FBANK header")
    count, h, w, is_complex, delta = struct.unpack_from("<IIIBd", data, 4)
    if is_complex not in (0, 1):
        raise FormatError(f"bad complex flag {is_complex}")
    n = count * h * w * (2 if is_complex else 1)
    body = data[4 + size:]
    if len(body) != 8 * n:
        raise FormatError(f"FBANK payload has {len(body)} bytes, expected {8 * n}")
    vals = np.frombuffer(body, dtype="<f8").astype(float)
    if is_complex:
        vals = vals.reshape(count, h, w, 2)
        return vals[..., 0] + 1j * vals[..., 1], delta
    return vals.reshape(count, h, w), delta


def write_fbank(path, filters, delta: float = 1.0) -> Path:
    path = Path(path)
    path.write_bytes(encode_fbank(filters, delta))
    return path


def read_fbank(path):
    return decode_fbank(Path(path).read_bytes())


def write_csv_bank(directory, filters, delta: float = 1.0, manifest: str = "manifest.txt") -> Path:
    """One CSV per (real) filter plus a manifest: ``delta=<value>`` then one file name per line."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = []
    for i, f in enumerate(filters):
        if np.iscomplexobj(f):
            raise ValueError("the CSV bank layout stores real filters only")
        name = f"filter_{i:04d}.csv"
        write_csv(directory / name, f)
        names.append(name)
    path = directory / manifest
    path.write_text(f"delta={float(delta)!r}\n" + "".join(n + "\n" for n in names))
    return path


def read_csv_bank(manifest_path):
    manifest_path = Path(manifest_path)
    delta, files = None, []
    for lineno, line in enumerate(manifest_path.read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("delta="):
            try:
                delta = float(line[6:])
            except ValueError:
                raise FormatError(f"{manifest_path}:{lineno}: bad delta {line[6:]!r}") from None
        else:
            files.append(line)
    if delta is None:
        raise FormatError(f"{manifest_path}: manifest lacks a delta= line")
    if not files:
        raise FormatError(f"{manifest_path}: manifest lists no filters")
    return [read_csv(manifest_path.parent / f) for f in files], delta


def read_bank(path):
    """FBANK file or CSV manifest, by content."""
    path = Path(path)
    data = path.read_bytes()
    if data[:4] == FBANK_MAGIC:
        filters, delta = decode_fbank(data)
        return list(filters), delta
    return read_csv_bank(path)
