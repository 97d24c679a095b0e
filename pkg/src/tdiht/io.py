"""File formats: COSF1 dense operators, PBM masks and PGM images.

COSF1 layout: the 5 magic bytes ``COSF1``, little-endian ``u32`` rows,
``u32`` cols, a ``u8`` field flag (0 real, 1 complex), then the entries
row-major as little-endian float64 (complex entries interleaved re, im).

Every writer goes through :func:`atomic_write` so a failed run never
leaves a partial file behind.
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .linops import SamplingMask

__all__ = [
    "FormatError",
    "atomic_write",
    "encode_cosf1",
    "decode_cosf1",
    "write_cosf1",
    "read_cosf1",
    "encode_pbm",
    "decode_pbm",
    "write_pbm",
    "read_pbm",
    "encode_pgm",
    "decode_pgm",
    "write_pgm",
    "read_pgm",
]

MAGIC = b"COSF1"
_HEADER = struct.Struct("<IIB")


class FormatError(ValueError):
    """Malformed file contents."""


def atomic_write(path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# COSF1


def encode_cosf1(matrix: np.ndarray) -> bytes:
    matrix = np.asarray(matrix)
    if matrix.ndim != 2:
        raise ValueError("COSF1 stores 2-D matrices")
    rows, cols = matrix.shape
    if np.iscomplexobj(matrix):
        body = np.ascontiguousarray(matrix, dtype="<c16").tobytes()
        flag = 1
    else:
        body = np.ascontiguousarray(matrix, dtype="<f8").tobytes()
        flag = 0
    return MAGIC + _HEADER.pack(rows, cols, flag) + body


def decode_cosf1(data: bytes) -> np.ndarray:
    if data[:5] != MAGIC:
        raise FormatError("missing COSF1 magic")
    if len(data) < 5 + _HEADER.size:
        raise FormatError("truncated COSF1 header")
    rows, cols, flag = _HEADER.unpack_from(data, 5)
    if flag not in (0, 1):
        raise FormatError(f"bad COSF1 field flag {flag}")
    dtype = "<c16" if flag else "<f8"
    expected = rows * cols * np.dtype(dtype).itemsize
    body = data[5 + _HEADER.size:]
    if len(body) != expected:
        raise FormatError(f"COSF1 body has {len(body)} bytes, expected {expected}")
    return np.frombuffer(body, dtype=dtype).reshape(rows, cols).astype(complex if flag else float)


def write_cosf1(path, matrix: np.ndarray) -> None:
    atomic_write(path, encode_cosf1(matrix))


def read_cosf1(path) -> np.ndarray:
    return decode_cosf1(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# Netpbm


def _netpbm_header(data: bytes, magic: bytes, count: int) -> tuple[list[int], int]:
    """Parse ``count`` integers after ``magic``; returns them and the raster offset."""
    if data[:2] != magic:
        raise FormatError(f"expected {magic.decode()} header")
    pos, values = 2, []
    while len(values) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and data[pos:pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise FormatError("malformed netpbm header")
        values.append(int(data[start:pos]))
    # exactly one whitespace byte separates the header from the raster
    return values, pos + 1


def _check_raster(data: bytes, offset: int, size: int) -> None:
    if len(data) - offset < size:
        raise FormatError(f"raster has {max(0, len(data) - offset)} bytes, expected {size}")


def encode_pbm(mask: SamplingMask) -> bytes:
    grid = mask.sampled if isinstance(mask, SamplingMask) else np.asarray(mask, dtype=bool)
    h, w = grid.shape
    return f"P4\n{w} {h}\n".encode() + np.packbits(grid, axis=1).tobytes()


def decode_pbm(data: bytes) -> SamplingMask:
    (w, h), offset = _netpbm_header(data, b"P4", 2)
    stride = (w + 7) // 8
    _check_raster(data, offset, h * stride)
    raster = np.frombuffer(data, dtype=np.uint8, count=h * stride, offset=offset)
    bits = np.unpackbits(raster.reshape(h, stride), axis=1)[:, :w]
    return SamplingMask(bits.astype(bool))


def write_pbm(path, mask: SamplingMask) -> None:
    atomic_write(path, encode_pbm(mask))


def read_pbm(path) -> SamplingMask:
    return decode_pbm(Path(path).read_bytes())


def encode_pgm(image: np.ndarray, maxval: int = 65535) -> bytes:
    """Binary PGM of a [0, 1] image (values outside are clipped)."""
    img = np.clip(np.asarray(image, dtype=float), 0.0, 1.0)
    if img.ndim != 2:
        raise ValueError("PGM stores 2-D images")
    if not 1 <= maxval <= 65535:
        raise ValueError("maxval must be in [1, 65535]")
    levels = np.rint(img * maxval)
    dtype = ">u2" if maxval > 255 else "u1"
    h, w = img.shape
    return f"P5\n{w} {h}\n{maxval}\n".encode() + levels.astype(dtype).tobytes()


def decode_pgm(data: bytes) -> np.ndarray:
    (w, h, maxval), offset = _netpbm_header(data, b"P5", 3)
    if not 1 <= maxval <= 65535:
        raise FormatError(f"bad PGM maxval {maxval}")
    dtype = ">u2" if maxval > 255 else "u1"
    _check_raster(data, offset, w * h * np.dtype(dtype).itemsize)
    raster = np.frombuffer(data, dtype=dtype, count=w * h, offset=offset)
    return raster.reshape(h, w).astype(float) / maxval


def write_pgm(path, image: np.ndarray, maxval: int = 65535) -> None:
    atomic_write(path, encode_pgm(image, maxval))


def read_pgm(path) -> np.ndarray:
    return decode_pgm(Path(path).read_bytes())
