"""Bit-exact binary tensor container.

Layout, all little-endian:
  magic   4 bytes  "VPRT"
  version u32      1
  dtype   u32      1 = float32
  ndim    u32
  dims    ndim * u64
  payload row-major float32 values

Writes are temp-file-then-rename so a concurrent reader never sees a
partial file.
"""

from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

__all__ = [
    "TensorFileError",
    "BadMagicError",
    "UnsupportedVersionError",
    "UnsupportedDtypeError",
    "TruncatedPayloadError",
    "write_tensor",
    "read_tensor",
    "read_header",
]

MAGIC = b"VPRT"
VERSION = 1
DTYPE_F32 = 1

_DTYPE_NAMES = {DTYPE_F32: "f32"}


class TensorFileError(ValueError):
    """Malformed tensor file."""


class BadMagicError(TensorFileError):
    pass


class UnsupportedVersionError(TensorFileError):
    pass


class UnsupportedDtypeError(TensorFileError):
    pass


class TruncatedPayloadError(TensorFileError):
    pass


def write_tensor(path, tensor):
    """Serialize a float32 array; round-trips bitwise through read_tensor."""
    arr = np.asarray(tensor)
    if arr.dtype != np.float32:
        raise UnsupportedDtypeError(
            f"tensor files hold float32 only, got dtype {arr.dtype}"
        )
    arr = np.ascontiguousarray(arr)
    header = MAGIC + struct.pack("<III", VERSION, DTYPE_F32, arr.ndim)
    header += struct.pack(f"<{arr.ndim}Q", *arr.shape)

    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".vprt-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(header)
            fh.write(arr.tobytes(order="C"))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_exact(fh, count, what, path):
    data = fh.read(count)
    if len(data) != count:
        raise TruncatedPayloadError(
            f"{path}: expected {count} bytes of {what}, got {len(data)}"
        )
    return data


def read_header(path):
    """Validate and return (dtype_name, dims) without loading the payload."""
    with open(path, "rb") as fh:
        return _parse_header(fh, path)


def _parse_header(fh, path):
    magic = fh.read(4)
    if magic != MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    version, dtype, ndim = struct.unpack("<III", _read_exact(fh, 12, "header", path))
    if version != VERSION:
        raise UnsupportedVersionError(f"{path}: unsupported version {version}")
    if dtype not in _DTYPE_NAMES:
        raise UnsupportedDtypeError(f"{path}: unsupported dtype code {dtype}")
    dims = struct.unpack(f"<{ndim}Q", _read_exact(fh, 8 * ndim, "dims", path))
    return _DTYPE_NAMES[dtype], [int(d) for d in dims]


def read_tensor(path):
    with open(path, "rb") as fh:
        _, dims = _parse_header(fh, path)
        count = 1
        for d in dims:
            count *= d
        payload = fh.read()
        if len(payload) != count * 4:
            raise TruncatedPayloadError(
                f"{path}: payload holds {len(payload)} bytes, "
                f"dims {dims} require {count * 4}"
            )
    return np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
