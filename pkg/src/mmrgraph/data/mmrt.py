"""MMRT: a minimal little-endian binary tensor container.

Layout::

    b"MMRT"  version:u8=1  dtype:u8 (1=f64, 2=f32)  rank:u8  pad:u8=0
    rank x u64 extents
    row-major payload
"""

from __future__ import annotations

import os
import struct

import numpy as np

from ..exceptions import FormatError

MAGIC = b"MMRT"
VERSION = 1
DTYPES = {1: np.dtype("<f8"), 2: np.dtype("<f4")}
DTYPE_CODES = {"float64": 1, "float32": 2}
_HEADER = struct.Struct("<4sBBBB")


def encode(array, dtype: str = "float64") -> bytes:
    try:
        code = DTYPE_CODES[dtype]
    except KeyError:
        raise FormatError(f"unsupported dtype {dtype!r}") from None
    # asarray, not ascontiguousarray: the latter promotes 0-d input to rank 1
    arr = np.asarray(array, dtype=DTYPES[code])
    if arr.ndim > 255:
        raise FormatError(f"rank {arr.ndim} exceeds 255")
    head = _HEADER.pack(MAGIC, VERSION, code, arr.ndim, 0)
    extents = struct.pack(f"<{arr.ndim}Q", *arr.shape)
    return head + extents + arr.tobytes(order="C")


def decode(buf: bytes) -> np.ndarray:
    if len(buf) < _HEADER.size:
        raise FormatError("truncated header")
    magic, version, code, rank, _pad = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    if code not in DTYPES:
        raise FormatError(f"unsupported dtype code {code}")
    offset = _HEADER.size + 8 * rank
    if len(buf) < offset:
        raise FormatError("truncated extents")
    shape = struct.unpack_from(f"<{rank}Q", buf, _HEADER.size)
    count = 0 if 0 in shape else 1
    for extent in shape if count else ():
        count *= extent
        if count * DTYPES[code].itemsize > len(buf):
            raise FormatError(f"extents {shape} overflow the payload")
    nbytes = count * DTYPES[code].itemsize
    if len(buf) - offset != nbytes:
        raise FormatError(f"payload is {len(buf) - offset} bytes, expected {nbytes}")
    return np.frombuffer(buf, dtype=DTYPES[code], count=count, offset=offset).reshape(shape).copy()


def write_tensor(path, array, dtype: str = "float64") -> None:
    data = encode(array, dtype)
    with open(os.fspath(path), "wb") as fh:
        fh.write(data)


def read_tensor(path) -> np.ndarray:
    """Read an MMRT file; float32 payloads are widened to float64."""
    with open(os.fspath(path), "rb") as fh:
        arr = decode(fh.read())
    return arr.astype(np.float64, copy=False)
