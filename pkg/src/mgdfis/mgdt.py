"""Binary tensor container.

Layout: magic "MGDT", 1-byte version (1), 1-byte dtype code (0 = real
float64, 1 = complex as little-endian float64 re/im pairs), 1-byte rank,
rank 8-byte little-endian unsigned dims, then the row-major little-endian
payload.  Malformed files raise TensorFormatError carrying the byte offset
of the violation.
"""

import struct

import numpy as np

from .errors import TensorFormatError

MAGIC = b"MGDT"
VERSION = 1
DTYPE_REAL = 0
DTYPE_COMPLEX = 1

_HEADER = 7  # magic + version + dtype + rank


def write_tensor(path, arr):
    arr = np.asarray(arr)
    if np.iscomplexobj(arr):
        code, payload = DTYPE_COMPLEX, arr.astype("<c16").tobytes()
    else:
        code, payload = DTYPE_REAL, arr.astype("<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(bytes([VERSION, code, arr.ndim]))
        for d in arr.shape:
            fh.write(struct.pack("<Q", d))
        fh.write(payload)


def read_tensor(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER:
        raise TensorFormatError(
            f"truncated header: {len(raw)} bytes, need {_HEADER}",
            offset=len(raw))
    if raw[:4] != MAGIC:
        raise TensorFormatError(f"bad magic {raw[:4]!r}", offset=0)
    if raw[4] != VERSION:
        raise TensorFormatError(f"unsupported version {raw[4]}", offset=4)
    code = raw[5]
    if code not in (DTYPE_REAL, DTYPE_COMPLEX):
        raise TensorFormatError(f"unknown dtype code {code}", offset=5)
    rank = raw[6]
    dims_end = _HEADER + 8 * rank
    if len(raw) < dims_end:
        raise TensorFormatError(
            f"truncated dims: rank {rank} needs {8 * rank} bytes", offset=len(raw))
    dims = []
    for i in range(rank):
        off = _HEADER + 8 * i
        d = struct.unpack_from("<Q", raw, off)[0]
        if d == 0:
            raise TensorFormatError(f"dim {i} is zero", offset=off)
        dims.append(d)
    count = 1
    for d in dims:
        count *= d
    itemsize = 16 if code == DTYPE_COMPLEX else 8
    expected = dims_end + count * itemsize
    if len(raw) < expected:
        raise TensorFormatError(
            f"truncated payload: expected {expected} bytes total, got {len(raw)}",
            offset=len(raw))
    if len(raw) > expected:
        raise TensorFormatError(
            f"{len(raw) - expected} trailing bytes after payload", offset=expected)
    dtype = "<c16" if code == DTYPE_COMPLEX else "<f8"
    data = np.frombuffer(raw[dims_end:expected], dtype=dtype)
    out = data.reshape(dims).copy()
    if not np.all(np.isfinite(out if code == DTYPE_REAL else out.view(np.float64))):
        raise TensorFormatError("payload contains non-finite values", offset=dims_end)
    return out
