"""Single-file container for named dense arrays (magic ``TNS1``).

Layout, all little-endian: 4-byte magic, then per array
u16 name length, UTF-8 name, u64 rank, rank x u64 dims, u8 dtype code,
row-major payload. Arrays repeat until end of file.
"""

from __future__ import annotations

import struct

import numpy as np

TNS_MAGIC = b"TNS1"

_DTYPE_CODES = {1: "<f4", 2: "<f8", 3: "<i8", 4: "u1"}
_CODE_FOR = {np.dtype(v): k for k, v in _DTYPE_CODES.items()}


class TensorFormatError(ValueError):
    pass


def save_tensors(path, arrays: dict) -> None:
    """Write named arrays to ``path``. Supported dtypes: f32, f64, i64, u8."""
    with open(path, "wb") as f:
        f.write(TNS_MAGIC)
        for name, arr in arrays.items():
            arr = np.asarray(arr)
            if not arr.flags["C_CONTIGUOUS"]:  # ascontiguousarray would upgrade 0-d to 1-d
                arr = np.ascontiguousarray(arr)
            code = _CODE_FOR.get(np.dtype(arr.dtype.newbyteorder("<")))
            if code is None:
                raise TensorFormatError(f"unsupported dtype {arr.dtype} for array {name!r}")
            encoded = name.encode("utf-8")
            f.write(struct.pack("<H", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<Q", arr.ndim))
            for dim in arr.shape:
                f.write(struct.pack("<Q", dim))
            f.write(struct.pack("<B", code))
            f.write(arr.astype(_DTYPE_CODES[code], copy=False).tobytes())


def load_tensors(path) -> dict:
    """Read all named arrays from a TNS1 container."""
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != TNS_MAGIC:
        raise TensorFormatError(f"bad magic {data[:4]!r}, expected {TNS_MAGIC!r}")
    arrays = {}
    off = 4
    while off < len(data):
        if off + 2 > len(data):
            raise TensorFormatError("truncated name length")
        (name_len,) = struct.unpack_from("<H", data, off)
        off += 2
        name = data[off : off + name_len].decode("utf-8")
        off += name_len
        if off + 8 > len(data):
            raise TensorFormatError(f"truncated rank for array {name!r}")
        (rank,) = struct.unpack_from("<Q", data, off)
        off += 8
        dims = struct.unpack_from(f"<{rank}Q", data, off)
        off += 8 * rank
        (code,) = struct.unpack_from("<B", data, off)
        off += 1
        if code not in _DTYPE_CODES:
            raise TensorFormatError(f"unknown dtype code {code} for array {name!r}")
        dtype = np.dtype(_DTYPE_CODES[code])
        nbytes = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize if rank else dtype.itemsize
        payload = data[off : off + nbytes]
        if len(payload) != nbytes:
            raise TensorFormatError(f"truncated payload for array {name!r}")
        off += nbytes
        arrays[name] = np.frombuffer(payload, dtype=dtype).reshape(dims).copy()
    return arrays
