"""Binary checkpoint container.

Layout (all integers little-endian)::

    magic        8 bytes   b"ASTCKPT\\0"
    version      u16       currently 1
    flags        u16       reserved, 0
    meta_len     u32       length of the UTF-8 JSON metadata block
    meta         meta_len bytes
    count        u32       number of arrays
    table        count entries of:
                   name_len u16, name (UTF-8), dtype u8, ndim u8, dims u32 * ndim
    payload      arrays in table order, C order, little-endian IEEE-754
                 (dtype 1 = float32, 2 = float64, 3 = int64)
    crc32        u32       zlib.crc32 of every preceding byte

Integer buffers (e.g. batch counters) are stored as int64.
"""

import json
import struct
import zlib
from collections import OrderedDict
from pathlib import Path

import numpy as np

from ..errors import CheckpointError

MAGIC = b"ASTCKPT\x00"
VERSION = 1
_DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8"), 3: np.dtype("<i8")}
_CODES = {np.dtype("float32"): 1, np.dtype("float64"): 2, np.dtype("int64"): 3}


def _code(arr):
    dt = arr.dtype
    if dt in _CODES:
        return _CODES[dt], arr
    if np.issubdtype(dt, np.integer) or np.issubdtype(dt, np.bool_):
        return 3, arr.astype(np.int64)
    raise CheckpointError(f"unsupported dtype {dt}")


def dumps(arrays, meta=None) -> bytes:
    meta_bytes = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    head = [MAGIC, struct.pack("<HHI", VERSION, 0, len(meta_bytes)), meta_bytes,
            struct.pack("<I", len(arrays))]
    payload = []
    for name, arr in arrays.items():
        code, arr = _code(np.asarray(arr))
        nb = name.encode("utf-8")
        head.append(struct.pack("<H", len(nb)) + nb)
        head.append(struct.pack("<BB", code, arr.ndim) + struct.pack("<" + "I" * arr.ndim, *arr.shape))
        payload.append(np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes())
    body = b"".join(head + payload)
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def loads(blob: bytes):
    if len(blob) < 8 + 8 + 4 + 4 or blob[:8] != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic)")
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) & 0xFFFFFFFF != crc:
        raise CheckpointError("checkpoint checksum mismatch")
    pos = 8
    version, _flags, meta_len = struct.unpack_from("<HHI", body, pos)
    pos += 8
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    meta = json.loads(body[pos:pos + meta_len].decode("utf-8"))
    pos += meta_len
    (count,) = struct.unpack_from("<I", body, pos)
    pos += 4
    table = []
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", body, pos)
        pos += 2
        name = body[pos:pos + nlen].decode("utf-8")
        pos += nlen
        code, ndim = struct.unpack_from("<BB", body, pos)
        pos += 2
        dims = struct.unpack_from("<" + "I" * ndim, body, pos)
        pos += 4 * ndim
        if code not in _DTYPES:
            raise CheckpointError(f"{name}: unknown dtype code {code}")
        table.append((name, _DTYPES[code], dims))
    arrays = OrderedDict()
    for name, dt, dims in table:
        n = int(np.prod(dims)) if dims else 1
        nbytes = n * dt.itemsize
        if pos + nbytes > len(body):
            raise CheckpointError("truncated checkpoint payload")
        arr = np.frombuffer(body, dtype=dt, count=n, offset=pos).reshape(dims)
        arrays[name] = arr.astype(dt.newbyteorder("="), copy=True)
        pos += nbytes
    if pos != len(body):
        raise CheckpointError("trailing bytes after payload")
    return arrays, meta


def save(path, arrays, meta=None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(dumps(arrays, meta))
    tmp.replace(path)
    return path


def load(path):
    return loads(Path(path).read_bytes())
