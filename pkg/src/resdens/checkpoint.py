"""Bit-exact checkpoint container.

Layout (all integers little-endian)::

    b"RDCK" | u32 version | u32 entry count
    entry*: u32 name length | utf-8 name | u8 dtype code | u32 rank | u64 dim * rank | payload

Payloads are raw little-endian arrays of the entry's dtype.
"""
from __future__ import annotations

import os
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import ParseError

MAGIC = b"RDCK"
VERSION = 1
DTYPES = {1: np.dtype("<f8"), 2: np.dtype("<i8"), 3: np.dtype("<u8"), 4: np.dtype("u1")}
_CODES = {(v.kind, v.itemsize): k for k, v in DTYPES.items()}


def _code(arr: np.ndarray) -> int:
    try:
        return _CODES[(arr.dtype.kind, arr.dtype.itemsize)]
    except KeyError:
        raise TypeError(f"unsupported checkpoint dtype {arr.dtype}") from None


def encode(entries: Mapping[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(entries))]
    for name, arr in entries.items():
        arr = np.asarray(arr)
        code = _code(arr)
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)) + raw)
        parts.append(struct.pack("<BI", code, arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype=DTYPES[code]).tobytes())
    return b"".join(parts)


def decode(data: bytes) -> dict[str, np.ndarray]:
    if data[:4] != MAGIC:
        raise ParseError(f"not a checkpoint: magic {data[:4]!r}", 0)
    pos = 4

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(data):
            raise ParseError("truncated checkpoint", pos)
        vals = struct.unpack_from(fmt, data, pos)
        pos += size
        return vals

    version, count = take("<II")
    if version != VERSION:
        raise ParseError(f"unsupported checkpoint version {version}", 4)
    out = {}
    for _ in range(count):
        (nlen,) = take("<I")
        if pos + nlen > len(data):
            raise ParseError("truncated entry name", pos)
        name = data[pos : pos + nlen].decode("utf-8")
        pos += nlen
        code, rank = take("<BI")
        if code not in DTYPES:
            raise ParseError(f"unknown dtype code {code} for {name!r}", pos - 5)
        shape = take(f"<{rank}Q") if rank else ()
        dt = DTYPES[code]
        nbytes = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
        if pos + nbytes > len(data):
            raise ParseError(f"truncated payload for {name!r}", len(data))
        out[name] = np.frombuffer(data, dtype=dt, count=nbytes // dt.itemsize, offset=pos).reshape(shape).copy()
        pos += nbytes
    return out


def save(path, entries: Mapping[str, np.ndarray]):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(encode(entries))
    os.replace(tmp, path)


def load(path) -> dict[str, np.ndarray]:
    return decode(Path(path).read_bytes())


def text_entry(s: str) -> np.ndarray:
    return np.frombuffer(s.encode("utf-8"), dtype=np.uint8).copy()


def entry_text(arr: np.ndarray) -> str:
    return arr.astype(np.uint8).tobytes().decode("utf-8")


def rng_to_words(rng: np.random.Generator) -> np.ndarray:
    """PCG64 state as six u64 words: state hi/lo, inc hi/lo, has_uint32, uinteger."""
    st = rng.bit_generator.state
    if st["bit_generator"] != "PCG64":
        raise TypeError("only PCG64 generators are serializable")
    mask = (1 << 64) - 1
    s, inc = st["state"]["state"], st["state"]["inc"]
    return np.array([s >> 64, s & mask, inc >> 64, inc & mask, st["has_uint32"], st["uinteger"]], dtype=np.uint64)


def words_to_rng(words) -> np.random.Generator:
    w = [int(x) for x in words]
    bg = np.random.PCG64()
    bg.state = {
        "bit_generator": "PCG64",
        "state": {"state": (w[0] << 64) | w[1], "inc": (w[2] << 64) | w[3]},
        "has_uint32": w[4],
        "uinteger": w[5],
    }
    return np.random.Generator(bg)
