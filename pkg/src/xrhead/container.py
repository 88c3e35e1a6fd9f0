"""Shared little-endian binary container primitives.

Both on-disk formats in this package (feature files, dataset files) follow
the same conventions: a 4-byte magic, a u32 version, arrays stored as rank +
u64 extents + row-major payload, and length-prefixed UTF-8 JSON metadata.
Decoding errors always report the byte offset of the failure.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import FormatError

# array payload dtypes; everything is read back as float64 / int64
_DTYPE_CODES = {0: np.dtype("<f4"), 1: np.dtype("<i8"), 2: np.dtype("<f8")}
_CODE_FOR = {np.dtype("<f4"): 0, np.dtype("<i8"): 1, np.dtype("<f8"): 2}

MAX_RANK = 8
MAX_METADATA_BYTES = 1 << 24


class Reader:
    """Cursor over a byte string that raises FormatError with the offset."""

    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, n: int, what: str) -> bytes:
        if self.offset + n > len(self.data):
            raise FormatError(f"truncated while reading {what}", self.offset)
        chunk = self.data[self.offset : self.offset + n]
        self.offset += n
        return chunk

    def magic(self, expected: bytes) -> None:
        got = self.take(4, "magic")
        if got != expected:
            raise FormatError(f"bad magic {got!r}, expected {expected!r}", 0)

    def u8(self, what: str) -> int:
        return self.take(1, what)[0]

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def u64(self, what: str) -> int:
        return struct.unpack("<Q", self.take(8, what))[0]

    def version(self, supported: int) -> int:
        at = self.offset
        v = self.u32("version")
        if v != supported:
            raise FormatError(f"unsupported version {v}, expected {supported}", at)
        return v

    def array(self, what: str, dtype_code: int | None = None) -> np.ndarray:
        """rank u32, extents rank x u64, payload.  Code None means f32."""
        if dtype_code is None:
            dtype_code = 0
        dtype = _DTYPE_CODES.get(dtype_code)
        if dtype is None:
            raise FormatError(f"unknown dtype code {dtype_code} for {what}", self.offset)
        at = self.offset
        rank = self.u32(f"{what} rank")
        if rank > MAX_RANK:
            raise FormatError(f"{what} rank {rank} exceeds limit {MAX_RANK}", at)
        extents = [self.u64(f"{what} extent {i}") for i in range(rank)]
        count = 1
        for e in extents:
            if e > (1 << 32):
                raise FormatError(f"{what} extent {e} is implausibly large", at)
            count *= e
        payload_at = self.offset
        raw = self.take(count * dtype.itemsize, f"{what} payload")
        values = np.frombuffer(raw, dtype=dtype).reshape(extents)
        if dtype.kind == "f" and not np.all(np.isfinite(values)):
            raise FormatError(f"{what} payload contains non-finite values", payload_at)
        out_dtype = np.int64 if dtype.kind == "i" else np.float64
        return values.astype(out_dtype)

    def tagged_array(self, what: str) -> tuple[str, np.ndarray]:
        name_len = self.u32(f"{what} name length")
        name_at = self.offset
        try:
            name = self.take(name_len, f"{what} name").decode("utf-8")
        except UnicodeDecodeError as e:
            raise FormatError(f"{what} name is not valid UTF-8", name_at) from e
        code = self.u8(f"{name} dtype code")
        return name, self.array(name, dtype_code=code)

    def metadata(self) -> dict:
        at = self.offset
        n = self.u32("metadata length")
        if n > MAX_METADATA_BYTES:
            raise FormatError(f"metadata length {n} exceeds limit", at)
        raw = self.take(n, "metadata")
        try:
            meta = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise FormatError(f"metadata is not valid UTF-8 JSON: {e}", at + 4) from e
        if not isinstance(meta, dict):
            raise FormatError("metadata must be a JSON object", at + 4)
        return meta

    def done(self) -> None:
        if self.offset != len(self.data):
            raise FormatError(
                f"{len(self.data) - self.offset} trailing bytes after payload", self.offset
            )


class Writer:
    """Accumulates the byte layout mirrored by Reader."""

    def __init__(self, magic: bytes, version: int):
        self.buf = bytearray()
        self.buf += magic
        self.buf += struct.pack("<I", version)

    def u8(self, x: int) -> None:
        self.buf.append(x)

    def u32(self, x: int) -> None:
        self.buf += struct.pack("<I", x)

    def array(self, values: np.ndarray, dtype: np.dtype) -> None:
        dtype = np.dtype(dtype)
        self.u32(values.ndim)
        for e in values.shape:
            self.buf += struct.pack("<Q", e)
        self.buf += np.ascontiguousarray(values, dtype=dtype).tobytes()

    def tagged_array(self, name: str, values: np.ndarray, dtype) -> None:
        encoded = name.encode("utf-8")
        self.u32(len(encoded))
        self.buf += encoded
        self.u8(_CODE_FOR[np.dtype(dtype)])
        self.array(values, dtype)

    def metadata(self, meta: dict) -> None:
        raw = json.dumps(meta, sort_keys=True).encode("utf-8")
        self.u32(len(raw))
        self.buf += raw

    def bytes(self) -> bytes:
        return bytes(self.buf)
