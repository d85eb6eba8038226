"""Canonical byte serialization for transactions, blocks and chain dumps.

The layout is the unique hashing and signing preimage: one version byte,
then fields in declaration order; plain integers as 8-byte big-endian,
amounts as 16-byte big-endian, lists prefixed with a 4-byte big-endian
count, addresses and digests raw at their fixed length, variable-length
byte strings (signatures) length-prefixed.  Two structurally equal values
therefore always serialize to identical bytes.

A chain dump file is the sequence of canonical block records, each
prefixed with a 4-byte big-endian length.
"""

from __future__ import annotations

import io
from typing import BinaryIO

from .crypto import ADDRESS_LEN, NONCE_LEN, SOLUTION_LEN

__all__ = ["Writer", "Reader", "WireError", "write_chain_dump", "read_chain_dump"]

VERSION = 1


class WireError(ValueError):
    pass


class Writer:
    def __init__(self):
        self._buf = io.BytesIO()

    def u8(self, value: int) -> "Writer":
        self._buf.write(value.to_bytes(1, "big"))
        return self

    def u32(self, value: int) -> "Writer":
        self._buf.write(value.to_bytes(4, "big"))
        return self

    def u64(self, value: int) -> "Writer":
        self._buf.write(value.to_bytes(8, "big"))
        return self

    def amount(self, value: int) -> "Writer":
        if value < 0:
            raise WireError("amounts are nonnegative")
        self._buf.write(value.to_bytes(16, "big"))
        return self

    def fixed(self, data: bytes, length: int) -> "Writer":
        if len(data) != length:
            raise WireError(f"expected {length} bytes, got {len(data)}")
        self._buf.write(data)
        return self

    def var_bytes(self, data: bytes) -> "Writer":
        self.u32(len(data))
        self._buf.write(data)
        return self

    def getvalue(self) -> bytes:
        return self._buf.getvalue()


class Reader:
    def __init__(self, data: bytes):
        self._data = data
        self._pos = 0

    def _take(self, n: int) -> bytes:
        if self._pos + n > len(self._data):
            raise WireError(f"truncated record at offset {self._pos}")
        chunk = self._data[self._pos : self._pos + n]
        self._pos += n
        return chunk

    def u8(self) -> int:
        return self._take(1)[0]

    def u32(self) -> int:
        return int.from_bytes(self._take(4), "big")

    def u64(self) -> int:
        return int.from_bytes(self._take(8), "big")

    def amount(self) -> int:
        return int.from_bytes(self._take(16), "big")

    def fixed(self, length: int) -> bytes:
        return self._take(length)

    def var_bytes(self) -> bytes:
        return self._take(self.u32())

    def expect_end(self) -> None:
        if self._pos != len(self._data):
            raise WireError(f"{len(self._data) - self._pos} trailing bytes")

    @property
    def exhausted(self) -> bool:
        return self._pos == len(self._data)


def write_chain_dump(stream: BinaryIO, block_records: list[bytes]) -> None:
    for record in block_records:
        stream.write(len(record).to_bytes(4, "big"))
        stream.write(record)


def read_chain_dump(stream: BinaryIO) -> list[bytes]:
    records = []
    while True:
        header = stream.read(4)
        if not header:
            return records
        if len(header) < 4:
            raise WireError("truncated dump header")
        length = int.from_bytes(header, "big")
        record = stream.read(length)
        if len(record) < length:
            raise WireError("truncated dump record")
        records.append(record)
