"""Byte-offset-tracking reader shared by the binary artifact loaders."""

from __future__ import annotations

import struct

from .errors import FormatError


class Cursor:
    """Wraps a binary stream so truncation errors can name the byte offset."""

    def __init__(self, f, path):
        self.f = f
        self.path = path
        self.offset = 0

    def read(self, n: int, what: str) -> bytes:
        buf = self.f.read(n)
        if len(buf) != n:
            raise FormatError(
                f"{self.path}: truncated while reading {what} at byte offset {self.offset}"
            )
        self.offset += n
        return buf

    def read_str(self, what: str) -> str:
        (length,) = struct.unpack("<H", self.read(2, f"{what} length"))
        return self.read(length, what).decode("utf-8")
