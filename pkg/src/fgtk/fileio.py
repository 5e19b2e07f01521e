"""Little-endian primitives shared by the binary container formats.

Readers operate on a whole in-memory buffer through `Cursor`; every read is
bounds-checked so corrupt files surface as typed errors rather than struct
exceptions. Writers assemble the full payload in a `Builder` and flush it
with a single filesystem write.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FileFormatError, IoFailure, MagicMismatch, TruncatedFile

_U16_MAX = 0xFFFF
_U32_MAX = 0xFFFFFFFF


class Cursor:
    """Sequential bounds-checked reader over an immutable byte buffer."""

    def __init__(self, data: bytes, source: str = "<bytes>") -> None:
        self._view = memoryview(data)
        self._pos = 0
        self.source = source

    @property
    def remaining(self) -> int:
        return len(self._view) - self._pos

    def take(self, count: int) -> memoryview:
        if self.remaining < count:
            raise TruncatedFile(
                f"{self.source}: need {count} bytes at offset {self._pos}, "
                f"only {self.remaining} left"
            )
        out = self._view[self._pos : self._pos + count]
        self._pos += count
        return out

    def expect_magic(self, magic: bytes, format_name: str) -> None:
        if self.remaining < len(magic):
            raise MagicMismatch(f"{self.source}: too short to be a {format_name} file")
        got = bytes(self.take(len(magic)))
        if got != magic:
            raise MagicMismatch(f"{self.source}: not a {format_name} file (got {got!r})")

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def string(self) -> str:
        length = self.u16()
        raw = bytes(self.take(length))
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FileFormatError(f"{self.source}: invalid UTF-8 in string field") from exc

    def f32_array(self, count: int) -> np.ndarray:
        raw = self.take(4 * count)
        return np.frombuffer(raw, dtype="<f4", count=count).copy()

    def u16_array(self, count: int) -> np.ndarray:
        raw = self.take(2 * count)
        return np.frombuffer(raw, dtype="<u2", count=count).copy()

    def u32_array(self, count: int) -> np.ndarray:
        raw = self.take(4 * count)
        return np.frombuffer(raw, dtype="<u4", count=count).copy()

    def done(self) -> None:
        if self.remaining:
            raise FileFormatError(
                f"{self.source}: {self.remaining} trailing bytes after payload"
            )


class Builder:
    """Accumulates one container payload before it is written out."""

    def __init__(self) -> None:
        self._buf = bytearray()

    def raw(self, data: bytes) -> None:
        self._buf += data

    def u8(self, value: int) -> None:
        if not 0 <= value <= 0xFF:
            raise FileFormatError(f"value {value} does not fit in u8")
        self._buf.append(value)

    def u16(self, value: int) -> None:
        if not 0 <= value <= _U16_MAX:
            raise FileFormatError(f"value {value} does not fit in u16")
        self._buf += struct.pack("<H", value)

    def u32(self, value: int) -> None:
        if not 0 <= value <= _U32_MAX:
            raise FileFormatError(f"value {value} does not fit in u32")
        self._buf += struct.pack("<I", value)

    def string(self, text: str) -> None:
        data = text.encode("utf-8")
        if len(data) > _U16_MAX:
            raise FileFormatError(f"string of {len(data)} bytes exceeds u16 length prefix")
        self.u16(len(data))
        self._buf += data

    def f32_array(self, values: np.ndarray) -> None:
        self._buf += np.ascontiguousarray(values, dtype="<f4").tobytes()

    def u16_array(self, values: np.ndarray) -> None:
        self._buf += np.ascontiguousarray(values, dtype="<u2").tobytes()

    def u32_array(self, values: np.ndarray) -> None:
        self._buf += np.ascontiguousarray(values, dtype="<u4").tobytes()

    def getvalue(self) -> bytes:
        return bytes(self._buf)


def read_file(path) -> bytes:
    return Path(path).read_bytes()


def write_file(path, payload: bytes) -> None:
    try:
        Path(path).write_bytes(payload)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
