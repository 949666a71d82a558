"""Little-endian binary section helpers shared by every on-disk format.

Every file starts with an 8-byte magic string followed by a ``<u4`` format
version.  After the header, payload is a sequence of sections; arrays are
written as ``<u8`` element count followed by raw little-endian data with the
declared dtype, strings as ``<u4`` byte length plus UTF-8 bytes.
"""

from __future__ import annotations

import hashlib
import os
import struct
import tempfile
from pathlib import Path
from typing import BinaryIO, Iterable

import numpy as np


class FormatError(ValueError):
    """Raised when a binary file has the wrong magic, version or layout."""


def write_header(f: BinaryIO, magic: bytes, version: int) -> None:
    if len(magic) != 8:
        raise ValueError("magic must be exactly 8 bytes")
    f.write(magic)
    f.write(struct.pack("<I", version))


def read_header(f: BinaryIO, magic: bytes, version: int) -> None:
    got = f.read(8)
    if got != magic:
        raise FormatError(f"bad magic {got!r}, expected {magic!r}")
    (ver,) = struct.unpack("<I", _read_exact(f, 4))
    if ver != version:
        raise FormatError(f"unsupported format version {ver} (expected {version})")


def _read_exact(f: BinaryIO, n: int) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise FormatError("truncated file")
    return buf


def write_scalar(f: BinaryIO, fmt: str, value) -> None:
    f.write(struct.pack("<" + fmt, value))


def read_scalar(f: BinaryIO, fmt: str):
    size = struct.calcsize("<" + fmt)
    return struct.unpack("<" + fmt, _read_exact(f, size))[0]


def write_array(f: BinaryIO, arr, dtype: str) -> None:
    a = np.ascontiguousarray(np.asarray(arr), dtype=np.dtype(dtype).newbyteorder("<"))
    f.write(struct.pack("<Q", a.size))
    f.write(a.tobytes())


def read_array(f: BinaryIO, dtype: str) -> np.ndarray:
    (n,) = struct.unpack("<Q", _read_exact(f, 8))
    dt = np.dtype(dtype).newbyteorder("<")
    a = np.frombuffer(_read_exact(f, n * dt.itemsize), dtype=dt)
    return a.astype(dt.newbyteorder("="), copy=True)


def write_str(f: BinaryIO, s: str) -> None:
    b = s.encode("utf-8")
    f.write(struct.pack("<I", len(b)))
    f.write(b)


def read_str(f: BinaryIO) -> str:
    (n,) = struct.unpack("<I", _read_exact(f, 4))
    return _read_exact(f, n).decode("utf-8")


def write_str_list(f: BinaryIO, items: Iterable[str]) -> None:
    items = list(items)
    f.write(struct.pack("<Q", len(items)))
    for s in items:
        write_str(f, s)


def read_str_list(f: BinaryIO) -> list[str]:
    (n,) = struct.unpack("<Q", _read_exact(f, 8))
    return [read_str(f) for _ in range(n)]


def atomic_write_bytes(path: str | os.PathLike, data: bytes) -> None:
    """Write ``data`` to a sibling temp file, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def file_digest(path: str | os.PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
