"""Reading and writing 8-bit PGM/PPM (P2, P3, P5, P6) images."""

from __future__ import annotations

import os
import re

import numpy as np

__all__ = [
    "NetpbmError",
    "HeaderError",
    "DepthError",
    "TruncatedError",
    "read_netpbm",
    "write_netpbm",
    "encode_netpbm",
]

_MAGIC = {b"P2": (1, False), b"P3": (3, False), b"P5": (1, True), b"P6": (3, True)}
_WS = b" \t\n\r\v\f"


class NetpbmError(ValueError):
    """Malformed or unsupported netpbm data; ``offset`` is the byte position."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class HeaderError(NetpbmError):
    pass


class DepthError(NetpbmError):
    pass


class TruncatedError(NetpbmError):
    pass


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def skip_space(self):
        d = self.data
        while self.pos < len(d):
            ch = d[self.pos : self.pos + 1]
            if ch == b"#":
                end = d.find(b"\n", self.pos)
                self.pos = len(d) if end < 0 else end + 1
            elif ch in _WS:
                self.pos += 1
            else:
                break

    def token(self, what: str) -> int:
        self.skip_space()
        m = re.compile(rb"\d+").match(self.data, self.pos)
        if m is None:
            if self.pos >= len(self.data):
                raise TruncatedError(f"truncated header: missing {what}", self.pos)
            raise HeaderError(f"malformed header: expected {what}", self.pos)
        start = self.pos
        self.pos = m.end()
        nxt = self.data[self.pos : self.pos + 1]
        if nxt and nxt not in _WS and nxt != b"#":
            raise HeaderError(f"malformed header: bad {what}", start)
        return int(m.group())


def read_netpbm(source) -> np.ndarray:
    """Decode a PGM/PPM file or byte string to an ``(H, W, C)`` uint8 array."""
    if isinstance(source, (bytes, bytearray)):
        data = bytes(source)
    else:
        with open(source, "rb") as fh:
            data = fh.read()
    magic = data[:2]
    if magic not in _MAGIC:
        raise HeaderError(f"unsupported magic number {magic!r}", 0)
    channels, binary = _MAGIC[magic]
    rd = _Reader(data)
    rd.pos = 2
    width = rd.token("width")
    height = rd.token("height")
    maxval_pos = rd.pos
    maxval = rd.token("maxval")
    if width < 1 or height < 1:
        raise HeaderError("image dimensions must be positive", maxval_pos)
    if maxval != 255:
        raise DepthError(f"unsupported maxval {maxval} (only 8-bit, maxval 255)", maxval_pos)
    count = width * height * channels
    if binary:
        if rd.pos >= len(data) or data[rd.pos : rd.pos + 1] not in _WS:
            raise HeaderError("missing whitespace after maxval", rd.pos)
        start = rd.pos + 1
        payload = data[start : start + count]
        if len(payload) < count:
            raise TruncatedError(f"truncated payload: expected {count} bytes, found {len(payload)}",
                              start + len(payload))
        values = np.frombuffer(payload, dtype=np.uint8).copy()
    else:
        values = np.empty(count, dtype=np.int64)
        for i in range(count):
            values[i] = rd.token(f"sample {i}")
        if np.any(values > maxval):
            raise HeaderError("sample exceeds maxval", rd.pos)
        values = values.astype(np.uint8)
    return values.reshape(height, width, channels)


def encode_netpbm(pixels, binary: bool = True) -> bytes:
    """Encode an ``(H, W)`` / ``(H, W, 1)`` / ``(H, W, 3)`` uint8 array."""
    px = np.asarray(pixels)
    if px.ndim == 2:
        px = px[:, :, None]
    if px.dtype != np.uint8:
        raise ValueError("pixels must be uint8")
    h, w, c = px.shape
    if c not in (1, 3):
        raise ValueError("need 1 or 3 channels")
    magic = {(1, True): b"P5", (3, True): b"P6", (1, False): b"P2", (3, False): b"P3"}[(c, binary)]
    header = magic + f"\n{w} {h}\n255\n".encode()
    if binary:
        return header + px.tobytes()
    rows = [" ".join(str(int(v)) for v in row.ravel()) for row in px]
    return header + ("\n".join(rows) + "\n").encode()


def write_netpbm(path, pixels, binary: bool = True) -> None:
    """Write atomically (temp file then rename)."""
    data = encode_netpbm(pixels, binary)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)
