"""Bitstream container.

Layout (all integers little-endian):

    header:
        u8   version (currently 1)
        u8   mode            0=AI, 1=LDP, 2=RA
        u16  gop_size
        u32  frame_count     number of coded frames (chunks)
        u32  width, u32 height
        u16  feature width f
        8s   checkpoint digest (first 16 hex chars of the parameter sha256,
             stored as 8 raw bytes)
    per coded frame, in coding order:
        u32  motion stream length (0 for I frames)
        ...  motion stream: u32 z-stream length, z bytes, y bytes
        u32  codec stream length
        ...  codec stream: u32 z-stream length, z bytes, y bytes

The outer u32 carries the combined [z || y] payload size; the leading inner
u32 marks the z/y boundary.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

BITSTREAM_VERSION = 1
MODES = ("AI", "LDP", "RA")

_HEADER = struct.Struct("<BBHIIIH8s")


class BitstreamError(ValueError):
    """Malformed or truncated bitstream."""


@dataclass
class StreamHeader:
    mode: str
    gop_size: int
    frame_count: int
    width: int
    height: int
    f: int
    digest: str  # 16 hex chars


@dataclass
class FrameChunk:
    """Per-frame compressed payloads; empty bytes where a stream is absent."""

    motion_z: bytes
    motion_y: bytes
    codec_z: bytes
    codec_y: bytes

    @property
    def total_bytes(self) -> int:
        return (len(self.motion_z) + len(self.motion_y)
                + len(self.codec_z) + len(self.codec_y))


def _pack_substream(z: bytes, y: bytes) -> bytes:
    payload = struct.pack("<I", len(z)) + z + y
    return struct.pack("<I", len(payload)) + payload


def write_bitstream(header: StreamHeader, chunks: list[FrameChunk]) -> bytes:
    if header.mode not in MODES:
        raise ValueError(f"unknown mode {header.mode!r}")
    if len(chunks) != header.frame_count:
        raise ValueError(
            f"{len(chunks)} chunks but frame_count={header.frame_count}"
        )
    out = bytearray(_HEADER.pack(
        BITSTREAM_VERSION,
        MODES.index(header.mode),
        header.gop_size,
        header.frame_count,
        header.width,
        header.height,
        header.f,
        bytes.fromhex(header.digest),
    ))
    for chunk in chunks:
        if chunk.motion_z or chunk.motion_y:
            out += _pack_substream(chunk.motion_z, chunk.motion_y)
        else:
            out += struct.pack("<I", 0)
        out += _pack_substream(chunk.codec_z, chunk.codec_y)
    return bytes(out)


def _read_u32(data: bytes, off: int, what: str, chunk_index: int) -> tuple[int, int]:
    if off + 4 > len(data):
        raise BitstreamError(f"truncated {what} length in chunk {chunk_index}")
    return struct.unpack_from("<I", data, off)[0], off + 4


def _read_substream(data: bytes, off: int, what: str,
                    chunk_index: int) -> tuple[bytes, bytes, int]:
    length, off = _read_u32(data, off, what, chunk_index)
    if length == 0:
        return b"", b"", off
    if off + length > len(data):
        raise BitstreamError(f"truncated {what} payload in chunk {chunk_index}")
    z_len = struct.unpack_from("<I", data, off)[0]
    if 4 + z_len > length:
        raise BitstreamError(f"corrupt {what} z-length in chunk {chunk_index}")
    z = data[off + 4:off + 4 + z_len]
    y = data[off + 4 + z_len:off + length]
    return z, y, off + length


def read_bitstream(data: bytes) -> tuple[StreamHeader, list[FrameChunk]]:
    if len(data) < _HEADER.size:
        raise BitstreamError("truncated header")
    version, mode_i, gop, count, w, h, f, digest = _HEADER.unpack_from(data, 0)
    if version != BITSTREAM_VERSION:
        raise BitstreamError(f"unsupported bitstream version {version}")
    if mode_i >= len(MODES):
        raise BitstreamError(f"unknown mode id {mode_i}")
    header = StreamHeader(MODES[mode_i], gop, count, w, h, f, digest.hex())
    off = _HEADER.size
    chunks = []
    for i in range(count):
        mz, my, off = _read_substream(data, off, "motion stream", i)
        cz, cy, off = _read_substream(data, off, "codec stream", i)
        chunks.append(FrameChunk(mz, my, cz, cy))
    if off != len(data):
        raise BitstreamError(f"{len(data) - off} trailing bytes after chunk {count - 1}")
    return header, chunks
