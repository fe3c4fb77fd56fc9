"""Raw YUV420 ingestion and the internal YUV444 frame representation.

Source videos are headerless planar YUV420 ("I420": all Y planes, then U,
then V per frame), 8 bit, geometry supplied by the caller.  Internally every
frame is a float32 array of shape (3, H, W) with values in [0, 1]: chroma is
bilinearly upsampled to full resolution (co-sited top-left: chroma sample
(i, j) lies on luma sample (2i, 2j)) and all samples are divided by 255.

The reverse path average-pools chroma 2x2 and quantizes with
round-half-away-from-zero so that constant sequences survive the round trip
bit-exactly.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Literal, Optional, Sequence

import numpy as np
from PIL import Image

FrameKind = Literal["I", "P", "B"]


class GeometryError(ValueError):
    """Raised when a file or array does not match the declared geometry."""


@dataclass
class RawSequence:
    """A parsed planar YUV420 clip, one uint8 plane set per frame."""

    width: int
    height: int
    luma: np.ndarray    # (T, H, W) uint8
    chroma_u: np.ndarray  # (T, H/2, W/2) uint8
    chroma_v: np.ndarray  # (T, H/2, W/2) uint8

    @property
    def frame_count(self) -> int:
        return self.luma.shape[0]

    def __post_init__(self) -> None:
        if self.width % 2 or self.height % 2:
            raise GeometryError(
                f"width and height must be even, got {self.width}x{self.height}"
            )
        t = self.luma.shape[0]
        if self.luma.shape != (t, self.height, self.width):
            raise GeometryError(
                f"luma shape {self.luma.shape} does not match "
                f"{self.width}x{self.height}"
            )
        half = (t, self.height // 2, self.width // 2)
        for name, plane in (("U", self.chroma_u), ("V", self.chroma_v)):
            if plane.shape != half:
                raise GeometryError(
                    f"{name} plane shape {plane.shape}, expected {half}"
                )


@dataclass
class Frame:
    """One picture in the internal representation.

    ``data`` is float32 (3, H, W) in [0, 1]; ``kind`` is assigned by the
    scheduler and is None for frames that have not been scheduled yet.
    """

    data: np.ndarray
    index: int = 0
    kind: Optional[FrameKind] = None

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


def load_yuv420(path: str | os.PathLike, width: int, height: int) -> RawSequence:
    """Parse a headerless 8-bit planar YUV420 file.

    The file size must be an exact multiple of the per-frame byte count
    1.5 * W * H; anything else is rejected with the declared vs actual
    counts so the geometry mistake is visible.
    """
    if width % 2 or height % 2:
        raise GeometryError(f"width and height must be even, got {width}x{height}")
    frame_bytes = width * height * 3 // 2
    size = os.path.getsize(path)
    if size == 0 or size % frame_bytes:
        raise GeometryError(
            f"{path}: {size} bytes is not a multiple of the "
            f"{frame_bytes}-byte frames implied by {width}x{height}"
        )
    count = size // frame_bytes
    data = np.fromfile(path, dtype=np.uint8)
    return _raw_from_bytes(data, width, height, count)


def _raw_from_bytes(data: np.ndarray, width: int, height: int, count: int) -> RawSequence:
    ysize = width * height
    csize = ysize // 4
    per_frame = data.reshape(count, ysize + 2 * csize)
    luma = per_frame[:, :ysize].reshape(count, height, width)
    u = per_frame[:, ysize:ysize + csize].reshape(count, height // 2, width // 2)
    v = per_frame[:, ysize + csize:].reshape(count, height // 2, width // 2)
    return RawSequence(width, height, luma.copy(), u.copy(), v.copy())


def _upsample_chroma(plane: np.ndarray) -> np.ndarray:
    """Bilinear x2 upsampling, co-sited top-left, edges clamped.

    Full-resolution sample (r, c) reads the half-resolution plane at
    (r / 2, c / 2); even positions therefore reproduce the chroma samples
    exactly.
    """
    h, w = plane.shape
    p = plane.astype(np.float64)
    rows = np.arange(2 * h) / 2.0
    cols = np.arange(2 * w) / 2.0
    r0 = np.floor(rows).astype(np.int64)
    c0 = np.floor(cols).astype(np.int64)
    fr = rows - r0
    fc = cols - c0
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    top = p[r0[:, None], c0[None, :]] * (1 - fc)[None, :] + p[r0[:, None], c1[None, :]] * fc[None, :]
    bot = p[r1[:, None], c0[None, :]] * (1 - fc)[None, :] + p[r1[:, None], c1[None, :]] * fc[None, :]
    return top * (1 - fr)[:, None] + bot * fr[:, None]


def to_internal(raw: RawSequence) -> list[Frame]:
    """Convert a RawSequence to full-resolution [0, 1] frames.

    Luma is only rescaled (exact 1/255); chroma planes are bilinearly
    upsampled x2 before rescaling.
    """
    frames = []
    for t in range(raw.frame_count):
        y = raw.luma[t].astype(np.float32) / 255.0
        u = (_upsample_chroma(raw.chroma_u[t]) / 255.0).astype(np.float32)
        v = (_upsample_chroma(raw.chroma_v[t]) / 255.0).astype(np.float32)
        frames.append(Frame(np.stack([y, u, v]), index=t))
    return frames


def _quantize_u8(x: np.ndarray) -> np.ndarray:
    # round half away from zero; inputs are non-negative here
    return np.clip(np.floor(x * 255.0 + 0.5), 0, 255).astype(np.uint8)


def to_yuv420(frames: Sequence[Frame] | Sequence[np.ndarray]) -> RawSequence:
    """Downconvert internal frames back to 8-bit planar YUV420.

    Chroma is average-pooled over disjoint 2x2 blocks before quantization.
    """
    arrays = [f.data if isinstance(f, Frame) else np.asarray(f) for f in frames]
    if not arrays:
        raise ValueError("empty frame sequence")
    lumas, us, vs = [], [], []
    for a in arrays:
        if a.ndim != 3 or a.shape[0] != 3:
            raise GeometryError(f"expected (3, H, W) frame, got {a.shape}")
        y, u, v = a.astype(np.float64)
        h, w = y.shape
        lumas.append(_quantize_u8(y))
        us.append(_quantize_u8(u.reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))))
        vs.append(_quantize_u8(v.reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))))
    h, w = arrays[0].shape[1:]
    return RawSequence(w, h, np.stack(lumas), np.stack(us), np.stack(vs))


def save_yuv420(raw: RawSequence, path: str | os.PathLike) -> None:
    """Write a RawSequence as a headerless I420 file."""
    with open(path, "wb") as fh:
        for t in range(raw.frame_count):
            fh.write(raw.luma[t].tobytes())
            fh.write(raw.chroma_u[t].tobytes())
            fh.write(raw.chroma_v[t].tobytes())


def stack_frames(frames: Sequence[Frame]) -> np.ndarray:
    """Stack frames into a (T, 3, H, W) float32 array."""
    return np.stack([f.data for f in frames])


def extract_crops(
    frames: Sequence[Frame],
    size: int,
    count: int,
    seed: int,
) -> list[tuple[Frame, Frame, Frame]]:
    """Sample ``count`` triples of 3 consecutive frames cropped at a shared
    random spatial offset.  Deterministic for a given seed."""
    if len(frames) < 3:
        raise ValueError(f"need at least 3 frames, got {len(frames)}")
    h, w = frames[0].data.shape[1:]
    if size > min(h, w):
        raise ValueError(f"crop {size} exceeds frame geometry {w}x{h}")
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        t0 = int(rng.integers(0, len(frames) - 2))
        y0 = int(rng.integers(0, h - size + 1))
        x0 = int(rng.integers(0, w - size + 1))
        triple = tuple(
            Frame(frames[t0 + dt].data[:, y0:y0 + size, x0:x0 + size].copy(),
                  index=frames[t0 + dt].index)
            for dt in range(3)
        )
        out.append(triple)
    return out


def write_image(image: np.ndarray, path: str | os.PathLike) -> None:
    """Write a [0, 1] grayscale (H, W) or RGB (H, W, 3) image as 8-bit PNG."""
    a = np.asarray(image, dtype=np.float64)
    if a.ndim not in (2, 3):
        raise ValueError(f"expected (H, W) or (H, W, 3) image, got {a.shape}")
    if a.min() < -1e-6 or a.max() > 1 + 1e-6:
        raise ValueError(
            f"image values outside [0, 1]: min {a.min():.4f} max {a.max():.4f}"
        )
    u8 = _quantize_u8(np.clip(a, 0.0, 1.0))
    Image.fromarray(u8).save(path, format="PNG")
