"""Time-sampled frame stacks and their binary file format.

File layout (all little-endian)::

    magic      4 bytes   b"MFRS"
    version    u16
    width      u32
    height     u32
    n_frames   u32
    fps        f64
    t0         f64
    frames     n_frames * height * width f32, row-major, frame after frame

Single maps (amplitude, phase, masks, tiles) are stored as one-frame stacks.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"MFRS"
VERSION = 1
_HEADER = struct.Struct("<4sHIIIdd")
HEADER_SIZE = _HEADER.size


class FormatError(ValueError):
    """Raised for a malformed or incompatible frame-stack file."""


@dataclass
class FrameStack:
    """Frames of shape ``(n_frames, height, width)`` sampled at ``fps``."""

    frames: np.ndarray
    fps: float
    t0: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.frames.ndim == 2:
            self.frames = self.frames[None]
        if self.frames.ndim != 3:
            raise ValueError(f"frames must be 3-D (n, height, width), got shape {self.frames.shape}")
        if self.frames.shape[0] < 1:
            raise ValueError("a frame stack needs at least one frame")
        if not self.fps > 0:
            raise ValueError(f"fps must be positive, got {self.fps}")

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    @property
    def width(self) -> int:
        return self.frames.shape[2]

    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.n_frames) / self.fps


def _header(width, height, n_frames, fps, t0) -> bytes:
    return _HEADER.pack(MAGIC, VERSION, width, height, n_frames, float(fps), float(t0))


class FrameStackWriter:
    """Stream frames to disk without holding the whole stack in memory.

    >>> with FrameStackWriter(path, width, height, n_frames, fps) as w:  # doctest: +SKIP
    ...     for chunk in chunks:
    ...         w.write(chunk)
    """

    def __init__(self, path, width: int, height: int, n_frames: int, fps: float, t0: float = 0.0):
        self.path = os.fspath(path)
        self.shape = (height, width)
        self.n_frames = n_frames
        self.written = 0
        self._fh = open(self.path, "wb")
        self._fh.write(_header(width, height, n_frames, fps, t0))

    def write(self, frames: np.ndarray):
        frames = np.asarray(frames)
        if frames.ndim == 2:
            frames = frames[None]
        if frames.shape[1:] != self.shape:
            raise ValueError(f"frame shape {frames.shape[1:]} does not match {self.shape}")
        if self.written + frames.shape[0] > self.n_frames:
            raise ValueError("more frames written than declared in the header")
        self._fh.write(np.ascontiguousarray(frames, dtype="<f4").tobytes())
        self.written += frames.shape[0]

    def close(self):
        self._fh.close()
        if self.written != self.n_frames:
            raise ValueError(f"declared {self.n_frames} frames but wrote {self.written}")

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.close()
        else:
            self._fh.close()
        return False


def write_framestack(path, fs: FrameStack):
    with FrameStackWriter(path, fs.width, fs.height, fs.n_frames, fs.fps, fs.t0) as w:
        w.write(fs.frames)


def write_map(path, image: np.ndarray, fps: float = 1.0):
    """Write a single 2-D map as a one-frame stack."""
    write_framestack(path, FrameStack(np.asarray(image)[None], fps=fps))


def read_header(path) -> dict:
    with open(path, "rb") as fh:
        raw = fh.read(HEADER_SIZE)
    if len(raw) < HEADER_SIZE:
        raise FormatError(f"{path}: file too short for a frame-stack header")
    magic, version, width, height, n_frames, fps, t0 = _HEADER.unpack(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported format version {version} (reader supports {VERSION})")
    return dict(width=width, height=height, n_frames=n_frames, fps=fps, t0=t0)


def read_framestack(path, mmap: bool = True) -> FrameStack:
    """Read a frame-stack file; frames are memory-mapped read-only by default."""
    h = read_header(path)
    shape = (h["n_frames"], h["height"], h["width"])
    expected = HEADER_SIZE + 4 * int(np.prod(shape))
    actual = os.path.getsize(path)
    if actual != expected:
        raise FormatError(f"{path}: size {actual} bytes, header implies {expected}")
    if mmap and np.prod(shape) > 0:
        frames = np.memmap(path, dtype="<f4", mode="r", offset=HEADER_SIZE, shape=shape)
    else:
        with open(path, "rb") as fh:
            fh.seek(HEADER_SIZE)
            frames = np.frombuffer(fh.read(), dtype="<f4").reshape(shape)
    return FrameStack(frames, fps=h["fps"], t0=h["t0"])


def read_map(path) -> np.ndarray:
    fs = read_framestack(path, mmap=False)
    if fs.n_frames != 1:
        raise FormatError(f"{path}: expected a single-frame map, found {fs.n_frames} frames")
    return np.array(fs.frames[0])
