"""Grayscale video containers, GOP layout and raw8 / y4m luma file I/O.

Frames are ``float64`` arrays of shape ``(rows, cols)`` with a nominal
8-bit range.  Conversion to bytes happens only at file boundaries.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "VideoFormatError",
    "VideoSequence",
    "GopStructure",
    "split_gop",
    "load_sequence",
    "save_sequence",
    "check_frame",
    "to_bytes",
]

_Y4M_MAGIC = b"YUV4MPEG2"
_Y4M_ACCEPTED = ("420", "420jpeg", "420paldv", "420mpeg2", "mono")


class VideoFormatError(ValueError):
    """Malformed or inconsistent video file.

    ``offset`` is the byte position at which the problem was detected.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


@dataclass
class VideoSequence:
    """Ordered stack of same-sized luma frames, shape ``(frame_count, rows, cols)``."""

    frames: np.ndarray
    fps: float = 30.0

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim == 2:
            frames = frames[None]
        if frames.ndim != 3 or frames.shape[0] == 0:
            raise ValueError("a sequence needs at least one 2-D frame")
        if not np.all(np.isfinite(frames)):
            raise ValueError("frame pixels must be finite")
        self.frames = frames

    @property
    def frame_count(self) -> int:
        return self.frames.shape[0]

    @property
    def rows(self) -> int:
        return self.frames.shape[1]

    @property
    def cols(self) -> int:
        return self.frames.shape[2]

    def __len__(self):
        return self.frame_count

    def __getitem__(self, i):
        return self.frames[i]


@dataclass(frozen=True)
class GopStructure:
    gop_size: int
    frame_count: int
    roles: tuple = field(default=())

    @property
    def key_indices(self) -> list[int]:
        return [i for i, r in enumerate(self.roles) if r == "key"]

    @property
    def nonkey_indices(self) -> list[int]:
        return [i for i, r in enumerate(self.roles) if r == "non-key"]

    def is_key(self, i: int) -> bool:
        return self.roles[i] == "key"

    def groups(self) -> list[list[int]]:
        """Frame indices grouped by GOP, each group led by its key frame."""
        return [list(range(s, min(s + self.gop_size, self.frame_count)))
                for s in range(0, self.frame_count, self.gop_size)]


def split_gop(seq_or_count, gop_size: int) -> GopStructure:
    """Assign key / non-key roles: frame ``i`` is key iff ``i % gop_size == 0``."""
    if gop_size < 1:
        raise ValueError("gop_size must be >= 1")
    n = seq_or_count if isinstance(seq_or_count, (int, np.integer)) else len(seq_or_count)
    roles = tuple("key" if i % gop_size == 0 else "non-key" for i in range(n))
    return GopStructure(int(gop_size), int(n), roles)


def check_frame(frame, block_side=None) -> np.ndarray:
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim != 2:
        raise ValueError(f"frame must be 2-D, got shape {frame.shape}")
    if not np.all(np.isfinite(frame)):
        raise ValueError("frame pixels must be finite")
    if block_side is not None:
        r, c = frame.shape
        if r % block_side or c % block_side:
            raise ValueError(
                f"frame {r}x{c} is not divisible by block side {block_side}")
    return frame


def to_bytes(frame) -> np.ndarray:
    """Clamp to [0, 255] and round half-to-even into ``uint8``."""
    return np.clip(np.rint(frame), 0, 255).astype(np.uint8)


# -- raw8 ------------------------------------------------------------------

def _sidecar_path(path):
    return os.fspath(path) + ".json"


def _load_raw8(path, rows, cols, max_frames):
    meta = {}
    side = _sidecar_path(path)
    if os.path.exists(side):
        with open(side) as fh:
            meta = json.load(fh)
    if rows is None or cols is None:
        if not meta:
            raise ValueError("raw8 input needs rows/cols or a JSON sidecar")
        rows = rows or meta["rows"]
        cols = cols or meta["cols"]
    data = np.fromfile(path, dtype=np.uint8)
    fsize = rows * cols
    available = data.size // fsize
    if max_frames is None:
        if data.size % fsize:
            raise VideoFormatError("truncated raw8 payload", offset=available * fsize)
        n = available
    else:
        if available < max_frames:
            raise VideoFormatError(
                f"truncated raw8 payload: {max_frames} frames requested, "
                f"{available} present", offset=data.size)
        n = max_frames
    if n == 0:
        raise VideoFormatError("raw8 file holds no complete frame", offset=data.size)
    frames = data[: n * fsize].reshape(n, rows, cols).astype(np.float64)
    return VideoSequence(frames, fps=float(meta.get("fps", 30.0)))


def _save_raw8(seq, path):
    to_bytes(seq.frames).tofile(path)
    meta = {"rows": seq.rows, "cols": seq.cols, "fps": seq.fps,
            "frame_count": seq.frame_count}
    with open(_sidecar_path(path), "w") as fh:
        json.dump(meta, fh, indent=2)


# -- y4m -------------------------------------------------------------------

def _parse_y4m_header(line, offset):
    tokens = line.split(b" ")
    if tokens[0] != _Y4M_MAGIC:
        raise VideoFormatError("missing YUV4MPEG2 signature", offset=offset)
    width = height = None
    fps = 30.0
    chroma = "420jpeg"
    for tok in tokens[1:]:
        if not tok:
            continue
        tag, val = chr(tok[0]), tok[1:].decode("ascii", "replace")
        if tag == "W":
            width = int(val)
        elif tag == "H":
            height = int(val)
        elif tag == "F":
            num, _, den = val.partition(":")
            fps = float(num) / float(den or 1)
        elif tag == "C":
            chroma = val
    if width is None or height is None:
        raise VideoFormatError("y4m header lacks W or H", offset=offset)
    if chroma not in _Y4M_ACCEPTED:
        raise VideoFormatError(f"unsupported y4m colorspace C{chroma}", offset=offset)
    return width, height, fps, chroma


def _chroma_bytes(width, height, chroma):
    if chroma == "mono":
        return 0
    return 2 * ((width + 1) // 2) * ((height + 1) // 2)


def _load_y4m(path, rows, cols, max_frames):
    with open(path, "rb") as fh:
        buf = fh.read()
    nl = buf.find(b"\n")
    if nl < 0:
        raise VideoFormatError("unterminated y4m stream header", offset=0)
    width, height, fps, chroma = _parse_y4m_header(buf[:nl], 0)
    if rows is not None and cols is not None and (rows, cols) != (height, width):
        raise VideoFormatError(
            f"geometry mismatch: header {height}x{width}, requested {rows}x{cols}",
            offset=0)
    luma = width * height
    skip = _chroma_bytes(width, height, chroma)
    pos = nl + 1
    frames = []
    while pos < len(buf) and (max_frames is None or len(frames) < max_frames):
        end = buf.find(b"\n", pos)
        if end < 0 or not buf.startswith(b"FRAME", pos):
            raise VideoFormatError("malformed FRAME header", offset=pos)
        pos = end + 1
        if pos + luma + skip > len(buf):
            raise VideoFormatError("truncated y4m frame payload", offset=pos)
        y = np.frombuffer(buf, dtype=np.uint8, count=luma, offset=pos)
        frames.append(y.reshape(height, width).astype(np.float64))
        pos += luma + skip
    if max_frames is not None and len(frames) < max_frames:
        raise VideoFormatError(
            f"truncated y4m stream: {max_frames} frames requested, "
            f"{len(frames)} present", offset=pos)
    if not frames:
        raise VideoFormatError("y4m stream holds no frames", offset=pos)
    return VideoSequence(np.stack(frames), fps=fps)


def _save_y4m(seq, path):
    fps = seq.fps
    num, den = (int(round(fps)), 1) if float(fps).is_integer() else (int(round(fps * 1000)), 1000)
    header = f"YUV4MPEG2 W{seq.cols} H{seq.rows} F{num}:{den} Ip A1:1 Cmono\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        for frame in seq.frames:
            fh.write(b"FRAME\n")
            fh.write(to_bytes(frame).tobytes())


def load_sequence(path, format="raw8", rows=None, cols=None, max_frames=None) -> VideoSequence:
    """Read the luma plane of a raw8 or y4m file into a :class:`VideoSequence`.

    ``raw8`` is headerless planar 8-bit luma; geometry comes from the
    arguments or from the ``<path>.json`` sidecar.  ``y4m-luma`` accepts
    4:2:0 and mono streams and skips chroma planes.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    if format == "raw8":
        return _load_raw8(path, rows, cols, max_frames)
    if format in ("y4m", "y4m-luma"):
        return _load_y4m(path, rows, cols, max_frames)
    raise ValueError(f"unknown video format {format!r}")


def save_sequence(seq: VideoSequence, path, format="raw8") -> None:
    """Write ``seq`` as 8-bit luma; values are rounded and clamped to [0, 255]."""
    if not isinstance(seq, VideoSequence):
        seq = VideoSequence(seq)
    if format == "raw8":
        _save_raw8(seq, path)
    elif format in ("y4m", "y4m-luma"):
        _save_y4m(seq, path)
    else:
        raise ValueError(f"unknown video format {format!r}")
