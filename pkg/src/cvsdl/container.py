"""The ``.cvsm`` measurement container.

Layout: magic ``CVSM1``, a little-endian ``uint32`` header length, a
UTF-8 JSON header, then for every frame one role byte (``K`` or ``N``)
followed by its block measurements as little-endian float64 in block
raster order (``n_blocks * m_b`` values).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .sensing import gen_sensing_matrix, measurements_per_block

__all__ = ["MeasurementSet", "write_container", "read_container", "ContainerError"]

MAGIC = b"CVSM1"
_ROLE_BYTE = {"key": b"K", "non-key": b"N"}
_BYTE_ROLE = {v[0]: k for k, v in _ROLE_BYTE.items()}


class ContainerError(ValueError):
    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


@dataclass
class MeasurementSet:
    """Encoded sequence: per-frame block measurements plus everything needed to rebuild the sensing matrices."""

    rows: int
    cols: int
    block_side: int
    mr_key: float
    mr_nonkey: float
    gop_size: int
    seed_key: int
    seed_nonkey: int
    roles: list = field(default_factory=list)
    measurements: list = field(default_factory=list)
    fps: float = 30.0

    @property
    def frame_count(self) -> int:
        return len(self.roles)

    @property
    def blocks_per_frame(self) -> int:
        return (self.rows // self.block_side) * (self.cols // self.block_side)

    def m_b(self, role) -> int:
        mr = self.mr_key if role == "key" else self.mr_nonkey
        return measurements_per_block(mr, self.block_side)

    def sensing_matrix(self, role):
        if role == "key":
            return gen_sensing_matrix(self.seed_key, self.mr_key, self.block_side)
        return gen_sensing_matrix(self.seed_nonkey, self.mr_nonkey, self.block_side)

    def header(self) -> dict:
        return {
            "rows": self.rows, "cols": self.cols, "block_side": self.block_side,
            "mr_key": self.mr_key, "mr_nonkey": self.mr_nonkey,
            "gop_size": self.gop_size, "seed_key": self.seed_key,
            "seed_nonkey": self.seed_nonkey, "frame_count": self.frame_count,
            "fps": self.fps, "roles": ["K" if r == "key" else "N" for r in self.roles],
            "vectorization": "column-major", "block_order": "raster",
        }


def write_container(ms: MeasurementSet, path) -> None:
    header = json.dumps(ms.header(), sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for role, f in zip(ms.roles, ms.measurements):
            expected = (ms.blocks_per_frame, ms.m_b(role))
            f = np.asarray(f, dtype="<f8")
            if f.shape != expected:
                raise ContainerError(f"measurement array {f.shape} does not match {expected}")
            fh.write(_ROLE_BYTE[role])
            fh.write(f.tobytes(order="C"))


def read_container(path) -> MeasurementSet:
    with open(path, "rb") as fh:
        buf = fh.read()
    if not buf.startswith(MAGIC):
        raise ContainerError("missing CVSM1 magic", offset=0)
    off = len(MAGIC)
    if len(buf) < off + 4:
        raise ContainerError("truncated header length", offset=off)
    (hlen,) = struct.unpack_from("<I", buf, off)
    off += 4
    try:
        h = json.loads(buf[off:off + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerError(f"malformed header: {exc}", offset=off) from None
    off += hlen
    if h.get("vectorization") != "column-major" or h.get("block_order") != "raster":
        raise ContainerError("unsupported block vectorization convention", offset=len(MAGIC) + 4)
    ms = MeasurementSet(
        rows=h["rows"], cols=h["cols"], block_side=h["block_side"],
        mr_key=h["mr_key"], mr_nonkey=h["mr_nonkey"], gop_size=h["gop_size"],
        seed_key=h["seed_key"], seed_nonkey=h["seed_nonkey"], fps=h.get("fps", 30.0),
    )
    header_roles = h.get("roles")
    nblk = ms.blocks_per_frame
    for i in range(h["frame_count"]):
        if off >= len(buf):
            raise ContainerError(f"truncated payload before frame {i}", offset=off)
        role = _BYTE_ROLE.get(buf[off])
        if role is None:
            raise ContainerError(f"bad role byte {buf[off]!r}", offset=off)
        if header_roles is not None and header_roles[i] != _ROLE_BYTE[role].decode():
            raise ContainerError(f"frame {i} role disagrees with header", offset=off)
        off += 1
        count = nblk * ms.m_b(role)
        if off + 8 * count > len(buf):
            raise ContainerError(f"truncated payload in frame {i}", offset=off)
        f = np.frombuffer(buf, dtype="<f8", count=count, offset=off).reshape(nblk, -1)
        ms.roles.append(role)
        ms.measurements.append(f.astype(np.float64))
        off += 8 * count
    if off != len(buf):
        raise ContainerError("trailing bytes after last frame", offset=off)
    return ms
