"""Deterministic synthetic test scenes: piecewise-smooth frames and moving-object sequences."""

from __future__ import annotations

import numpy as np

from .video import VideoSequence

__all__ = ["piecewise_frame", "moving_sequence"]


def _background(rows, cols, rng):
    y, x = np.mgrid[0:rows, 0:cols] / max(rows, cols)
    a, b, c = rng.uniform(-60, 60, size=3)
    base = rng.uniform(90, 150)
    return base + a * x + b * y + c * np.sin(np.pi * x) * np.cos(np.pi * y)


def _shapes(rng, count, rows, cols):
    shapes = []
    for i in range(count):
        kind = "disc" if i % 2 else "rect"
        size = rng.uniform(0.12, 0.3) * min(rows, cols)
        cy, cx = rng.uniform(0.2, 0.8) * rows, rng.uniform(0.2, 0.8) * cols
        level = rng.uniform(20, 235)
        velocity = rng.uniform(-1.0, 1.0, size=2)
        shapes.append((kind, size, cy, cx, level, velocity))
    return shapes


def _paint(frame, shapes, t):
    rows, cols = frame.shape
    y, x = np.mgrid[0:rows, 0:cols]
    for kind, size, cy, cx, level, vel in shapes:
        cy_t, cx_t = cy + vel[0] * t, cx + vel[1] * t
        if kind == "disc":
            mask = (y - cy_t) ** 2 + (x - cx_t) ** 2 <= (size / 2) ** 2
        else:
            mask = (np.abs(y - cy_t) <= size / 2) & (np.abs(x - cx_t) <= size / 2)
        frame[mask] = level
    return frame


def piecewise_frame(rows=64, cols=64, seed=0, shapes=4):
    """Smooth background with a few constant-intensity rectangles and discs."""
    rng = np.random.default_rng(seed)
    bg = _background(rows, cols, rng)
    return np.clip(_paint(bg, _shapes(rng, shapes, rows, cols), 0.0), 0, 255)


def moving_sequence(frames=20, rows=64, cols=64, seed=0, shapes=4, static_camera=True,
                    pan=(0.0, 0.0), motion=1.0):
    """Objects drifting up to ``motion`` pixels per frame over a fixed (or panning) background.

    ``motion=0`` with a static camera gives a still scene (every frame identical).

    Pixel values are rounded to integers so the sequence survives 8-bit I/O unchanged.
    """
    rng = np.random.default_rng(seed)
    pad = int(np.ceil(max(abs(pan[0]), abs(pan[1])) * frames)) + 1
    big = _background(rows + 2 * pad, cols + 2 * pad, rng)
    objs = _shapes(rng, shapes, rows, cols)
    out = np.empty((frames, rows, cols))
    for t in range(frames):
        dy, dx = (0, 0) if static_camera else (int(round(pan[0] * t)), int(round(pan[1] * t)))
        bg = big[pad + dy:pad + dy + rows, pad + dx:pad + dx + cols].copy()
        out[t] = _paint(bg, objs, motion * float(t))
    return VideoSequence(np.clip(np.rint(out), 0, 255))
