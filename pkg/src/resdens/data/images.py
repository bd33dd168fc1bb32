"""Resizing and geometric augmentation of 2-D grayscale images."""
from __future__ import annotations

import math

import numpy as np

from .. import kernels
from ..errors import ConfigError


def resize(img, target: tuple[int, int]) -> np.ndarray:
    """Bilinear resize on the pixel-center grid (corners not aligned).

    Output pixel ``i`` samples source coordinate ``(i + 0.5) * H / H' - 0.5``,
    clamped to the image so edges replicate.
    """
    img = np.asarray(img, dtype=np.float64)
    th, tw = (int(t) for t in target)
    if th < 1 or tw < 1:
        raise ConfigError(f"target size must be positive, got {target}")
    h, w = img.shape
    ys = np.clip((np.arange(th) + 0.5) * (h / th) - 0.5, 0.0, h - 1.0)
    xs = np.clip((np.arange(tw) + 0.5) * (w / tw) - 0.5, 0.0, w - 1.0)
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    out = kernels.bilinear_sample(img, yy, xx)
    # convex weights can overshoot by an ulp
    return np.clip(out, img.min(), img.max())


def _exact_trig(angle: float) -> tuple[float, float]:
    a = angle % 360.0
    quarter = {0.0: (1.0, 0.0), 90.0: (0.0, 1.0), 180.0: (-1.0, 0.0), 270.0: (0.0, -1.0)}
    if a in quarter:
        return quarter[a]
    r = math.radians(a)
    return math.cos(r), math.sin(r)


def rotate(img, angle_degrees: float) -> np.ndarray:
    """Rotate counter-clockwise about the image center, zero fill outside.

    Multiples of 90 degrees use exact trig values, so on square images they
    are pure pixel permutations.
    """
    img = np.asarray(img, dtype=np.float64)
    c, s = _exact_trig(angle_degrees)
    if (c, s) == (1.0, 0.0):
        return img.copy()
    h, w = img.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    dy, dx = np.meshgrid(np.arange(h) - cy, np.arange(w) - cx, indexing="ij")
    src_y = cy + (c * dy + s * dx)
    src_x = cx + (c * dx - s * dy)
    out = kernels.bilinear_sample(img, src_y, src_x)
    return np.clip(out, min(img.min(), 0.0), max(img.max(), 0.0))


def augment(img, angle_degrees: float = 0.0, hflip: bool = False, vflip: bool = False) -> np.ndarray:
    """Rotate, then flip horizontally and/or vertically. Shape is preserved."""
    out = rotate(img, angle_degrees)
    if hflip:
        out = out[:, ::-1]
    if vflip:
        out = out[::-1, :]
    return np.ascontiguousarray(out)
