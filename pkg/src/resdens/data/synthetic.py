"""Synthetic stand-in for density-labelled mammograms.

Each image is a dark background with soft bright blobs; the fraction of
pixels brighter than 0.5 is drawn uniformly from the class's density band.
"""
from __future__ import annotations

import numpy as np

from ..errors import ConfigError
from .manifest import LabeledImage

DENSITY_BANDS = ((0.0, 0.25), (0.26, 0.50), (0.51, 0.75), (0.76, 1.0))
BRIGHT_LEVEL = 0.5
# logistic slope of the tissue edge, in units of the field standard deviation
EDGE_SHARPNESS = 12.0


def bright_fraction(pixels) -> float:
    return float(np.mean(np.asarray(pixels) > BRIGHT_LEVEL))


def _render(rng: np.random.Generator, size: int, fraction: float) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    field = np.zeros((size, size))
    for _ in range(int(rng.integers(3, 9))):
        cy, cx = rng.uniform(-0.1, 1.1, size=2) * size
        sigma = rng.uniform(0.1, 0.3) * size
        field += rng.uniform(0.5, 1.0) * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sigma**2))
    field += rng.normal(0.0, 0.02, size=field.shape)
    flat = np.sort(field.ravel())
    n = flat.size
    m = int(round(fraction * n))
    # threshold halfway between the m-th largest value and the next one down
    if m == 0:
        thr = flat[-1] + 1.0
    elif m == n:
        thr = flat[0] - 1.0
    else:
        thr = 0.5 * (flat[n - m - 1] + flat[n - m])
    spread = max(float(field.std()), 1e-12)
    z = np.clip(EDGE_SHARPNESS * (field - thr) / spread, -60.0, 60.0)
    return 0.05 + 0.9 / (1.0 + np.exp(-z))


def generate_synthetic(n_per_class: int, size: int, seed: int, classes: int = 4) -> list[LabeledImage]:
    """``n_per_class`` images per density class, deterministic in ``seed``."""
    if n_per_class < 1:
        raise ConfigError(f"n_per_class must be >= 1, got {n_per_class}")
    if size < 2:
        raise ConfigError(f"size must be >= 2, got {size}")
    out = []
    for label in range(classes):
        lo, hi = DENSITY_BANDS[label]
        for i in range(n_per_class):
            rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, label, i])))
            fraction = rng.uniform(lo, hi)
            out.append(LabeledImage(_render(rng, size, fraction), label, f"synth-c{label}-{i:05d}"))
    return out
