"""Procedural grayscale textures for the synthetic event camera.

All generators return float64 maps in [0, 1] and draw every random choice
from the supplied ``numpy.random.Generator``.
"""

from collections.abc import Callable

import numpy as np

TextureFn = Callable[[int, int, np.random.Generator], np.ndarray]


def checkerboard(height: int, width: int, rng: np.random.Generator) -> np.ndarray:
    """Axis-aligned checkerboard with random cell size, phase and contrast."""
    cell = int(rng.integers(4, 13))
    oy, ox = rng.integers(0, cell, size=2)
    rows = (np.arange(height)[:, None] + oy) // cell
    cols = (np.arange(width)[None, :] + ox) // cell
    low, high = np.sort(rng.uniform(0.05, 0.95, size=2))
    if high - low < 0.2:
        low, high = 0.1, 0.9
    return np.where((rows + cols) % 2 == 0, low, high).astype(np.float64)


def blobs(height: int, width: int, rng: np.random.Generator, count: int = 12) -> np.ndarray:
    """Sum of isotropic Gaussian blobs of random sign, rescaled to [0, 1]."""
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    canvas = np.zeros((height, width), dtype=np.float64)
    for _ in range(count):
        cy, cx = rng.uniform(0, height), rng.uniform(0, width)
        sigma = rng.uniform(2.0, max(3.0, min(height, width) / 6))
        amplitude = rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 1.0)
        canvas += amplitude * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sigma**2))
    span = canvas.max() - canvas.min()
    if span == 0:
        return np.full((height, width), 0.5)
    return (canvas - canvas.min()) / span


def bars(height: int, width: int, rng: np.random.Generator) -> np.ndarray:
    """Oriented bars with soft edges at a random angle and period."""
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    angle = rng.uniform(0, np.pi)
    period = rng.uniform(6.0, 16.0)
    phase = rng.uniform(0, 2 * np.pi)
    projection = xx * np.cos(angle) + yy * np.sin(angle)
    return 0.5 + 0.5 * np.tanh(3.0 * np.sin(2 * np.pi * projection / period + phase))


TEXTURES: dict[str, TextureFn] = {
    "checkerboard": checkerboard,
    "blobs": blobs,
    "bars": bars,
}


def random_texture(height: int, width: int, rng: np.random.Generator) -> tuple[str, np.ndarray]:
    """Draw a texture family uniformly, then a texture from it."""
    name = str(rng.choice(sorted(TEXTURES)))
    return name, TEXTURES[name](height, width, rng)
