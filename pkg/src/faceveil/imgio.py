"""8-bit grayscale PNG in and out, floats in between.

Pixels map linearly: value v = px / 255 * 2 - 1, so 0 -> -1.0 and
255 -> +1.0. Writing rounds to the nearest level and clips, so any
array that came from a PNG survives a round trip bit for bit.
"""

from __future__ import annotations

import numpy as np
from PIL import Image


def to_unit_range(pixels: np.ndarray) -> np.ndarray:
    pixels = np.asarray(pixels)
    return pixels.astype(np.float64) / 255.0 * 2.0 - 1.0


def to_pixels(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    levels = np.rint((values + 1.0) / 2.0 * 255.0)
    return np.clip(levels, 0, 255).astype(np.uint8)


def load_image(path) -> np.ndarray:
    """Read a PNG (converted to 8-bit grayscale) as float64 in [-1, 1]."""
    with Image.open(path) as img:
        grey = img.convert("L")
        return to_unit_range(np.asarray(grey))


def save_image(path, values: np.ndarray):
    """Write a float image in [-1, 1] as 8-bit grayscale PNG."""
    values = np.asarray(values)
    if values.ndim != 2:
        raise ValueError("expected a 2-D grayscale image")
    Image.fromarray(to_pixels(values), mode="L").save(path, format="PNG")
