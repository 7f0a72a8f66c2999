"""Toy target images: three synthetic patterns and two bundled photographs.

The photographs are 256x256 downscales of the public-domain / CC0
``astronaut`` and ``coffee`` samples distributed with scikit-image.
"""

from __future__ import annotations

from importlib import resources

import numpy as np

from .imaging import ImageBuffer

SUITE_NAMES = ("gradient", "checkerboard", "cartoon", "astronaut", "coffee")
PHOTO_NAMES = ("astronaut", "coffee")


def gradient(size: int = 64) -> ImageBuffer:
    t = np.linspace(0.0, 1.0, size)
    xx, yy = np.meshgrid(t, t)
    return ImageBuffer(np.stack([xx, yy, 1.0 - 0.5 * (xx + yy)], axis=2))


def checkerboard(size: int = 64, squares: int = 8) -> ImageBuffer:
    idx = (np.arange(size) * squares) // size
    board = (idx[:, None] + idx[None, :]) % 2
    light = np.array([0.9, 0.85, 0.7])
    dark = np.array([0.15, 0.2, 0.35])
    return ImageBuffer(np.where(board[..., None] == 1, light, dark))


def cartoon(size: int = 64) -> ImageBuffer:
    """Flat-shaded shapes on a sky background, no noise."""
    y, x = (np.mgrid[0:size, 0:size] + 0.5) / size
    img = np.empty((size, size, 3))
    img[...] = [0.55, 0.75, 0.95]
    img[y > 0.7] = [0.3, 0.65, 0.25]
    sun = (x - 0.78) ** 2 + (y - 0.2) ** 2 < 0.012
    img[sun] = [1.0, 0.85, 0.2]
    house = (x > 0.2) & (x < 0.5) & (y > 0.45) & (y < 0.78)
    img[house] = [0.8, 0.3, 0.25]
    roof = (y > 0.28) & (y <= 0.45) & (np.abs(x - 0.35) < (y - 0.28) * 1.0)
    img[roof] = [0.4, 0.2, 0.15]
    door = (x > 0.31) & (x < 0.39) & (y > 0.62) & (y < 0.78)
    img[door] = [0.25, 0.15, 0.1]
    ball = (x - 0.7) ** 2 + (y - 0.68) ** 2 < 0.006
    img[ball] = [0.9, 0.9, 0.95]
    return ImageBuffer(img)


def photo(name: str, size: int = 256) -> ImageBuffer:
    from PIL import Image

    if name not in PHOTO_NAMES:
        raise KeyError(f"unknown photo {name!r}; available: {PHOTO_NAMES}")
    with resources.files("freqsplat.data").joinpath(f"{name}.png").open("rb") as fh:
        im = Image.open(fh).convert("RGB")
        if im.size != (size, size):
            im = im.resize((size, size), Image.BOX)
        arr = np.asarray(im, dtype=np.float64) / 255.0
    return ImageBuffer(arr)


def load_suite_image(name: str, size: int = 64) -> ImageBuffer:
    if name == "gradient":
        return gradient(size)
    if name == "checkerboard":
        return checkerboard(size)
    if name == "cartoon":
        return cartoon(size)
    return photo(name, size)


def toy_suite(size: int = 64) -> dict[str, ImageBuffer]:
    return {name: load_suite_image(name, size) for name in SUITE_NAMES}
