"""Low-pass and edge filtering of training images.

Convolution follows the textbook definition

    G[i, j] = sum_{u=-k..k} sum_{v=-k..k} H[u, v] * F[i - u, j - v]

with stride 1 and padding chosen so the output keeps the input size.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .imaging import ImageBuffer


class FilterKind(str, enum.Enum):
    MEAN = "mean"
    GAUSSIAN = "gaussian"
    BILATERAL = "bilateral"
    SOBEL = "sobel"
    IDENTITY = "identity"

    @classmethod
    def parse(cls, value) -> "FilterKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValueError(
                f"unknown filter kind {value!r}; expected one of {[k.value for k in cls]}"
            ) from None


class PaddingMode(str, enum.Enum):
    EDGE = "edge"
    ZERO = "zero"
    REFLECT = "reflect"


SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T.copy()
# largest gradient magnitude a [0, 1] image can produce with the pair above
SOBEL_MAX = 4.0 * np.sqrt(2.0)


def gaussian_sigma_for(size: int) -> float:
    """sigma = size / 6, so +-3 sigma spans the window."""
    return size / 6.0


@dataclass(frozen=True, eq=False)
class Kernel:
    weights: np.ndarray
    kind: FilterKind = FilterKind.MEAN

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValueError(f"kernel must be square, got shape {w.shape}")
        if w.shape[0] % 2 == 0:
            raise ValueError(f"kernel size must be odd, got {w.shape[0]}")
        object.__setattr__(self, "weights", w)

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    @property
    def radius(self) -> int:
        return (self.size - 1) // 2


def _check_size(size) -> int:
    if int(size) != size or size < 1 or size % 2 == 0:
        raise ValueError(f"kernel size must be a positive odd integer, got {size}")
    return int(size)


def build_kernel(kind, size: int, sigma: float | None = None) -> Kernel | tuple[Kernel, Kernel]:
    """Build the convolution weights for ``kind``.

    Sobel ignores ``size`` and returns the (x, y) 3x3 derivative pair.
    Bilateral filtering is data dependent and has no fixed kernel; asking for
    one returns its spatial (Gaussian) component.
    """
    kind = FilterKind.parse(kind)
    size = _check_size(size)
    if kind is FilterKind.SOBEL:
        return Kernel(SOBEL_X, kind), Kernel(SOBEL_Y, kind)
    if kind is FilterKind.IDENTITY or size == 1:
        return Kernel(np.ones((1, 1)), kind)
    if kind is FilterKind.MEAN:
        return Kernel(np.full((size, size), 1.0 / (size * size)), kind)
    sigma = gaussian_sigma_for(size) if sigma is None else sigma
    r = (size - 1) // 2
    u = np.arange(-r, r + 1)
    g = np.exp(-(u[:, None] ** 2 + u[None, :] ** 2) / (2.0 * sigma**2))
    return Kernel(g / g.sum(), kind)


def _pad(x: np.ndarray, r: int, padding: PaddingMode) -> np.ndarray:
    padding = PaddingMode(padding)
    width = ((r, r), (r, r), (0, 0))
    if padding is PaddingMode.EDGE:
        return np.pad(x, width, mode="edge")
    if padding is PaddingMode.REFLECT:
        return np.pad(x, width, mode="symmetric")
    return np.pad(x, width, mode="constant")


def _check_fits(shape, size):
    h, w = shape[:2]
    if size > min(h, w):
        raise ValueError(f"kernel size {size} exceeds image size {w}x{h}")


def convolve_array(x: np.ndarray, weights: np.ndarray, padding=PaddingMode.EDGE) -> np.ndarray:
    size = weights.shape[0]
    _check_fits(x.shape, size)
    r = size // 2
    h, w = x.shape[:2]
    padded = _pad(x, r, padding)
    out = np.zeros_like(x, dtype=np.float64)
    # H[u, v] pairs with F[i - u, j - v]: offset (-u, -v) into the padded image
    for iu in range(size):
        for iv in range(size):
            wt = weights[iu, iv]
            if wt == 0.0:
                continue
            du, dv = r - (iu - r), r - (iv - r)
            out += wt * padded[du : du + h, dv : dv + w]
    return out


def convolve(img: ImageBuffer, kernel: Kernel, padding=PaddingMode.EDGE) -> ImageBuffer:
    """Stride-1, size-preserving 2D convolution applied per channel."""
    out = convolve_array(img.data, kernel.weights, padding)
    # low-pass kernels give convex combinations; clip only removes fp dust
    return ImageBuffer(np.clip(out, 0.0, 1.0))


def box_filter_array(x: np.ndarray, size: int, padding=PaddingMode.EDGE) -> np.ndarray:
    """Mean filter through a summed-area table, O(1) per pixel."""
    size = _check_size(size)
    _check_fits(x.shape, size)
    r = size // 2
    h, w = x.shape[:2]
    padded = _pad(x, r, padding)
    sat = np.zeros((padded.shape[0] + 1, padded.shape[1] + 1) + padded.shape[2:])
    np.cumsum(np.cumsum(padded, axis=0), axis=1, out=sat[1:, 1:])
    total = (
        sat[size : size + h, size : size + w]
        - sat[0:h, size : size + w]
        - sat[size : size + h, 0:w]
        + sat[0:h, 0:w]
    )
    return total / (size * size)


def bilateral_filter(
    img: ImageBuffer,
    size: int,
    sigma_spatial: float | None = None,
    sigma_range: float = 0.1,
    padding=PaddingMode.EDGE,
) -> ImageBuffer:
    """Edge-preserving smoothing; range weights are evaluated per channel."""
    size = _check_size(size)
    sigma_spatial = gaussian_sigma_for(size) if sigma_spatial is None else sigma_spatial
    if sigma_spatial <= 0 or sigma_range <= 0:
        raise ValueError("bilateral sigmas must be positive")
    x = img.data
    _check_fits(x.shape, size)
    if size == 1:
        return img
    r = size // 2
    h, w = x.shape[:2]
    padded = _pad(x, r, padding)
    num = np.zeros_like(x)
    den = np.zeros_like(x)
    inv_2sr2 = 1.0 / (2.0 * sigma_range**2)
    for du in range(-r, r + 1):
        for dv in range(-r, r + 1):
            ws = np.exp(-(du * du + dv * dv) / (2.0 * sigma_spatial**2))
            nb = padded[r + du : r + du + h, r + dv : r + dv + w]
            wt = ws * np.exp(-((nb - x) ** 2) * inv_2sr2)
            num += wt * nb
            den += wt
    return ImageBuffer(np.clip(num / den, 0.0, 1.0))


def sobel_magnitude(img: ImageBuffer, padding=PaddingMode.EDGE) -> ImageBuffer:
    """Per-channel gradient magnitude scaled into [0, 1] by its upper bound."""
    gx = convolve_array(img.data, SOBEL_X, padding)
    gy = convolve_array(img.data, SOBEL_Y, padding)
    mag = np.sqrt(gx * gx + gy * gy) / SOBEL_MAX
    return ImageBuffer(np.clip(mag, 0.0, 1.0))


def filter_image(img: ImageBuffer, kind, size: int, **params) -> ImageBuffer:
    """Apply the low-pass (or Sobel) filter ``kind`` with a ``size`` window.

    ``size == 1`` and ``IDENTITY`` return ``img`` itself.
    """
    kind = FilterKind.parse(kind)
    size = _check_size(size)
    if kind is FilterKind.IDENTITY or size == 1:
        return img
    padding = params.pop("padding", PaddingMode.EDGE)
    if kind is FilterKind.MEAN:
        return ImageBuffer(np.clip(box_filter_array(img.data, size, padding), 0.0, 1.0))
    if kind is FilterKind.GAUSSIAN:
        return convolve(img, build_kernel(kind, size, params.get("sigma")), padding)
    if kind is FilterKind.BILATERAL:
        return bilateral_filter(
            img,
            size,
            params.get("sigma_spatial"),
            params.get("sigma_range", 0.1),
            padding,
        )
    if kind is FilterKind.SOBEL:
        return sobel_magnitude(img, padding)
    raise AssertionError(kind)


def laplacian_variance(img: ImageBuffer) -> float:
    """Variance of the 4-neighbour Laplacian over the image interior.

    A standard high-frequency energy measure; lower means smoother.
    """
    x = img.data
    lap = (
        x[:-2, 1:-1] + x[2:, 1:-1] + x[1:-1, :-2] + x[1:-1, 2:] - 4.0 * x[1:-1, 1:-1]
    )
    return float(lap.var())
