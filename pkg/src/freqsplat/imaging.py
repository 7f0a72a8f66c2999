"""Image buffers, quality metrics and file I/O."""

from __future__ import annotations

import csv
import io
from dataclasses import astuple, dataclass, fields
from pathlib import Path

import numba
import numpy as np

PSNR_CAP = 99.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2


class ImageFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ImageBuffer:
    """RGB raster with float intensities in [0, 1].

    ``data`` has shape (height, width, 3), i.e. row-major with interleaved
    channels.
    """

    data: np.ndarray

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float64)
        if data.ndim != 3 or data.shape[2] != 3:
            raise ValueError(f"expected (height, width, 3) array, got {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError(f"image must be at least 1x1, got {data.shape[1]}x{data.shape[0]}")
        if not np.all(np.isfinite(data)):
            raise ValueError("image contains non-finite values")
        if data.min() < 0.0 or data.max() > 1.0:
            raise ValueError("image values must lie in [0, 1]")
        object.__setattr__(self, "data", data)

    @classmethod
    def from_array(cls, arr, clip: bool = True) -> "ImageBuffer":
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim == 2:
            arr = np.repeat(arr[:, :, None], 3, axis=2)
        return cls(np.clip(arr, 0.0, 1.0) if clip else arr)

    @classmethod
    def constant(cls, width: int, height: int, color) -> "ImageBuffer":
        data = np.empty((height, width, 3))
        data[...] = np.asarray(color, dtype=np.float64)
        return cls(data)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape[0], self.data.shape[1]

    def flat(self) -> np.ndarray:
        """Row-major, channel-interleaved view of length width*height*3."""
        return self.data.reshape(-1)

    def __eq__(self, other):
        if not isinstance(other, ImageBuffer):
            return NotImplemented
        return self.data.shape == other.data.shape and np.array_equal(self.data, other.data)

    def __repr__(self):
        return f"ImageBuffer({self.width}x{self.height})"


def _check_same_shape(a: ImageBuffer, b: ImageBuffer):
    if a.data.shape != b.data.shape:
        raise ValueError(
            f"image dimensions differ: {a.width}x{a.height} vs {b.width}x{b.height}"
        )


def _as_array(img) -> np.ndarray:
    return img.data if isinstance(img, ImageBuffer) else np.asarray(img, dtype=np.float64)


def psnr(a: ImageBuffer, b: ImageBuffer) -> float:
    """Peak signal-to-noise ratio in dB with peak value 1.0.

    Identical images return ``PSNR_CAP`` (99 dB) instead of infinity.
    """
    _check_same_shape(a, b)
    mse = float(np.mean((a.data - b.data) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * np.log10(1.0 / mse))


def gaussian_window_1d(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    w = np.exp(-(x**2) / (2 * sigma**2))
    return w / w.sum()


@numba.njit(cache=True, fastmath=True)
def _valid_filter_stack(x, w):
    # x: (H, W, K); separable correlation keeping fully-covered positions
    h, wd, kk = x.shape
    k = w.shape[0]
    oh, ow = h - k + 1, wd - k + 1
    tmp = np.zeros((h, ow, kk))
    for i in range(h):
        for j in range(ow):
            for u in range(k):
                wu = w[u]
                for c in range(kk):
                    tmp[i, j, c] += wu * x[i, j + u, c]
    out = np.zeros((oh, ow, kk))
    for i in range(oh):
        for u in range(k):
            wu = w[u]
            for j in range(ow):
                for c in range(kk):
                    out[i, j, c] += wu * tmp[i + u, j, c]
    return out


@numba.njit(cache=True, fastmath=True)
def _valid_filter_adjoint_stack(g, w, h, wd):
    # transpose of _valid_filter_stack: scatter every window back to its pixels
    oh, ow, kk = g.shape
    k = w.shape[0]
    tmp = np.zeros((h, ow, kk))
    for i in range(oh):
        for u in range(k):
            wu = w[u]
            for j in range(ow):
                for c in range(kk):
                    tmp[i + u, j, c] += wu * g[i, j, c]
    out = np.zeros((h, wd, kk))
    for i in range(h):
        for j in range(ow):
            for u in range(k):
                wu = w[u]
                for c in range(kk):
                    out[i, j + u, c] += wu * tmp[i, j, c]
    return out


def ssim_with_grad(x: np.ndarray, y: np.ndarray, want_grad: bool = True):
    """Mean SSIM of ``x`` against ``y`` and its gradient with respect to ``x``.

    Both arrays are (H, W, 3). Windows are 11x11 Gaussian (sigma 1.5) and only
    fully-contained window positions are averaged, per channel then across
    channels.
    """
    w = gaussian_window_1d()
    h, wd = x.shape[:2]
    if h < SSIM_WINDOW or wd < SSIM_WINDOW:
        raise ValueError(f"SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {wd}x{h}")
    stack = np.empty(x.shape[:2] + (15,))
    stack[:, :, 0:3] = x
    stack[:, :, 3:6] = y
    stack[:, :, 6:9] = x * x
    stack[:, :, 9:12] = y * y
    stack[:, :, 12:15] = x * y
    moments = _valid_filter_stack(stack, w)
    total, coeffs = _ssim_pointwise(moments, want_grad)
    n_windows = moments.shape[0] * moments.shape[1] * 3
    value = total / n_windows
    if not want_grad:
        return value, None
    back = _valid_filter_adjoint_stack(coeffs / n_windows, w, h, wd)
    grad = back[:, :, 0:3] + 2 * x * back[:, :, 3:6] + y * back[:, :, 6:9]
    return value, grad


@numba.njit(cache=True, fastmath=True)
def _ssim_pointwise(m, want_grad):
    # m holds windowed (mean_x, mean_y, E[x^2], E[y^2], E[xy]) per channel;
    # coeffs are d SSIM / d (mean_x, E[x^2], E[xy]) per window
    oh, ow = m.shape[0], m.shape[1]
    coeffs = np.zeros((oh, ow, 9)) if want_grad else np.zeros((0, 0, 9))
    total = 0.0
    for i in range(oh):
        for j in range(ow):
            for c in range(3):
                mx = m[i, j, c]
                my = m[i, j, 3 + c]
                vx = m[i, j, 6 + c] - mx * mx
                vy = m[i, j, 9 + c] - my * my
                cxy = m[i, j, 12 + c] - mx * my
                num1 = 2.0 * mx * my + SSIM_C1
                num2 = 2.0 * cxy + SSIM_C2
                den1 = mx * mx + my * my + SSIM_C1
                den2 = vx + vy + SSIM_C2
                s = (num1 * num2) / (den1 * den2)
                total += s
                if want_grad:
                    ds_dvx = -s / den2
                    ds_dcxy = 2.0 * s / num2
                    coeffs[i, j, c] = (
                        s * (2.0 * my / num1 - 2.0 * mx / den1) - 2.0 * mx * ds_dvx - my * ds_dcxy
                    )
                    coeffs[i, j, 3 + c] = ds_dvx
                    coeffs[i, j, 6 + c] = ds_dcxy
    return total, coeffs


def ssim(a: ImageBuffer, b: ImageBuffer) -> float:
    """Mean structural similarity (11x11 Gaussian window, sigma 1.5)."""
    _check_same_shape(a, b)
    return ssim_with_grad(a.data, b.data, want_grad=False)[0]


# --- file I/O ---------------------------------------------------------------


def _quantize(img: ImageBuffer) -> np.ndarray:
    return np.clip(np.floor(img.data * 255.0 + 0.5), 0, 255).astype(np.uint8)


def _read_ppm(raw: bytes) -> np.ndarray:
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ImageFormatError("truncated PPM header")
        tokens.append(raw[start:pos])
    if tokens[0] != b"P6":
        raise ImageFormatError(f"unsupported PPM magic {tokens[0]!r} (only P6)")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise ImageFormatError(f"malformed PPM header: {exc}") from None
    if width < 1 or height < 1:
        raise ImageFormatError(f"invalid PPM dimensions {width}x{height}")
    if maxval != 255:
        raise ImageFormatError(f"unsupported PPM maxval {maxval} (only 8-bit)")
    pos += 1  # single whitespace byte after maxval
    expected = width * height * 3
    body = raw[pos : pos + expected]
    if len(body) != expected:
        raise ImageFormatError(f"truncated PPM data: expected {expected} bytes, got {len(body)}")
    return np.frombuffer(body, dtype=np.uint8).reshape(height, width, 3)


def load_image(path) -> ImageBuffer:
    """Load an 8-bit PNG or binary PPM (P6) file as an RGB buffer."""
    path = Path(path)
    raw = path.read_bytes()
    if raw[:2] == b"P6" or path.suffix.lower() in (".ppm", ".pnm"):
        arr = _read_ppm(raw)
    elif raw[:8] == b"\x89PNG\r\n\x1a\n":
        from PIL import Image

        try:
            with Image.open(io.BytesIO(raw)) as im:
                if im.mode not in ("RGB", "RGBA", "L", "LA", "P"):
                    raise ImageFormatError(f"unsupported PNG mode {im.mode}")
                arr = np.asarray(im.convert("RGB"))
        except ImageFormatError:
            raise
        except Exception as exc:  # PIL raises assorted types for corrupt data
            raise ImageFormatError(f"cannot decode PNG {path}: {exc}") from exc
    else:
        raise ImageFormatError(f"unsupported image format: {path}")
    return ImageBuffer(arr.astype(np.float64) / 255.0)


def save_image(img: ImageBuffer, path) -> None:
    path = Path(path)
    q = _quantize(img)
    suffix = path.suffix.lower()
    if suffix in (".ppm", ".pnm"):
        header = f"P6\n{img.width} {img.height}\n255\n".encode("ascii")
        path.write_bytes(header + q.tobytes())
    elif suffix == ".png":
        from PIL import Image

        Image.fromarray(q, mode="RGB").save(path, format="PNG")
    else:
        raise ImageFormatError(f"unsupported output format {suffix!r} (use .png or .ppm)")


# --- metrics records --------------------------------------------------------


@dataclass(frozen=True)
class MetricsRecord:
    iteration: int
    psnr: float
    ssim: float
    gaussian_count: int
    peak_gaussian_count: int
    wall_time: float
    level: int
    kernel_size: int = 1

    def __post_init__(self):
        if self.peak_gaussian_count < self.gaussian_count:
            raise ValueError("peak_gaussian_count must be >= gaussian_count")


METRICS_FIELDS = [f.name for f in fields(MetricsRecord)]


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_metrics_csv(records, path, include_wall_time: bool = True) -> None:
    cols = [c for c in METRICS_FIELDS if include_wall_time or c != "wall_time"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(cols)
        for rec in records:
            row = dict(zip(METRICS_FIELDS, astuple(rec)))
            writer.writerow([_fmt(row[c]) for c in cols])


def read_metrics_csv(path) -> list[MetricsRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for row in rows:
        out.append(
            MetricsRecord(
                iteration=int(row["iteration"]),
                psnr=float(row["psnr"]),
                ssim=float(row["ssim"]),
                gaussian_count=int(row["gaussian_count"]),
                peak_gaussian_count=int(row["peak_gaussian_count"]),
                wall_time=float(row.get("wall_time", 0.0) or 0.0),
                level=int(row["level"]),
                kernel_size=int(row.get("kernel_size", 1) or 1),
            )
        )
    return out
