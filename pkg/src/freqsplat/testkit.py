"""Independent reference implementations used to check the fast code paths.

Nothing here imports the production code it validates;
everything is written out directly and favours clarity over speed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imaging import ImageBuffer


@dataclass
class OracleReport:
    name: str
    max_abs_error: float
    max_rel_error: float
    passed: bool
    cases: int

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"[{status}] {self.name}: cases={self.cases} "
            f"max_abs={self.max_abs_error:.3e} max_rel={self.max_rel_error:.3e}"
        )


# --- convolution ------------------------------------------------------------


def naive_convolve(img: ImageBuffer, kernel, padding: str = "edge") -> ImageBuffer:
    """Literal quadruple loop over output pixels and kernel taps."""
    weights = np.asarray(getattr(kernel, "weights", kernel), dtype=np.float64)
    padding = getattr(padding, "value", padding)
    f = img.data
    h, w = f.shape[:2]
    size = weights.shape[0]
    if size > min(h, w):
        raise ValueError("kernel larger than image")
    k = size // 2

    def sample(i, j):
        if padding == "edge":
            return f[min(max(i, 0), h - 1), min(max(j, 0), w - 1)]
        if padding == "reflect":
            i = -i - 1 if i < 0 else (2 * h - i - 1 if i >= h else i)
            j = -j - 1 if j < 0 else (2 * w - j - 1 if j >= w else j)
            return f[i, j]
        if 0 <= i < h and 0 <= j < w:
            return f[i, j]
        return np.zeros(3)

    out = np.zeros_like(f)
    for i in range(h):
        for j in range(w):
            acc = np.zeros(3)
            for u in range(-k, k + 1):
                for v in range(-k, k + 1):
                    acc = acc + weights[u + k, v + k] * sample(i - u, j - v)
            out[i, j] = acc
    return ImageBuffer(np.clip(out, 0.0, 1.0))


def naive_bilateral(img: ImageBuffer, size: int, sigma_spatial: float, sigma_range: float) -> np.ndarray:
    f = img.data
    h, w = f.shape[:2]
    k = size // 2
    out = np.zeros_like(f)
    for i in range(h):
        for j in range(w):
            for ch in range(3):
                num = 0.0
                den = 0.0
                centre = f[i, j, ch]
                for u in range(-k, k + 1):
                    for v in range(-k, k + 1):
                        val = f[min(max(i + u, 0), h - 1), min(max(j + v, 0), w - 1), ch]
                        wt = np.exp(-(u * u + v * v) / (2 * sigma_spatial**2)) * np.exp(
                            -((val - centre) ** 2) / (2 * sigma_range**2)
                        )
                        num += wt * val
                        den += wt
                out[i, j, ch] = num / den
    return out


def naive_sobel_magnitude(img: ImageBuffer) -> np.ndarray:
    f = img.data
    h, w = f.shape[:2]
    out = np.zeros_like(f)

    def px(i, j):
        return f[min(max(i, 0), h - 1), min(max(j, 0), w - 1)]

    for i in range(h):
        for j in range(w):
            gx = (px(i - 1, j + 1) + 2 * px(i, j + 1) + px(i + 1, j + 1)) - (
                px(i - 1, j - 1) + 2 * px(i, j - 1) + px(i + 1, j - 1)
            )
            gy = (px(i + 1, j - 1) + 2 * px(i + 1, j) + px(i + 1, j + 1)) - (
                px(i - 1, j - 1) + 2 * px(i - 1, j) + px(i - 1, j + 1)
            )
            out[i, j] = np.sqrt(gx**2 + gy**2) / (4 * np.sqrt(2))
    return out


# --- metrics ----------------------------------------------------------------


def naive_psnr(a: np.ndarray, b: np.ndarray) -> float:
    total = 0.0
    n = 0
    for x, y in zip(np.ravel(a), np.ravel(b)):
        total += (float(x) - float(y)) ** 2
        n += 1
    mse = total / n
    return 99.0 if mse == 0 else 10 * np.log10(1.0 / mse)


def _gauss_window(size=11, sigma=1.5):
    r = size // 2
    u = np.arange(-r, r + 1)
    g2 = np.exp(-(u[:, None] ** 2 + u[None, :] ** 2) / (2 * sigma**2))
    return g2 / g2.sum()


def naive_ssim(a: np.ndarray, b: np.ndarray, size: int = 11, sigma: float = 1.5) -> float:
    """Explicit loop over every fully-contained window position and channel."""
    win = _gauss_window(size, sigma)
    c1, c2 = 0.01**2, 0.03**2
    h, w = a.shape[:2]
    vals = []
    for ch in range(a.shape[2]):
        for i in range(h - size + 1):
            for j in range(w - size + 1):
                x = a[i : i + size, j : j + size, ch]
                y = b[i : i + size, j : j + size, ch]
                mx = (win * x).sum()
                my = (win * y).sum()
                vx = (win * (x - mx) ** 2).sum()
                vy = (win * (y - my) ** 2).sum()
                cxy = (win * (x - mx) * (y - my)).sum()
                vals.append(
                    ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx**2 + my**2 + c1) * (vx + vy + c2))
                )
    return float(np.mean(vals))


def windowed_ssim(a: np.ndarray, b: np.ndarray, size: int = 11, sigma: float = 1.5) -> float:
    """Same definition as ``naive_ssim`` with the window loop vectorized."""
    from numpy.lib.stride_tricks import sliding_window_view

    win = _gauss_window(size, sigma)
    c1, c2 = 0.01**2, 0.03**2
    xa = sliding_window_view(a, (size, size), axis=(0, 1))
    xb = sliding_window_view(b, (size, size), axis=(0, 1))
    mx = np.einsum("ijcuv,uv->ijc", xa, win)
    my = np.einsum("ijcuv,uv->ijc", xb, win)
    dx = xa - mx[..., None, None]
    dy = xb - my[..., None, None]
    vx = np.einsum("ijcuv,uv->ijc", dx * dx, win)
    vy = np.einsum("ijcuv,uv->ijc", dy * dy, win)
    cxy = np.einsum("ijcuv,uv->ijc", dx * dy, win)
    smap = ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx**2 + my**2 + c1) * (vx + vy + c2))
    return float(smap.mean())


# --- rendering and gradients ------------------------------------------------


def dense_render(
    gs,
    width: int,
    height: int,
    background=(0.0, 0.0, 0.0),
    order=None,
    cull_sigma=None,
    transmittance_floor: float = 0.0,
    alpha_map=None,
) -> np.ndarray:
    """Direct evaluation of front-to-back compositing over the full pixel grid.

    ``order`` fixes the blend order (defaults to sorting by depth key then
    creation index). ``alpha_map`` optionally transforms each Gaussian's
    per-pixel alpha array before blending.
    """
    p = gs.params
    n = len(gs.depth_key)
    if order is None:
        order = sorted(range(n), key=lambda i: (gs.depth_key[i], gs.creation_index[i]))
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    out = np.zeros((height, width, 3))
    trans = np.ones((height, width))
    for i in order:
        th = p["rotation"][i]
        rot = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
        cov = rot @ np.diag(np.exp(2 * p["log_scale"][i])) @ rot.T
        inv = np.linalg.inv(cov)
        dx = xs - p["position"][i, 0]
        dy = ys - p["position"][i, 1]
        maha = inv[0, 0] * dx * dx + (inv[0, 1] + inv[1, 0]) * dx * dy + inv[1, 1] * dy * dy
        opacity = 1.0 / (1.0 + np.exp(-p["raw_opacity"][i]))
        a = opacity * np.exp(-0.5 * maha)
        if cull_sigma is not None:
            a = np.where(maha > cull_sigma**2, 0.0, a)
        a = np.where(trans < transmittance_floor, 0.0, a)
        if alpha_map is not None:
            a = alpha_map(a)
        col = np.clip(p["color"][i], 0.0, 1.0)
        out += (trans * a)[..., None] * col
        trans = trans * (1.0 - a)
    out += trans[..., None] * np.asarray(background, dtype=np.float64)
    return out


def reference_loss(img: np.ndarray, target: np.ndarray, lam: float = 0.2) -> float:
    l1 = np.abs(img - target).mean()
    return float((1 - lam) * l1 + lam * (1 - windowed_ssim(img, target)))


def finite_diff_gradients(gs, target, h: float = 1e-4, lam: float = 0.2, background=(0.0, 0.0, 0.0)) -> dict:
    """Central differences of the training loss w.r.t. every scalar parameter.

    Blend order is frozen to the base scene's order so depth ties cannot
    introduce jumps.
    """
    tgt = target.data if isinstance(target, ImageBuffer) else np.asarray(target, dtype=np.float64)
    height, width = tgt.shape[:2]
    n = len(gs.depth_key)
    order = sorted(range(n), key=lambda i: (gs.depth_key[i], gs.creation_index[i]))

    def loss():
        img = dense_render(gs, width, height, background, order=order)
        return reference_loss(img, tgt, lam)

    grads = {}
    for name, arr in gs.params.items():
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + h
            lp = loss()
            flat[k] = orig - h
            lm = loss()
            flat[k] = orig
            gflat[k] = (lp - lm) / (2 * h)
        grads[name] = g
    return grads


def compare_gradients(analytic: dict, numeric: dict, rel_tol: float = 1e-4, abs_floor: float = 1e-7,
                      name: str = "gradients") -> OracleReport:
    """Relative error |a - n| / max(|a|, |n|, abs_floor) over every scalar."""
    max_abs = 0.0
    max_rel = 0.0
    cases = 0
    for key, num in numeric.items():
        a = np.asarray(analytic[key]).reshape(-1)
        b = np.asarray(num).reshape(-1)
        err = np.abs(a - b)
        rel = err / np.maximum(np.maximum(np.abs(a), np.abs(b)), abs_floor)
        cases += a.size
        if a.size:
            max_abs = max(max_abs, float(err.max()))
            max_rel = max(max_rel, float(rel.max()))
    return OracleReport(name, max_abs, max_rel, max_rel < rel_tol, cases)


def chi_square_uniform(counts) -> float:
    """p-value of a chi-square goodness-of-fit test against uniform counts."""
    from scipy import stats

    counts = np.asarray(counts, dtype=np.float64).ravel()
    expected = np.full_like(counts, counts.sum() / counts.size)
    return float(stats.chisquare(counts, expected).pvalue)
