"""Front-to-back alpha compositing of 2D Gaussians with analytic gradients.

Per pixel, Gaussians sorted by depth blend as

    C = sum_i c_i a_i prod_{j<i} (1 - a_j) + T_final * background

where a_i = opacity_i * exp(-0.5 d^T Sigma_i^-1 d) and d is the offset of the
pixel centre from the Gaussian mean. Pixel (row r, col c) sits at (x=c, y=r).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from ..imaging import ImageBuffer, ssim_with_grad
from .gaussians import GaussianSet, sigmoid


@dataclass(frozen=True)
class RenderSettings:
    background: tuple[float, float, float] = (0.0, 0.0, 0.0)
    # per-pixel cull radius in standard deviations; None disables culling
    cull_sigma: float | None = 3.0
    # blending at a pixel stops once transmittance drops below this
    transmittance_floor: float = 1e-4


@dataclass(frozen=True)
class LossConfig:
    # weight of the (1 - SSIM) term against L1
    lambda_dssim: float = 0.2


@dataclass
class RenderOutput:
    image: ImageBuffer
    per_pixel_contributor_count: np.ndarray
    # number of pixels each Gaussian was blended into, in set order
    pixels_touched: np.ndarray = field(default=None)


@dataclass
class BackwardResult:
    loss: float
    grads: dict
    image: np.ndarray
    pixels_touched: np.ndarray
    l1: float = 0.0
    ssim: float = 0.0


# --- per-Gaussian precomputation --------------------------------------------

# finite stand-in for "no culling"; fastmath kernels may not compare against inf
_NO_CULL = 1e300


def _prepare(gs: GaussianSet, width: int, height: int, settings: RenderSettings):
    order = gs.render_order()
    p = gs.params
    pos = p["position"][order]
    ls = p["log_scale"][order]
    theta = p["rotation"][order]
    alpha = sigmoid(p["raw_opacity"][order])
    color = np.clip(p["color"][order], 0.0, 1.0)
    cth, sth = np.cos(theta), np.sin(theta)
    inv1 = np.exp(-2.0 * ls[:, 0])
    inv2 = np.exp(-2.0 * ls[:, 1])
    # conic = Sigma^-1 = R diag(1/s1^2, 1/s2^2) R^T
    ca = cth * cth * inv1 + sth * sth * inv2
    cb = cth * sth * (inv1 - inv2)
    cc = sth * sth * inv1 + cth * cth * inv2
    n = len(order)
    if settings.cull_sigma is None or not math.isfinite(settings.cull_sigma):
        x0 = np.zeros(n, dtype=np.int64)
        y0 = np.zeros(n, dtype=np.int64)
        x1 = np.full(n, width - 1, dtype=np.int64)
        y1 = np.full(n, height - 1, dtype=np.int64)
        cull_q = _NO_CULL
    else:
        k = float(settings.cull_sigma)
        s1sq = np.exp(2.0 * ls[:, 0])
        s2sq = np.exp(2.0 * ls[:, 1])
        rx = k * np.sqrt(cth * cth * s1sq + sth * sth * s2sq)
        ry = k * np.sqrt(sth * sth * s1sq + cth * cth * s2sq)
        with np.errstate(invalid="ignore", over="ignore"):
            x0 = np.clip(np.ceil(pos[:, 0] - rx), 0, width).astype(np.int64)
            x1 = np.clip(np.floor(pos[:, 0] + rx), -1, width - 1).astype(np.int64)
            y0 = np.clip(np.ceil(pos[:, 1] - ry), 0, height).astype(np.int64)
            y1 = np.clip(np.floor(pos[:, 1] + ry), -1, height - 1).astype(np.int64)
        cull_q = k * k
    area = np.maximum(x1 - x0 + 1, 0) * np.maximum(y1 - y0 + 1, 0)
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(area, out=offsets[1:])
    rows = np.maximum(y1 - y0 + 1, 0)
    row_offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(rows, out=row_offsets[1:])
    return dict(
        order=order,
        pos=np.ascontiguousarray(pos),
        conic=np.ascontiguousarray(np.stack([ca, cb, cc], axis=1)) if n else np.zeros((0, 3)),
        alpha=alpha,
        color=np.ascontiguousarray(color),
        bbox=np.ascontiguousarray(np.stack([x0, x1, y0, y1], axis=1)) if n else np.zeros((0, 4), dtype=np.int64),
        offsets=offsets,
        row_offsets=row_offsets,
        cull_q=cull_q,
        cth=cth,
        sth=sth,
        inv1=inv1,
        inv2=inv2,
    )


@numba.njit(cache=True, fastmath=True)
def _forward_kernel(pos, conic, alpha, color, bbox, offsets, row_offsets, cull_q, floor, bg,
                    height, width, t_store, spans):
    # t_store: transmittance in front of each (Gaussian, bbox pixel), -1 if not blended
    # spans: per (Gaussian, bbox row) the [start, end] columns inside the cull ellipse
    n = pos.shape[0]
    img = np.zeros((height, width, 3))
    trans = np.ones((height, width))
    count = np.zeros((height, width), dtype=np.int64)
    touched = np.zeros(n, dtype=np.int64)
    for i in range(n):
        px = pos[i, 0]
        py = pos[i, 1]
        ca = conic[i, 0]
        cb = conic[i, 1]
        cc = conic[i, 2]
        op = alpha[i]
        c0 = color[i, 0]
        c1 = color[i, 1]
        c2 = color[i, 2]
        x0 = bbox[i, 0]
        x1 = bbox[i, 1]
        y0 = bbox[i, 2]
        y1 = bbox[i, 3]
        bw = x1 - x0 + 1
        k = offsets[i]
        r0 = row_offsets[i]
        for y in range(y0, y1 + 1):
            dy = y - py
            xs = x0
            xe = x1
            if cull_q < _NO_CULL:
                # columns where ca dx^2 + 2 cb dy dx + cc dy^2 <= cull_q
                disc = (cb * dy) * (cb * dy) - ca * (cc * dy * dy - cull_q)
                if disc < 0.0:
                    xe = xs - 1
                else:
                    root = math.sqrt(disc)
                    lo = min(max(px + (-cb * dy - root) / ca, x0 - 1.0), x1 + 1.0)
                    hi = min(max(px + (-cb * dy + root) / ca, x0 - 1.0), x1 + 1.0)
                    xs = max(x0, int(math.floor(lo)))
                    xe = min(x1, int(math.ceil(hi)))
            spans[r0 + y - y0, 0] = xs
            spans[r0 + y - y0, 1] = xe
            base = k + (y - y0) * bw - x0
            for x in range(xs, xe + 1):
                t = trans[y, x]
                if t < floor:
                    t_store[base + x] = -1.0
                    continue
                dx = x - px
                q = ca * dx * dx + 2.0 * cb * dx * dy + cc * dy * dy
                if q > cull_q:
                    t_store[base + x] = -1.0
                    continue
                a = op * math.exp(-0.5 * q)
                t_store[base + x] = t
                w = t * a
                img[y, x, 0] += w * c0
                img[y, x, 1] += w * c1
                img[y, x, 2] += w * c2
                trans[y, x] = t * (1.0 - a)
                count[y, x] += 1
                touched[i] += 1
    for y in range(height):
        for x in range(width):
            t = trans[y, x]
            for ch in range(3):
                img[y, x, ch] += t * bg[ch]
    return img, trans, count, touched


@numba.njit(cache=True, fastmath=True)
def _backward_kernel(pos, conic, alpha, color, bbox, offsets, row_offsets, bg, t_store, spans, dimg):
    n = pos.shape[0]
    height = dimg.shape[0]
    width = dimg.shape[1]
    # colour accumulated behind the current Gaussian, as seen from it
    behind = np.empty((height, width, 3))
    for y in range(height):
        for x in range(width):
            for ch in range(3):
                behind[y, x, ch] = bg[ch]
    g_pos = np.zeros((n, 2))
    g_conic = np.zeros((n, 3))
    g_alpha = np.zeros(n)
    g_color = np.zeros((n, 3))
    for i in range(n - 1, -1, -1):
        px = pos[i, 0]
        py = pos[i, 1]
        ca = conic[i, 0]
        cb = conic[i, 1]
        cc = conic[i, 2]
        op = alpha[i]
        c0 = color[i, 0]
        c1 = color[i, 1]
        c2 = color[i, 2]
        x0 = bbox[i, 0]
        x1 = bbox[i, 1]
        y0 = bbox[i, 2]
        y1 = bbox[i, 3]
        bw = x1 - x0 + 1
        k = offsets[i]
        r0 = row_offsets[i]
        s_px = 0.0
        s_py = 0.0
        s_ca = 0.0
        s_cb = 0.0
        s_cc = 0.0
        s_al = 0.0
        s_c0 = 0.0
        s_c1 = 0.0
        s_c2 = 0.0
        for y in range(y0, y1 + 1):
            dy = y - py
            base = k + (y - y0) * bw - x0
            for x in range(spans[r0 + y - y0, 0], spans[r0 + y - y0, 1] + 1):
                t = t_store[base + x]
                if t < 0.0:
                    continue
                dx = x - px
                q = ca * dx * dx + 2.0 * cb * dx * dy + cc * dy * dy
                gq = math.exp(-0.5 * q)
                a = op * gq
                g0 = dimg[y, x, 0]
                g1 = dimg[y, x, 1]
                g2 = dimg[y, x, 2]
                b0 = behind[y, x, 0]
                b1 = behind[y, x, 1]
                b2 = behind[y, x, 2]
                ta = t * a
                s_c0 += g0 * ta
                s_c1 += g1 * ta
                s_c2 += g2 * ta
                dl_da = t * (g0 * (c0 - b0) + g1 * (c1 - b1) + g2 * (c2 - b2))
                s_al += dl_da * gq
                dl_dq = -0.5 * a * dl_da
                s_ca += dl_dq * dx * dx
                s_cb += dl_dq * 2.0 * dx * dy
                s_cc += dl_dq * dy * dy
                s_px += dl_dq * -2.0 * (ca * dx + cb * dy)
                s_py += dl_dq * -2.0 * (cb * dx + cc * dy)
                om = 1.0 - a
                behind[y, x, 0] = a * c0 + om * b0
                behind[y, x, 1] = a * c1 + om * b1
                behind[y, x, 2] = a * c2 + om * b2
        g_pos[i, 0] = s_px
        g_pos[i, 1] = s_py
        g_conic[i, 0] = s_ca
        g_conic[i, 1] = s_cb
        g_conic[i, 2] = s_cc
        g_alpha[i] = s_al
        g_color[i, 0] = s_c0
        g_color[i, 1] = s_c1
        g_color[i, 2] = s_c2
    return g_pos, g_conic, g_alpha, g_color


def _forward(gs: GaussianSet, width: int, height: int, settings: RenderSettings):
    prep = _prepare(gs, width, height, settings)
    t_store = np.empty(int(prep["offsets"][-1]))
    spans = np.empty((int(prep["row_offsets"][-1]), 2), dtype=np.int64)
    bg = np.asarray(settings.background, dtype=np.float64)
    img, trans, count, touched_sorted = _forward_kernel(
        prep["pos"], prep["conic"], prep["alpha"], prep["color"], prep["bbox"],
        prep["offsets"], prep["row_offsets"], prep["cull_q"], float(settings.transmittance_floor), bg,
        height, width, t_store, spans,
    )
    prep["spans"] = spans
    touched = np.empty_like(touched_sorted)
    touched[prep["order"]] = touched_sorted
    return prep, t_store, img, count, touched


def render(gs: GaussianSet, width: int, height: int, background=None,
           settings: RenderSettings | None = None) -> RenderOutput:
    if width < 1 or height < 1:
        raise ValueError(f"render size must be at least 1x1, got {width}x{height}")
    settings = settings or RenderSettings()
    if background is not None:
        settings = RenderSettings(tuple(background), settings.cull_sigma, settings.transmittance_floor)
    _, _, img, count, touched = _forward(gs, width, height, settings)
    return RenderOutput(ImageBuffer(np.clip(img, 0.0, 1.0)), count, touched)


def loss_and_image_grad(img: np.ndarray, target: np.ndarray, lam: float):
    """(1 - lam) * L1 + lam * (1 - SSIM) and its gradient w.r.t. ``img``."""
    diff = img - target
    l1 = float(np.abs(diff).mean())
    s, ds = ssim_with_grad(img, target, want_grad=lam != 0.0)
    loss = (1.0 - lam) * l1 + lam * (1.0 - s)
    grad = (1.0 - lam) * np.sign(diff) / diff.size
    if lam != 0.0:
        grad = grad - lam * ds
    return loss, grad, l1, s


def render_backward(gs: GaussianSet, target: ImageBuffer, loss_cfg: LossConfig | None = None,
                    settings: RenderSettings | None = None, accumulate: bool = True,
                    grad_stat_scale: float = 1.0) -> BackwardResult:
    """Render, evaluate the training loss against ``target`` and backpropagate.

    Gradients are returned per parameter group in set order. With
    ``accumulate`` the NDC-scaled positional gradient norm of every Gaussian
    that touched a pixel, times ``grad_stat_scale``, is added to the set's
    densification statistics.
    """
    loss_cfg = loss_cfg or LossConfig()
    settings = settings or RenderSettings()
    tgt = target.data if isinstance(target, ImageBuffer) else np.asarray(target, dtype=np.float64)
    height, width = tgt.shape[:2]
    prep, t_store, img, _, touched = _forward(gs, width, height, settings)
    img = np.clip(img, 0.0, 1.0)
    loss, dimg, l1, s = loss_and_image_grad(img, tgt, loss_cfg.lambda_dssim)
    bg = np.asarray(settings.background, dtype=np.float64)
    g_pos, g_conic, g_alpha, g_color = _backward_kernel(
        prep["pos"], prep["conic"], prep["alpha"], prep["color"], prep["bbox"],
        prep["offsets"], prep["row_offsets"], bg, t_store, prep["spans"], np.ascontiguousarray(dimg),
    )
    grads = _chain_to_params(prep, g_pos, g_conic, g_alpha, g_color)
    if accumulate and len(gs):
        # NDC units: one NDC unit spans half the image
        ndc = grads["position"] * np.array([0.5 * width, 0.5 * height])
        vis = touched > 0
        gs.grad_accum[vis] += grad_stat_scale * np.linalg.norm(ndc[vis], axis=1)
        gs.grad_count[vis] += 1
    return BackwardResult(loss, grads, img, touched, l1, s)


def _chain_to_params(prep, g_pos, g_conic, g_alpha, g_color) -> dict:
    order = prep["order"]
    alpha = prep["alpha"]
    cth, sth, inv1, inv2 = prep["cth"], prep["sth"], prep["inv1"], prep["inv2"]
    ga, gb, gc = g_conic[:, 0], g_conic[:, 1], g_conic[:, 2]
    # conic entries as functions of log scales and rotation
    d_ls1 = -2.0 * inv1 * (ga * cth * cth + gb * cth * sth + gc * sth * sth)
    d_ls2 = -2.0 * inv2 * (ga * sth * sth - gb * cth * sth + gc * cth * cth)
    diff = inv1 - inv2
    d_theta = diff * (-2.0 * cth * sth * ga + (cth * cth - sth * sth) * gb + 2.0 * cth * sth * gc)
    d_raw = g_alpha * alpha * (1.0 - alpha)

    n = len(order)
    out = {
        "position": np.empty((n, 2)),
        "log_scale": np.empty((n, 2)),
        "rotation": np.empty(n),
        "raw_opacity": np.empty(n),
        "color": np.empty((n, 3)),
    }
    out["position"][order] = g_pos
    out["log_scale"][order, 0] = d_ls1
    out["log_scale"][order, 1] = d_ls2
    out["rotation"][order] = d_theta
    out["raw_opacity"][order] = d_raw
    out["color"][order] = g_color
    return out
