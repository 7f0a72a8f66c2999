"""Adaptive density control: clone, split, prune and opacity reset."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .splat.gaussians import GaussianSet, inverse_sigmoid, sigmoid


@dataclass(frozen=True)
class AdcConfig:
    densification_interval: int = 500
    densify_grad_threshold: float = 0.0001
    prune_opacity_threshold: float = 0.005
    # clone when max scale <= this fraction of the scene extent, else split
    split_scale_threshold: float = 0.01
    opacity_reset_interval: int = 3000
    opacity_reset_ceiling: float = 0.01
    densify_until_iteration: int = 15000
    split_children: int = 2
    split_scale_shrink: float = 1.6
    # 0 means unbounded; otherwise densification never grows the set past it
    max_gaussians: int = 0
    # gradient statistics are rescaled as if the image had this many pixels
    reference_pixels: float = 1e7

    def __post_init__(self):
        if self.densification_interval < 1:
            raise ValueError("densification_interval must be >= 1")
        for name in (
            "densify_grad_threshold",
            "prune_opacity_threshold",
            "split_scale_threshold",
            "opacity_reset_ceiling",
            "split_scale_shrink",
            "reference_pixels",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.split_children < 1:
            raise ValueError("split_children must be >= 1")
        if self.opacity_reset_interval < 1:
            raise ValueError("opacity_reset_interval must be >= 1")
        if self.max_gaussians < 0:
            raise ValueError("max_gaussians must be >= 0")

    def grad_stat_scale(self, width: int, height: int) -> float:
        """Factor mapping NDC gradients of a ``width`` x ``height`` image to the reference size.

        A Gaussian's NDC-space gradient grows with the fraction of the image it
        covers; scaling by sqrt(pixels / reference_pixels) makes the threshold
        refer to absolute footprints instead of image fractions.
        """
        return (width * height / self.reference_pixels) ** 0.5

    def densify_due(self, iteration: int) -> bool:
        return iteration % self.densification_interval == 0 and iteration < self.densify_until_iteration

    def reset_due(self, iteration: int) -> bool:
        return iteration % self.opacity_reset_interval == 0 and iteration < self.densify_until_iteration


@dataclass(frozen=True)
class MutationReport:
    iteration: int
    cloned: int
    split: int
    pruned: int
    total: int
    peak: int


def _toward_camera(depth_key: np.ndarray) -> np.ndarray:
    return np.nextafter(depth_key, -np.inf)


def densify_and_prune(gs: GaussianSet, cfg: AdcConfig, scene_extent: float, iteration: int,
                      rng: np.random.Generator | None = None) -> MutationReport:
    """One densification step.

    Gaussians whose mean accumulated positional gradient exceeds the threshold
    are cloned (small ones) or split into ``split_children`` samples of their
    own distribution (large ones). Afterwards every Gaussian below the opacity
    threshold is removed and the gradient statistics are cleared.
    """
    old_total = len(gs)
    if old_total == 0:
        return MutationReport(iteration, 0, 0, 0, 0, gs.peak_count)
    rng = rng if rng is not None else np.random.default_rng(0)

    mean_grad = np.where(gs.grad_count > 0, gs.grad_accum / np.maximum(gs.grad_count, 1), 0.0)
    candidates = mean_grad > cfg.densify_grad_threshold
    max_scale = np.exp(gs.params["log_scale"].max(axis=1))
    large = max_scale > cfg.split_scale_threshold * scene_extent

    if cfg.max_gaussians:
        growth_per = np.where(large, cfg.split_children - 1, 1)
        room = cfg.max_gaussians - old_total
        idx = np.flatnonzero(candidates)
        idx = idx[np.argsort(-mean_grad[idx], kind="stable")]
        allowed = np.cumsum(growth_per[idx]) <= max(room, 0)
        candidates = np.zeros_like(candidates)
        candidates[idx[allowed]] = True

    clone_mask = candidates & ~large
    split_mask = candidates & large
    p = gs.params

    # clones: exact copies just in front of the parent
    ci = np.flatnonzero(clone_mask)
    clone_params = {k: v[ci].copy() for k, v in p.items()}
    clone_keys = _toward_camera(gs.depth_key[ci])

    # split children: positions drawn from the parent Gaussian, scales shrunk
    si = np.flatnonzero(split_mask)
    reps = cfg.split_children
    src = np.repeat(si, reps)
    split_params = {k: v[src].copy() for k, v in p.items()}
    if len(src):
        theta = p["rotation"][src]
        c, s = np.cos(theta), np.sin(theta)
        std = np.exp(p["log_scale"][src])
        z = rng.standard_normal((len(src), 2)) * std
        offset = np.stack([c * z[:, 0] - s * z[:, 1], s * z[:, 0] + c * z[:, 1]], axis=1)
        split_params["position"] = p["position"][src] + offset
        split_params["log_scale"] = p["log_scale"][src] - np.log(cfg.split_scale_shrink)
    split_keys = _toward_camera(gs.depth_key[src])

    gs.append(clone_params, clone_keys)
    gs.append(split_params, split_keys)

    keep = np.ones(len(gs), dtype=bool)
    keep[si] = False
    low = sigmoid(gs.params["raw_opacity"]) < cfg.prune_opacity_threshold
    pruned = int(np.count_nonzero(low & keep))
    keep &= ~low
    gs.keep(keep)
    gs.reset_grad_stats()
    return MutationReport(iteration, len(ci), len(si), pruned, len(gs), gs.peak_count)


def reset_opacity(gs: GaussianSet, ceiling: float = 0.01) -> None:
    """Clamp every opacity to at most ``ceiling`` and clear its Adam moments."""
    if len(gs) == 0:
        return
    limit = float(inverse_sigmoid(ceiling))
    raw = gs.params["raw_opacity"]
    gs.params["raw_opacity"] = np.minimum(raw, limit)
    m, v = gs.moments["raw_opacity"]
    m[:] = 0.0
    v[:] = 0.0
