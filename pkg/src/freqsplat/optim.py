"""Adam updates over the parameter groups of a GaussianSet."""

from __future__ import annotations

import numpy as np

from .splat.gaussians import GaussianSet


class Adam:
    """Adam with one learning rate per parameter group.

    Moments are stored on the GaussianSet itself so they follow Gaussians
    through densification and pruning.
    """

    def __init__(self, lrs: dict, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-15):
        self.lrs = dict(lrs)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps

    def step(self, gs: GaussianSet, grads: dict, lr_overrides: dict | None = None) -> None:
        gs.step += 1
        bc1 = 1.0 - self.beta1**gs.step
        bc2 = 1.0 - self.beta2**gs.step
        lrs = dict(self.lrs, **(lr_overrides or {}))
        for name, g in grads.items():
            m, v = gs.moments[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            denom = np.sqrt(v / bc2) + self.eps
            gs.params[name] -= (lrs[name] / bc1) * m / denom
