"""2D Gaussian primitives and the struct-of-arrays scene container."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# learnable parameter groups and their per-Gaussian widths
PARAM_GROUPS = {
    "position": 2,
    "log_scale": 2,
    "rotation": 1,
    "raw_opacity": 1,
    "color": 3,
}


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def inverse_sigmoid(p):
    p = np.asarray(p, dtype=np.float64)
    return np.log(p) - np.log1p(-p)


@dataclass
class Gaussian2D:
    position: tuple[float, float]
    log_scale: tuple[float, float]
    rotation: float
    raw_opacity: float
    color: tuple[float, float, float]
    depth_key: float
    creation_index: int = 0

    @property
    def opacity(self) -> float:
        return float(sigmoid(self.raw_opacity))

    @property
    def scale(self) -> np.ndarray:
        return np.exp(np.asarray(self.log_scale, dtype=np.float64))


def rotation_matrix(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def covariance_of(g: Gaussian2D) -> np.ndarray:
    """Sigma = R S S^T R^T with S = diag(exp(log_scale))."""
    r = rotation_matrix(g.rotation)
    s = np.diag(np.exp(np.asarray(g.log_scale, dtype=np.float64)))
    m = r @ s
    cov = m @ m.T
    return 0.5 * (cov + cov.T)


class GaussianSet:
    """Dynamic collection of Gaussians plus optimizer and densification state.

    Parameters live in ``params`` as arrays whose first axis indexes Gaussians.
    ``moments`` holds Adam first/second moments with the same layout, and
    ``grad_accum``/``grad_count`` collect positional gradient norms between
    densification steps.
    """

    def __init__(self, params: dict, depth_key, creation_index, next_index: int | None = None):
        n = len(depth_key)
        self.params = {}
        for name, width in PARAM_GROUPS.items():
            arr = np.asarray(params[name], dtype=np.float64)
            arr = arr.reshape(n) if width == 1 else arr.reshape(n, width)
            self.params[name] = arr.copy()
        self.depth_key = np.asarray(depth_key, dtype=np.float64).copy()
        self.creation_index = np.asarray(creation_index, dtype=np.int64).copy()
        self.next_index = int(next_index if next_index is not None else (self.creation_index.max() + 1 if n else 0))
        self.moments = {k: (np.zeros_like(v), np.zeros_like(v)) for k, v in self.params.items()}
        self.step = 0
        self.grad_accum = np.zeros(n)
        self.grad_count = np.zeros(n, dtype=np.int64)
        self.peak_count = n

    @classmethod
    def empty(cls) -> "GaussianSet":
        params = {k: np.zeros((0, w)) if w > 1 else np.zeros(0) for k, w in PARAM_GROUPS.items()}
        return cls(params, np.zeros(0), np.zeros(0, dtype=np.int64), 0)

    @classmethod
    def from_gaussians(cls, gaussians) -> "GaussianSet":
        gaussians = list(gaussians)
        if not gaussians:
            return cls.empty()
        params = {
            "position": [g.position for g in gaussians],
            "log_scale": [g.log_scale for g in gaussians],
            "rotation": [g.rotation for g in gaussians],
            "raw_opacity": [g.raw_opacity for g in gaussians],
            "color": [g.color for g in gaussians],
        }
        return cls(
            params,
            [g.depth_key for g in gaussians],
            [g.creation_index for g in gaussians],
        )

    def __len__(self) -> int:
        return len(self.depth_key)

    def __getitem__(self, i: int) -> Gaussian2D:
        p = self.params
        return Gaussian2D(
            position=tuple(p["position"][i]),
            log_scale=tuple(p["log_scale"][i]),
            rotation=float(p["rotation"][i]),
            raw_opacity=float(p["raw_opacity"][i]),
            color=tuple(p["color"][i]),
            depth_key=float(self.depth_key[i]),
            creation_index=int(self.creation_index[i]),
        )

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @property
    def opacity(self) -> np.ndarray:
        return sigmoid(self.params["raw_opacity"])

    def copy(self) -> "GaussianSet":
        out = GaussianSet(self.params, self.depth_key, self.creation_index, self.next_index)
        out.moments = {k: (m.copy(), v.copy()) for k, (m, v) in self.moments.items()}
        out.step = self.step
        out.grad_accum = self.grad_accum.copy()
        out.grad_count = self.grad_count.copy()
        out.peak_count = self.peak_count
        return out

    def render_order(self) -> np.ndarray:
        """Indices sorted front-to-back by (depth_key, creation_index)."""
        return np.lexsort((self.creation_index, self.depth_key))

    # -- structural mutation; keeps every per-Gaussian array in step --

    def keep(self, mask) -> None:
        mask = np.asarray(mask, dtype=bool)
        for k in self.params:
            self.params[k] = self.params[k][mask]
            m, v = self.moments[k]
            self.moments[k] = (m[mask], v[mask])
        self.depth_key = self.depth_key[mask]
        self.creation_index = self.creation_index[mask]
        self.grad_accum = self.grad_accum[mask]
        self.grad_count = self.grad_count[mask]

    def append(self, params: dict, depth_key) -> None:
        """Add Gaussians with zeroed optimizer moments and fresh creation indices."""
        n_new = len(depth_key)
        if n_new == 0:
            return
        for k in self.params:
            new = np.asarray(params[k], dtype=np.float64).reshape((n_new,) + self.params[k].shape[1:])
            self.params[k] = np.concatenate([self.params[k], new])
            m, v = self.moments[k]
            self.moments[k] = (
                np.concatenate([m, np.zeros_like(new)]),
                np.concatenate([v, np.zeros_like(new)]),
            )
        self.depth_key = np.concatenate([self.depth_key, np.asarray(depth_key, dtype=np.float64)])
        idx = np.arange(self.next_index, self.next_index + n_new, dtype=np.int64)
        self.creation_index = np.concatenate([self.creation_index, idx])
        self.next_index += n_new
        self.grad_accum = np.concatenate([self.grad_accum, np.zeros(n_new)])
        self.grad_count = np.concatenate([self.grad_count, np.zeros(n_new, dtype=np.int64)])
        self.peak_count = max(self.peak_count, len(self))

    def reset_grad_stats(self) -> None:
        self.grad_accum[:] = 0.0
        self.grad_count[:] = 0
