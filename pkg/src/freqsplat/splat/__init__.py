from .gaussians import (
    PARAM_GROUPS,
    Gaussian2D,
    GaussianSet,
    covariance_of,
    inverse_sigmoid,
    rotation_matrix,
    sigmoid,
)
from .raster import (
    BackwardResult,
    LossConfig,
    RenderOutput,
    RenderSettings,
    loss_and_image_grad,
    render,
    render_backward,
)
from .snapshot import SnapshotError, load_snapshot, save_snapshot

__all__ = [
    "PARAM_GROUPS",
    "BackwardResult",
    "Gaussian2D",
    "GaussianSet",
    "LossConfig",
    "RenderOutput",
    "RenderSettings",
    "SnapshotError",
    "covariance_of",
    "inverse_sigmoid",
    "load_snapshot",
    "loss_and_image_grad",
    "render",
    "render_backward",
    "rotation_matrix",
    "save_snapshot",
    "sigmoid",
]
