"""Point-cloud geometry: neighbour search, sampling, patching."""
from .kernels import BACKEND
from .points import (
    Patch,
    PatchSet,
    add_noise,
    as_cloud,
    denormalize_points,
    extract_patches,
    fps,
    knn,
    knn_batch,
    merge_upsampled,
    min_spacing,
    normalize_points,
)

__all__ = [
    "BACKEND", "Patch", "PatchSet", "add_noise", "as_cloud", "denormalize_points",
    "extract_patches", "fps", "knn", "knn_batch", "merge_upsampled", "min_spacing",
    "normalize_points",
]
