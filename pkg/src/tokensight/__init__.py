"""Black-box region attribution for autoregressive multimodal models."""

__version__ = "0.1.0"

from .imgio import Image, ImageLoadError, load_image
from .partition import (
    KeepSet,
    RegionPartition,
    SaliencyMap,
    compose_masked_image,
    grid_partition,
    rasterize_saliency,
)
from .slico import slico_partition

__all__ = [
    "Image",
    "ImageLoadError",
    "KeepSet",
    "RegionPartition",
    "SaliencyMap",
    "compose_masked_image",
    "grid_partition",
    "load_image",
    "rasterize_saliency",
    "slico_partition",
]
