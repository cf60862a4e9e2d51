"""Pipeline configuration shared by the CLI and scripts."""
from __future__ import annotations

from dataclasses import dataclass, field

from .geometry import PROJECTIONS, Camera
from .losses import LossWeights
from .pointcloud import DEFAULT_KNN, DEFAULT_THRESHOLD
from .render import DEFAULT_LAYERS

DEFAULT_RESOLUTION = 512
MAX_LAYERS = 16


@dataclass
class PipelineConfig:
    resolution: int = DEFAULT_RESOLUTION
    layers: int = DEFAULT_LAYERS
    projection: str = "perspective"
    weights: LossWeights = field(default_factory=LossWeights)
    knn: int = DEFAULT_KNN
    threshold: float = DEFAULT_THRESHOLD
    seed: int = 0

    def __post_init__(self):
        if self.resolution < 16:
            raise ValueError("resolution must be >= 16")
        if not 1 <= self.layers <= MAX_LAYERS:
            raise ValueError(f"layers must be in [1, {MAX_LAYERS}]")
        if self.projection not in PROJECTIONS:
            raise ValueError(f"projection must be one of {PROJECTIONS}")
        if self.knn < 1:
            raise ValueError("knn must be >= 1")

    def camera(self) -> Camera:
        return Camera.default(self.resolution, projection=self.projection)
