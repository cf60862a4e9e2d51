"""Colored point clouds from peel maps, density filtering and normals."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from .errors import ResolutionMismatch, TooFewPoints
from .geometry import Camera
from .meshio import read_ply_data, write_ply
from .render import PeelStack

DEFAULT_KNN = 16
DEFAULT_THRESHOLD = 0.01


@dataclass(eq=False)
class ColoredPointCloud:
    positions: np.ndarray
    colors: np.ndarray
    layer: np.ndarray
    normals: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        n = len(self.positions)
        self.colors = np.asarray(self.colors, dtype=np.float64).reshape(-1, 3)
        self.layer = np.asarray(self.layer, dtype=np.uint8).reshape(-1)
        if len(self.colors) != n or len(self.layer) != n:
            raise ValueError("point attributes must match the number of points")
        if self.normals is not None:
            self.normals = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
            if len(self.normals) != n:
                raise ValueError("normals must match the number of points")

    def __len__(self) -> int:
        return len(self.positions)

    def subset(self, keep: np.ndarray) -> "ColoredPointCloud":
        return ColoredPointCloud(
            self.positions[keep], self.colors[keep], self.layer[keep],
            None if self.normals is None else self.normals[keep], dict(self.meta),
        )

    def diagonal(self) -> float:
        if len(self) == 0:
            return 0.0
        return float(np.linalg.norm(self.positions.max(0) - self.positions.min(0)))


def backproject(depth: PeelStack, rgb: Optional[PeelStack] = None, fg: Optional[np.ndarray] = None) -> ColoredPointCloud:
    """One point per non-empty (pixel, layer): ray origin + d * direction.

    Colors come from ``rgb`` (or ``depth.rgb``), black when absent. With
    ``fg`` given, only foreground pixels are emitted. Points are ordered by
    layer, then row-major pixel order.
    """
    cam = depth.camera
    colors = None
    if rgb is not None:
        if rgb.depth.shape != depth.depth.shape or rgb.camera != cam:
            raise ResolutionMismatch("depth and rgb stacks must share camera and resolution")
        colors = rgb.rgb
    elif depth.rgb is not None:
        colors = depth.rgb
    valid = depth.depth > 0
    if fg is not None:
        fg = np.asarray(fg)
        if fg.shape != depth.depth.shape[1:]:
            raise ResolutionMismatch(f"foreground {fg.shape} vs stack {depth.depth.shape[1:]}")
        valid &= fg.astype(bool)[None]
    layer, rows, cols = np.nonzero(valid)
    origins, dirs = cam.rays_for(rows, cols)
    t = depth.depth[layer, rows, cols].astype(np.float64)
    pts = origins + t[:, None] * dirs
    col = colors[layer, rows, cols].astype(np.float64) if colors is not None else np.zeros_like(pts)
    return ColoredPointCloud(pts, col, (layer + 1).astype(np.uint8))


def knn_distances(points: np.ndarray, k: int) -> np.ndarray:
    """Distance to the k-th nearest other point."""
    d, _ = cKDTree(points).query(points, k=k + 1)
    return d[:, k]


def filter_outliers(cloud: ColoredPointCloud, k: int = DEFAULT_KNN,
                    threshold: float = DEFAULT_THRESHOLD, scale: Optional[float] = None) -> ColoredPointCloud:
    """Drop points whose k-th neighbour is farther than ``threshold``.

    The threshold is relative to a length scale: ``scale`` if given, else the
    scale recorded by an earlier filtering pass in ``meta``, else the cloud's
    bounding-box diagonal. The scale used is written back to ``meta`` so that
    re-filtering the output measures in the same units.
    """
    if len(cloud) <= k:
        raise TooFewPoints(f"need more than {k} points, got {len(cloud)}")
    if scale is None:
        scale = cloud.meta.get("filter_scale") or cloud.diagonal() or 1.0
    dk = knn_distances(cloud.positions, k) / scale
    out = cloud.subset(~(dk > threshold))
    out.meta.update(filter_k=k, filter_threshold=threshold, filter_scale=scale,
                    filter_removed=int((dk > threshold).sum()))
    return out


def estimate_normals(cloud: ColoredPointCloud, k: int, camera: Camera,
                     orient: str = "parity") -> ColoredPointCloud:
    """PCA normals from k nearest neighbours.

    ``orient="parity"`` points odd layers towards the camera and even layers
    away (entry and exit surfaces); ``"camera"`` turns every normal towards
    the camera.
    """
    if orient not in ("parity", "camera"):
        raise ValueError(f"unknown orientation mode {orient!r}")
    if len(cloud) <= k:
        raise TooFewPoints(f"need more than {k} points, got {len(cloud)}")
    p = cloud.positions
    _, idx = cKDTree(p).query(p, k=k + 1)
    nb = p[idx]
    centered = nb - nb.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered)
    _, vecs = np.linalg.eigh(cov)
    normals = vecs[:, :, 0]
    if camera.projection == "perspective":
        view = p - np.array(camera.center)
    else:
        view = np.broadcast_to(np.array(camera.forward), p.shape)
    facing = np.einsum("ij,ij->i", normals, view) < 0
    want_facing = np.ones(len(p), bool) if orient == "camera" else (cloud.layer % 2 == 1)
    normals = np.where((facing == want_facing)[:, None], normals, -normals)
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    out = ColoredPointCloud(p, cloud.colors, cloud.layer, normals, dict(cloud.meta))
    out.meta.update(normals_k=k, normals_orient=orient)
    return out


def write_cloud(path, cloud: ColoredPointCloud) -> None:
    """Binary PLY; ``meta`` entries are stored as ``comment peelkit k=v`` lines."""
    comments = [f"peelkit {k}={json.dumps(v)}" for k, v in sorted(cloud.meta.items())]
    write_ply(path, cloud.positions, None, cloud.colors, cloud.normals, cloud.layer, comments)


def read_cloud(path) -> ColoredPointCloud:
    d = read_ply_data(path)
    colors = d.colors if d.colors is not None else np.zeros_like(d.vertices)
    layer = d.layer if d.layer is not None else np.ones(len(d.vertices), np.uint8)
    meta = {}
    for c in d.comments:
        if c.startswith("peelkit ") and "=" in c:
            key, value = c[len("peelkit "):].split("=", 1)
            meta[key] = json.loads(value)
    return ColoredPointCloud(d.vertices, colors, layer, d.normals, meta)
