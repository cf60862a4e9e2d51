"""Reconstruction metrics: Chamfer, point-to-surface and normal re-projection."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from .bvh import Bvh, build_bvh, closest_points
from .errors import EmptyMesh, EmptySet, ResolutionMismatch
from .geometry import TriangleMesh


@dataclass(frozen=True)
class MetricReport:
    chamfer: float
    p2s: float
    normal_l2: Optional[float] = None
    chamfer_mean: Optional[float] = None

    def to_dict(self) -> dict:
        return asdict(self)


def _points(x, name: str) -> np.ndarray:
    p = np.asarray(x, dtype=np.float64).reshape(-1, 3)
    if len(p) == 0:
        raise EmptySet(f"{name} is empty")
    return p


def nearest_sq(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Squared distance from each ``src`` point to its nearest ``dst`` point."""
    _, idx = cKDTree(dst).query(src, k=1)
    return ((src - dst[idx]) ** 2).sum(axis=1)


def chamfer(s1, s2) -> float:
    """Sum of squared nearest-neighbour distances in both directions."""
    a, b = _points(s1, "S1"), _points(s2, "S2")
    return float(nearest_sq(a, b).sum()) + float(nearest_sq(b, a).sum())


def chamfer_mean(s1, s2) -> float:
    """Per-point normalized variant: mean squared distance each way, added."""
    a, b = _points(s1, "S1"), _points(s2, "S2")
    return float(nearest_sq(a, b).mean()) + float(nearest_sq(b, a).mean())


def point_to_surface(points, mesh: TriangleMesh, bvh: Optional[Bvh] = None) -> np.ndarray:
    """Exact distance from each point to the closest point on the mesh."""
    p = _points(points, "point set")
    if mesh.n_triangles == 0:
        raise EmptyMesh("surface has no triangles")
    if bvh is None:
        bvh = build_bvh(mesh)
    d, _ = closest_points(bvh, mesh, p)
    return d


def p2s(points, mesh: TriangleMesh, bvh: Optional[Bvh] = None) -> float:
    """Mean point-to-surface distance."""
    return float(point_to_surface(points, mesh, bvh).mean())


def normal_reprojection(pred: np.ndarray, gt: np.ndarray) -> float:
    """Mean ||n_pred - n_gt|| over pixels where either map has a normal."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ResolutionMismatch(f"normal maps differ: {pred.shape} vs {gt.shape}")
    support = (np.abs(pred).sum(-1) > 0) | (np.abs(gt).sum(-1) > 0)
    if not support.any():
        return 0.0
    return float(np.linalg.norm(pred - gt, axis=-1)[support].mean())
