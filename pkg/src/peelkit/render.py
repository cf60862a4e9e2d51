"""Multi-layer depth/RGB peel maps by ray casting every pixel."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels as K
from .bvh import Bvh, build_bvh
from .geometry import Camera, TriangleMesh

logger = logging.getLogger(__name__)

DEFAULT_LAYERS = 4


@dataclass(eq=False)
class PeelStack:
    """L depth maps (ray parameter t, 0 = empty) with optional RGB maps.

    ``depth`` is (L, H, W) float32, ``rgb`` is (L, H, W, 3) float32 or None.
    ``t_near``/``t_far`` bound the scene depth and are used wherever depths or
    offsets need normalizing. ``overflow`` counts pixels whose ray crossed the
    surface more than L times when the stack was rendered.
    """

    depth: np.ndarray
    camera: Camera
    rgb: Optional[np.ndarray] = None
    t_near: float = 0.0
    t_far: float = 0.0
    overflow: int = 0

    def __post_init__(self):
        self.depth = np.asarray(self.depth, dtype=np.float32)
        if self.depth.ndim != 3:
            raise ValueError("depth must be (layers, height, width)")
        if self.depth.shape[1:] != (self.camera.height, self.camera.width):
            raise ValueError("depth resolution does not match camera")
        if self.rgb is not None:
            self.rgb = np.asarray(self.rgb, dtype=np.float32)
            if self.rgb.shape != self.depth.shape + (3,):
                raise ValueError("rgb must be (layers, height, width, 3)")

    @property
    def layers(self) -> int:
        return self.depth.shape[0]

    @property
    def height(self) -> int:
        return self.depth.shape[1]

    @property
    def width(self) -> int:
        return self.depth.shape[2]

    @property
    def shape(self) -> tuple:
        return self.depth.shape

    def support(self, layer: Optional[int] = None) -> np.ndarray:
        """Boolean map(s) of pixels with a surface in ``layer`` (0-based)."""
        s = self.depth > 0
        return s if layer is None else s[layer]

    def depth_range(self) -> tuple[float, float]:
        if self.t_far > self.t_near:
            return self.t_near, self.t_far
        valid = self.depth[self.depth > 0]
        if valid.size == 0:
            return 0.0, 1.0
        lo, hi = float(valid.min()), float(valid.max())
        return (lo, hi) if hi > lo else (lo, lo + 1.0)

    def layer_counts(self) -> np.ndarray:
        return self.support().sum(axis=0)

    def violations(self) -> list[str]:
        """Names of the stack invariants that fail (empty when valid)."""
        out = []
        d = self.depth
        if np.any(d < 0) or not np.all(np.isfinite(d)):
            out.append("depth must be finite and >= 0")
        later, earlier = d[1:], d[:-1]
        if np.any((later > 0) & ~(earlier > 0)):
            out.append("support nesting")
        if np.any((later > 0) & (earlier > 0) & ~(later > earlier)):
            out.append("layer monotonicity")
        if self.rgb is not None and np.any((self.rgb != 0).any(axis=-1) & ~(d > 0)):
            out.append("rgb outside depth support")
        return out

    def with_depth(self, depth: np.ndarray, rgb=None) -> "PeelStack":
        return PeelStack(depth, self.camera, rgb, self.t_near, self.t_far)


def scene_depth_range(mesh: TriangleMesh, camera: Camera) -> tuple[float, float]:
    """Depth interval covered by the mesh's bounding sphere."""
    lo, hi = mesh.bounds()
    center = 0.5 * (lo + hi)
    radius = 0.5 * float(np.linalg.norm(hi - lo))
    dist = float(np.dot(center - np.array(camera.center), camera.forward))
    return max(dist - radius, 0.0), dist + radius


def _cast(mesh: TriangleMesh, bvh: Bvh, camera: Camera, layers: int, attr: Optional[np.ndarray]):
    origins, dirs = camera.generate_rays()
    H, W = camera.height, camera.width
    t = np.zeros((layers, H, W))
    a = np.zeros((layers, H, W, 3))
    nhits = np.zeros((H, W), np.int32)
    truncated = np.zeros((H, W), np.uint8)
    attr = np.zeros((0, 3)) if attr is None else np.ascontiguousarray(attr, dtype=np.float64)
    K.render_layers(origins, dirs, bvh.merge_eps, *bvh.arrays(), mesh.vertices, mesh.triangles,
                    attr, layers, t, a, nhits, truncated)
    if truncated.any():
        logger.warning("%d pixels exceeded the per-ray hit buffer", int(truncated.sum()))
    return t, a, nhits


def render_peel(mesh: TriangleMesh, bvh: Optional[Bvh], camera: Camera,
                layers: int = DEFAULT_LAYERS) -> PeelStack:
    """Record the first ``layers`` surface crossings of every pixel ray.

    RGB comes from barycentric interpolation of the vertex colors; meshes
    without colors give a depth-only stack.
    """
    if layers < 1:
        raise ValueError("need at least one layer")
    if bvh is None:
        bvh = build_bvh(mesh)
    t, a, nhits = _cast(mesh, bvh, camera, layers, mesh.colors)
    rgb = np.clip(a, 0.0, 1.0).astype(np.float32) if mesh.colors is not None else None
    near, far = scene_depth_range(mesh, camera)
    return PeelStack(t.astype(np.float32), camera, rgb, near, far, int((nhits > layers).sum()))


def render_prior_peel(mesh: TriangleMesh, camera: Camera, layers: int = DEFAULT_LAYERS,
                      bvh: Optional[Bvh] = None) -> PeelStack:
    """Depth-only peel stack of a body-model mesh."""
    if layers < 1:
        raise ValueError("need at least one layer")
    if bvh is None:
        bvh = build_bvh(mesh)
    t, _, nhits = _cast(mesh, bvh, camera, layers, None)
    near, far = scene_depth_range(mesh, camera)
    return PeelStack(t.astype(np.float32), camera, None, near, far, int((nhits > layers).sum()))


def render_normal_map(mesh: TriangleMesh, bvh: Optional[Bvh], camera: Camera) -> np.ndarray:
    """First-hit surface normals in camera coordinates (x right, y up, z
    towards the viewer); (0, 0, 0) on background pixels."""
    if bvh is None:
        bvh = build_bvh(mesh)
    t, a, _ = _cast(mesh, bvh, camera, 1, mesh.vertex_normals())
    n = a[0]
    length = np.linalg.norm(n, axis=-1, keepdims=True)
    n = np.divide(n, length, out=np.zeros_like(n), where=length > 0)
    n = camera.to_camera_frame(n)
    n[t[0] <= 0] = 0.0
    return n.astype(np.float32)
