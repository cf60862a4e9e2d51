"""Triangle meshes, rays and pinhole/orthographic cameras."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import EmptyMesh

logger = logging.getLogger(__name__)

DEGENERATE_AREA = 1e-12

# Default camera: the z = 0 plane spans [-1, 1] vertically from (0, 0, 10).
DEFAULT_CAMERA_CENTER = (0.0, 0.0, 10.0)
DEFAULT_FOV_Y = math.degrees(2.0 * math.atan(1.0 / 10.0))
DEFAULT_HALF_EXTENT = 1.0


def _readonly(a: Optional[np.ndarray]) -> Optional[np.ndarray]:
    if a is not None:
        a.setflags(write=False)
    return a


@dataclass(eq=False)
class TriangleMesh:
    """Indexed triangle mesh.

    Triangles with area <= 1e-12 are dropped on construction and counted in
    ``dropped``. Arrays are frozen after construction so a mesh can be shared
    between threads.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    colors: Optional[np.ndarray] = None
    normals: Optional[np.ndarray] = None
    dropped: int = field(default=0, init=False)

    def __post_init__(self):
        v = np.array(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.array(self.triangles, dtype=np.int64).reshape(-1, 3)
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise ValueError("triangle index out of range")
        if len(f):
            area = 0.5 * np.linalg.norm(
                np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]]), axis=1
            )
            keep = area > DEGENERATE_AREA
            self.dropped = int((~keep).sum())
            if self.dropped:
                logger.warning("dropped %d degenerate triangles", self.dropped)
            f = f[keep]
        self.vertices = _readonly(v)
        self.triangles = _readonly(np.ascontiguousarray(f))
        if self.colors is not None:
            c = np.array(self.colors, dtype=np.float64).reshape(-1, 3)
            if len(c) != len(v):
                raise ValueError("colors must be per-vertex")
            if c.size and (c.min() < 0.0 or c.max() > 1.0):
                raise ValueError("colors must lie in [0, 1]")
            self.colors = _readonly(c)
        if self.normals is not None:
            n = np.array(self.normals, dtype=np.float64).reshape(-1, 3)
            if len(n) != len(v):
                raise ValueError("normals must be per-vertex")
            length = np.linalg.norm(n, axis=1, keepdims=True)
            self.normals = _readonly(np.divide(n, length, out=np.zeros_like(n), where=length > 0))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        used = self.vertices[np.unique(self.triangles)] if self.n_triangles else self.vertices
        return used.min(axis=0), used.max(axis=0)

    def diagonal(self) -> float:
        lo, hi = self.bounds()
        return float(np.linalg.norm(hi - lo))

    def corners(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        f = self.triangles
        return self.vertices[f[:, 0]], self.vertices[f[:, 1]], self.vertices[f[:, 2]]

    def face_areas(self) -> np.ndarray:
        a, b, c = self.corners()
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    def vertex_normals(self) -> np.ndarray:
        """Stored normals, or area-weighted normals from the faces."""
        if self.normals is not None:
            return self.normals
        a, b, c = self.corners()
        fn = np.cross(b - a, c - a)  # length is twice the area
        acc = np.zeros_like(self.vertices)
        for k in range(3):
            np.add.at(acc, self.triangles[:, k], fn)
        length = np.linalg.norm(acc, axis=1, keepdims=True)
        return np.divide(acc, length, out=np.zeros_like(acc), where=length > 0)

    def sample_surface(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """``n`` points drawn uniformly by area."""
        if self.n_triangles == 0:
            raise EmptyMesh("cannot sample an empty mesh")
        areas = self.face_areas()
        tri = rng.choice(self.n_triangles, size=n, p=areas / areas.sum())
        r1 = np.sqrt(rng.random(n))
        r2 = rng.random(n)
        a, b, c = (x[tri] for x in self.corners())
        return (1 - r1)[:, None] * a + (r1 * (1 - r2))[:, None] * b + (r1 * r2)[:, None] * c

    def transformed(self, vertices: np.ndarray) -> "TriangleMesh":
        normals = None
        return TriangleMesh(vertices, self.triangles, self.colors, normals)


def concatenate(meshes: Sequence[TriangleMesh]) -> TriangleMesh:
    verts, tris, cols = [], [], []
    offset = 0
    with_color = all(m.colors is not None for m in meshes)
    for m in meshes:
        verts.append(m.vertices)
        tris.append(m.triangles + offset)
        if with_color:
            cols.append(m.colors)
        offset += m.n_vertices
    return TriangleMesh(
        np.concatenate(verts),
        np.concatenate(tris),
        np.concatenate(cols) if with_color else None,
    )


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray
    t_min: float = 0.0

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=np.float64)
        if abs(np.linalg.norm(d) - 1.0) > 1e-9:
            raise ValueError("ray direction must be unit length")
        if self.t_min < 0:
            raise ValueError("t_min must be >= 0")
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=np.float64))
        object.__setattr__(self, "direction", d)

    @classmethod
    def towards(cls, origin, direction, t_min: float = 0.0) -> "Ray":
        d = np.asarray(direction, dtype=np.float64)
        return cls(origin, d / np.linalg.norm(d), t_min)

    def at(self, t: float) -> np.ndarray:
        return self.origin + t * self.direction


PROJECTIONS = ("perspective", "orthographic")


@dataclass(frozen=True)
class Camera:
    """Camera with a right/up/forward basis.

    Pixel (row, col) is sampled through its center; row 0 is the top of the
    image. ``fov_y`` (degrees) is used for perspective, ``half_extent`` (world
    units, vertical) for orthographic projection.
    """

    center: tuple
    right: tuple
    up: tuple
    forward: tuple
    width: int
    height: int
    projection: str = "perspective"
    fov_y: float = DEFAULT_FOV_Y
    half_extent: float = DEFAULT_HALF_EXTENT

    def __post_init__(self):
        for name in ("center", "right", "up", "forward"):
            object.__setattr__(self, name, tuple(float(x) for x in getattr(self, name)))
        if self.width < 1 or self.height < 1:
            raise ValueError("camera width and height must be >= 1")
        if self.projection not in PROJECTIONS:
            raise ValueError(f"unknown projection {self.projection!r}")
        basis = np.array([self.right, self.up, self.forward])
        if np.abs(basis @ basis.T - np.eye(3)).max() > 1e-9:
            raise ValueError("camera basis must be orthonormal")

    @classmethod
    def default(cls, width: int, height: Optional[int] = None, projection: str = "perspective", **kw) -> "Camera":
        """Camera at (0, 0, 10), +Y up, looking down -Z."""
        return cls(
            DEFAULT_CAMERA_CENTER, (1, 0, 0), (0, 1, 0), (0, 0, -1),
            width, width if height is None else height, projection, **kw,
        )

    @property
    def param(self) -> float:
        return self.fov_y if self.projection == "perspective" else self.half_extent

    @property
    def aspect(self) -> float:
        return self.width / self.height

    def half_height_at(self, distance: float) -> float:
        """Half of the visible vertical extent at ``distance`` along forward."""
        if self.projection == "orthographic":
            return self.half_extent
        return distance * math.tan(math.radians(self.fov_y) / 2)

    def pixel_footprint(self, distance: Optional[float] = None) -> float:
        """World-space pixel height at ``distance`` (default: at the origin)."""
        if distance is None:
            distance = float(np.dot(-np.array(self.center), self.forward))
        return 2.0 * self.half_height_at(distance) / self.height

    def _ndc(self, rows: np.ndarray, cols: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        u = ((cols + 0.5) / self.width) * 2.0 - 1.0
        v = 1.0 - ((rows + 0.5) / self.height) * 2.0
        return u, v

    def rays_for(self, rows, cols) -> tuple[np.ndarray, np.ndarray]:
        """Origins and unit directions for the given pixel indices."""
        rows = np.asarray(rows, dtype=np.float64)
        cols = np.asarray(cols, dtype=np.float64)
        u, v = self._ndc(rows, cols)
        c, r, up, fwd = (np.array(x) for x in (self.center, self.right, self.up, self.forward))
        if self.projection == "perspective":
            th = math.tan(math.radians(self.fov_y) / 2)
            d = fwd + (u * th * self.aspect)[..., None] * r + (v * th)[..., None] * up
            d = d / np.linalg.norm(d, axis=-1, keepdims=True)
            o = np.broadcast_to(c, d.shape).copy()
        else:
            h = self.half_extent
            o = c + (u * h * self.aspect)[..., None] * r + (v * h)[..., None] * up
            d = np.broadcast_to(fwd, o.shape).copy()
        return o, d

    def generate_rays(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-pixel ray origins and directions, each shaped (H, W, 3)."""
        rows, cols = np.meshgrid(np.arange(self.height), np.arange(self.width), indexing="ij")
        return self.rays_for(rows, cols)

    def pixel_ray(self, row: int, col: int) -> Ray:
        o, d = self.rays_for(row, col)
        return Ray(o, d)

    def project(self, points: np.ndarray) -> np.ndarray:
        """Continuous (row, col) image coordinates of world points."""
        p = np.asarray(points, dtype=np.float64) - np.array(self.center)
        x = p @ np.array(self.right)
        y = p @ np.array(self.up)
        z = p @ np.array(self.forward)
        if self.projection == "perspective":
            th = math.tan(math.radians(self.fov_y) / 2)
            u = x / (z * th * self.aspect)
            v = y / (z * th)
        else:
            u = x / (self.half_extent * self.aspect)
            v = y / self.half_extent
        col = (u + 1.0) / 2.0 * self.width - 0.5
        row = (1.0 - v) / 2.0 * self.height - 0.5
        return np.stack([row, col], axis=-1)

    def to_camera_frame(self, vectors: np.ndarray) -> np.ndarray:
        """Express world directions in (right, up, backward) coordinates."""
        basis = np.array([self.right, self.up, [-x for x in self.forward]])
        return np.asarray(vectors) @ basis.T

    def with_resolution(self, width: int, height: int) -> "Camera":
        from dataclasses import replace

        return replace(self, width=width, height=height)
