"""Deterministic synthetic scenes used by tests, scripts and ``peelkit synth``."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .body import BodyModel, BodyParams, generate_toy_model, posed_mesh, rodrigues
from .geometry import Camera, TriangleMesh, concatenate
from .render import render_peel

SCENES = ("sphere", "cube", "nested-spheres", "toy-body", "skirt")

NESTED_RADII = (0.3, 0.6, 0.9)
TOY_JOINTS = 6
TOY_VERTICES = 6000


def icosphere(radius: float = 1.0, subdivisions: int = 4, center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    t = (1.0 + 5 ** 0.5) / 2.0
    verts = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0), (0, -1, t), (0, 1, t),
             (0, -1, -t), (0, 1, -t), (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
             (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
             (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    v = [np.array(p, float) / np.linalg.norm(p) for p in verts]
    for _ in range(subdivisions):
        cache: dict = {}

        def mid(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = v[i] + v[j]
                v.append(m / np.linalg.norm(m))
                cache[key] = len(v) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    return TriangleMesh(np.array(v) * radius + np.asarray(center, float), np.array(faces))


def box(size=1.0, center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Axis-aligned cube of edge ``size``, 8 shared vertices, 12 triangles."""
    h = size / 2.0
    v = np.array([[x, y, z] for x in (-h, h) for y in (-h, h) for z in (-h, h)]) + np.asarray(center, float)
    i = lambda x, y, z: 4 * x + 2 * y + z  # noqa: E731
    quads = [
        (i(0, 0, 0), i(0, 1, 0), i(1, 1, 0), i(1, 0, 0)),
        (i(0, 0, 1), i(1, 0, 1), i(1, 1, 1), i(0, 1, 1)),
        (i(0, 0, 0), i(0, 0, 1), i(0, 1, 1), i(0, 1, 0)),
        (i(1, 0, 0), i(1, 1, 0), i(1, 1, 1), i(1, 0, 1)),
        (i(0, 0, 0), i(1, 0, 0), i(1, 0, 1), i(0, 0, 1)),
        (i(0, 1, 0), i(0, 1, 1), i(1, 1, 1), i(1, 1, 0)),
    ]
    f = [tri for a, b, c, d in quads for tri in ((a, b, c), (a, c, d))]
    return TriangleMesh(v, f)


def quad(z: float = 0.0, half: float = 0.5) -> TriangleMesh:
    v = [(-half, -half, z), (half, -half, z), (half, half, z), (-half, half, z)]
    return TriangleMesh(v, [(0, 1, 2), (0, 2, 3)])


def frustum(top_y: float, bottom_y: float, top_r: float, bottom_r: float, n_seg: int = 64,
            n_rings: int = 24) -> TriangleMesh:
    """Open conical tube around the Y axis (a skirt)."""
    ang = 2 * np.pi * np.arange(n_seg) / n_seg
    verts = []
    for k in range(n_rings + 1):
        f = k / n_rings
        y = top_y + f * (bottom_y - top_y)
        r = top_r + f * (bottom_r - top_r)
        verts.extend(np.stack([r * np.cos(ang), np.full(n_seg, y), r * np.sin(ang)], 1))
    faces = []
    for k in range(n_rings):
        for i in range(n_seg):
            a, b = k * n_seg + i, k * n_seg + (i + 1) % n_seg
            faces += [(a, b, b + n_seg), (a, b + n_seg, a + n_seg)]
    return TriangleMesh(np.array(verts), faces)


def rotate(mesh: TriangleMesh, axis, angle: float) -> TriangleMesh:
    axis = np.asarray(axis, float)
    r = rodrigues(axis / np.linalg.norm(axis) * angle)[0]
    return TriangleMesh(mesh.vertices @ r.T, mesh.triangles, mesh.colors)


def paint(mesh: TriangleMesh, seed: int) -> TriangleMesh:
    """Smooth per-vertex colors from a seeded sinusoid of position."""
    rng = np.random.default_rng(seed)
    freq = rng.uniform(1.0, 4.0, size=(3, 3))
    phase = rng.uniform(0, 2 * np.pi, size=3)
    c = 0.5 + 0.5 * np.sin(mesh.vertices @ freq + phase)
    return TriangleMesh(mesh.vertices, mesh.triangles, np.clip(c, 0.0, 1.0))


def foreground(mesh: TriangleMesh, camera: Camera) -> np.ndarray:
    """Silhouette (first-layer support) as uint8 {0, 1}."""
    return render_peel(mesh, None, camera, 1).support(0).astype(np.uint8)


@dataclass
class Scene:
    name: str
    mesh: TriangleMesh
    fg: np.ndarray
    model: Optional[BodyModel] = None
    params: Optional[BodyParams] = None


def toy_body_params(model: BodyModel, seed: int) -> BodyParams:
    rng = np.random.default_rng(seed)
    return BodyParams(rng.normal(0.0, 0.5, model.n_shape), np.zeros(3 * model.n_joints))


def skirt_mesh() -> TriangleMesh:
    return frustum(-0.12, -0.85, 0.19, 0.5)


def synth(name: str, seed: int, camera: Camera) -> Scene:
    """Build one of ``SCENES``; equal (name, seed, camera) give equal scenes."""
    if name == "sphere":
        mesh = paint(icosphere(0.8, 4), seed)
        return Scene(name, mesh, foreground(mesh, camera))
    if name == "cube":
        mesh = paint(box(1.0), seed)
        return Scene(name, mesh, foreground(mesh, camera))
    if name == "nested-spheres":
        mesh = paint(concatenate([icosphere(r, 4) for r in NESTED_RADII]), seed)
        return Scene(name, mesh, foreground(mesh, camera))
    if name in ("toy-body", "skirt"):
        model = generate_toy_model(TOY_JOINTS, TOY_VERTICES, seed)
        params = toy_body_params(model, seed)
        body = posed_mesh(model, params, camera)
        mesh = body if name == "toy-body" else concatenate([body, skirt_mesh()])
        mesh = paint(mesh, seed)
        return Scene(name, mesh, foreground(mesh, camera), model, params)
    raise ValueError(f"unknown scene {name!r}; valid scenes: {', '.join(SCENES)}")


def shifted_params(params: BodyParams, dx: float, dy: float = 0.0) -> BodyParams:
    """Same body moved by (dx, dy) world units in the image plane."""
    return BodyParams(params.beta, params.theta, params.s, params.tx + dx / params.s,
                      params.ty + dy / params.s)


def fibonacci_sphere(n: int, radius: float = 1.0) -> np.ndarray:
    i = np.arange(n) + 0.5
    phi = np.arccos(1 - 2 * i / n)
    theta = np.pi * (1 + 5 ** 0.5) * i
    return radius * np.stack([np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)], 1)


def planted_outliers(n: int = 50_000, n_outliers: int = 100, distance: float = 0.5,
                     seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Dense unit-sphere samples plus points ``distance`` off the surface.

    Returns (points, is_outlier); outliers are appended after the inliers.
    """
    rng = np.random.default_rng(seed)
    u = rng.normal(size=(n_outliers, 3))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    pts = np.vstack([fibonacci_sphere(n), (1.0 + distance) * u])
    mask = np.zeros(len(pts), bool)
    mask[n:] = True
    return pts, mask

