"""Slow, obviously-correct reference implementations used as test oracles."""
from __future__ import annotations

import numpy as np


def moller_trumbore(origin, direction, a, b, c, eps=1e-14):
    """(t, u, v) for a ray-triangle hit with edges counted inside, or None."""
    e1, e2 = b - a, c - a
    p = np.cross(direction, e2)
    det = float(np.dot(e1, p))
    if abs(det) < eps:
        return None
    inv = 1.0 / det
    s = origin - a
    u = float(np.dot(s, p)) * inv
    if u < 0.0 or u > 1.0:
        return None
    q = np.cross(s, e1)
    v = float(np.dot(direction, q)) * inv
    if v < 0.0 or u + v > 1.0:
        return None
    return float(np.dot(e2, q)) * inv, u, v


def brute_hits(vertices, triangles, origin, direction, t_min, merge_eps):
    """All crossings sorted by (t, id), with near-coincident hits merged onto
    the lowest triangle id."""
    raw = []
    for i, (ia, ib, ic) in enumerate(triangles):
        h = moller_trumbore(origin, direction, vertices[ia], vertices[ib], vertices[ic])
        if h is not None and h[0] > t_min:
            raw.append((h[0], i))
    raw.sort()
    out: list[tuple[float, int]] = []
    anchor = None
    for t, i in raw:
        if anchor is not None and t - anchor < merge_eps:
            out[-1] = (out[-1][0], min(out[-1][1], i))
            continue
        anchor = t
        out.append((t, i))
    return out


def segment_distance(p, a, b):
    ab = b - a
    f = np.clip(np.dot(p - a, ab) / np.dot(ab, ab), 0.0, 1.0)
    return float(np.linalg.norm(p - (a + f * ab)))


def point_triangle_distance(p, a, b, c):
    """Distance via plane projection when the foot lies inside, else the
    nearest of the three edges."""
    n = np.cross(b - a, c - a)
    n = n / np.linalg.norm(n)
    h = float(np.dot(p - a, n))
    foot = p - h * n
    # inside test with signed areas
    inside = all(np.dot(np.cross(y - x, foot - x), n) >= 0 for x, y in ((a, b), (b, c), (c, a)))
    if inside:
        return abs(h)
    return min(segment_distance(p, a, b), segment_distance(p, b, c), segment_distance(p, c, a))


def brute_point_to_mesh(points, vertices, triangles):
    """Vectorised all-triangle search: for each point the minimum distance."""
    a, b, c = (vertices[triangles[:, k]] for k in range(3))
    out = np.empty(len(points))
    for n, p in enumerate(points):
        out[n] = _min_dist_all(p, a, b, c)
    return out


def _min_dist_all(p, a, b, c):
    n = np.cross(b - a, c - a)
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    h = np.einsum("ij,ij->i", p - a, n)
    foot = p - h[:, None] * n
    inside = np.ones(len(a), bool)
    for x, y in ((a, b), (b, c), (c, a)):
        inside &= np.einsum("ij,ij->i", np.cross(y - x, foot - x), n) >= 0
    best = np.where(inside, np.abs(h), np.inf)
    for x, y in ((a, b), (b, c), (c, a)):
        ab = y - x
        f = np.clip(np.einsum("ij,ij->i", p - x, ab) / np.einsum("ij,ij->i", ab, ab), 0, 1)
        best = np.minimum(best, np.linalg.norm(p - (x + f[:, None] * ab), axis=1))
    return float(best.min())


def brute_nearest_sq(src, dst):
    return np.array([float(np.min(np.sum((dst - p) ** 2, axis=1))) for p in src])


def brute_chamfer(s1, s2):
    return float(brute_nearest_sq(s1, s2).sum()) + float(brute_nearest_sq(s2, s1).sum())


def brute_kth_distance(points, k):
    d = np.sqrt(((points[:, None, :] - points[None, :, :]) ** 2).sum(-1))
    return np.sort(d, axis=1)[:, k]


def loop_l1_layers(pred, gt, support):
    """Per layer: sum |pred - gt| over support / count, then summed."""
    total = 0.0
    L, H, W = support.shape
    for i in range(L):
        acc, n = 0.0, 0
        for r in range(H):
            for c in range(W):
                if support[i, r, c]:
                    acc += float(np.sum(np.abs(np.asarray(pred[i, r, c], float) - np.asarray(gt[i, r, c], float))))
                    n += np.size(pred[i, r, c])
        if n:
            total += acc / n
    return total


def loop_gradient_l1(pred, gt):
    """Forward differences, zero at the last row/column, mean per layer."""
    L, H, W = pred.shape
    total = 0.0
    for i in range(L):
        acc = 0.0
        for r in range(H):
            for c in range(W):
                dxp = pred[i, r, c + 1] - pred[i, r, c] if c + 1 < W else 0.0
                dxg = gt[i, r, c + 1] - gt[i, r, c] if c + 1 < W else 0.0
                dyp = pred[i, r + 1, c] - pred[i, r, c] if r + 1 < H else 0.0
                dyg = gt[i, r + 1, c] - gt[i, r, c] if r + 1 < H else 0.0
                acc += abs(dxp - dxg) + abs(dyp - dyg)
        total += acc / (H * W)
    return total


def sphere_hits(center_dist, radii):
    """Ray along the axis through concentric spheres centred center_dist away."""
    return sorted([center_dist - r for r in radii] + [center_dist + r for r in radii])
