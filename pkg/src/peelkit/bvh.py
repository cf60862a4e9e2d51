"""Bounding volume hierarchy over a TriangleMesh.

Binned SAH build (16 bins, at most 8 triangles per leaf). Queries are
read-only and may run concurrently.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _kernels as K
from .errors import EmptyMesh
from .geometry import Ray, TriangleMesh

LEAF_SIZE = 8
N_BINS = 16
MERGE_REL_EPS = 1e-6


@dataclass(frozen=True, eq=False)
class Bvh:
    """Flat node arrays; leaves have ``left == -1`` and own
    ``tri_index[start:start + count]``."""

    bmin: np.ndarray
    bmax: np.ndarray
    left: np.ndarray
    right: np.ndarray
    start: np.ndarray
    count: np.ndarray
    tri_index: np.ndarray
    diagonal: float

    @property
    def n_nodes(self) -> int:
        return len(self.left)

    @property
    def merge_eps(self) -> float:
        return MERGE_REL_EPS * self.diagonal

    def arrays(self):
        return (self.bmin, self.bmax, self.left, self.right, self.start, self.count, self.tri_index)

    def leaves(self):
        for node in np.flatnonzero(self.left < 0):
            yield int(node), self.tri_index[self.start[node]:self.start[node] + self.count[node]]

    def subtree_triangles(self, node: int) -> np.ndarray:
        out, todo = [], [node]
        while todo:
            n = todo.pop()
            if self.left[n] < 0:
                out.append(self.tri_index[self.start[n]:self.start[n] + self.count[n]])
            else:
                todo += [self.left[n], self.right[n]]
        return np.concatenate(out)


def _area(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    e = np.maximum(hi - lo, 0.0)
    return 2.0 * (e[..., 0] * e[..., 1] + e[..., 1] * e[..., 2] + e[..., 2] * e[..., 0])


def _best_split(cent: np.ndarray, tlo: np.ndarray, thi: np.ndarray):
    """Return (axis, mask_left) of the cheapest binned SAH split, or None."""
    n = len(cent)
    clo, chi = cent.min(axis=0), cent.max(axis=0)
    best = (np.inf, None, None)
    for axis in range(3):
        ext = chi[axis] - clo[axis]
        if ext <= 0.0:
            continue
        b = np.minimum(((cent[:, axis] - clo[axis]) * (N_BINS / ext)).astype(np.int64), N_BINS - 1)
        cnt = np.bincount(b, minlength=N_BINS)
        lo = np.full((N_BINS, 3), np.inf)
        hi = np.full((N_BINS, 3), -np.inf)
        order = np.argsort(b, kind="stable")
        used = np.flatnonzero(cnt)
        offsets = np.concatenate([[0], np.cumsum(cnt[used])[:-1]])
        lo[used] = np.minimum.reduceat(tlo[order], offsets, axis=0)
        hi[used] = np.maximum.reduceat(thi[order], offsets, axis=0)
        llo = np.minimum.accumulate(lo, axis=0)[:-1]
        lhi = np.maximum.accumulate(hi, axis=0)[:-1]
        rlo = np.minimum.accumulate(lo[::-1], axis=0)[::-1][1:]
        rhi = np.maximum.accumulate(hi[::-1], axis=0)[::-1][1:]
        nl = np.cumsum(cnt)[:-1]
        nr = n - nl
        cost = np.where((nl > 0) & (nr > 0), _area(llo, lhi) * nl + _area(rlo, rhi) * nr, np.inf)
        i = int(np.argmin(cost))
        if cost[i] < best[0]:
            best = (cost[i], axis, b <= i)
    if best[1] is None:
        return None
    return best[1], best[2]


def build_bvh(mesh: TriangleMesh) -> Bvh:
    if mesh.n_triangles == 0:
        raise EmptyMesh("mesh has no non-degenerate triangles")
    a, b, c = mesh.corners()
    tlo = np.minimum(np.minimum(a, b), c)
    thi = np.maximum(np.maximum(a, b), c)
    cent = (tlo + thi) * 0.5

    bmin, bmax, left, right, start, count = [], [], [], [], [], []
    tri_index: list[np.ndarray] = []
    n_leaf_tris = 0

    def new_node(ids):
        bmin.append(tlo[ids].min(axis=0))
        bmax.append(thi[ids].max(axis=0))
        left.append(-1)
        right.append(-1)
        start.append(0)
        count.append(0)
        return len(left) - 1

    work = [(new_node(np.arange(mesh.n_triangles)), np.arange(mesh.n_triangles))]
    while work:
        node, ids = work.pop()
        split = None if len(ids) <= LEAF_SIZE else _best_split(cent[ids], tlo[ids], thi[ids])
        if len(ids) > LEAF_SIZE and split is None:
            # coincident centroids: split by index to honour the leaf size
            half = len(ids) // 2
            split = (0, np.arange(len(ids)) < half)
        if split is None:
            start[node] = n_leaf_tris
            count[node] = len(ids)
            tri_index.append(ids)
            n_leaf_tris += len(ids)
            continue
        mask = split[1]
        lids, rids = ids[mask], ids[~mask]
        ln, rn = new_node(lids), new_node(rids)
        left[node], right[node] = ln, rn
        work.append((rn, rids))
        work.append((ln, lids))

    return Bvh(
        np.array(bmin), np.array(bmax),
        np.array(left, np.int64), np.array(right, np.int64),
        np.array(start, np.int64), np.array(count, np.int64),
        np.concatenate(tri_index).astype(np.int64),
        mesh.diagonal(),
    )


class Hit(NamedTuple):
    t: float
    triangle: int
    bary: tuple


def intersect_all(bvh: Bvh, mesh: TriangleMesh, ray: Ray) -> list[Hit]:
    """Every surface crossing along ``ray`` past ``t_min``, nearest first.

    Hits closer than 1e-6 of the scene diagonal collapse to one, keeping the
    lowest triangle id; this also deduplicates shared-edge crossings.
    """
    ts, ids, bs, _ = K.ray_hits(
        ray.origin, ray.direction, float(ray.t_min), bvh.merge_eps,
        *bvh.arrays(), mesh.vertices, mesh.triangles,
    )
    return [Hit(float(t), int(i), tuple(float(x) for x in b)) for t, i, b in zip(ts, ids, bs)]


def closest_points(bvh: Bvh, mesh: TriangleMesh, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Distance from each point to the surface and the nearest triangle id."""
    pts = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
    d2 = np.empty(len(pts))
    ids = np.empty(len(pts), np.int64)
    K.nearest_on_mesh_batch(pts, *bvh.arrays(), mesh.vertices, mesh.triangles, d2, ids)
    return np.sqrt(d2), ids
