"""Compiled inner loops: BVH traversal, ray casting, closest-point queries.

Everything here works on plain arrays so the public modules can keep their
dataclass surfaces. Kernels are pure functions of their inputs; the parallel
renderer writes disjoint rows, so output does not depend on thread count.
"""
import os

import numba
import numpy as np
from numba import njit, prange

if "NUMBA_THREADING_LAYER" not in os.environ:
    # skip the TBB probe, which warns on the older TBB shipped in some images
    numba.config.THREADING_LAYER = "omp"

MAX_STACK = 128
MAX_RAW_HITS = 1024

_jit = dict(cache=True, nogil=True, error_model="numpy")


@njit(**_jit)
def ray_box(ox, oy, oz, dx, dy, dz, bmin, bmax, tmin, tmax):
    """Slab test; boxes are inflated by a relative 1e-9 to stay conservative."""
    lo = tmin
    hi = tmax
    o = (ox, oy, oz)
    d = (dx, dy, dz)
    for k in range(3):
        pad = 1e-9 * (abs(bmin[k]) + abs(bmax[k]) + 1.0)
        a = bmin[k] - pad
        b = bmax[k] + pad
        if d[k] == 0.0:
            if o[k] < a or o[k] > b:
                return False
            continue
        inv = 1.0 / d[k]
        t1 = (a - o[k]) * inv
        t2 = (b - o[k]) * inv
        if t1 > t2:
            t1, t2 = t2, t1
        if t1 > lo:
            lo = t1
        if t2 < hi:
            hi = t2
        if lo > hi:
            return False
    return True


@njit(**_jit)
def tri_watertight(o, d, v0, v1, v2):
    """Watertight ray/triangle test (shear + scale to ray space).

    Returns (hit, t, b0, b1, b2) with barycentrics weighting v0, v1, v2.
    Edges and vertices count as inside, so a ray through a shared edge
    reports both triangles; the caller's merge step keeps one of them.
    """
    ax = abs(d[0])
    ay = abs(d[1])
    az = abs(d[2])
    kz = 0
    if ay > ax and ay >= az:
        kz = 1
    elif az > ax and az > ay:
        kz = 2
    kx = (kz + 1) % 3
    ky = (kx + 1) % 3
    if d[kz] < 0.0:
        kx, ky = ky, kx
    sx = d[kx] / d[kz]
    sy = d[ky] / d[kz]
    sz = 1.0 / d[kz]

    a0 = v0[kx] - o[kx]
    a1 = v0[ky] - o[ky]
    a2 = v0[kz] - o[kz]
    b0 = v1[kx] - o[kx]
    b1 = v1[ky] - o[ky]
    b2 = v1[kz] - o[kz]
    c0 = v2[kx] - o[kx]
    c1 = v2[ky] - o[ky]
    c2 = v2[kz] - o[kz]

    Ax = a0 - sx * a2
    Ay = a1 - sy * a2
    Bx = b0 - sx * b2
    By = b1 - sy * b2
    Cx = c0 - sx * c2
    Cy = c1 - sy * c2

    U = Cx * By - Cy * Bx
    V = Ax * Cy - Ay * Cx
    W = Bx * Ay - By * Ax
    if (U < 0.0 or V < 0.0 or W < 0.0) and (U > 0.0 or V > 0.0 or W > 0.0):
        return False, 0.0, 0.0, 0.0, 0.0
    det = U + V + W
    if det == 0.0:
        return False, 0.0, 0.0, 0.0, 0.0
    T = U * sz * a2 + V * sz * b2 + W * sz * c2
    inv = 1.0 / det
    return True, T * inv, U * inv, V * inv, W * inv


@njit(**_jit)
def collect_hits(o, d, tmin, bmin, bmax, left, right, start, count, tri_index,
                 verts, tris, out_t, out_id, out_b):
    """Every triangle hit with t > tmin, unsorted. Returns (stored, total)."""
    stack = np.empty(MAX_STACK, np.int64)
    sp = 0
    stack[sp] = 0
    sp += 1
    n = 0
    total = 0
    cap = out_t.shape[0]
    while sp > 0:
        sp -= 1
        node = stack[sp]
        if not ray_box(o[0], o[1], o[2], d[0], d[1], d[2], bmin[node], bmax[node], tmin, np.inf):
            continue
        if left[node] < 0:
            for k in range(start[node], start[node] + count[node]):
                tri = tri_index[k]
                hit, t, w0, w1, w2 = tri_watertight(
                    o, d, verts[tris[tri, 0]], verts[tris[tri, 1]], verts[tris[tri, 2]]
                )
                if hit and t > tmin:
                    if n < cap:
                        out_t[n] = t
                        out_id[n] = tri
                        out_b[n, 0] = w0
                        out_b[n, 1] = w1
                        out_b[n, 2] = w2
                        n += 1
                    total += 1
        else:
            stack[sp] = left[node]
            sp += 1
            stack[sp] = right[node]
            sp += 1
    return n, total


@njit(**_jit)
def sort_and_merge(n, ts, ids, bs, eps):
    """Sort hits by (t, triangle id) in place, then collapse runs closer than eps.

    Within a collapsed run the hit of the lowest triangle id is kept.
    Returns the merged count; merged hits occupy the first slots.
    """
    for i in range(1, n):
        t = ts[i]
        tid = ids[i]
        b0 = bs[i, 0]
        b1 = bs[i, 1]
        b2 = bs[i, 2]
        j = i - 1
        while j >= 0 and (ts[j] > t or (ts[j] == t and ids[j] > tid)):
            ts[j + 1] = ts[j]
            ids[j + 1] = ids[j]
            bs[j + 1, 0] = bs[j, 0]
            bs[j + 1, 1] = bs[j, 1]
            bs[j + 1, 2] = bs[j, 2]
            j -= 1
        ts[j + 1] = t
        ids[j + 1] = tid
        bs[j + 1, 0] = b0
        bs[j + 1, 1] = b1
        bs[j + 1, 2] = b2
    m = 0
    anchor = 0.0
    for i in range(n):
        if m > 0 and ts[i] - anchor < eps:
            if ids[i] < ids[m - 1]:
                ts[m - 1] = ts[i]
                ids[m - 1] = ids[i]
                bs[m - 1, 0] = bs[i, 0]
                bs[m - 1, 1] = bs[i, 1]
                bs[m - 1, 2] = bs[i, 2]
            continue
        anchor = ts[i]
        ts[m] = ts[i]
        ids[m] = ids[i]
        bs[m, 0] = bs[i, 0]
        bs[m, 1] = bs[i, 1]
        bs[m, 2] = bs[i, 2]
        m += 1
    return m


@njit(**_jit)
def ray_hits(o, d, tmin, eps, bmin, bmax, left, right, start, count, tri_index, verts, tris):
    ts = np.empty(MAX_RAW_HITS)
    ids = np.empty(MAX_RAW_HITS, np.int64)
    bs = np.empty((MAX_RAW_HITS, 3))
    n, total = collect_hits(o, d, tmin, bmin, bmax, left, right, start, count,
                            tri_index, verts, tris, ts, ids, bs)
    m = sort_and_merge(n, ts, ids, bs, eps)
    return ts[:m].copy(), ids[:m].copy(), bs[:m].copy(), total > n


@njit(parallel=True, **_jit)
def render_layers(origins, dirs, eps, bmin, bmax, left, right, start, count, tri_index,
                  verts, tris, attr, layers, out_t, out_attr, out_nhits, out_truncated):
    """Fill up to ``layers`` merged hits per pixel.

    out_t: (L, H, W) ray parameters, 0 where empty.
    out_attr: (L, H, W, 3) barycentric blend of the per-vertex ``attr``.
    out_nhits: (H, W) merged hit count before truncation to L.
    """
    H = origins.shape[0]
    W = origins.shape[1]
    use_attr = attr.shape[0] > 0
    for row in prange(H):
        ts = np.empty(MAX_RAW_HITS)
        ids = np.empty(MAX_RAW_HITS, np.int64)
        bs = np.empty((MAX_RAW_HITS, 3))
        for col in range(W):
            o = origins[row, col]
            d = dirs[row, col]
            n, total = collect_hits(o, d, 0.0, bmin, bmax, left, right, start, count,
                                    tri_index, verts, tris, ts, ids, bs)
            if total > n:
                out_truncated[row, col] = 1
            m = sort_and_merge(n, ts, ids, bs, eps)
            out_nhits[row, col] = m
            for i in range(min(m, layers)):
                out_t[i, row, col] = ts[i]
                if use_attr:
                    tri = ids[i]
                    for c in range(3):
                        out_attr[i, row, col, c] = (
                            bs[i, 0] * attr[tris[tri, 0], c]
                            + bs[i, 1] * attr[tris[tri, 1], c]
                            + bs[i, 2] * attr[tris[tri, 2], c]
                        )


@njit(**_jit)
def closest_point_triangle(p, a, b, c):
    """Closest point on triangle abc to p (vertex, edge and face regions)."""
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = ab @ ap
    d2 = ac @ ap
    if d1 <= 0.0 and d2 <= 0.0:
        return a.copy()
    bp = p - b
    d3 = ab @ bp
    d4 = ac @ bp
    if d3 >= 0.0 and d4 <= d3:
        return b.copy()
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        return a + (d1 / (d1 - d3)) * ab
    cp = p - c
    d5 = ab @ cp
    d6 = ac @ cp
    if d6 >= 0.0 and d5 <= d6:
        return c.copy()
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        return a + (d2 / (d2 - d6)) * ac
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b)
    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    return a + v * ab + w * ac


@njit(**_jit)
def box_dist2(p, lo, hi):
    s = 0.0
    for k in range(3):
        if p[k] < lo[k]:
            s += (lo[k] - p[k]) ** 2
        elif p[k] > hi[k]:
            s += (p[k] - hi[k]) ** 2
    return s


@njit(**_jit)
def nearest_on_mesh(p, bmin, bmax, left, right, start, count, tri_index, verts, tris):
    """Squared distance and triangle id of the closest surface point to p."""
    stack = np.empty(MAX_STACK, np.int64)
    sp = 0
    stack[sp] = 0
    sp += 1
    best = np.inf
    best_id = -1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        if box_dist2(p, bmin[node], bmax[node]) >= best:
            continue
        if left[node] < 0:
            for k in range(start[node], start[node] + count[node]):
                tri = tri_index[k]
                q = closest_point_triangle(p, verts[tris[tri, 0]], verts[tris[tri, 1]],
                                           verts[tris[tri, 2]])
                d2 = ((p - q) ** 2).sum()
                if d2 < best or (d2 == best and tri < best_id):
                    best = d2
                    best_id = tri
        else:
            l = left[node]
            r = right[node]
            dl = box_dist2(p, bmin[l], bmax[l])
            dr = box_dist2(p, bmin[r], bmax[r])
            # push the farther child first so the nearer one is popped next
            if dl <= dr:
                stack[sp] = r
                sp += 1
                stack[sp] = l
                sp += 1
            else:
                stack[sp] = l
                sp += 1
                stack[sp] = r
                sp += 1
    return best, best_id


@njit(parallel=True, **_jit)
def nearest_on_mesh_batch(points, bmin, bmax, left, right, start, count, tri_index,
                          verts, tris, out_d2, out_id):
    for i in prange(points.shape[0]):
        d2, tid = nearest_on_mesh(points[i], bmin, bmax, left, right, start, count,
                                  tri_index, verts, tris)
        out_d2[i] = d2
        out_id[i] = tid


def set_threads(n: int) -> int:
    """Cap the worker count for parallel kernels; returns the count in use."""
    n = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)
    return n
