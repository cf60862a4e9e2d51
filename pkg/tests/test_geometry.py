import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import brute_hits, moller_trumbore
from peelkit.bvh import build_bvh, closest_points, intersect_all
from peelkit.errors import EmptyMesh
from peelkit.geometry import Camera, Ray, TriangleMesh, concatenate
from peelkit.scenes import box, icosphere, quad


def random_rays(n, rng, radius=3.0):
    """Rays from a shell around the origin aimed at jittered interior targets."""
    o = rng.normal(size=(n, 3))
    o = radius * o / np.linalg.norm(o, axis=1, keepdims=True)
    target = rng.uniform(-0.8, 0.8, size=(n, 3))
    d = target - o
    return o, d / np.linalg.norm(d, axis=1, keepdims=True)


# ---- mesh

def test_degenerate_triangles_dropped_and_counted():
    v = [(0, 0, 0), (1, 0, 0), (0, 1, 0), (2, 0, 0)]
    m = TriangleMesh(v, [(0, 1, 2), (0, 1, 3), (1, 1, 2)])
    assert m.n_triangles == 1
    assert m.dropped == 2


def test_mesh_validation():
    with pytest.raises(ValueError):
        TriangleMesh([(0, 0, 0), (1, 0, 0), (0, 1, 0)], [(0, 1, 3)])
    with pytest.raises(ValueError):
        TriangleMesh([(0, 0, 0), (1, 0, 0), (0, 1, 0)], [(0, 1, 2)], colors=[(0, 0, 2)] * 3)
    m = TriangleMesh([(0, 0, 0), (1, 0, 0), (0, 1, 0)], [(0, 1, 2)], normals=[(0, 0, 3)] * 3)
    np.testing.assert_allclose(np.linalg.norm(m.normals, axis=1), 1.0)
    assert not m.vertices.flags.writeable


def test_concatenate_offsets_indices():
    a, b = box(1.0), box(1.0, center=(3, 0, 0))
    m = concatenate([a, b])
    assert m.n_triangles == 24
    np.testing.assert_array_equal(m.triangles[12:], b.triangles + 8)


def test_surface_samples_lie_on_sphere(rng):
    s = icosphere(1.0, 3)
    pts = s.sample_surface(2000, rng)
    r = np.linalg.norm(pts, axis=1)
    assert r.max() <= 1.0 + 1e-12 and r.min() > 0.98


def test_ray_invariants():
    with pytest.raises(ValueError):
        Ray(np.zeros(3), np.array([0, 0, 2.0]))
    with pytest.raises(ValueError):
        Ray(np.zeros(3), np.array([0, 0, 1.0]), t_min=-1)
    r = Ray.towards((0, 0, 0), (0, 3, 4))
    np.testing.assert_allclose(r.at(5.0), (0, 3, 4))


# ---- camera

@pytest.mark.parametrize("projection", ["perspective", "orthographic"])
def test_camera_project_inverts_rays(projection, rng):
    cam = Camera.default(37, 29, projection=projection)
    rows = rng.integers(0, 29, 50)
    cols = rng.integers(0, 37, 50)
    o, d = cam.rays_for(rows, cols)
    pts = o + rng.uniform(5, 15, size=(50, 1)) * d
    rc = cam.project(pts)
    np.testing.assert_allclose(rc[:, 0], rows, atol=1e-9)
    np.testing.assert_allclose(rc[:, 1], cols, atol=1e-9)


def test_default_camera_spans_unit_half_height_at_origin():
    cam = Camera.default(256)
    assert cam.half_height_at(10.0) == pytest.approx(1.0, abs=1e-12)
    assert cam.pixel_footprint() == pytest.approx(2 / 256)


def test_camera_rejects_bad_basis():
    with pytest.raises(ValueError):
        Camera((0, 0, 10), (1, 0, 0), (0, 1, 0), (0, 1, 0), 8, 8)
    with pytest.raises(ValueError):
        Camera.default(0)


# ---- BVH structure

def test_single_triangle_bvh():
    m = TriangleMesh([(0, 0, 0), (1, 0, 0), (0, 2, 1)], [(0, 1, 2)])
    b = build_bvh(m)
    assert b.n_nodes == 1
    np.testing.assert_array_equal(b.bmin[0], (0, 0, 0))
    np.testing.assert_array_equal(b.bmax[0], (1, 2, 1))


def check_bvh_invariants(bvh, n_tris):
    leaf_tris = np.concatenate([ids for _, ids in bvh.leaves()])
    assert sorted(leaf_tris.tolist()) == list(range(n_tris))
    for node, ids in bvh.leaves():
        assert 1 <= len(ids) <= 8 or n_tris < 1
    for n in range(bvh.n_nodes):
        if bvh.left[n] >= 0:
            for ch in (bvh.left[n], bvh.right[n]):
                assert np.all(bvh.bmin[ch] >= bvh.bmin[n] - 1e-9)
                assert np.all(bvh.bmax[ch] <= bvh.bmax[n] + 1e-9)


def test_bvh_invariants_icosphere():
    m = icosphere(1.0, 3)
    check_bvh_invariants(build_bvh(m), m.n_triangles)


def test_two_disjoint_cubes_split_at_root():
    m = concatenate([box(1.0), box(1.0, center=(5, 0, 0))])
    b = build_bvh(m)
    lo, hi = m.bounds()
    np.testing.assert_allclose(b.bmin[0], lo)
    np.testing.assert_allclose(b.bmax[0], hi)
    left = set(b.subtree_triangles(int(b.left[0])).tolist())
    right = set(b.subtree_triangles(int(b.right[0])).tolist())
    first, second = set(range(12)), set(range(12, 24))
    assert {frozenset(left), frozenset(right)} == {frozenset(first), frozenset(second)}


def test_empty_mesh_rejected():
    with pytest.raises(EmptyMesh):
        build_bvh(TriangleMesh([(0, 0, 0), (1, 0, 0), (2, 0, 0)], [(0, 1, 2)]))


# ---- intersection

def test_cube_hits(cube):
    hits = intersect_all(build_bvh(cube), cube, Ray(np.array([0, 0, 10.0]), np.array([0, 0, -1.0])))
    assert [h.t for h in hits] == [9.5, 10.5]


def test_miss_is_empty(cube):
    assert intersect_all(build_bvh(cube), cube, Ray(np.array([5, 5, 10.0]), np.array([0, 0, -1.0]))) == []


def test_stacked_quads():
    m = concatenate([quad(0.0), quad(-1.0)])
    hits = intersect_all(build_bvh(m), m, Ray(np.array([0.1, 0.2, 10.0]), np.array([0, 0, -1.0])))
    np.testing.assert_allclose([h.t for h in hits], [10.0, 11.0], rtol=0, atol=1e-12)


def test_shared_edge_reported_once_lowest_id():
    m = quad(0.0)  # diagonal edge from (-.5,-.5) to (.5,.5) shared by triangles 0 and 1
    hits = intersect_all(build_bvh(m), m, Ray(np.array([0.0, 0.0, 10.0]), np.array([0, 0, -1.0])))
    assert len(hits) == 1 and hits[0].triangle == 0


def test_coincident_faces_merge():
    m = concatenate([quad(0.0), quad(0.0)])
    hits = intersect_all(build_bvh(m), m, Ray(np.array([0.1, 0.3, 10.0]), np.array([0, 0, -1.0])))
    # the point lies in triangle 1 of each copy; the lower id (1) survives
    assert len(hits) == 1 and hits[0].triangle == 1
    assert hits[0].t == pytest.approx(10.0, abs=1e-12)


def test_t_min_excludes_earlier_hits(cube):
    hits = intersect_all(build_bvh(cube), cube, Ray(np.array([0, 0, 10.0]), np.array([0, 0, -1.0]), 10.0))
    assert [h.t for h in hits] == [10.5]


def test_icosphere_matches_brute_force_1000_rays(ico, rng):
    bvh = build_bvh(ico)
    o, d = random_rays(1000, rng)
    n_hits = 0
    for k in range(1000):
        ray = Ray(o[k], d[k])
        got = intersect_all(bvh, ico, ray)
        want = brute_hits(ico.vertices, ico.triangles, o[k], d[k], 0.0, bvh.merge_eps)
        assert len(got) == len(want)
        for h, (t, i) in zip(got, want):
            assert abs(h.t - t) <= 1e-9
            assert h.triangle == i
        n_hits += len(got)
    assert n_hits > 500


def test_hit_barycentrics_reconstruct_point(ico, rng):
    bvh = build_bvh(ico)
    o, d = random_rays(200, rng)
    for k in range(200):
        ray = Ray(o[k], d[k])
        ts = [h.t for h in intersect_all(bvh, ico, ray)]
        assert ts == sorted(ts)
        for h in intersect_all(bvh, ico, ray):
            b = np.array(h.bary)
            assert np.all(b >= -1e-12) and abs(b.sum() - 1) < 1e-6
            p = b @ ico.vertices[ico.triangles[h.triangle]]
            assert np.linalg.norm(p - ray.at(h.t)) < 1e-6


@st.composite
def soups(draw):
    n = draw(st.integers(1, 60))
    seed = draw(st.integers(0, 2**31))
    r = np.random.default_rng(seed)
    centers = r.uniform(-1, 1, size=(n, 1, 3))
    v = (centers + r.normal(scale=0.4, size=(n, 3, 3))).reshape(-1, 3)
    return TriangleMesh(v, np.arange(3 * n).reshape(-1, 3)), seed


@settings(max_examples=40, deadline=None)
@given(soups())
def test_random_soup_matches_brute_force(data):
    mesh, seed = data
    bvh = build_bvh(mesh)
    check_bvh_invariants(bvh, mesh.n_triangles)
    o, d = random_rays(50, np.random.default_rng(seed + 1))
    for k in range(50):
        got = intersect_all(bvh, mesh, Ray(o[k], d[k]))
        want = brute_hits(mesh.vertices, mesh.triangles, o[k], d[k], 0.0, bvh.merge_eps)
        assert [h.triangle for h in got] == [i for _, i in want]
        np.testing.assert_allclose([h.t for h in got], [t for t, _ in want], atol=1e-9, rtol=0)


def test_moller_trumbore_oracle_sanity():
    a, b, c = np.array([0, 0, 0.0]), np.array([1, 0, 0.0]), np.array([0, 1, 0.0])
    t, u, v = moller_trumbore(np.array([0.25, 0.25, 1.0]), np.array([0, 0, -1.0]), a, b, c)
    assert (t, u, v) == (1.0, 0.25, 0.25)


def test_closest_points_quad():
    m = quad(0.0, half=50.0)
    d, _ = closest_points(build_bvh(m), m, np.array([[1.0, 2.0, 0.7], [60.0, 0.0, 0.0]]))
    np.testing.assert_allclose(d, [0.7, 10.0], atol=1e-12)
