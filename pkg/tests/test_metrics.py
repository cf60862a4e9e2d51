import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from oracles import brute_chamfer, brute_nearest_sq, brute_point_to_mesh, point_triangle_distance
from peelkit.bvh import build_bvh
from peelkit.errors import EmptyMesh, EmptySet, ResolutionMismatch
from peelkit.geometry import TriangleMesh
from peelkit.metrics import chamfer, chamfer_mean, normal_reprojection, p2s, point_to_surface
from peelkit.scenes import icosphere, quad


@pytest.fixture(scope="module")
def bumpy():
    """~5k-triangle irregular closed surface."""
    s = icosphere(1.0, 4)
    r = np.random.default_rng(3)
    v = s.vertices * r.uniform(0.85, 1.15, size=(s.n_vertices, 1))
    return TriangleMesh(v, s.triangles)


def test_chamfer_trivial():
    a = np.random.default_rng(0).normal(size=(50, 3))
    assert chamfer(a, a) == 0.0
    assert chamfer([(0, 0, 0)], [(1, 0, 0)]) == 2.0
    with pytest.raises(EmptySet):
        chamfer(np.zeros((0, 3)), a)


def test_chamfer_matches_brute_force_1k():
    r = np.random.default_rng(1)
    a, b = r.normal(size=(1000, 3)), r.uniform(-2, 2, size=(1000, 3))
    assert abs(chamfer(a, b) - brute_chamfer(a, b)) < 1e-9
    want_mean = brute_nearest_sq(a, b).mean() + brute_nearest_sq(b, a).mean()
    assert abs(chamfer_mean(a, b) - want_mean) < 1e-9
    assert chamfer(a, b) == chamfer(b, a)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 40), st.just(3)), elements=st.floats(-10, 10)),
       arrays(np.float64, st.tuples(st.integers(1, 40), st.just(3)), elements=st.floats(-10, 10)))
def test_chamfer_symmetric_nonnegative(a, b):
    assert chamfer(a, b) == chamfer(b, a) >= 0
    assert chamfer(a, a) == 0.0
    assert abs(chamfer(a, b) - brute_chamfer(a, b)) <= 1e-9 * max(1.0, brute_chamfer(a, b))


def test_p2s_on_surface_and_above_plane(bumpy):
    pts = bumpy.sample_surface(2000, np.random.default_rng(0))
    assert p2s(pts, bumpy) < 1e-7
    big = quad(0.0, half=100.0)
    assert p2s([(0.3, -2.0, 0.75)], big) == pytest.approx(0.75, abs=1e-12)


def test_p2s_matches_all_triangle_oracle(bumpy):
    assert 5000 <= bumpy.n_triangles <= 5200
    pts = np.random.default_rng(2).uniform(-1.5, 1.5, size=(1000, 3))
    d = point_to_surface(pts, bumpy, build_bvh(bumpy))
    want = brute_point_to_mesh(pts, bumpy.vertices, bumpy.triangles)
    assert np.abs(d - want).max() < 1e-9
    assert abs(p2s(pts, bumpy) - want.mean()) < 1e-9


def test_point_triangle_regions():
    a, b, c = np.array([0, 0, 0.0]), np.array([1, 0, 0.0]), np.array([0, 1, 0.0])
    m = TriangleMesh([a, b, c], [(0, 1, 2)])
    cases = {(0.2, 0.2, 0.5): 0.5, (-1, -1, 0): np.sqrt(2), (0.5, -2, 0): 2.0, (2, 2, 0): np.sqrt(4.5)}
    for p, want in cases.items():
        got = point_to_surface([p], m)[0]
        assert got == pytest.approx(want, abs=1e-12)
        assert point_triangle_distance(np.array(p, float), a, b, c) == pytest.approx(want, abs=1e-12)


def test_p2s_errors():
    with pytest.raises(EmptySet):
        p2s(np.zeros((0, 3)), quad())
    empty = TriangleMesh(np.zeros((3, 3)), np.zeros((0, 3), int))
    with pytest.raises(EmptyMesh):
        p2s([(0, 0, 0)], empty)


def test_normal_reprojection():
    n = np.zeros((10, 10, 3))
    n[2:8, 2:8] = (0, 0, 1)
    assert normal_reprojection(n, n) == 0.0
    flipped = n.copy()
    flipped[2, 2:7] *= -1  # k = 5 antipodal pixels
    assert normal_reprojection(flipped, n) == pytest.approx(2 * 5 / 36, abs=1e-15)
    # a pixel present on one side only counts with the other side's norm
    extra = n.copy()
    extra[0, 0] = (1, 0, 0)
    assert normal_reprojection(extra, n) == pytest.approx(1 / 37, abs=1e-15)
    with pytest.raises(ResolutionMismatch):
        normal_reprojection(n, n[:5])


def test_normal_reprojection_loop_oracle():
    r = np.random.default_rng(4)
    a, b = r.normal(size=(12, 9, 3)), r.normal(size=(12, 9, 3))
    a[r.uniform(size=(12, 9)) > 0.6] = 0
    b[r.uniform(size=(12, 9)) > 0.6] = 0
    acc, cnt = 0.0, 0
    for i in range(12):
        for j in range(9):
            if np.any(a[i, j] != 0) or np.any(b[i, j] != 0):
                acc += np.sqrt(sum((a[i, j, k] - b[i, j, k]) ** 2 for k in range(3)))
                cnt += 1
    assert abs(normal_reprojection(a, b) - acc / cnt) < 1e-12
