import numpy as np
import pytest

from oracles import brute_kth_distance
from peelkit.bvh import build_bvh
from peelkit.errors import ResolutionMismatch, TooFewPoints
from peelkit.geometry import Camera
from peelkit.meshio import read_ply_data
from peelkit.metrics import point_to_surface
from peelkit.pointcloud import (ColoredPointCloud, backproject, estimate_normals, filter_outliers,
                                knn_distances, read_cloud, write_cloud)
from peelkit.render import PeelStack, render_peel
from peelkit.scenes import box, icosphere, paint, planted_outliers, rotate


def cloud(points, layer=1):
    n = len(points)
    return ColoredPointCloud(points, np.zeros((n, 3)), np.full(n, layer))


def test_sphere_backprojection_on_surface():
    mesh = paint(icosphere(0.8, 4), 0)
    cam = Camera.default(96)
    st = render_peel(mesh, None, cam, 4)
    pc = backproject(st)
    assert len(pc) == int(st.support().sum())
    d = point_to_surface(pc.positions, mesh)
    assert d.max() < 1e-6 * 0.8
    # and on the analytic sphere up to the tessellation sagitta
    r = np.linalg.norm(pc.positions, axis=1)
    assert np.all(r <= 0.8 + 1e-6) and np.all(r > 0.8 * 0.995)
    assert set(np.unique(pc.layer)) == {1, 2}
    np.testing.assert_array_equal(pc.colors, st.rgb[st.depth > 0])


def test_cube_backprojection_within_diagonal_tolerance():
    mesh = rotate(box(1.0), (1, 1, 0), 0.7)
    st = render_peel(mesh, None, Camera.default(80, projection="orthographic"), 4)
    d = point_to_surface(backproject(st).positions, mesh, build_bvh(mesh))
    assert d.max() < 1e-6 * mesh.diagonal()


def test_empty_stack_gives_empty_cloud():
    st = PeelStack(np.zeros((4, 8, 8)), Camera.default(8))
    assert len(backproject(st)) == 0


def test_single_pixel_orthographic():
    cam = Camera.default(5, projection="orthographic")
    d = np.zeros((2, 5, 5), np.float32)
    d[0, 1, 3] = 9.5
    pc = backproject(PeelStack(d, cam))
    assert len(pc) == 1
    x = ((3 + 0.5) / 5 * 2 - 1) * 1.0
    y = (1 - (1 + 0.5) / 5 * 2) * 1.0
    np.testing.assert_allclose(pc.positions[0], (x, y, 0.5), atol=1e-12)
    assert pc.layer[0] == 1


def test_backproject_foreground_and_mismatch():
    cam = Camera.default(6)
    d = np.full((1, 6, 6), 10.0, np.float32)
    fg = np.zeros((6, 6), np.uint8)
    fg[2:4, 2:4] = 1
    assert len(backproject(PeelStack(d, cam), fg=fg)) == 4
    with pytest.raises(ResolutionMismatch):
        backproject(PeelStack(d, cam), fg=np.ones((5, 5)))
    other = PeelStack(np.zeros((1, 6, 6)), Camera.default(6, projection="orthographic"), np.zeros((1, 6, 6, 3)))
    with pytest.raises(ResolutionMismatch):
        backproject(PeelStack(d, cam), other)


def test_knn_matches_brute_force():
    pts = np.random.default_rng(0).normal(size=(2000, 3))
    for k in (1, 4, 16):
        np.testing.assert_allclose(knn_distances(pts, k), brute_kth_distance(pts, k), atol=1e-12, rtol=0)


def test_planted_outliers_removed_exactly():
    pts, is_out = planted_outliers()
    assert is_out.sum() == 100 and len(pts) == 50_100
    out = filter_outliers(cloud(pts), 16, 0.01)
    assert len(out) == 50_000
    kept = {tuple(p) for p in out.positions}
    assert not any(tuple(p) in kept for p in pts[is_out])
    assert out.meta["filter_removed"] == 100
    again = filter_outliers(out, 16, 0.01)
    assert len(again) == len(out)
    np.testing.assert_array_equal(again.positions, out.positions)


def test_filter_idempotent_through_ply(tmp_path):
    pts, _ = planted_outliers(seed=3)
    out = filter_outliers(cloud(pts))
    assert len(out) == 50_000
    write_cloud(tmp_path / "f.ply", out)
    back = read_cloud(tmp_path / "f.ply")
    assert back.meta["filter_scale"] == out.meta["filter_scale"]
    assert len(filter_outliers(back)) == len(back)


def test_filter_trivial_cases():
    same = cloud(np.ones((17, 3)))
    assert len(filter_outliers(same, 16, 0.01)) == 17
    pts = np.random.default_rng(1).normal(size=(300, 3))
    assert len(filter_outliers(cloud(pts), 16, np.inf)) == 300
    with pytest.raises(TooFewPoints):
        filter_outliers(cloud(pts[:16]), 16)


def test_filter_rule_matches_brute_force():
    pts = np.random.default_rng(2).normal(size=(1500, 3))
    pts[:10] *= 6
    scale = np.linalg.norm(pts.max(0) - pts.min(0))
    keep = brute_kth_distance(pts, 16) / scale <= 0.05
    out = filter_outliers(cloud(pts), 16, 0.05)
    np.testing.assert_array_equal(out.positions, pts[keep])


def test_plane_normals():
    r = np.random.default_rng(0)
    pts = np.c_[r.uniform(-1, 1, size=(400, 2)), np.zeros(400)]
    cam = Camera.default(32)
    out = estimate_normals(cloud(pts, 1), 16, cam)
    np.testing.assert_allclose(out.normals, np.tile((0, 0, 1.0), (400, 1)), atol=1e-9)
    back = estimate_normals(cloud(pts, 2), 16, cam)
    np.testing.assert_allclose(back.normals, np.tile((0, 0, -1.0), (400, 1)), atol=1e-9)
    facing = estimate_normals(cloud(pts, 2), 16, cam, orient="camera")
    np.testing.assert_allclose(facing.normals, np.tile((0, 0, 1.0), (400, 1)), atol=1e-9)


def test_sphere_normals_orientation():
    mesh = icosphere(0.8, 4)
    cam = Camera.default(128)
    pc = estimate_normals(backproject(render_peel(mesh, None, cam, 2)), 16, cam)
    np.testing.assert_allclose(np.linalg.norm(pc.normals, axis=1), 1.0, atol=1e-6)
    view = pc.positions - np.array(cam.center)
    dots = np.einsum("ij,ij->i", pc.normals, view)
    first = pc.layer == 1
    assert (dots[first] < 0).mean() >= 0.99
    assert (dots[~first] > 0).mean() >= 0.99
    # close to the analytic outward normal
    radial = pc.positions / np.linalg.norm(pc.positions, axis=1, keepdims=True)
    assert np.median(np.einsum("ij,ij->i", pc.normals, radial)) > 0.999


def test_normals_need_enough_points():
    with pytest.raises(TooFewPoints):
        estimate_normals(cloud(np.zeros((5, 3))), 16, Camera.default(8))
    with pytest.raises(ValueError):
        estimate_normals(cloud(np.random.default_rng(0).normal(size=(40, 3))), 4, Camera.default(8), "sideways")


def test_cloud_ply_layout(tmp_path):
    r = np.random.default_rng(0)
    pc = ColoredPointCloud(r.normal(size=(10, 3)), r.uniform(size=(10, 3)), np.arange(10) % 4 + 1,
                           np.tile((0, 0, 1.0), (10, 1)), {"filter_k": 16})
    write_cloud(tmp_path / "c.ply", pc)
    raw = (tmp_path / "c.ply").read_bytes()
    header = raw[:raw.index(b"end_header")].decode()
    for line in ("property float x", "property float nx", "property uchar red", "property uchar layer",
                 "comment peelkit filter_k=16"):
        assert line in header
    d = read_ply_data(tmp_path / "c.ply")
    np.testing.assert_array_equal(d.layer, pc.layer)
    back = read_cloud(tmp_path / "c.ply")
    np.testing.assert_allclose(back.positions, pc.positions, rtol=1e-6)
    assert back.meta == {"filter_k": 16}
