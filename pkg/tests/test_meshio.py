import numpy as np
import pytest

from peelkit.errors import MeshParseError
from peelkit.meshio import read_mesh, read_obj, read_ply, read_ply_data, write_mesh, write_obj, write_ply
from peelkit.scenes import box, paint


def test_obj_polygons_colors_negative_indices(tmp_path):
    p = tmp_path / "q.obj"
    p.write_text(
        "# quad\n"
        "v 0 0 0 255 0 0\nv 1 0 0 0 255 0\nv 1 1 0 0 0 255\nv 0 1 0 255 255 255\n"
        "vn 0 0 1\n"
        "f -4//1 -3//1 -2//1 -1//1\n"
    )
    m = read_obj(p)
    np.testing.assert_array_equal(m.triangles, [[0, 1, 2], [0, 2, 3]])
    np.testing.assert_allclose(m.colors[0], (1, 0, 0))
    np.testing.assert_allclose(m.normals, np.tile((0, 0, 1.0), (4, 1)))


def test_obj_error_names_path_and_line(tmp_path):
    p = tmp_path / "bad.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n")
    with pytest.raises(MeshParseError, match=r"bad\.obj:4"):
        read_obj(p)
    p.write_text("v 0 0\n")
    with pytest.raises(MeshParseError, match=r"bad\.obj:1"):
        read_obj(p)


def test_obj_round_trip(tmp_path):
    m = paint(box(1.0), 3)
    write_obj(tmp_path / "c.obj", m)
    back = read_obj(tmp_path / "c.obj")
    np.testing.assert_allclose(back.vertices, m.vertices)
    np.testing.assert_array_equal(back.triangles, m.triangles)
    np.testing.assert_allclose(back.colors, m.colors, atol=1e-6)


def test_ply_round_trip_and_layout(tmp_path):
    m = paint(box(1.0), 1)
    write_mesh(tmp_path / "c.ply", m)
    raw = (tmp_path / "c.ply").read_bytes()
    assert raw.startswith(b"ply\nformat binary_little_endian 1.0\n")
    header = raw[:raw.index(b"end_header\n")].decode()
    assert "property float x" in header and "property uchar red" in header
    back = read_ply(tmp_path / "c.ply")
    np.testing.assert_allclose(back.vertices, m.vertices.astype(np.float32))
    np.testing.assert_array_equal(back.triangles, m.triangles)
    np.testing.assert_allclose(back.colors, np.rint(m.colors * 255) / 255)


def test_ply_unknown_properties_skipped(tmp_path):
    p = tmp_path / "x.ply"
    header = (b"ply\nformat binary_little_endian 1.0\ncomment made by hand\n"
              b"element vertex 3\nproperty float x\nproperty double confidence\nproperty float y\n"
              b"property float z\nproperty uchar layer\n"
              b"element face 1\nproperty list uchar uint vertex_index\nproperty float quality\n"
              b"end_header\n")
    vdt = np.dtype([("x", "<f4"), ("c", "<f8"), ("y", "<f4"), ("z", "<f4"), ("layer", "u1")])
    v = np.zeros(3, vdt)
    v["x"], v["y"], v["layer"] = (0, 1, 0), (0, 0, 1), (1, 2, 3)
    face = np.array([3], "u1").tobytes() + np.array([0, 1, 2], "<u4").tobytes() + np.array([0.5], "<f4").tobytes()
    p.write_bytes(header + v.tobytes() + face)
    d = read_ply_data(p)
    np.testing.assert_array_equal(d.faces, [[0, 1, 2]])
    np.testing.assert_array_equal(d.layer, [1, 2, 3])
    assert d.comments == ["made by hand"]
    np.testing.assert_allclose(d.vertices[:, :2], [[0, 0], [1, 0], [0, 1]])


def test_ply_rejects_ascii(tmp_path):
    p = tmp_path / "a.ply"
    p.write_bytes(b"ply\nformat ascii 1.0\nelement vertex 0\nproperty float x\nend_header\n")
    with pytest.raises(MeshParseError, match="a.ply"):
        read_ply(p)


def test_ply_truncated(tmp_path):
    p = tmp_path / "t.ply"
    write_ply(p, np.zeros((10, 3)))
    p.write_bytes(p.read_bytes()[:-5])
    with pytest.raises(MeshParseError, match="truncated"):
        read_ply(p)


def test_unknown_extension(tmp_path):
    with pytest.raises(MeshParseError):
        read_mesh(tmp_path / "m.stl")
