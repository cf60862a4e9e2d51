"""OBJ and binary little-endian PLY reading/writing.

OBJ: ``v x y z [r g b]`` (colors in [0, 1], or 0-255 if any exceeds 1),
``vn``, and ``f`` with ``i``, ``i/j``, ``i//k`` or ``i/j/k`` corners. Polygons
are fan-triangulated, negative indices are relative. A ``vn`` referenced by a
face corner becomes that vertex's normal (last reference wins). Other
statements are ignored.

PLY: ``binary_little_endian 1.0`` only. The ``vertex`` element needs x, y, z;
red/green/blue (uchar, or float in [0, 1]), nx/ny/nz and ``layer`` are picked
up when present, everything else is skipped. Faces come from a list property
named ``vertex_indices`` or ``vertex_index``.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import MeshParseError
from .geometry import TriangleMesh

PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def _obj_index(tok: str, n: int, path, lineno) -> int:
    try:
        i = int(tok)
    except ValueError:
        raise MeshParseError(f"{path}:{lineno}: bad index {tok!r}") from None
    if i == 0:
        raise MeshParseError(f"{path}:{lineno}: OBJ indices are 1-based")
    i = i - 1 if i > 0 else n + i
    if not 0 <= i < n:
        raise MeshParseError(f"{path}:{lineno}: index {tok} out of range")
    return i


def read_obj(path) -> TriangleMesh:
    verts, cols, vns, faces = [], [], [], []
    corner_normals: dict[int, int] = {}
    with open(path, "r") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split("#", 1)[0].split()
            if not parts:
                continue
            tag, args = parts[0], parts[1:]
            try:
                if tag == "v":
                    if len(args) not in (3, 4, 6, 7):
                        raise ValueError
                    verts.append([float(x) for x in args[:3]])
                    if len(args) >= 6:
                        cols.append([float(x) for x in args[3:6]])
                elif tag == "vn":
                    vns.append([float(x) for x in args[:3]])
                elif tag == "f":
                    if len(args) < 3:
                        raise MeshParseError(f"{path}:{lineno}: face needs 3+ corners")
                    idx = []
                    for corner in args:
                        fields = corner.split("/")
                        vi = _obj_index(fields[0], len(verts), path, lineno)
                        if len(fields) == 3 and fields[2]:
                            corner_normals[vi] = _obj_index(fields[2], len(vns), path, lineno)
                        idx.append(vi)
                    for k in range(1, len(idx) - 1):
                        faces.append((idx[0], idx[k], idx[k + 1]))
            except ValueError as exc:
                if isinstance(exc, MeshParseError):
                    raise
                raise MeshParseError(f"{path}:{lineno}: cannot parse {line.strip()!r}") from None
    if cols and len(cols) != len(verts):
        raise MeshParseError(f"{path}: vertex colors given for only some vertices")
    colors = None
    if cols:
        colors = np.array(cols)
        if colors.max() > 1.0:
            colors = colors / 255.0
    normals = None
    if corner_normals and len(corner_normals) == len(verts):
        normals = np.zeros((len(verts), 3))
        vn = np.array(vns)
        for vi, ni in corner_normals.items():
            normals[vi] = vn[ni]
    return TriangleMesh(np.array(verts).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3),
                        colors, normals)


def write_obj(path, mesh: TriangleMesh) -> None:
    with open(path, "w") as fh:
        for i, v in enumerate(mesh.vertices):
            if mesh.colors is not None:
                c = mesh.colors[i]
                fh.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g} {c[0]:.6g} {c[1]:.6g} {c[2]:.6g}\n")
            else:
                fh.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for a, b, c in mesh.triangles + 1:
            fh.write(f"f {a} {b} {c}\n")


@dataclass
class _PlyElement:
    name: str
    count: int
    props: list  # (name, dtype) or (name, count_dtype, item_dtype)


def _parse_ply_header(fh, path):
    magic = fh.readline()
    if magic.strip() != b"ply":
        raise MeshParseError(f"{path}:1: not a PLY file")
    elements: list[_PlyElement] = []
    comments: list[str] = []
    fmt = None
    lineno = 1
    while True:
        raw = fh.readline()
        lineno += 1
        if not raw:
            raise MeshParseError(f"{path}:{lineno}: header has no end_header")
        tok = raw.decode("ascii", "replace").split()
        if tok and tok[0] == "comment":
            comments.append(raw.decode("ascii", "replace").strip()[len("comment "):])
            continue
        if not tok or tok[0] == "obj_info":
            continue
        if tok[0] == "end_header":
            break
        if tok[0] == "format":
            fmt = tok[1]
        elif tok[0] == "element":
            elements.append(_PlyElement(tok[1], int(tok[2]), []))
        elif tok[0] == "property":
            if not elements:
                raise MeshParseError(f"{path}:{lineno}: property before element")
            try:
                if tok[1] == "list":
                    elements[-1].props.append((tok[4], PLY_TYPES[tok[2]], PLY_TYPES[tok[3]]))
                else:
                    elements[-1].props.append((tok[2], PLY_TYPES[tok[1]]))
            except (KeyError, IndexError):
                raise MeshParseError(f"{path}:{lineno}: bad property line") from None
        else:
            raise MeshParseError(f"{path}:{lineno}: unexpected header line {tok[0]!r}")
    if fmt != "binary_little_endian":
        raise MeshParseError(f"{path}: only binary_little_endian PLY is supported (got {fmt})")
    return elements, comments


def _read_element(buf: memoryview, pos: int, el: _PlyElement, path):
    """Return (structured array or dict of lists, new position)."""
    if all(len(p) == 2 for p in el.props):
        dt = np.dtype([(p[0], "<" + p[1]) for p in el.props])
        end = pos + dt.itemsize * el.count
        if end > len(buf):
            raise MeshParseError(f"{path}: truncated {el.name} data")
        return np.frombuffer(buf[pos:end], dtype=dt), end
    if el.count == 0:
        return {p[0]: [] for p in el.props}, pos
    out: dict[str, list] = {p[0]: [] for p in el.props}
    for _ in range(el.count):
        for p in el.props:
            if len(p) == 2:
                dt = np.dtype("<" + p[1])
                out[p[0]].append(np.frombuffer(buf[pos:pos + dt.itemsize], dt)[0])
                pos += dt.itemsize
            else:
                cdt, idt = np.dtype("<" + p[1]), np.dtype("<" + p[2])
                n = int(np.frombuffer(buf[pos:pos + cdt.itemsize], cdt)[0])
                pos += cdt.itemsize
                out[p[0]].append(np.frombuffer(buf[pos:pos + n * idt.itemsize], idt))
                pos += n * idt.itemsize
                if pos > len(buf):
                    raise MeshParseError(f"{path}: truncated {el.name} data")
    return out, pos


def _read_faces_fast(buf, pos, el, path):
    """Triangle-only face element with a single list property."""
    (name, cdt, idt), = el.props
    dt = np.dtype([("n", "<" + cdt), ("i", "<" + idt, (3,))])
    end = pos + dt.itemsize * el.count
    if end <= len(buf):
        arr = np.frombuffer(buf[pos:end], dtype=dt)
        if np.all(arr["n"] == 3):
            return arr["i"].astype(np.int64), end
    return None


@dataclass
class PlyData:
    vertices: np.ndarray
    faces: np.ndarray
    colors: Optional[np.ndarray]
    normals: Optional[np.ndarray]
    layer: Optional[np.ndarray]
    comments: list


def read_ply_data(path) -> PlyData:
    with open(path, "rb") as fh:
        elements, comments = _parse_ply_header(fh, path)
        buf = memoryview(fh.read())
    pos = 0
    verts = faces = colors = normals = layer = None
    for el in elements:
        if el.name == "face" and len(el.props) == 1 and len(el.props[0]) == 3:
            fast = _read_faces_fast(buf, pos, el, path)
            if fast is not None:
                faces, pos = fast
                continue
        data, pos = _read_element(buf, pos, el, path)
        if el.name == "vertex":
            names = data.dtype.names if isinstance(data, np.ndarray) else tuple(data)
            if not {"x", "y", "z"} <= set(names):
                raise MeshParseError(f"{path}: vertex element lacks x/y/z")
            col = lambda k: np.asarray(data[k], dtype=np.float64)  # noqa: E731
            verts = np.stack([col("x"), col("y"), col("z")], axis=1)
            if {"red", "green", "blue"} <= set(names):
                c = np.stack([col("red"), col("green"), col("blue")], axis=1)
                kind = data.dtype["red"].kind if isinstance(data, np.ndarray) else "u"
                colors = c / 255.0 if kind in "ui" else c
            if {"nx", "ny", "nz"} <= set(names):
                normals = np.stack([col("nx"), col("ny"), col("nz")], axis=1)
            if "layer" in names:
                layer = np.asarray(data["layer"], dtype=np.uint8)
        elif el.name == "face":
            key = next((k for k in ("vertex_indices", "vertex_index") if k in data), None)
            if key is None:
                raise MeshParseError(f"{path}: face element lacks vertex_indices")
            tris = []
            for poly in data[key]:
                for k in range(1, len(poly) - 1):
                    tris.append((poly[0], poly[k], poly[k + 1]))
            faces = np.array(tris, dtype=np.int64).reshape(-1, 3)
    if verts is None:
        raise MeshParseError(f"{path}: no vertex element")
    if faces is None:
        faces = np.zeros((0, 3), np.int64)
    return PlyData(verts, faces, colors, normals, layer, comments)


def read_ply(path) -> TriangleMesh:
    d = read_ply_data(path)
    return TriangleMesh(d.vertices, d.faces, d.colors, d.normals)


def write_ply(path, vertices, faces=None, colors=None, normals=None, layer=None, comments=()) -> None:
    """Binary little-endian PLY: float32 positions/normals, uchar colors/layer."""
    vertices = np.asarray(vertices)
    fields = [("x", "<f4"), ("y", "<f4"), ("z", "<f4")]
    if normals is not None:
        fields += [("nx", "<f4"), ("ny", "<f4"), ("nz", "<f4")]
    if colors is not None:
        fields += [("red", "u1"), ("green", "u1"), ("blue", "u1")]
    if layer is not None:
        fields += [("layer", "u1")]
    rec = np.zeros(len(vertices), dtype=np.dtype(fields))
    rec["x"], rec["y"], rec["z"] = vertices.T
    if normals is not None:
        rec["nx"], rec["ny"], rec["nz"] = np.asarray(normals).T
    if colors is not None:
        c = np.clip(np.rint(np.asarray(colors) * 255.0), 0, 255).astype(np.uint8)
        rec["red"], rec["green"], rec["blue"] = c.T
    if layer is not None:
        rec["layer"] = layer
    type_name = {"<f4": "float", "u1": "uchar"}
    header = ["ply", "format binary_little_endian 1.0"]
    header += [f"comment {c}" for c in comments]
    header.append(f"element vertex {len(rec)}")
    header += [f"property {type_name[t]} {n}" for n, t in fields]
    n_faces = 0 if faces is None else len(faces)
    if n_faces:
        header += [f"element face {n_faces}", "property list uchar int vertex_indices"]
    header.append("end_header")
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        fh.write(rec.tobytes())
        if n_faces:
            frec = np.zeros(n_faces, dtype=[("n", "u1"), ("i", "<i4", (3,))])
            frec["n"] = 3
            frec["i"] = faces
            fh.write(frec.tobytes())


def write_mesh_ply(path, mesh: TriangleMesh) -> None:
    write_ply(path, mesh.vertices, mesh.triangles, mesh.colors, mesh.normals)


def read_mesh(path) -> TriangleMesh:
    ext = os.path.splitext(str(path))[1].lower()
    if ext == ".obj":
        return read_obj(path)
    if ext == ".ply":
        return read_ply(path)
    raise MeshParseError(f"{path}: unsupported mesh extension {ext!r}")


def write_mesh(path, mesh: TriangleMesh) -> None:
    ext = os.path.splitext(str(path))[1].lower()
    if ext == ".obj":
        write_obj(path, mesh)
    elif ext == ".ply":
        write_mesh_ply(path, mesh)
    else:
        raise ValueError(f"unsupported mesh extension {ext!r}")
