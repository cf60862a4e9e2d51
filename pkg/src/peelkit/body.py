"""Linear-blend-skinned parametric body (SMPL-style) and a toy generator.

Posing follows the usual SMPL order: shape blendshapes, joint regression from
the shaped vertices, pose blendshapes driven by ``R(theta_j) - I`` of the
non-root joints, then linear blend skinning along the kinematic tree.
"""
from __future__ import annotations

import logging
import math
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DimensionMismatch, FormatError, NonPositiveScale
from .geometry import Camera, TriangleMesh

logger = logging.getLogger(__name__)

LBSM_MAGIC = b"LBSM"
LBSM_VERSION = 1
_LBSM_HEADER = struct.Struct("<4sIIIIII")


@dataclass(eq=False)
class BodyModel:
    """template (V, 3), faces (F, 3), weights (V, J), shapedirs (V, 3, S),
    posedirs (V, 3, 9 * (J - 1)), j_regressor (J, V), parents (J,) with -1
    marking the root."""

    template: np.ndarray
    faces: np.ndarray
    weights: np.ndarray
    shapedirs: np.ndarray
    posedirs: np.ndarray
    j_regressor: np.ndarray
    parents: np.ndarray
    order: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.template = np.asarray(self.template, dtype=np.float64)
        self.faces = np.asarray(self.faces, dtype=np.int64)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.shapedirs = np.asarray(self.shapedirs, dtype=np.float64)
        self.posedirs = np.asarray(self.posedirs, dtype=np.float64)
        self.j_regressor = np.asarray(self.j_regressor, dtype=np.float64)
        self.parents = np.asarray(self.parents, dtype=np.int64)
        V, J = self.n_vertices, self.n_joints
        if self.template.shape != (V, 3) or self.weights.shape != (V, J):
            raise DimensionMismatch("template/weights shapes disagree")
        if self.shapedirs.ndim != 3 or self.shapedirs.shape[:2] != (V, 3):
            raise DimensionMismatch("shapedirs must be (V, 3, S)")
        if self.posedirs.shape != (V, 3, 9 * (J - 1)):
            raise DimensionMismatch("posedirs must be (V, 3, 9 * (J - 1))")
        if self.j_regressor.shape != (J, V):
            raise DimensionMismatch("j_regressor must be (J, V)")
        if np.any(self.weights < 0) or np.abs(self.weights.sum(1) - 1).max() > 1e-5:
            raise ValueError("skinning weights must be non-negative rows summing to 1")
        if np.abs(self.j_regressor.sum(1) - 1).max() > 1e-4:
            raise ValueError("joint regressor rows must sum to 1")
        self.order = _topological_order(self.parents)

    @property
    def n_vertices(self) -> int:
        return self.template.shape[0]

    @property
    def n_joints(self) -> int:
        return self.parents.shape[0]

    @property
    def n_shape(self) -> int:
        return self.shapedirs.shape[2]

    def rest_mesh(self) -> TriangleMesh:
        return TriangleMesh(self.template, self.faces)


def _topological_order(parents: np.ndarray) -> np.ndarray:
    J = len(parents)
    roots = np.flatnonzero(parents < 0)
    if len(roots) != 1:
        raise ValueError("kinematic tree needs exactly one root")
    if np.any(parents >= J):
        raise ValueError("parent index out of range")
    children = [[] for _ in range(J)]
    for j, p in enumerate(parents):
        if p >= 0:
            children[p].append(j)
    order, todo = [], [int(roots[0])]
    while todo:
        j = todo.pop(0)
        order.append(j)
        todo.extend(children[j])
    if len(order) != J:
        raise ValueError("kinematic tree has a cycle or unreachable joints")
    return np.array(order)


@dataclass
class BodyParams:
    """Shape coefficients, per-joint axis-angle pose and weak-perspective
    camera (scale, image-plane translation)."""

    beta: np.ndarray
    theta: np.ndarray
    s: float = 1.0
    tx: float = 0.0
    ty: float = 0.0

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=np.float64).ravel()
        theta = np.asarray(self.theta, dtype=np.float64).ravel()
        if not (np.all(np.isfinite(self.beta)) and np.all(np.isfinite(theta))):
            raise ValueError("body parameters must be finite")
        if not all(math.isfinite(x) for x in (self.s, self.tx, self.ty)):
            raise ValueError("camera parameters must be finite")
        if theta.size % 3:
            raise DimensionMismatch("theta length must be a multiple of 3")
        aa = theta.reshape(-1, 3).copy()
        angle = np.linalg.norm(aa, axis=1)
        big = angle >= 2 * np.pi
        aa[big] *= (np.mod(angle[big], 2 * np.pi) / angle[big])[:, None]
        self.theta = aa.ravel()

    @classmethod
    def zeros(cls, model: BodyModel) -> "BodyParams":
        return cls(np.zeros(model.n_shape), np.zeros(3 * model.n_joints))

    @classmethod
    def from_json(cls, d: dict) -> "BodyParams":
        return cls(d["beta"], d["theta"], float(d.get("s", 1.0)), float(d.get("tx", 0.0)),
                   float(d.get("ty", 0.0)))

    def to_json(self) -> dict:
        return {"beta": self.beta.tolist(), "theta": self.theta.tolist(),
                "s": self.s, "tx": self.tx, "ty": self.ty}


def rodrigues(aa: np.ndarray) -> np.ndarray:
    """Rotation matrices (N, 3, 3) for axis-angle vectors (N, 3).

    A zero vector maps to the identity exactly.
    """
    aa = np.asarray(aa, dtype=np.float64).reshape(-1, 3)
    out = np.tile(np.eye(3), (len(aa), 1, 1))
    angle = np.linalg.norm(aa, axis=1)
    nz = angle > 0
    if nz.any():
        k = aa[nz] / angle[nz, None]
        c, s = np.cos(angle[nz]), np.sin(angle[nz])
        kx = np.zeros((len(k), 3, 3))
        kx[:, 0, 1], kx[:, 0, 2] = -k[:, 2], k[:, 1]
        kx[:, 1, 0], kx[:, 1, 2] = k[:, 2], -k[:, 0]
        kx[:, 2, 0], kx[:, 2, 1] = -k[:, 1], k[:, 0]
        out[nz] = (np.eye(3) + s[:, None, None] * kx
                   + (1 - c)[:, None, None] * np.einsum("nij,njk->nik", kx, kx))
    return out


def joint_transforms(model: BodyModel, joints: np.ndarray, rot: np.ndarray):
    """Global joint rotations and joint displacements along the tree."""
    J = model.n_joints
    rg = np.empty((J, 3, 3))
    disp = np.zeros((J, 3))
    for j in model.order:
        p = model.parents[j]
        if p < 0:
            rg[j] = rot[j]
            continue
        rg[j] = rg[p] @ rot[j]
        disp[j] = disp[p] + (rg[p] - np.eye(3)) @ (joints[j] - joints[p])
    return rg, disp


def evaluate(model: BodyModel, params: BodyParams) -> TriangleMesh:
    """Posed, shaped body mesh in model coordinates.

    Skinning is applied as a weighted sum of per-joint displacements,
    ``(Rg_j - I)(v - J_j) + dp_j``, which equals classic LBS for normalized
    weights and leaves the rest pose bit-exact.
    """
    if params.beta.size != model.n_shape:
        raise DimensionMismatch(f"beta has {params.beta.size} entries, model expects {model.n_shape}")
    if params.theta.size != 3 * model.n_joints:
        raise DimensionMismatch(f"theta has {params.theta.size} entries, model expects {3 * model.n_joints}")
    v_shaped = model.template + np.einsum("vcs,s->vc", model.shapedirs, params.beta)
    joints = model.j_regressor @ v_shaped
    rot = rodrigues(params.theta)
    feat = (rot[1:] - np.eye(3)).ravel()
    v_posed = v_shaped + np.einsum("vcp,p->vc", model.posedirs, feat)
    rg, disp = joint_transforms(model, joints, rot)
    a = rg - np.eye(3)
    offset = disp - np.einsum("jab,jb->ja", a, joints)
    moved = np.einsum("vj,jab,vb->va", model.weights, a, v_posed) + model.weights @ offset
    return TriangleMesh(v_posed + moved, model.faces)


def apply_weak_perspective(mesh: TriangleMesh, s: float, tx: float, ty: float,
                           render_camera: Optional[Camera] = None) -> TriangleMesh:
    """Map x' = s(x + tx), y' = s(y + ty), z' = s z.

    Normalized crop coordinates are taken to be world units on the z = 0
    plane, so the render camera must see exactly [-1, 1] vertically there
    (true of ``Camera.default``); other cameras are accepted with a warning.
    """
    if not s > 0:
        raise NonPositiveScale(f"weak-perspective scale must be > 0, got {s}")
    if render_camera is not None:
        dist = float(np.dot(-np.array(render_camera.center), render_camera.forward))
        if abs(render_camera.half_height_at(dist) - 1.0) > 1e-6:
            logger.warning("render camera does not span [-1, 1] at z = 0; prior will be misaligned")
    v = mesh.vertices
    out = np.empty_like(v)
    out[:, 0] = s * (v[:, 0] + tx)
    out[:, 1] = s * (v[:, 1] + ty)
    out[:, 2] = s * v[:, 2]
    return TriangleMesh(out, mesh.triangles, mesh.colors)


def posed_mesh(model: BodyModel, params: BodyParams, camera: Optional[Camera] = None) -> TriangleMesh:
    return apply_weak_perspective(evaluate(model, params), params.s, params.tx, params.ty, camera)


# ---------------------------------------------------------------- LBSM files

def save_model(path, model: BodyModel) -> None:
    """LBSM container: header (magic, version, V, F, J, S, P as u32) then
    float32 template, weights, shapedirs, posedirs, j_regressor; int32 parents;
    uint32 faces. All little-endian, row-major."""
    V, J, S = model.n_vertices, model.n_joints, model.n_shape
    P = model.posedirs.shape[2]
    with open(path, "wb") as fh:
        fh.write(_LBSM_HEADER.pack(LBSM_MAGIC, LBSM_VERSION, V, len(model.faces), J, S, P))
        for a in (model.template, model.weights, model.shapedirs, model.posedirs, model.j_regressor):
            fh.write(np.ascontiguousarray(a, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(model.parents, dtype="<i4").tobytes())
        fh.write(np.ascontiguousarray(model.faces, dtype="<u4").tobytes())


def load_model(path) -> BodyModel:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _LBSM_HEADER.size:
        raise FormatError(f"{path}: truncated LBSM header")
    magic, version, V, F, J, S, P = _LBSM_HEADER.unpack_from(data)
    if magic != LBSM_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != LBSM_VERSION:
        raise FormatError(f"{path}: unsupported LBSM version {version}")
    shapes = [("f4", (V, 3)), ("f4", (V, J)), ("f4", (V, 3, S)), ("f4", (V, 3, P)),
              ("f4", (J, V)), ("i4", (J,)), ("u4", (F, 3))]
    need = _LBSM_HEADER.size + sum(4 * int(np.prod(s)) for _, s in shapes)
    if len(data) != need:
        raise FormatError(f"{path}: payload is {len(data)} bytes, header implies {need}")
    pos = _LBSM_HEADER.size
    arrays = []
    for dt, shape in shapes:
        n = int(np.prod(shape))
        arrays.append(np.frombuffer(data, dtype="<" + dt, count=n, offset=pos).reshape(shape))
        pos += 4 * n
    t, w, sd, pd, jr, parents, faces = arrays
    return BodyModel(t, faces.astype(np.int64), w, sd, pd, jr, parents.astype(np.int64))


def model_from_smpl_dict(d: dict, n_shape: Optional[int] = None) -> BodyModel:
    """Convert an SMPL-style dict (as found in the official pickles) to a
    BodyModel.

    Expected keys: v_template (V, 3), f (F, 3), weights (V, J), shapedirs
    (V, 3, S), posedirs (V, 3, 9(J-1)), J_regressor (J, V; dense or scipy
    sparse), kintree_table (2, J) whose first row holds parents, with any
    out-of-range value marking the root.
    """
    jr = d["J_regressor"]
    jr = jr.toarray() if hasattr(jr, "toarray") else np.asarray(jr)
    parents = np.asarray(d["kintree_table"])[0].astype(np.int64)
    parents[(parents < 0) | (parents >= len(parents))] = -1
    shapedirs = np.asarray(d["shapedirs"], dtype=np.float64)
    if n_shape is not None:
        shapedirs = shapedirs[:, :, :n_shape]
    return BodyModel(np.asarray(d["v_template"]), np.asarray(d["f"]), np.asarray(d["weights"]),
                     shapedirs, np.asarray(d["posedirs"]), jr, parents)


# ------------------------------------------------------------ toy body model

@dataclass(frozen=True)
class Capsule:
    a: tuple
    b: tuple
    radius: float
    parent: int


# Rest-pose chains as (start, end, radius); the torso is always joint 0.
_TORSO = ((0.0, -0.1, 0.0), (0.0, 0.45, 0.0), 0.17)
_CHAINS = (
    ((0.09, -0.22, 0.0), (0.09, -0.88, 0.0), 0.07),    # left leg
    ((-0.09, -0.22, 0.0), (-0.09, -0.88, 0.0), 0.07),  # right leg
    ((0.0, 0.66, 0.0), (0.0, 0.78, 0.0), 0.11),        # head
    ((0.2, 0.38, 0.0), (0.72, 0.38, 0.0), 0.05),       # left arm
    ((-0.2, 0.38, 0.0), (-0.72, 0.38, 0.0), 0.05),     # right arm
)


def toy_capsules(n_joints: int) -> list[Capsule]:
    """Capsule skeleton of the toy body: a torso plus ``n_joints - 1`` limb
    segments spread round-robin over legs, head and arms."""
    if n_joints < 2:
        raise ValueError("toy body needs at least 2 joints")
    per_chain = [0] * len(_CHAINS)
    for k in range(n_joints - 1):
        per_chain[k % len(_CHAINS)] += 1
    caps = [Capsule(*_TORSO, parent=-1)]
    for (a, b, r), n in zip(_CHAINS, per_chain):
        a, b = np.array(a), np.array(b)
        parent = 0
        for i in range(n):
            s0, s1 = a + (b - a) * i / n, a + (b - a) * (i + 1) / n
            caps.append(Capsule(tuple(s0), tuple(s1), r, parent))
            parent = len(caps) - 1
    # joints must be listed parents-first, which the loop above guarantees
    return caps


def _capsule_rings(cap: Capsule, n_seg: int, n_hemi: int, n_mid: int):
    a, b = np.array(cap.a), np.array(cap.b)
    length = float(np.linalg.norm(b - a))
    u = (b - a) / length
    helper = np.array([0.0, 0.0, 1.0]) if abs(u[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    e1 = np.cross(u, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(u, e1)
    r = cap.radius
    rings = []  # (center, ring radius, axial param)
    for k in range(1, n_hemi + 1):
        phi = -np.pi / 2 + k * (np.pi / 2) / n_hemi
        rings.append((a + r * np.sin(phi) * u, r * np.cos(phi), 0.0))
    for k in range(1, n_mid + 1):
        f = k / (n_mid + 1)
        rings.append((a + f * (b - a), r, f))
    for k in range(n_hemi):
        phi = k * (np.pi / 2) / n_hemi
        rings.append((b + r * np.sin(phi) * u, r * np.cos(phi), 1.0))
    ang = 2 * np.pi * np.arange(n_seg) / n_seg
    ring_dirs = np.cos(ang)[:, None] * e1 + np.sin(ang)[:, None] * e2
    verts = [a - r * u]
    axial = [0.0]
    radial = [-u]
    for center, rr, f in rings:
        verts.extend(center + rr * ring_dirs)
        axial.extend([f] * n_seg)
        radial.extend(ring_dirs)
    verts.append(b + r * u)
    axial.append(1.0)
    radial.append(u)
    n_rings = len(rings)
    faces = []
    first = 1
    for i in range(n_seg):
        faces.append((0, first + (i + 1) % n_seg, first + i))
    for k in range(n_rings - 1):
        r0 = 1 + k * n_seg
        r1 = r0 + n_seg
        for i in range(n_seg):
            j = (i + 1) % n_seg
            faces.append((r0 + i, r0 + j, r1 + j))
            faces.append((r0 + i, r1 + j, r1 + i))
    last = 1 + (n_rings - 1) * n_seg
    top = len(verts) - 1
    for i in range(n_seg):
        faces.append((top, last + i, last + (i + 1) % n_seg))
    # ring index of the equator at `a` and at `b`
    eq_a, eq_b = n_hemi - 1, n_hemi + n_mid
    return (np.array(verts), np.array(faces), np.array(axial), np.array(radial),
            (1 + eq_a * n_seg, 1 + eq_b * n_seg))


def _tessellation(cap: Capsule, density: float):
    r = cap.radius
    length = float(np.linalg.norm(np.subtract(cap.b, cap.a)))
    n_seg = max(8, int(round(2 * np.pi * r * density)))
    n_hemi = max(2, int(round(0.5 * np.pi * r * density)))
    n_mid = max(0, int(round(length * density)) - 1)
    return n_seg, n_hemi, n_mid


def _toy_vertex_count(caps, density) -> int:
    total = 0
    for cap in caps:
        n_seg, n_hemi, n_mid = _tessellation(cap, density)
        total += 2 + n_seg * (2 * n_hemi + n_mid)
    return total


def toy_density(caps, n_vertices: int) -> float:
    """Finest tessellation density (rings per world unit) within the budget."""
    lo, hi = 1.0, 2000.0
    if _toy_vertex_count(caps, lo) > n_vertices:
        raise ValueError(f"{n_vertices} vertices is too few for {len(caps)} joints")
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if _toy_vertex_count(caps, mid) <= n_vertices:
            lo = mid
        else:
            hi = mid
    return lo


def generate_toy_model(n_joints: int = 4, n_vertices: int = 2000, seed: int = 0,
                       n_shape: int = 10) -> BodyModel:
    """Deterministic capsule-limb body.

    ``n_vertices`` is an upper bound: capsule tessellation is refined as far
    as the budget allows. Each limb vertex is skinned to its own joint, blended
    50/50 with the parent at the proximal end and fading to fully rigid a
    quarter of the way along the limb.
    """
    caps = toy_capsules(n_joints)
    density = toy_density(caps, n_vertices)
    rng = np.random.default_rng(seed)
    J = len(caps)
    verts, faces, weights, radial, owner = [], [], [], [], []
    reg_rows: list[tuple[int, np.ndarray]] = []
    offset = 0
    for j, cap in enumerate(caps):
        v, f, axial, rad, (ring_a, ring_b) = _capsule_rings(cap, *_tessellation(cap, density))
        n_seg = _tessellation(cap, density)[0]
        w = np.zeros((len(v), J))
        if cap.parent < 0:
            w[:, j] = 1.0
            reg = np.concatenate([np.arange(ring_a, ring_a + n_seg), np.arange(ring_b, ring_b + n_seg)])
        else:
            own = 0.5 + 0.5 * np.minimum(axial / 0.25, 1.0)
            w[:, j] = own
            w[:, cap.parent] = 1.0 - own
            reg = np.arange(ring_a, ring_a + n_seg)
        reg_rows.append((j, reg + offset))
        verts.append(v)
        faces.append(f + offset)
        weights.append(w)
        radial.append(rad)
        owner.append(np.full(len(v), j))
        offset += len(v)
    verts = np.concatenate(verts)
    V = len(verts)
    jreg = np.zeros((J, V))
    for j, idx in reg_rows:
        jreg[j, idx] = 1.0 / len(idx)
    radial = np.concatenate(radial)
    owner = np.concatenate(owner)
    # shape basis: per-capsule radial swelling plus a mild vertical stretch
    swell = rng.normal(0.0, 0.01, size=(J, n_shape))
    stretch = rng.normal(0.0, 0.02, size=n_shape)
    shapedirs = radial[:, :, None] * swell[owner][:, None, :]
    shapedirs[:, 1, :] += verts[:, 1:2] * stretch[None, :]
    posedirs = rng.normal(0.0, 1e-3, size=(V, 3, 9 * (J - 1)))
    return BodyModel(verts, np.concatenate(faces), np.concatenate(weights), shapedirs,
                     posedirs, jreg, np.array([c.parent for c in caps]))
