"""``peelkit`` command line: render, prior, decompose, fuse, backproject,
filter, eval, synth.

Every command is deterministic for fixed inputs, flags and seed. The
environment variable PEELKIT_THREADS caps the worker count.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from . import _kernels
from .body import BodyParams, load_model, posed_mesh, save_model
from .bvh import build_bvh
from .config import PipelineConfig
from .errors import FormatError, PeelkitError
from .fusion import AuxiliaryStack, MaskStack, ResidualStack, compute_mask, decompose, fuse
from .meshio import read_mesh, read_ply_data, write_obj
from .metrics import chamfer, chamfer_mean, normal_reprojection, p2s
from .peelio import file_to_stack, maps_to_file, read_peel, stack_to_file, write_peel
from .pointcloud import backproject, estimate_normals, filter_outliers, read_cloud, write_cloud
from .render import PeelStack, render_normal_map, render_peel, render_prior_peel
from .scenes import SCENES, synth

log = logging.getLogger("peelkit")


# ------------------------------------------------------------------ helpers

def _config(args) -> PipelineConfig:
    return PipelineConfig(
        resolution=getattr(args, "resolution", 512),
        layers=getattr(args, "layers", 4),
        projection=getattr(args, "camera", "perspective"),
        knn=getattr(args, "knn", 16),
        threshold=getattr(args, "threshold", 0.01),
        seed=getattr(args, "seed", 0),
    )


def _write_checked(path, pf) -> None:
    write_peel(path, pf)
    back = read_peel(path)
    if back.planes.shape != pf.planes.shape or back.tag != pf.tag:
        raise FormatError(f"{path}: written container failed validation")


def _save_stack(path, stack: PeelStack) -> None:
    _write_checked(path, stack_to_file(stack))


def _save_maps(path, tag, maps, camera, near=0.0, far=0.0) -> None:
    _write_checked(path, maps_to_file(tag, maps, camera, near, far))


def _load_fg(path, shape) -> np.ndarray:
    path = str(path)
    if path.endswith(".peel"):
        fg = read_peel(path, "FG").planes[0, 0]
    else:
        with Image.open(path) as im:
            fg = np.array(im.convert("L"))
    if fg.shape != tuple(shape):
        raise FormatError(f"{path}: foreground is {fg.shape}, expected {tuple(shape)}")
    return (fg > 0).astype(np.uint8)


def _save_png_mask(path, mask) -> None:
    Image.fromarray((np.asarray(mask) > 0).astype(np.uint8) * 255).save(path, optimize=False)


def _save_previews(out: Path, stack: PeelStack) -> list[str]:
    """16-bit depth previews: 0 = empty, 1..65535 spans [t_near, t_far]."""
    near, far = stack.depth_range()
    paths = []
    for i in range(stack.layers):
        d = stack.depth[i].astype(np.float64)
        v = np.clip((d - near) / (far - near), 0.0, 1.0) * 65534.0 + 1.0
        img = np.where(d > 0, np.rint(v), 0).astype(np.uint16)
        p = out.with_name(f"{out.stem}_layer{i + 1}.png")
        Image.fromarray(img).save(p, optimize=False)
        paths.append(str(p))
    return paths


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


# ----------------------------------------------------------------- commands

def cmd_render(args) -> int:
    cfg = _config(args)
    mesh = read_mesh(args.mesh)
    stack = render_peel(mesh, build_bvh(mesh), cfg.camera(), cfg.layers)
    out = Path(args.output)
    _save_stack(out, stack)
    previews = [] if args.no_preview else _save_previews(out, stack)
    _emit({"peel": str(out), "previews": previews, "layers": stack.layers,
           "overflow_pixels": stack.overflow, "dropped_degenerate": mesh.dropped})
    return 0


def cmd_prior(args) -> int:
    cfg = _config(args)
    model = load_model(args.model)
    with open(args.params) as fh:
        params = BodyParams.from_json(json.load(fh))
    cam = cfg.camera()
    mesh = posed_mesh(model, params, cam)
    prior = render_prior_peel(mesh, cam, cfg.layers)
    shape = (cam.height, cam.width)
    fg = _load_fg(args.fg, shape) if args.fg else np.ones(shape, np.uint8)
    masks = compute_mask(prior, fg)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    _save_stack(out / "prior.peel", prior)
    _save_maps(out / "gamma.peel", "GAM", masks.gamma, cam)
    _save_maps(out / "fg.peel", "FG", masks.fg, cam)
    _emit({"prior": str(out / "prior.peel"), "gamma": str(out / "gamma.peel"),
           "fg": str(out / "fg.peel"), "overflow_pixels": prior.overflow})
    return 0


def cmd_decompose(args) -> int:
    gt = file_to_stack(read_peel(args.gt, "DPT"))
    prior = file_to_stack(read_peel(args.prior, "DPT"))
    fg = _load_fg(args.fg, gt.depth.shape[1:])
    masks = compute_mask(prior, fg)
    rd, aux = decompose(gt, prior, masks)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    cam = prior.camera
    _save_maps(out / "rd.peel", "RD", rd.delta, cam, rd.t_near, rd.t_far)
    _save_maps(out / "aux.peel", "AUX", aux.aux, cam)
    _save_maps(out / "gamma.peel", "GAM", masks.gamma, cam)
    _save_maps(out / "fg.peel", "FG", masks.fg, cam)
    _save_maps(out / "conflict.peel", "CFL", rd.conflict, cam)
    _emit({k: str(out / f"{k}.peel") for k in ("rd", "aux", "gamma", "fg", "conflict")})
    return 0


def cmd_fuse(args) -> int:
    prior = file_to_stack(read_peel(args.prior, "DPT"))
    rd_f = read_peel(args.rd, "RD")
    aux_f = read_peel(args.aux, "AUX")
    gamma = read_peel(args.gamma, "GAM").planes[:, 0]
    fg = _load_fg(args.fg, prior.depth.shape[1:])
    conflict = read_peel(args.conflict, "CFL").planes[:, 0] if args.conflict else None
    rd = ResidualStack(rd_f.planes[:, 0], prior.camera, conflict, rd_f.t_near, rd_f.t_far)
    fused = fuse(prior, rd, AuxiliaryStack(aux_f.planes[:, 0], prior.camera), MaskStack(gamma, fg))
    _save_stack(Path(args.output), fused)
    _emit({"fused": str(args.output)})
    return 0


def cmd_backproject(args) -> int:
    depth = file_to_stack(read_peel(args.depth, "DPT"))
    rgb = file_to_stack(read_peel(args.rgb, "DPT")) if args.rgb else None
    fg = _load_fg(args.fg, depth.depth.shape[1:]) if args.fg else None
    cloud = backproject(depth, rgb, fg)
    if args.normals:
        cloud = estimate_normals(cloud, args.knn, depth.camera, args.orient)
    write_cloud(args.output, cloud)
    _emit({"cloud": str(args.output), "points": len(cloud)})
    return 0


def cmd_filter(args) -> int:
    cloud = read_cloud(args.cloud)
    out = filter_outliers(cloud, args.knn, args.threshold)
    if args.normals_from:
        cam = read_peel(args.normals_from).camera
        out = estimate_normals(out, args.knn, cam, args.orient)
    write_cloud(args.output, out)
    _emit({"cloud": str(args.output), "points": len(out), "removed": len(cloud) - len(out),
           "scale": out.meta["filter_scale"]})
    return 0


def _load_prediction(path, samples: int, seed: int):
    """Return (points, mesh or None, camera or None).

    Meshes are represented by ``samples`` area-uniform surface points drawn
    with ``seed``, the same way as the ground truth.
    """
    p = str(path)
    if p.endswith(".peel"):
        stack = file_to_stack(read_peel(p, "DPT"))
        return backproject(stack).positions, None, stack.camera
    if p.endswith(".ply") and not len(read_ply_data(p).faces):
        return read_cloud(p).positions, None, None
    mesh = read_mesh(p)
    return mesh.sample_surface(samples, np.random.default_rng(seed)), mesh, None


def cmd_eval(args) -> int:
    cfg = _config(args)
    points, pred_mesh, cam = _load_prediction(args.pred, args.samples, cfg.seed)
    gt = read_mesh(args.gt)
    gt_bvh = build_bvh(gt)
    samples = gt.sample_surface(args.samples, np.random.default_rng(cfg.seed))
    cam = cam or cfg.camera()
    normal_l2 = None
    if pred_mesh is not None:
        normal_l2 = normal_reprojection(render_normal_map(pred_mesh, None, cam),
                                        render_normal_map(gt, gt_bvh, cam))
    report = {
        "metrics": {
            "chamfer": chamfer(points, samples),
            "chamfer_mean": chamfer_mean(points, samples),
            "p2s": p2s(points, gt, gt_bvh),
            "normal_l2": normal_l2,
        },
        "conventions": {
            "chamfer": "sum over both directions of squared nearest-neighbour distances",
            "chamfer_mean": "mean squared nearest-neighbour distance per direction, summed",
            "p2s": "mean exact point-to-triangle distance from predicted points to gt mesh",
            "normal_l2": "mean L2 over union of normal-map supports (null for point clouds)",
            "prediction": "mesh surface samples" if pred_mesh is not None else "points as given",
            "normal_support": "union of rendered pred/gt normal-map supports",
            "gt_samples": args.samples,
            "seed": cfg.seed,
            "predicted_points": int(len(points)),
        },
    }
    if args.output:
        with open(args.output, "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
    _emit(report)
    return 0


def cmd_synth(args) -> int:
    cfg = _config(args)
    if args.scene not in SCENES:
        raise PeelkitError(f"unknown scene {args.scene!r}; valid scenes: {', '.join(SCENES)}")
    cam = cfg.camera()
    scene = synth(args.scene, cfg.seed, cam)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    write_obj(out / "mesh.obj", scene.mesh)
    _save_png_mask(out / "fg.png", scene.fg)
    written = {"mesh": str(out / "mesh.obj"), "fg": str(out / "fg.png")}
    if scene.model is not None:
        save_model(out / "model.lbsm", scene.model)
        with open(out / "params.json", "w") as fh:
            json.dump(scene.params.to_json(), fh, indent=2)
            fh.write("\n")
        written.update(model=str(out / "model.lbsm"), params=str(out / "params.json"))
    _emit(written)
    return 0


# ------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="peelkit", description="Peeled depth/RGB map encoding, prior fusion and evaluation.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def view(p, layers=True):
        p.add_argument("--resolution", type=int, default=512)
        p.add_argument("--camera", choices=("perspective", "orthographic"), default="perspective")
        if layers:
            p.add_argument("--layers", type=int, default=4)

    p = sub.add_parser("render", help="encode a mesh as depth/RGB peel maps")
    p.add_argument("mesh")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--no-preview", action="store_true")
    view(p)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("prior", help="render a body-model prior and its masks")
    p.add_argument("model")
    p.add_argument("params")
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.add_argument("--fg", help="foreground mask (.png or FG .peel)")
    view(p)
    p.set_defaults(func=cmd_prior)

    p = sub.add_parser("decompose", help="split ground truth into residual/auxiliary maps")
    p.add_argument("gt")
    p.add_argument("prior")
    p.add_argument("--fg", required=True)
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("fuse", help="fuse prior, residual and auxiliary maps")
    p.add_argument("prior")
    p.add_argument("rd")
    p.add_argument("aux")
    p.add_argument("gamma")
    p.add_argument("fg")
    p.add_argument("--conflict")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("backproject", help="peel maps to a colored point cloud")
    p.add_argument("depth")
    p.add_argument("--rgb")
    p.add_argument("--fg")
    p.add_argument("--normals", action="store_true")
    p.add_argument("--knn", type=int, default=16)
    p.add_argument("--orient", choices=("parity", "camera"), default="parity")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_backproject)

    p = sub.add_parser("filter", help="k-NN density filter for point clouds")
    p.add_argument("cloud")
    p.add_argument("--knn", type=int, default=16)
    p.add_argument("--threshold", type=float, default=0.01)
    p.add_argument("--normals-from", metavar="PEEL", help="estimate normals using this container's camera")
    p.add_argument("--orient", choices=("parity", "camera"), default="parity")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("eval", help="metrics of a prediction against a ground-truth mesh")
    p.add_argument("pred")
    p.add_argument("gt")
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output")
    view(p, layers=False)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="write a synthetic test scene")
    p.add_argument("scene", help=f"one of: {', '.join(SCENES)}")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True, help="output directory")
    view(p, layers=False)
    p.set_defaults(func=cmd_synth)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    threads = os.environ.get("PEELKIT_THREADS")
    if threads:
        _kernels.set_threads(int(threads))
    try:
        return args.func(args)
    except (PeelkitError, OSError, ValueError, KeyError) as exc:
        print(f"peelkit {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
