"""How many peel layers a scene needs.

Renders the nested-spheres scene (and optionally the skirt scene) for a range
of layer counts and reports truncated pixels and round-trip error.

    python3 scripts/layer_count.py --layers 2 4 6 8
"""
import argparse

import numpy as np
from scipy.spatial import cKDTree

from peelkit.bvh import build_bvh
from peelkit.geometry import Camera
from peelkit.metrics import p2s
from peelkit.pointcloud import backproject
from peelkit.render import render_peel
from peelkit.scenes import synth


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--resolution", type=int, default=256)
    ap.add_argument("--layers", type=int, nargs="+", default=[2, 4, 6, 8])
    ap.add_argument("--scenes", nargs="+", default=["nested-spheres", "skirt"])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    cam = Camera.default(args.resolution)
    w = cam.pixel_footprint()
    print(f"{'scene':15s} {'L':>3s} {'overflow':>9s} {'max used':>9s} {'err/w':>7s}")
    for name in args.scenes:
        mesh = synth(name, args.seed, cam).mesh
        bvh = build_bvh(mesh)
        samples = mesh.sample_surface(100_000, np.random.default_rng(args.seed))
        for L in args.layers:
            st = render_peel(mesh, bvh, cam, L)
            pts = backproject(st).positions
            err = 0.5 * (p2s(pts, mesh, bvh) + float(cKDTree(pts).query(samples)[0].mean()))
            print(f"{name:15s} {L:3d} {st.overflow:9d} {int(st.layer_counts().max()):9d} {err / w:7.3f}")


if __name__ == "__main__":
    main()
