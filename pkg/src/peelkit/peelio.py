"""PEEL container: little-endian header followed by float32 planes.

Byte layout (version 1)::

    off  size  field
      0     4  magic b"PEEL"
      4     2  version              u16
      6     4  width                u32
     10     4  height               u32
     14     1  layers               u8
     15     1  channels per layer   u8   (1 = depth, 4 = depth + r, g, b)
     16     4  tag                  ascii, NUL padded
     20     8  t_near               f64
     28     8  t_far                f64
     36    96  camera center, right, up, forward   12 x f64
    132     8  projection           f64  (0 = perspective, 1 = orthographic)
    140     8  projection param     f64  (fov_y degrees | half extent)
    148        planes: for each layer, ``channels`` row-major float32 planes

Tags: DPT (depth peel stack), RD (residual), AUX (auxiliary), GAM (per-layer
SMPL masks), FG (foreground mask, one layer), CFL (conflict masks). Planes
hold raw values: depths and offsets in world units, masks as 0.0 / 1.0.
``path + ".json"`` mirrors the header for inspection.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import FormatError
from .geometry import Camera
from .render import PeelStack

MAGIC = b"PEEL"
VERSION = 1
TAGS = ("DPT", "RD", "AUX", "GAM", "FG", "CFL")
_HEADER = struct.Struct("<4sHIIBB4sdd12ddd")
HEADER_SIZE = _HEADER.size  # 148


@dataclass
class PeelFile:
    tag: str
    planes: np.ndarray  # (layers, channels, H, W) float32
    camera: Camera
    t_near: float
    t_far: float

    @property
    def layers(self) -> int:
        return self.planes.shape[0]

    @property
    def channels(self) -> int:
        return self.planes.shape[1]

    def header(self) -> dict:
        c = self.camera
        return {
            "magic": MAGIC.decode(), "version": VERSION, "tag": self.tag,
            "width": c.width, "height": c.height, "layers": self.layers,
            "channels": self.channels, "t_near": self.t_near, "t_far": self.t_far,
            "camera": {
                "center": list(c.center), "right": list(c.right), "up": list(c.up),
                "forward": list(c.forward), "projection": c.projection, "param": c.param,
            },
        }


def write_peel(path, pf: PeelFile, sidecar: bool = True) -> None:
    if pf.tag not in TAGS:
        raise FormatError(f"unknown tag {pf.tag!r}")
    if pf.channels not in (1, 4):
        raise FormatError("channels must be 1 or 4")
    if not 1 <= pf.layers <= 255:
        raise FormatError("layer count must fit in a u8")
    c = pf.camera
    if pf.planes.shape[2:] != (c.height, c.width):
        raise FormatError("plane resolution does not match camera")
    head = _HEADER.pack(
        MAGIC, VERSION, c.width, c.height, pf.layers, pf.channels,
        pf.tag.encode("ascii").ljust(4, b"\0"), pf.t_near, pf.t_far,
        *c.center, *c.right, *c.up, *c.forward,
        0.0 if c.projection == "perspective" else 1.0, c.param,
    )
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(np.ascontiguousarray(pf.planes, dtype="<f4").tobytes())
    if sidecar:
        with open(str(path) + ".json", "w") as fh:
            json.dump(pf.header(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def read_peel(path, expect_tag: Optional[str] = None) -> PeelFile:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < HEADER_SIZE:
        raise FormatError(f"{path}: truncated header")
    f = _HEADER.unpack_from(data)
    magic, version, width, height, layers, channels, tag = f[:7]
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    tag = tag.rstrip(b"\0").decode("ascii")
    if tag not in TAGS:
        raise FormatError(f"{path}: unknown tag {tag!r}")
    if expect_tag is not None and tag != expect_tag:
        raise FormatError(f"{path}: expected a {expect_tag} container, found {tag}")
    t_near, t_far = f[7], f[8]
    cam = f[9:21]
    kind, param = f[21], f[22]
    projection = "perspective" if kind == 0.0 else "orthographic"
    extra = {"fov_y": param} if projection == "perspective" else {"half_extent": param}
    camera = Camera(cam[0:3], cam[3:6], cam[6:9], cam[9:12], width, height, projection, **extra)
    n = layers * channels * height * width
    if len(data) != HEADER_SIZE + 4 * n:
        raise FormatError(f"{path}: payload size does not match header")
    planes = np.frombuffer(data, dtype="<f4", count=n, offset=HEADER_SIZE)
    planes = planes.reshape(layers, channels, height, width).astype(np.float32)
    return PeelFile(tag, planes, camera, t_near, t_far)


def stack_to_file(stack: PeelStack) -> PeelFile:
    if stack.rgb is None:
        planes = stack.depth[:, None]
    else:
        planes = np.concatenate([stack.depth[:, None], np.moveaxis(stack.rgb, -1, 1)], axis=1)
    return PeelFile("DPT", planes, stack.camera, stack.t_near, stack.t_far)


def file_to_stack(pf: PeelFile) -> PeelStack:
    if pf.tag != "DPT":
        raise FormatError(f"expected a DPT container, found {pf.tag}")
    rgb = np.moveaxis(pf.planes[:, 1:4], 1, -1) if pf.channels == 4 else None
    return PeelStack(pf.planes[:, 0], pf.camera, rgb, pf.t_near, pf.t_far)


def maps_to_file(tag: str, maps: np.ndarray, camera: Camera, t_near=0.0, t_far=0.0) -> PeelFile:
    """Wrap (L, H, W) or (H, W) maps as a single-channel container."""
    maps = np.asarray(maps, dtype=np.float32)
    if maps.ndim == 2:
        maps = maps[None]
    return PeelFile(tag, maps[:, None], camera, t_near, t_far)


def save_stack(path, stack: PeelStack) -> None:
    write_peel(path, stack_to_file(stack))


def load_stack(path) -> PeelStack:
    return file_to_stack(read_peel(path))
