"""Per-layer SMPL masks, residual/auxiliary decomposition and peel fusion.

All maps are (L, H, W). Masks are uint8 {0, 1}; depths and offsets are
float32 world units.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvertedRange, ResolutionMismatch
from .geometry import Camera
from .render import PeelStack

RESIDUAL_RANGE = (-1.0, 0.5)


@dataclass(eq=False)
class MaskStack:
    gamma: np.ndarray  # (L, H, W) uint8
    fg: np.ndarray     # (H, W) uint8, shared by all layers

    def __post_init__(self):
        self.gamma = np.asarray(self.gamma, dtype=np.uint8)
        self.fg = np.asarray(self.fg, dtype=np.uint8)
        if self.gamma.shape[1:] != self.fg.shape:
            raise ResolutionMismatch("gamma and foreground masks differ in resolution")

    @property
    def layers(self) -> int:
        return self.gamma.shape[0]


@dataclass(eq=False)
class ResidualStack:
    """Signed depth offsets from the prior, defined on gamma.

    ``conflict`` flags pixels where the prior has a layer that the ground
    truth lacks; their offset is 0, they are skipped by the residual loss and
    fuse to empty.
    """

    delta: np.ndarray
    camera: Camera
    conflict: Optional[np.ndarray] = None
    t_near: float = 0.0
    t_far: float = 0.0

    def __post_init__(self):
        self.delta = np.asarray(self.delta, dtype=np.float32)
        if self.conflict is None:
            self.conflict = np.zeros(self.delta.shape, np.uint8)
        self.conflict = np.asarray(self.conflict, dtype=np.uint8)
        if self.conflict.shape != self.delta.shape:
            raise ResolutionMismatch("conflict mask shape differs from residual maps")


@dataclass(eq=False)
class AuxiliaryStack:
    """Absolute depths for foreground pixels the prior does not cover."""

    aux: np.ndarray
    camera: Camera

    def __post_init__(self):
        self.aux = np.asarray(self.aux, dtype=np.float32)


def _same_grid(*maps):
    shape = maps[0].shape
    for m in maps[1:]:
        if m.shape != shape:
            raise ResolutionMismatch(f"map shapes differ: {shape} vs {m.shape}")


def compute_mask(prior: PeelStack, fg: np.ndarray) -> MaskStack:
    """gamma_i = 1 where the prior's layer i has a surface and fg is set."""
    fg = (np.asarray(fg) > 0).astype(np.uint8)
    if fg.shape != prior.depth.shape[1:]:
        raise ResolutionMismatch(f"foreground {fg.shape} vs prior {prior.depth.shape[1:]}")
    gamma = ((prior.depth * fg) > 0).astype(np.uint8)
    return MaskStack(gamma, fg)


def decompose(gt: PeelStack, prior: PeelStack, masks: MaskStack) -> tuple[ResidualStack, AuxiliaryStack]:
    """Split ground-truth depths into prior offsets (on gamma) and absolute
    auxiliary depths (foreground off gamma)."""
    _same_grid(gt.depth, prior.depth, masks.gamma)
    g = masks.gamma.astype(bool)
    f = np.broadcast_to(masks.fg.astype(bool), g.shape)
    has_gt = gt.depth > 0
    delta = np.where(g & has_gt, gt.depth - prior.depth, np.float32(0)).astype(np.float32)
    conflict = (g & ~has_gt).astype(np.uint8)
    aux = np.where(~g & f, gt.depth, np.float32(0)).astype(np.float32)
    return (ResidualStack(delta, prior.camera, conflict, prior.t_near, prior.t_far),
            AuxiliaryStack(aux, prior.camera))


def fuse(prior: PeelStack, rd: ResidualStack, aux: AuxiliaryStack, masks: MaskStack) -> PeelStack:
    """gamma * (prior + residual) + (1 - gamma) * auxiliary, per layer.

    The output is clamped to >= 0 and zeroed outside the foreground mask;
    conflict pixels fuse to empty.
    """
    _same_grid(prior.depth, rd.delta, aux.aux, masks.gamma)
    g = masks.gamma.astype(bool)
    on_prior = prior.depth + rd.delta
    fused = np.where(g, on_prior, aux.aux)
    fused = np.where(rd.conflict.astype(bool) & g, np.float32(0), fused)
    fused = np.maximum(fused, np.float32(0))
    fused = np.where(masks.fg.astype(bool)[None], fused, np.float32(0)).astype(np.float32)
    return PeelStack(fused, prior.camera, None, prior.t_near, prior.t_far)


def clamp_residual(rd: ResidualStack, lo: float = RESIDUAL_RANGE[0], hi: float = RESIDUAL_RANGE[1],
                   depth_range: Optional[tuple] = None) -> ResidualStack:
    """Clamp offsets to [lo, hi] in units of the scene depth range
    (t_far - t_near); values already in range pass through untouched."""
    if not lo < hi:
        raise InvertedRange(f"lo={lo} must be below hi={hi}")
    near, far = depth_range if depth_range is not None else (rd.t_near, rd.t_far)
    span = far - near
    if not span > 0:
        raise ValueError("residual stack has no usable depth range")
    norm = rd.delta / np.float32(span)
    out = np.where(norm > hi, np.float32(hi * span), np.where(norm < lo, np.float32(lo * span), rd.delta))
    return ResidualStack(out.astype(np.float32), rd.camera, rd.conflict.copy(), rd.t_near, rd.t_far)


def coverage(masks: MaskStack, layer: int = 0, rows: Optional[slice] = None) -> float:
    """Fraction of foreground pixels covered by gamma in ``layer``."""
    fg = masks.fg.astype(bool)
    g = masks.gamma[layer].astype(bool)
    if rows is not None:
        fg, g = fg[rows], g[rows]
    n = fg.sum()
    return float((g & fg).sum() / n) if n else 0.0
