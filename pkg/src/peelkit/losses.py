"""Reference L1 losses over peel maps.

Reduction: mean over the supported pixels of each layer, then summed over
layers. Passing ``fg`` restricts the support to the foreground mask; the
residual loss further drops conflict pixels.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .errors import ResolutionMismatch


@dataclass(frozen=True)
class LossWeights:
    rd: float = 1.0
    rgb: float = 0.1
    sm: float = 0.001

    def __post_init__(self):
        if min(self.rd, self.rgb, self.sm) < 0:
            raise ValueError("loss weights must be non-negative")


@dataclass(frozen=True)
class LossReport:
    l_fuse: float
    l_rd: float
    l_rgb: float
    l_sm_rd: float
    l_sm_fuse: float
    total: float

    def to_dict(self) -> dict:
        return asdict(self)


def _check(*arrays):
    shape = np.shape(arrays[0])
    for a in arrays[1:]:
        if np.shape(a) != shape:
            raise ResolutionMismatch(f"shapes differ: {shape} vs {np.shape(a)}")


def _support(shape, fg: Optional[np.ndarray], exclude: Optional[np.ndarray] = None) -> np.ndarray:
    """Boolean (L, H, W) support."""
    L, H, W = shape[:3]
    s = np.ones((L, H, W), bool)
    if fg is not None:
        fg = np.asarray(fg)
        if fg.shape != (H, W):
            raise ResolutionMismatch(f"foreground {fg.shape} vs maps {(H, W)}")
        s &= fg.astype(bool)[None]
    if exclude is not None:
        if np.shape(exclude) != (L, H, W):
            raise ResolutionMismatch("exclusion mask shape differs from maps")
        s &= ~np.asarray(exclude).astype(bool)
    return s


def _layer_mean_sum(err: np.ndarray, support: np.ndarray) -> float:
    """err: (L, H, W) or (L, H, W, C). Mean per layer over support, summed."""
    total = 0.0
    for i in range(err.shape[0]):
        e = err[i][support[i]]
        if e.size:
            total += float(np.mean(e, dtype=np.float64))
    return total


def l1_layers(pred, gt, fg=None, exclude=None) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    _check(pred, gt)
    return _layer_mean_sum(np.abs(pred - gt), _support(pred.shape, fg, exclude))


def loss_fuse(pred, gt, fg=None) -> float:
    """Summed per-layer mean |pred - gt| of fused depth maps."""
    return l1_layers(pred, gt, fg)


def loss_rd(pred_rd, gt_rd, conflict=None, fg=None) -> float:
    """Residual L1, ignoring conflict pixels."""
    return l1_layers(pred_rd, gt_rd, fg, conflict)


def image_gradients(maps: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Forward differences along x and y; the last column/row is 0."""
    m = np.asarray(maps, dtype=np.float64)
    gx = np.zeros_like(m)
    gy = np.zeros_like(m)
    gx[..., :, :-1] = m[..., :, 1:] - m[..., :, :-1]
    gy[..., :-1, :] = m[..., 1:, :] - m[..., :-1, :]
    return gx, gy


def gradient_l1(pred, gt, fg=None) -> float:
    _check(pred, gt)
    pgx, pgy = image_gradients(pred)
    ggx, ggy = image_gradients(gt)
    err = np.abs(pgx - ggx) + np.abs(pgy - ggy)
    return _layer_mean_sum(err, _support(np.shape(pred), fg))


def loss_smooth(pred_a, gt_a, pred_b, gt_b, fg=None) -> tuple[float, float]:
    """Gradient-matching terms for (prior + residual) maps and fused maps."""
    return gradient_l1(pred_a, gt_a, fg), gradient_l1(pred_b, gt_b, fg)


def loss_rgb(pred_rgb, gt_rgb, skip_first: bool = True, fg=None) -> float:
    """L1 over (L, H, W, 3) colour peel maps; layer 1 is the input image and
    is skipped by default. Mean runs over pixels and channels."""
    pred = np.asarray(pred_rgb, dtype=np.float64)
    gt = np.asarray(gt_rgb, dtype=np.float64)
    _check(pred, gt)
    if skip_first:
        pred, gt = pred[1:], gt[1:]
    if pred.shape[0] == 0:
        return 0.0
    return _layer_mean_sum(np.abs(pred - gt), _support(pred.shape, fg))


def total_loss(pred_fused, gt_fused, pred_rd, gt_rd, prior, pred_rgb=None, gt_rgb=None,
               conflict=None, fg=None, weights: LossWeights = LossWeights()) -> LossReport:
    """Weighted objective from all component losses.

    ``prior`` is the prior depth stack; the smoothness term compares
    gradients of (prior + residual) and of the fused maps.
    """
    prior = np.asarray(prior, dtype=np.float64)
    l_fuse = loss_fuse(pred_fused, gt_fused, fg)
    l_rd = loss_rd(pred_rd, gt_rd, conflict, fg)
    l_rgb = 0.0 if pred_rgb is None else loss_rgb(pred_rgb, gt_rgb, fg=fg)
    l_sm_rd, l_sm_fuse = loss_smooth(
        np.asarray(pred_rd, np.float64) + prior, np.asarray(gt_rd, np.float64) + prior,
        pred_fused, gt_fused, fg,
    )
    total = l_fuse + weights.rd * l_rd + weights.rgb * l_rgb + weights.sm * (l_sm_rd + l_sm_fuse)
    return LossReport(l_fuse, l_rd, l_rgb, l_sm_rd, l_sm_fuse, total)
