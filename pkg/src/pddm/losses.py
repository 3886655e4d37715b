"""Pixel-wise depth losses, the bin-center Chamfer term and multi-scale supervision."""

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DimensionError
from .numerics import NdValue, ops

BETA = 0.1
CHAMFER_CAP = 2048


def stage_weights(L):
    """omega_l = 0.5 ** (L - l) for l = 1..L."""
    return [0.5 ** (L - l) for l in range(1, L + 1)]


@dataclass(frozen=True)
class LossWeights:
    L: int = 5
    beta: float = BETA

    @property
    def omega(self):
        return stage_weights(self.L)


def downsample_valid_mean(gt, out_shape):
    """Average of the valid (> 0) pixels in each cell; empty cells become 0."""
    gt = np.asarray(gt, dtype=np.float64)
    H, W = gt.shape
    h, w = out_shape
    if (h, w) == (H, W):
        return gt.copy()
    if H % h or W % w:
        raise DimensionError(f"cannot pool {gt.shape} down to {out_shape}")
    fy, fx = H // h, W // w
    cells = gt.reshape(h, fy, w, fx)
    valid = cells > 0
    count = valid.sum(axis=(1, 3))
    total = np.where(valid, cells, 0.0).sum(axis=(1, 3))
    return np.where(count > 0, total / np.maximum(count, 1), 0.0)


def depth_loss(pred, gt, rho):
    """Mean |gt - pred|**rho over valid gt pixels."""
    gt = np.asarray(gt, dtype=np.float64)
    pred = pred if isinstance(pred, NdValue) else NdValue(pred)
    if pred.shape != gt.shape:
        raise DimensionError(f"prediction {pred.shape} and ground truth {gt.shape} differ")
    mask = gt > 0
    if not mask.any():
        raise ContractError("ground truth has no valid pixels")
    diff = ops.sub(ops.index(pred, mask), gt[mask])
    if rho == 1:
        err = ops.absolute(diff)
    elif rho == 2:
        err = ops.square(diff)
    else:
        err = ops.power(ops.absolute(diff), rho)
    return ops.mean(err)


def _gt_points(gt, cap, seed):
    d = np.asarray(gt, dtype=np.float64).reshape(-1)
    d = d[d > 0]
    if cap is not None and d.size > cap:
        d = np.random.default_rng(seed).choice(d, size=cap, replace=False)
    return d


def chamfer_bins(centers, gt, cap=CHAMFER_CAP, seed=0):
    """Bi-directional Chamfer distance between centers and valid gt depths.

    Both directions are sums of squared nearest-neighbour distances; the min
    is a hard assignment so gradients reach the nearest center only.  Pass
    ``cap=None`` for the exact sum over every valid pixel.
    """
    centers = centers if isinstance(centers, NdValue) else NdValue(centers)
    c = centers.data.reshape(-1)
    if c.size == 0:
        raise ContractError("no centers")
    d = _gt_points(gt, cap, seed)
    if d.size == 0:
        raise ContractError("ground truth has no valid pixels")
    dist = (d[:, None] - c[None, :]) ** 2
    nearest_center = dist.argmin(axis=1)
    nearest_depth = dist.argmin(axis=0)
    flat = ops.reshape(centers, (c.size,))
    to_center = ops.sum(ops.square(ops.sub(d, ops.take(flat, nearest_center))))
    to_depth = ops.sum(ops.square(ops.sub(flat, d[nearest_depth])))
    return ops.add(to_center, to_depth)


def multi_scale_loss(stages, gt, L=None, beta=BETA, refined=None, refined_weight=1.0,
                     chamfer_cap=CHAMFER_CAP, seed=0):
    """sum_l omega_l (L1 + L2 + beta * L_bins) against gt pooled to each stage.

    With ``refined`` given, ``refined_weight * (L1 + L2)`` of the CSPN output
    at full resolution is added.  Returns (total, per-stage terms).
    """
    L = len(stages) if L is None else L
    if len(stages) != L:
        raise ContractError(f"expected {L} stage outputs, got {len(stages)}")
    gt = np.asarray(gt, dtype=np.float64)
    total = None
    terms = []
    for w_l, st in zip(stage_weights(L), stages):
        g = downsample_valid_mean(gt, st.depth.shape)
        l1 = depth_loss(st.depth, g, 1)
        l2 = depth_loss(st.depth, g, 2)
        lb = chamfer_bins(st.centers, g, chamfer_cap, seed)
        stage_total = ops.scale(ops.add(ops.add(l1, l2), ops.scale(lb, beta)), w_l)
        terms.append({"stage": st.stage, "l1": l1.item(), "l2": l2.item(), "bins": lb.item(),
                      "weighted": stage_total.item()})
        total = stage_total if total is None else ops.add(total, stage_total)
    if refined is not None:
        r = ops.scale(ops.add(depth_loss(refined, gt, 1), depth_loss(refined, gt, 2)), refined_weight)
        terms.append({"stage": "refined", "weighted": r.item()})
        total = ops.add(total, r)
    return total, terms
