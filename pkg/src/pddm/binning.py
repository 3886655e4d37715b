"""Depth discretisation: bin widths, centers, boundary categories and baselines.

Functions accept plain numpy arrays or :class:`NdValue` widths; with NdValue
input the result stays on the tape so losses can reach the width predictor.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ContainmentError, ContractError, DegenerateRangeError, DimensionError
from .numerics import NdValue, ops

WIDTH_EPS = 1e-3
SID_SHIFT = 1.0

DATASET_ABSOLUTE = "dataset_absolute"
SCENE_RELATIVE = "scene_relative"


@dataclass(frozen=True)
class DepthRange:
    d_min: float
    d_max: float
    kind: str = DATASET_ABSOLUTE

    def __post_init__(self):
        if not (0.0 <= self.d_min < self.d_max) or not np.isfinite(self.d_max):
            raise ContractError(f"invalid depth range [{self.d_min}, {self.d_max}]")

    @property
    def span(self):
        return self.d_max - self.d_min

    def contains(self, other):
        return self.d_min <= other.d_min and other.d_max <= self.d_max


@dataclass
class BinPartition:
    """Normalised interior widths over ``range``.

    With ``boundary`` set, two extra categories sit at the dataset range
    ends, giving ``m + 2`` centers in total.
    """

    widths: object
    range: DepthRange
    boundary: DepthRange = None

    @property
    def m(self):
        return int(np.shape(_data(self.widths))[-1])

    @property
    def num_categories(self):
        return self.m + (2 if self.boundary is not None else 0)

    def centers(self):
        return bin_centers(self)

    def centers_array(self):
        return np.asarray(_data(self.centers()))


def _data(x):
    return x.data if isinstance(x, NdValue) else np.asarray(x, dtype=np.float64)


def _check_normalized(widths, tol=1e-6):
    w = _data(widths)
    if w.ndim != 1 or w.size < 1:
        raise ContractError(f"widths must be a non-empty vector, got shape {w.shape}")
    if np.any(w <= 0) or abs(w.sum() - 1.0) > tol:
        raise ContractError(f"widths must be positive and sum to 1 (sum={w.sum():.9g})")


def interior_centers(widths, rng):
    """c_i = d_min + span * (b_i / 2 + sum_{j<i} b_j)."""
    if isinstance(widths, NdValue):
        m = widths.shape[0]
        # strictly-lower-triangular cumulative sum as a matmul keeps it differentiable
        tri = np.tril(np.ones((m, m)), -1) + 0.5 * np.eye(m)
        frac = ops.reshape(ops.matmul(NdValue(tri), ops.reshape(widths, (m, 1))), (m,))
        return ops.add(ops.scale(frac, rng.span), rng.d_min)
    w = np.asarray(widths, dtype=np.float64)
    frac = np.cumsum(w) - w + 0.5 * w
    return rng.d_min + rng.span * frac


def bin_centers(part):
    """Bin centers of ``part``, boundary categories included when present."""
    _check_normalized(part.widths)
    c = interior_centers(part.widths, part.range)
    if part.boundary is None:
        return c
    lo, hi = part.boundary.d_min, part.boundary.d_max
    if isinstance(c, NdValue):
        return ops.concat([NdValue([lo]), c, NdValue([hi])], axis=0)
    return np.concatenate([[lo], c, [hi]])


def normalize_widths(raw):
    """(relu(raw) + eps) / sum(relu(raw) + eps) with eps = 1e-3, along the last axis."""
    if isinstance(raw, NdValue):
        shifted = ops.add(ops.relu(raw), WIDTH_EPS)
        return ops.div(shifted, ops.sum(shifted, axis=-1, keepdims=True))
    raw = np.asarray(raw, dtype=np.float64)
    if raw.size < 1:
        raise ContractError("normalize_widths needs at least one width")
    shifted = np.maximum(raw, 0.0) + WIDTH_EPS
    return shifted / shifted.sum(axis=-1, keepdims=True)


def depth_from_probs(probs, centers):
    """Per-pixel expectation of ``centers`` under categorical ``probs`` (..., K)."""
    k_probs = np.shape(_data(probs))[-1]
    k_centers = np.shape(_data(centers))[-1]
    if k_probs != k_centers:
        raise DimensionError(f"{k_probs} probabilities per pixel but {k_centers} centers")
    c = np.asarray(_data(centers))
    lo, hi = c.min(), c.max()
    if isinstance(probs, NdValue) or isinstance(centers, NdValue):
        d = ops.sum(ops.mul(probs, centers), axis=-1)
        # rounding can step an ulp outside the hull; shift back as a constant so gradients are untouched
        return ops.add(d, NdValue(np.clip(d.data, lo, hi) - d.data))
    return np.clip(np.asarray(probs) @ c, lo, hi)


def uniform_discretization(n, rng):
    if n < 1:
        raise ContractError("need at least one bin")
    return BinPartition(np.full(n, 1.0 / n), rng)


def sid_edges(n, rng):
    """Log-spaced interval edges; ranges starting at <= 0 are shifted by 1."""
    d_min, d_max = rng.d_min, rng.d_max
    if d_max <= d_min:
        raise ContractError(f"d_max ({d_max}) must exceed d_min ({d_min})")
    shift = SID_SHIFT if d_min <= 0 else 0.0
    lo, hi = d_min + shift, d_max + shift
    i = np.arange(n + 1)
    # log differences stay finite where hi / lo would overflow
    edges = np.exp(np.log(lo) + (i / n) * (np.log(hi) - np.log(lo)))
    edges[0], edges[-1] = lo, hi
    return edges - shift, shift


def sid_discretization(n, rng):
    """Spacing-increasing discretisation expressed as normalised widths."""
    edges, _ = sid_edges(n, rng)
    widths = np.diff(edges) / (rng.d_max - rng.d_min)
    return BinPartition(widths, rng)


def relative_range(depths):
    """[min, max] of the valid (> 0) sample depths as a scene-relative range.

    Accepts a depth vector or anything with a ``d`` attribute.
    """
    d = np.asarray(getattr(depths, "d", depths), dtype=np.float64).reshape(-1)
    d = d[d > 0]
    if d.size < 2:
        raise DegenerateRangeError(f"need at least 2 valid samples, got {d.size}")
    lo, hi = float(d.min()), float(d.max())
    if not hi > lo:
        raise DegenerateRangeError(f"all {d.size} samples share depth {lo}")
    return DepthRange(lo, hi, SCENE_RELATIVE)


def add_boundary_bins(part, dataset):
    if not dataset.contains(part.range):
        raise ContainmentError(
            f"dataset range [{dataset.d_min}, {dataset.d_max}] does not contain "
            f"[{part.range.d_min}, {part.range.d_max}]")
    return BinPartition(part.widths, part.range, boundary=dataset)
