"""Sparse depth samples and the sampling patterns used to simulate sensors."""

from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import ContractError, ValidationError

BIASED_MODES = ("top", "middle", "bottom")
DEFAULT_ALPHA = 0.35
DEFAULT_P_CORRUPT = 0.5
DEFAULT_N = 500
MIN_DEPTH = 1e-3


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


@dataclass
class SparseDepthSamples:
    """Measurements ``d[k]`` (meters) at column ``u[k]`` and row ``v[k]``."""

    width: int
    height: int
    u: np.ndarray
    v: np.ndarray
    d: np.ndarray
    pattern: str = "unknown"
    seed: object = None
    corrupted: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=np.int64).reshape(-1)
        self.v = np.asarray(self.v, dtype=np.int64).reshape(-1)
        self.d = np.asarray(self.d, dtype=np.float64).reshape(-1)
        if not (len(self.u) == len(self.v) == len(self.d)):
            raise ValidationError("u, v and d must have equal length")
        if len(self.u) and (self.u.min() < 0 or self.u.max() >= self.width
                            or self.v.min() < 0 or self.v.max() >= self.height):
            raise ValidationError(f"sample coordinates outside a {self.width}x{self.height} image")

    def __len__(self):
        return len(self.d)

    @property
    def valid(self):
        return self.d > 0

    def to_raster(self):
        """Dense (height, width) map with 0 where nothing was measured."""
        out = np.zeros((self.height, self.width))
        keep = self.valid
        out[self.v[keep], self.u[keep]] = self.d[keep]
        return out

    @classmethod
    def from_raster(cls, raster, pattern="raster"):
        raster = np.asarray(raster, dtype=np.float64)
        v, u = np.nonzero(raster > 0)
        return cls(raster.shape[1], raster.shape[0], u, v, raster[v, u], pattern)


def _from_flat(gt, flat_idx, pattern, seed):
    h, w = gt.shape
    v, u = np.divmod(np.asarray(flat_idx, dtype=np.int64), w)
    return SparseDepthSamples(w, h, u, v, gt[v, u], pattern, seed)


def sample_random(gt, n=DEFAULT_N, seed=0):
    """``n`` distinct valid pixels, uniformly without replacement."""
    gt = np.asarray(gt, dtype=np.float64)
    valid = np.flatnonzero(gt.reshape(-1) > 0)
    if n > valid.size:
        raise ContractError(f"requested {n} samples but only {valid.size} valid pixels")
    chosen = _rng(seed).choice(valid, size=n, replace=False)
    return _from_flat(gt, chosen, "random", seed)


def sample_grid(gt, stride):
    """Valid pixels on the lattice (i * stride, j * stride)."""
    if stride < 1:
        raise ContractError("stride must be >= 1")
    gt = np.asarray(gt, dtype=np.float64)
    h, w = gt.shape
    vv, uu = np.meshgrid(np.arange(0, h, stride), np.arange(0, w, stride), indexing="ij")
    vv, uu = vv.reshape(-1), uu.reshape(-1)
    keep = gt[vv, uu] > 0
    return SparseDepthSamples(w, h, uu[keep], vv[keep], gt[vv[keep], uu[keep]], f"grid{stride}")


def biased_distance(height, width, mode):
    """Row distance D[i, j] driving the biased patterns."""
    i = np.arange(height, dtype=np.float64)[:, None] * np.ones((1, width))
    if mode == "bottom":
        return i
    if mode == "top":
        return height - i
    if mode == "middle":
        return np.abs(i - height / 2.0)
    raise ContractError(f"unknown biased mode {mode!r}; expected one of {BIASED_MODES}")


def biased_probabilities(gt, mode, alpha=DEFAULT_ALPHA):
    """Per-pixel probabilities proportional to 1 / (D**alpha + 1), valid pixels only."""
    gt = np.asarray(gt, dtype=np.float64)
    p = 1.0 / (biased_distance(*gt.shape, mode) ** alpha + 1.0)
    p = np.where(gt > 0, p, 0.0)
    total = p.sum()
    if total <= 0:
        raise ContractError("no valid pixels to sample")
    return p / total


def sample_biased(gt, n=DEFAULT_N, mode="bottom", alpha=DEFAULT_ALPHA, seed=0):
    """``n`` distinct pixels drawn by sequential renormalisation of the biased law."""
    gt = np.asarray(gt, dtype=np.float64)
    p = biased_probabilities(gt, mode, alpha).reshape(-1)
    support = np.flatnonzero(p > 0)
    if n > support.size:
        raise ContractError(f"requested {n} samples but only {support.size} valid pixels")
    chosen = _rng(seed).choice(support, size=n, replace=False, p=p[support])
    return _from_flat(gt, chosen, f"biased-{mode}", seed)


def add_noise(samples, sigma=None, p_corrupt=DEFAULT_P_CORRUPT, seed=0):
    """Corrupt each sample with probability ``p_corrupt`` by N(0, sigma**2).

    ``sigma`` defaults to 5% of the samples' depth span.  Depths are clamped
    to stay positive.  The returned samples carry the ``corrupted`` mask.
    """
    rng = _rng(seed)
    d = samples.d.copy()
    if sigma is None:
        valid = d[d > 0]
        sigma = 0.05 * float(valid.max() - valid.min()) if valid.size else 0.0
    hit = rng.random(d.size) < p_corrupt
    d[hit] += rng.normal(0.0, sigma, size=int(hit.sum()))
    d[hit] = np.maximum(d[hit], MIN_DEPTH)
    return replace(samples, d=d, corrupted=hit, pattern=samples.pattern + "+noise")
