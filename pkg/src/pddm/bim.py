"""Bins initialising module: sparse samples -> seed bin embeddings."""

from dataclasses import dataclass

import numpy as np

from .errors import EmptyInputError
from .numerics import NdValue, ops

DEFAULT_N_FIXED = 500


@dataclass
class CoordTriples:
    """(u, v, d) rows; ``u``/``v`` normalised to [0, 1] unless ``raw``."""

    S: np.ndarray
    width: int
    height: int
    raw: bool = False

    def __len__(self):
        return self.S.shape[0]


def extract_coords(sparse, n_fixed=DEFAULT_N_FIXED, seed=0, raw_coords=False):
    """Resample the valid samples to exactly ``n_fixed`` (u, v, d) triples.

    Sampling is without replacement when enough samples exist, with
    replacement otherwise.
    """
    keep = sparse.valid
    u, v, d = sparse.u[keep], sparse.v[keep], sparse.d[keep]
    count = d.size
    if count == 0:
        raise EmptyInputError("no valid sparse samples; the model needs sparse depth input")
    rng = np.random.default_rng(seed)
    idx = rng.choice(count, size=n_fixed, replace=count < n_fixed)
    uu, vv = u[idx].astype(np.float64), v[idx].astype(np.float64)
    if not raw_coords:
        uu = uu / max(sparse.width - 1, 1)
        vv = vv / max(sparse.height - 1, 1)
    S = np.stack([uu, vv, d[idx]], axis=1)
    return CoordTriples(S, sparse.width, sparse.height, raw_coords)


class BIM:
    """Coordinate MLP, feature-axis squeeze conv and learned position embedding."""

    def __init__(self, store, dim, m1, n_fixed=DEFAULT_N_FIXED, prefix="bim"):
        if dim < 4:
            raise ValueError("embedding dim must be at least 4")
        self.dim, self.m1, self.n_fixed = dim, m1, n_fixed
        hidden = dim // 2
        p = prefix
        self.w1 = store.create(f"{p}.mlp1.weight", (3, hidden))
        self.b1 = store.create(f"{p}.mlp1.bias", (hidden,), "zeros")
        self.w2 = store.create(f"{p}.mlp2.weight", (hidden, dim - 3))
        self.b2 = store.create(f"{p}.mlp2.bias", (dim - 3,), "zeros")
        self.conv_w = store.create(f"{p}.squeeze.weight", (m1, n_fixed, 3), fan=(3 * n_fixed, 3 * m1))
        self.conv_b = store.create(f"{p}.squeeze.bias", (m1,), "zeros")
        self.pos = store.create(f"{p}.pos_embed", (m1, dim))

    def coord_embed(self, coords):
        """C = concat(S, MLP(S)) with width ``dim``."""
        S = NdValue(coords.S if isinstance(coords, CoordTriples) else coords)
        h = ops.relu(ops.linear(S, self.w1, self.b1))
        return ops.concat([S, ops.linear(h, self.w2, self.b2)], axis=1)

    def seed_bins(self, C):
        """Samples act as conv channels over the feature axis -> (m1, dim) + PE."""
        return ops.add(ops.conv1d(C, self.conv_w, self.conv_b), self.pos)

    def __call__(self, coords):
        return self.seed_bins(self.coord_embed(coords))
