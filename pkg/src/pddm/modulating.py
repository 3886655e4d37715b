"""Adaptive depth-modulating branch: encoder, decoder blocks, probability heads, CSPN."""

import numpy as np

from .errors import ContractError, DimensionError
from .numerics import NdValue, ops

CSPN_ITERS = 12


class Conv:
    def __init__(self, store, path, c_in, c_out, k=3):
        self.weight = store.create(f"{path}.weight", (k, k, c_in, c_out), fan=(k * k * c_in, k * k * c_out))
        self.bias = store.create(f"{path}.bias", (c_out,), "zeros")

    def __call__(self, x, stride=1):
        return ops.conv2d(x, self.weight, self.bias, stride=stride)


class ChannelNorm:
    """Batch-norm stand-in for batch size 1: per-channel statistics over h and w."""

    def __init__(self, store, path, c):
        self.gamma = store.create(f"{path}.gamma", (c,), "ones")
        self.beta = store.create(f"{path}.beta", (c,), "zeros")

    def __call__(self, x):
        return ops.add(ops.mul(ops.standardize(x, (0, 1)), self.gamma), self.beta)


class Encoder:
    """Strided conv pyramid; returns features coarse -> fine.

    ``widths`` lists channel counts from the coarsest level (1 / 2**(L-1))
    to full resolution.
    """

    def __init__(self, store, widths, in_channels=4, prefix="encoder"):
        self.widths = tuple(widths)
        self.levels = len(widths)
        fine_to_coarse = self.widths[::-1]
        self.layers = []
        c_prev = in_channels
        for i, c in enumerate(fine_to_coarse):
            first = Conv(store, f"{prefix}.level{i}.conv0", c_prev, c)
            second = Conv(store, f"{prefix}.level{i}.conv1", c, c)
            self.layers.append((first, second, 1 if i == 0 else 2))
            c_prev = c

    def __call__(self, x):
        h, w = x.shape[:2]
        factor = 2 ** (self.levels - 1)
        if h % factor or w % factor:
            raise ContractError(f"input {h}x{w} is not divisible by {factor}")
        feats = []
        for first, second, stride in self.layers:
            x = ops.leaky_relu(first(x, stride=stride))
            x = ops.leaky_relu(second(x))
            feats.append(x)
        return feats[::-1]


def encode(encoder, rgb, sparse_raster, depth_scale=1.0):
    """4-channel input (rgb + sparse depth, 0 = missing) through ``encoder``."""
    rgb = np.asarray(rgb, dtype=np.float64)
    raster = np.asarray(sparse_raster, dtype=np.float64)[..., None] / depth_scale
    return encoder(NdValue(np.concatenate([rgb, raster], axis=-1)))


class ProbabilityHead:
    """softmax(conv1x1(conv3x3(F) . B_hat^T)) over the m + 2 depth categories.

    The pixel-wise dot products with each bin embedding give ``m`` channels;
    the 1x1 conv mixes them into ``m + 2`` logits, the two extra channels
    being the boundary categories.
    """

    def __init__(self, store, prefix, c_in, dim, m):
        self.dim, self.m = dim, m
        self.feat = Conv(store, f"{prefix}.feat", c_in, dim)
        self.logits = Conv(store, f"{prefix}.logits", m, m + 2, k=1)

    def interaction(self, F, B_hat):
        h, w, _ = F.shape
        # unit-scale pixel features keep the logits bounded as F grows
        G = ops.standardize(ops.reshape(self.feat(F), (h * w, self.dim)), -1)
        S = ops.matmul(G, ops.transpose(B_hat))
        return ops.reshape(ops.scale(S, 1.0 / np.sqrt(self.dim)), (h, w, B_hat.shape[0]))

    def __call__(self, F, B_hat):
        if B_hat.shape[0] != self.m:
            raise DimensionError(f"head expects {self.m} bins, got {B_hat.shape[0]}")
        return ops.softmax(self.logits(self.interaction(F, B_hat)), axis=-1)


def predict_probs(head, F, B_hat):
    return head(F, B_hat)


def _check_extents(*named):
    ref = None
    for name, x in named:
        if ref is None:
            ref = (name, x.shape[:2])
        elif x.shape[:2] != ref[1]:
            raise DimensionError(f"extent mismatch: {ref[0]} is {ref[1]} but {name} is {x.shape[:2]}")


class DecoderBlock:
    """Upsample by 2, concat the encoder skip and inverse-projected bins, two convs."""

    def __init__(self, store, prefix, c_prev, c_skip, dim, c_out, m):
        self.up = store.create(f"{prefix}.up.weight", (3, 3, c_prev, c_out), fan=(9 * c_prev, 9 * c_out))
        self.up_b = store.create(f"{prefix}.up.bias", (c_out,), "zeros")
        self.conv1 = Conv(store, f"{prefix}.conv1", c_out + c_skip + dim, c_out)
        self.norm = ChannelNorm(store, f"{prefix}.norm", c_out)
        self.conv2 = Conv(store, f"{prefix}.conv2", c_out, c_out)
        self.head = ProbabilityHead(store, f"{prefix}.head", c_out, dim, m)

    def features(self, F_prev, B_iproj, E):
        up = ops.leaky_relu(ops.conv_transpose2d(F_prev, self.up, self.up_b))
        _check_extents(("upsampled feature", up), ("skip feature", E), ("bin guidance", B_iproj))
        x = ops.concat([up, E, B_iproj], axis=-1)
        return ops.leaky_relu(self.conv2(ops.leaky_relu(self.norm(self.conv1(x)))))

    def __call__(self, F_prev, B_iproj, E, B_hat):
        F = self.features(F_prev, B_iproj, E)
        return F, self.head(F, B_hat)


def decoder_block(block, F_prev, B_iproj, E):
    return block.features(F_prev, B_iproj, E)


class PPB:
    """Full-resolution probability prediction: conv, per-channel norm, leaky relu, head."""

    def __init__(self, store, prefix, c_prev, c_skip, dim, c_mid, m):
        self.conv = Conv(store, f"{prefix}.conv", c_prev + dim + c_skip, c_mid)
        self.norm = ChannelNorm(store, f"{prefix}.norm", c_mid)
        self.head = ProbabilityHead(store, f"{prefix}.head", c_mid, dim, m)

    def features(self, F_prev, B_iproj, E):
        _check_extents(("previous feature", F_prev), ("bin guidance", B_iproj), ("skip feature", E))
        x = self.conv(ops.concat([F_prev, B_iproj, E], axis=-1))
        return ops.leaky_relu(self.norm(x))

    def __call__(self, F_prev, B_iproj, E, B_hat):
        return self.head(self.features(F_prev, B_iproj, E), B_hat)


def ppb(block, F_prev, B_iproj, E, B_hat):
    return block(F_prev, B_iproj, E, B_hat)


def cspn_weights(affinity):
    """Neighbour weights |a_k| / (1 + sum|a|) and centre weight 1 / (1 + sum|a|).

    All weights are non-negative and sum to one, and a zero affinity gives
    the identity.
    """
    s = ops.absolute(affinity)
    denom = ops.add(ops.sum(s, axis=-1, keepdims=True), 1.0)
    return ops.div(1.0, denom), ops.div(s, denom)


def cspn_refine(depth, affinity, anchor_mask=None, anchor_values=None, iters=CSPN_ITERS):
    """Iterative 8-neighbour propagation with replacement at measured pixels.

    ``depth`` is (h, w), ``affinity`` (h, w, 8).  Anchored pixels are reset to
    their measurement after every round.
    """
    depth = depth if isinstance(depth, NdValue) else NdValue(depth)
    affinity = affinity if isinstance(affinity, NdValue) else NdValue(affinity)
    if affinity.shape != depth.shape + (8,):
        raise DimensionError(f"affinity {affinity.shape} does not match depth {depth.shape}")
    center, nbr = cspn_weights(affinity)
    center = ops.reshape(center, depth.shape)
    if anchor_mask is not None:
        keep = 1.0 - np.asarray(anchor_mask, dtype=np.float64)
        fixed = np.where(anchor_mask, anchor_values, 0.0)
    d = depth
    for _ in range(iters):
        d = ops.add(ops.mul(center, d), ops.sum(ops.mul(nbr, ops.neighbors8(d)), axis=-1))
        if anchor_mask is not None:
            d = ops.add(ops.mul(d, keep), fixed)
    return d


class CSPNAffinity:
    """3x3 conv from a probability volume to the 8 propagation affinities."""

    def __init__(self, store, prefix, c_in):
        self.conv = Conv(store, f"{prefix}.affinity", c_in, 8)

    def __call__(self, probs):
        return self.conv(probs)
