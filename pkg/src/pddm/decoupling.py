"""Incremental depth-decoupling branch: transformer blocks over bin embeddings."""

from dataclasses import dataclass

import numpy as np

from . import binning
from .errors import ContractError, DimensionError, StageOverflowError
from .numerics import NdValue, ops


@dataclass(frozen=True)
class StageSchedule:
    """Bin counts double every stage; stage ``l`` works at 1 / 2**(L - l) of the input
    for its projected feature (the coarser input of that stage's decoder)."""

    L: int = 5
    n_final: int = 64

    def __post_init__(self):
        if self.L < 1:
            raise ContractError("need at least one stage")
        if self.n_final % (2 ** (self.L - 1)):
            raise ContractError(f"N_final={self.n_final} is not divisible by 2^(L-1)={2 ** (self.L - 1)}")

    @property
    def m1(self):
        return self.n_final // 2 ** (self.L - 1)

    @property
    def bin_counts(self):
        return [self.m1 * 2 ** l for l in range(self.L)]

    def input_scale(self, l):
        """Downsampling factor of the feature entering stage ``l`` (1-based)."""
        return 2 ** (self.L - l)

    def output_scale(self, l):
        """Downsampling factor of stage ``l``'s probability volume."""
        return 2 ** max(self.L - l - 1, 0)


def multi_head_attention(query, key, value, heads=1, return_weights=False):
    """softmax(Q K^T / sqrt(d_head)) V with the feature axis split into ``heads``.

    No learned projections: the formulation attends with the embeddings
    themselves.  Attention weights are normalised over the key axis.
    """
    m, dim = query.shape
    n = key.shape[0]
    if key.shape[1] != dim or value.shape[1] != dim:
        raise DimensionError(f"attention dims differ: {query.shape}, {key.shape}, {value.shape}")
    if dim % heads:
        raise DimensionError(f"dim {dim} not divisible by {heads} heads")
    dh = dim // heads
    if heads == 1:
        q, k, v = query, key, value
        tk = ops.transpose(k)
    else:
        q = ops.transpose(ops.reshape(query, (m, heads, dh)), (1, 0, 2))
        k = ops.transpose(ops.reshape(key, (n, heads, dh)), (1, 0, 2))
        v = ops.transpose(ops.reshape(value, (n, heads, dh)), (1, 0, 2))
        tk = ops.transpose(k, (0, 2, 1))
    weights = ops.softmax(ops.scale(ops.matmul(q, tk), 1.0 / np.sqrt(dh)), axis=-1)
    out = ops.matmul(weights, v)
    if heads != 1:
        out = ops.reshape(ops.transpose(out, (1, 0, 2)), (m, dim))
    return (out, weights) if return_weights else out


class LayerNorm:
    def __init__(self, store, path, dim):
        self.gamma = store.create(f"{path}.gamma", (dim,), "ones")
        self.beta = store.create(f"{path}.beta", (dim,), "zeros")

    def __call__(self, x):
        return ops.layer_norm(x, self.gamma, self.beta)


class Linear:
    def __init__(self, store, path, fan_in, fan_out, bias=True, init="glorot", bias_init="zeros"):
        self.weight = store.create(f"{path}.weight", (fan_in, fan_out), init)
        self.bias = store.create(f"{path}.bias", (fan_out,), bias_init) if bias else None

    def __call__(self, x):
        return ops.linear(x, self.weight, self.bias)


class TransformerBlock:
    """One decoupling stage: attention refinement, width head, split and projections.

    ``c_in`` is the channel count of the modulating-branch feature this
    stage attends to; ``is_last`` drops the split layer.
    """

    def __init__(self, store, prefix, dim, m, c_in, heads=2, ffn_mult=4, is_last=False):
        self.dim, self.m, self.heads = dim, m, heads
        p = prefix
        self.ln_self = LayerNorm(store, f"{p}.ln_self", dim)
        self.ln_cross = LayerNorm(store, f"{p}.ln_cross", dim)
        self.ln_ffn = LayerNorm(store, f"{p}.ln_ffn", dim)
        self.ffn1 = Linear(store, f"{p}.ffn1", dim, ffn_mult * dim)
        self.ffn2 = Linear(store, f"{p}.ffn2", ffn_mult * dim, dim)
        # starts at the uniform partition with every raw width inside the
        # relu's active region; a head whose outputs all go negative stops learning
        self.width_head = Linear(store, f"{p}.width_head", dim, 1, init="zeros", bias_init="ones")
        self.proj = Linear(store, f"{p}.project", c_in, dim)
        self.iproj_bins = store.create(f"{p}.inverse_project.bin_weight", (1, m), fan=(m, 1))
        self.iproj_conv = store.create(f"{p}.inverse_project.conv.weight", (1, 1, dim, dim))
        self.iproj_bias = store.create(f"{p}.inverse_project.conv.bias", (dim,), "zeros")
        if is_last:
            self.split_w = self.split_b = None
        else:
            self.split_w = store.create(f"{p}.split.weight", (2 * m, m))
            self.split_b = store.create(f"{p}.split.bias", (2 * m, 1), "zeros")

    # -- attention path
    def self_attend(self, B):
        return self.ln_self(ops.add(B, multi_head_attention(B, B, B, self.heads)))

    def cross_attend(self, Bp, F, return_weights=False):
        return multi_head_attention(Bp, F, F, self.heads, return_weights)

    def ffn_refine(self, B2):
        hidden = ops.relu(self.ffn1(B2))
        return self.ln_ffn(ops.add(B2, self.ffn2(hidden)))

    def refine(self, B, F_proj):
        """B_l -> refined embedding, with residual + layer norm around each sublayer."""
        Bp = self.self_attend(B)
        B2 = self.ln_cross(ops.add(Bp, self.cross_attend(Bp, F_proj)))
        return self.ffn_refine(B2)

    # -- output paths
    def partition(self, B_hat, scene_range, dataset_range):
        raw = ops.reshape(self.width_head(B_hat), (B_hat.shape[0],))
        widths = binning.normalize_widths(raw)
        part = binning.BinPartition(widths, scene_range)
        return binning.add_boundary_bins(part, dataset_range)

    def split_bins(self, B_hat):
        if self.split_w is None:
            raise StageOverflowError("the final stage has no split layer")
        return ops.relu(ops.add(ops.matmul(self.split_w, B_hat), self.split_b))

    def project(self, F):
        """(h, w, c) feature -> (h*w, dim) patch embeddings."""
        h, w, c = F.shape
        return self.proj(ops.reshape(F, (h * w, c)))

    def inverse_project(self, B_hat, extents):
        """Bin-pooled embedding through a 1x1 conv, broadcast over ``extents``."""
        h, w = extents
        g = ops.matmul(self.iproj_bins, B_hat)  # (1, dim)
        g = ops.add(ops.matmul(g, ops.reshape(self.iproj_conv, (self.dim, self.dim))), self.iproj_bias)
        return ops.broadcast_to(ops.reshape(g, (1, 1, self.dim)), (h, w, self.dim))


def self_attend(B, heads=1):
    """Parameter-free form: layer_norm(B + softmax(B B^T / sqrt(d)) B) with unit affine."""
    B = B if isinstance(B, NdValue) else NdValue(B)
    dim = B.shape[1]
    return ops.layer_norm(ops.add(B, multi_head_attention(B, B, B, heads)), np.ones(dim), np.zeros(dim))


def cross_attend(Bp, F, heads=1, return_weights=False):
    Bp = Bp if isinstance(Bp, NdValue) else NdValue(Bp)
    F = F if isinstance(F, NdValue) else NdValue(F)
    return multi_head_attention(Bp, F, F, heads, return_weights)
