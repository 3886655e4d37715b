import numpy as np
import pytest

from pddm.errors import ContractError, DimensionError
from pddm.model import DepthCompletionModel, ModelConfig
from pddm.modulating import (
    PPB, ChannelNorm, DecoderBlock, Encoder, ProbabilityHead, cspn_refine, cspn_weights, encode,
)
from pddm.numerics import NdValue, ParamStore, check_values, ops


def zero_all(store):
    for v in store.values():
        v.data[...] = 0.0


def hull_bounds(d, anchors):
    """Per-pixel [min, max] over the edge-replicated 3x3 neighbourhood."""
    p = np.pad(d, 1, mode="edge")
    h, w = d.shape
    stack = np.stack([p[a:a + h, b:b + w] for a in range(3) for b in range(3)])
    lo, hi = stack.min(axis=0), stack.max(axis=0)
    mask = anchors > 0
    lo[mask] = np.minimum(lo[mask], anchors[mask])
    hi[mask] = np.maximum(hi[mask], anchors[mask])
    return lo, hi


# -- encoder

def test_encoder_extents_for_64x48():
    enc = Encoder(ParamStore(seed=0), (64, 32, 16, 8, 8))
    feats = encode(enc, np.zeros((48, 64, 3)), np.zeros((48, 64)))
    assert [f.shape for f in feats] == [(3, 4, 64), (6, 8, 32), (12, 16, 16), (24, 32, 8), (48, 64, 8)]


def test_encoder_zero_input_zero_bias_gives_zero():
    enc = Encoder(ParamStore(seed=0), (8, 4, 4))
    assert all(not f.data.any() for f in encode(enc, np.zeros((8, 8, 3)), np.zeros((8, 8))))


def test_encoder_rejects_indivisible_input():
    enc = Encoder(ParamStore(seed=0), (8, 4, 4))
    with pytest.raises(ContractError):
        encode(enc, np.zeros((10, 8, 3)), np.zeros((10, 8)))


def test_encoder_first_conv_gradients(rng):
    store = ParamStore(seed=1)
    enc = Encoder(store, (4, 3))
    x = rng.uniform(size=(4, 4, 3))
    R = [rng.normal(size=(2, 2, 4)), rng.normal(size=(4, 4, 3))]

    def f():
        feats = encode(enc, x, np.zeros((4, 4)))
        return ops.add(ops.sum(ops.mul(feats[0], R[0])), ops.sum(ops.mul(feats[1], R[1])))

    vals = {k: v for k, v in store.items() if "level0.conv0" in k}
    assert check_values(f, vals, step=(1e-5, 1e-6, 1e-7), tol=1e-4).passed


# -- channel norm

def test_channel_norm_standardises_each_channel(rng):
    norm = ChannelNorm(ParamStore(seed=0), "n", 3)
    x = rng.normal(size=(5, 4, 3)) * [1, 10, 0.1] + [3, -2, 0]
    out = norm(NdValue(x)).data
    np.testing.assert_allclose(out.mean(axis=(0, 1)), 0, atol=1e-12)
    np.testing.assert_allclose(out.std(axis=(0, 1)), 1, atol=1e-3)


# -- decoder block and heads

def decoder(seed=0, m=3):
    store = ParamStore(seed=seed)
    return store, DecoderBlock(store, "dec", c_prev=4, c_skip=3, dim=8, c_out=5, m=m)


def test_decoder_zero_everything_gives_zero(rng):
    store, blk = decoder()
    zero_all(store)
    F = blk.features(NdValue(np.zeros((2, 3, 4))), NdValue(np.zeros((4, 6, 8))), NdValue(np.zeros((4, 6, 3))))
    assert F.shape == (4, 6, 5)
    assert not F.data.any()


def test_decoder_doubles_extents_and_checks_them(rng):
    _, blk = decoder()
    F_prev = NdValue(rng.normal(size=(3, 5, 4)))
    F = blk.features(F_prev, NdValue(rng.normal(size=(6, 10, 8))), NdValue(rng.normal(size=(6, 10, 3))))
    assert F.shape[:2] == (6, 10)
    with pytest.raises(DimensionError):
        blk.features(F_prev, NdValue(rng.normal(size=(6, 10, 8))), NdValue(rng.normal(size=(5, 10, 3))))


def test_decoder_uses_the_bin_guidance(rng):
    _, blk = decoder()
    args = NdValue(rng.normal(size=(2, 2, 4))), NdValue(rng.normal(size=(4, 4, 3)))
    guide = rng.normal(size=(4, 4, 8))
    with_guide = blk.features(args[0], NdValue(guide), args[1]).data
    without = blk.features(args[0], NdValue(np.zeros_like(guide)), args[1]).data
    assert np.abs(with_guide - without).max() > 1e-6


def test_probability_head_normalised_with_m_plus_2(rng):
    _, blk = decoder(m=6)
    F, P = blk(NdValue(rng.normal(size=(2, 2, 4))), NdValue(rng.normal(size=(4, 4, 8))),
               NdValue(rng.normal(size=(4, 4, 3))), NdValue(rng.normal(size=(6, 8))))
    assert P.shape == (4, 4, 8)
    np.testing.assert_allclose(P.data.sum(axis=-1), 1, atol=1e-12)
    assert np.all((P.data >= 0) & (P.data <= 1))


def test_probability_head_saturates_on_aligned_bin():
    store = ParamStore(seed=0)
    head = ProbabilityHead(store, "h", c_in=4, dim=4, m=3)
    head.feat.weight.data[...] = 0.0
    head.feat.weight.data[1, 1] = np.eye(4)
    logits = np.zeros((1, 1, 3, 5))
    logits[0, 0, :, 1:4] = 40 * np.eye(3)
    head.logits.weight.data[...] = logits
    x = np.zeros((2, 2, 4))
    x[..., 1] = 1.0
    x[..., 0] = -1.0
    B = np.array([[-1.0, 1.0, 0, 0], [0, 0, 1.0, -1.0], [1.0, -1.0, 0, 0]])
    P = head(NdValue(x), NdValue(B)).data
    # standardised pixel feature is parallel to bin 0, so category 1 (after the low boundary) wins
    assert np.all(P[..., 1] > 0.999)


def test_head_rejects_wrong_bin_count(rng):
    head = ProbabilityHead(ParamStore(seed=0), "h", 4, 8, 3)
    with pytest.raises(DimensionError):
        head(NdValue(rng.normal(size=(2, 2, 4))), NdValue(rng.normal(size=(4, 8))))


def test_ppb_keeps_extents_and_passes_gradcheck(rng):
    store = ParamStore(seed=4)
    blk = PPB(store, "ppb", c_prev=3, c_skip=2, dim=4, c_mid=3, m=2)
    args = [NdValue(rng.normal(size=(4, 4, c))) for c in (3, 4, 2)]
    B = NdValue(rng.normal(size=(2, 4)))
    P = blk(*args, B)
    assert P.shape == (4, 4, 4)
    np.testing.assert_allclose(P.data.sum(axis=-1), 1, atol=1e-12)
    R = rng.normal(size=P.shape)
    report = check_values(lambda: ops.sum(ops.mul(blk(*args, B), R)), dict(store.items()),
                          step=(1e-5, 1e-6, 1e-7), tol=1e-4, floor=1e-6)
    assert report.passed, report


# -- CSPN

def test_cspn_weights_are_convex(rng):
    c, n = cspn_weights(NdValue(rng.normal(size=(3, 3, 8))))
    assert np.all(c.data > 0) and np.all(n.data >= 0)
    np.testing.assert_allclose(c.data[..., 0] + n.data.sum(axis=-1), 1, atol=1e-15)


def test_cspn_zero_affinity_is_identity(rng):
    d = rng.uniform(1, 5, size=(5, 6))
    np.testing.assert_array_equal(cspn_refine(d, np.zeros((5, 6, 8))).data, d)


def test_cspn_keeps_constant_depth(rng):
    out = cspn_refine(np.full((4, 5), 2.5), rng.normal(size=(4, 5, 8)) * 3).data
    np.testing.assert_allclose(out, 2.5, atol=1e-13)


def test_cspn_single_round_matches_loop(rng):
    d, a = rng.uniform(1, 5, size=(3, 4)), rng.normal(size=(3, 4, 8))
    offsets = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]
    expect = np.zeros_like(d)
    for i in range(3):
        for j in range(4):
            s = np.abs(a[i, j]).sum()
            acc = d[i, j] / (1 + s)
            for k, (di, dj) in enumerate(offsets):
                ii, jj = min(max(i + di, 0), 2), min(max(j + dj, 0), 3)
                acc += abs(a[i, j, k]) / (1 + s) * d[ii, jj]
            expect[i, j] = acc
    np.testing.assert_allclose(cspn_refine(d, a, iters=1).data, expect, atol=1e-13)


@pytest.mark.parametrize("seed", range(5))
def test_cspn_stays_in_the_neighbourhood_hull(seed):
    r = np.random.default_rng(seed)
    d = r.uniform(1, 8, size=(9, 7))
    anchors = np.where(r.uniform(size=d.shape) < 0.2, r.uniform(1, 8, size=d.shape), 0.0)
    a = r.normal(size=(9, 7, 8)) * 2
    one = cspn_refine(d, a, anchors > 0, anchors, iters=1).data
    lo, hi = hull_bounds(d, anchors)
    assert np.all(one >= lo - 1e-12) and np.all(one <= hi + 1e-12)
    many = cspn_refine(d, a, anchors > 0, anchors, iters=12).data
    mask = anchors > 0
    np.testing.assert_array_equal(many[mask], anchors[mask])
    lo_all = min(d.min(), anchors[mask].min())
    hi_all = max(d.max(), anchors[mask].max())
    assert many.min() >= lo_all - 1e-12 and many.max() <= hi_all + 1e-12


def test_cspn_shape_mismatch():
    with pytest.raises(DimensionError):
        cspn_refine(np.ones((3, 3)), np.ones((3, 4, 8)))


# -- forward pass

@pytest.fixture(scope="module")
def default_forward(toy_scene):
    image, _, sparse = toy_scene
    model = DepthCompletionModel(ModelConfig(), seed=0)
    return model, model(image, sparse)


def test_stage_resolutions_and_bounds(default_forward):
    _, res = default_forward
    assert [s.depth.shape for s in res.stages] == [(6, 8), (12, 16), (24, 32), (48, 64), (48, 64)]
    assert res.refined.shape == (48, 64)
    for s in res.stages:
        assert s.probs.shape[-1] == s.partition.m + 2
        np.testing.assert_allclose(s.probs.data.sum(axis=-1), 1, atol=1e-5)
        c = s.centers.data
        assert s.depth.data.min() >= c.min() - 1e-12 and s.depth.data.max() <= c.max() + 1e-12


def test_forward_is_bitwise_repeatable(default_forward, toy_scene):
    image, _, sparse = toy_scene
    _, first = default_forward
    again = DepthCompletionModel(ModelConfig(), seed=0)(image, sparse)
    np.testing.assert_array_equal(first.refined.data, again.refined.data)
    for a, b in zip(first.stages, again.stages):
        np.testing.assert_array_equal(a.depth.data, b.depth.data)


def test_refined_depth_keeps_measurements(default_forward, toy_scene):
    _, _, sparse = toy_scene
    _, res = default_forward
    np.testing.assert_array_equal(res.refined.data[sparse.v, sparse.u], sparse.d)
