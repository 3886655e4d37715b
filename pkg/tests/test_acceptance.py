"""Acceptance criteria, one check per criterion.

Each check returns ``(passed, detail)`` and is timed against its budget.
Under pytest every criterion is its own test and a one-line verdict per
criterion is printed in the terminal summary; run this file directly with
``python tests/test_acceptance.py`` to get the same lines without pytest.
"""

import math
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

from pddm.binning import BinPartition, DepthRange, bin_centers, depth_from_probs, normalize_widths, uniform_discretization
from pddm.checkpoint import read_checkpoint, save_checkpoint
from pddm.cli import run_gradcheck
from pddm.config import tiny_config
from pddm.data import (
    SceneSpec, SparseDepthSamples, add_noise, biased_probabilities, compute_metrics, read_dmap,
    read_sparse_csv, sample_biased, sample_random, synth_scene, write_dmap, write_sparse_csv,
)
from pddm.data.metrics import FIELDS
from pddm.losses import BETA, LossWeights, chamfer_bins, downsample_valid_mean, multi_scale_loss
from pddm.model import DepthCompletionModel, ModelConfig
from pddm.modulating import cspn_refine
from pddm.numerics import NdValue, check_values, no_grad, ops
from pddm.training import TrainConfig, train

RESULTS = {}


# -- 1

def bin_center_formula():
    centers = bin_centers(uniform_discretization(4, DepthRange(0.0, 8.0)))
    err = float(np.max(np.abs(centers - [1, 3, 5, 7])))
    return err <= 1e-9, f"centers {np.round(centers, 12).tolist()} max err {err:.1e}"


# -- 2

def normalization():
    r = np.random.default_rng(0)
    worst_sum, min_w = 0.0, np.inf
    for _ in range(10_000):
        raw = r.normal(scale=r.choice([1e-3, 1.0, 1e3]), size=int(r.integers(1, 129)))
        w = normalize_widths(raw)
        worst_sum = max(worst_sum, abs(w.sum() - 1.0))
        min_w = min(min_w, w.min())
    return min_w > 0 and worst_sum <= 1e-6, f"min width {min_w:.3e}, max |sum-1| {worst_sum:.1e}"


# -- 3

def convexity():
    r = np.random.default_rng(1)
    outside = 0
    for _ in range(1000):
        k = int(r.integers(1, 66))
        c = np.sort(r.uniform(0, 10, k))
        p = r.dirichlet(np.full(k, r.choice([0.05, 1.0, 20.0])), size=(4, 4))
        d = depth_from_probs(p, c)
        outside += int(np.sum((d < c.min()) | (d > c.max())))
    return outside == 0, f"{outside} of 16000 pixels outside [min center, max center]"


# -- 4

def doubling_schedule():
    got = {}
    for n_final in (16, 64):
        model = DepthCompletionModel(ModelConfig(L=5, n_final=n_final, dim=8, n_fixed=16))
        got[n_final] = [b.m for b in model.blocks]
    ok = all(c == [(n // 16) * 2 ** (l - 1) for l in range(1, 6)] and c[-1] == n for n, c in got.items())
    return ok, f"N_final=16: {got[16]}, N_final=64: {got[64]}"


# -- 5

def _per_op_cases():
    r = np.random.default_rng(0)

    def x(*shape):
        a = r.normal(size=shape)
        return a + 0.05 * np.sign(a)

    unary = {
        "relu": ops.relu, "leaky_relu": ops.leaky_relu, "absolute": ops.absolute, "square": ops.square,
        "exp": ops.exp, "log": lambda v: ops.log(ops.absolute(v)), "sqrt": lambda v: ops.sqrt(ops.absolute(v)),
        "power": lambda v: ops.power(ops.absolute(v), 1.5), "sum": lambda v: ops.sum(v, axis=0),
        "mean": lambda v: ops.mean(v, axis=-1), "transpose": ops.transpose,
        "softmax": lambda v: ops.softmax(v, axis=-1), "standardize": lambda v: ops.standardize(v, -1),
        "concat": lambda v: ops.concat([v, ops.square(v)], axis=0),
        "take": lambda v: ops.take(v, np.array([0, 0, 1]), axis=0),
    }
    for name, fn in unary.items():
        for shape in [(3,), (2, 5), (3, 2, 4)]:
            v = NdValue(x(*shape), requires_grad=True)
            yield f"{name}{shape}", (lambda fn=fn, v=v: fn(v)), {"x": v}
    for name, fn in {"add": ops.add, "sub": ops.sub, "mul": ops.mul,
                     "div": lambda a, b: ops.div(a, ops.add(ops.absolute(b), 0.5))}.items():
        for sa, sb in [((3,), (3,)), ((2, 4), (4,)), ((3, 1, 2), (3, 4, 1))]:
            a, b = NdValue(x(*sa), requires_grad=True), NdValue(x(*sb), requires_grad=True)
            yield f"{name}{sa}{sb}", (lambda fn=fn, a=a, b=b: fn(a, b)), {"a": a, "b": b}
    for sa, sb in [((2, 3), (3, 4)), ((4, 1), (1, 5)), ((2, 3, 4), (4, 2))]:
        a, b = NdValue(x(*sa), requires_grad=True), NdValue(x(*sb), requires_grad=True)
        yield f"matmul{sa}{sb}", (lambda a=a, b=b: ops.matmul(a, b)), {"a": a, "b": b}
    for shape in [(4, 3), (2, 5, 3), (1, 3)]:
        v, g, be = (NdValue(x(*s), requires_grad=True) for s in (shape, (3,), (3,)))
        w, bias = NdValue(x(3, 2), requires_grad=True), NdValue(x(2), requires_grad=True)
        yield f"layer_norm+linear{shape}", (lambda v=v, g=g, be=be, w=w, bias=bias:
                                            ops.linear(ops.layer_norm(v, g, be), w, bias)), \
            {"x": v, "gamma": g, "beta": be, "w": w, "b": bias}
    for hw, k, stride in [((4, 4), 3, 1), ((5, 3), 3, 2), ((4, 6), 1, 2)]:
        v, w, b = (NdValue(x(*s), requires_grad=True) for s in (hw + (2,), (k, k, 2, 3), (3,)))
        yield f"conv2d{hw}k{k}s{stride}", (lambda v=v, w=w, b=b, stride=stride:
                                           ops.conv2d(v, w, b, stride=stride)), {"x": v, "w": w, "b": b}
    for hw in [(1, 1), (2, 3), (3, 3)]:
        v, w, b = (NdValue(x(*s), requires_grad=True) for s in (hw + (2,), (3, 3, 2, 3), (3,)))
        yield f"conv_transpose2d{hw}", (lambda v=v, w=w, b=b: ops.conv_transpose2d(v, w, b)), \
            {"x": v, "w": w, "b": b}
    for cin, length in [(1, 1), (3, 5), (6, 4)]:
        v, w, b = (NdValue(x(*s), requires_grad=True) for s in ((cin, length), (2, cin, 3), (2,)))
        yield f"conv1d({cin},{length})", (lambda v=v, w=w, b=b: ops.conv1d(v, w, b)), {"x": v, "w": w, "b": b}
    for hw in [(1, 1), (2, 3), (4, 4)]:
        v = NdValue(x(*hw), requires_grad=True)
        yield f"neighbors8{hw}", (lambda v=v: ops.neighbors8(v)), {"x": v}


def gradient_suite():
    worst_op, worst_name = 0.0, ""
    for name, fn, values in _per_op_cases():
        R = np.random.default_rng(7).normal(size=fn().shape)
        rep = check_values(lambda fn=fn, R=R: ops.sum(ops.mul(fn(), R)), values, step=1e-5, tol=1e-5)
        if rep.max_rel_error > worst_op:
            worst_op, worst_name = rep.max_rel_error, name
    model = run_gradcheck(tiny_config(), entries=3, tol=1e-3)
    ok = worst_op <= 1e-5 and model.passed
    return ok, (f"per-op worst {worst_op:.1e} ({worst_name}) tol 1e-5; whole model "
                f"{model.max_rel_error:.1e} ({model.worst_path}) tol 1e-3")


# -- 6

def chamfer_zero_case():
    gt = np.array([[1.5, 2.0, 2.0, 0.0], [4.0, 1.5, 6.25, 4.0]])
    zero = chamfer_bins(np.unique(gt[gt > 0]), gt, cap=None).item()
    worst = 0.0
    for seed in range(20):
        r = np.random.default_rng(seed)
        g = r.uniform(1, 8, size=(6, 6)) * (r.uniform(size=(6, 6)) < 0.8)
        c = np.sort(r.uniform(0, 9, int(r.integers(1, 12))))
        d = g[g > 0]
        oracle = sum(min((x - y) ** 2 for y in c) for x in d) + sum(min((y - x) ** 2 for x in d) for y in c)
        worst = max(worst, abs(chamfer_bins(c, g, cap=None).item() - oracle))
    return zero == 0.0 and worst <= 1e-10, f"zero case {zero}, worst oracle gap {worst:.1e}"


# -- 7

def multi_scale_weights():
    w = LossWeights(L=5)
    ok = w.omega == [1 / 16, 1 / 8, 1 / 4, 1 / 2, 1.0] and w.beta == 0.1 and BETA == 0.1
    return ok, f"omega {w.omega}, beta {w.beta}"


# -- 8

def overfit():
    image, gt = synth_scene(SceneSpec(seed=0))
    sparse = sample_random(gt, 500, 0)
    model = DepthCompletionModel(ModelConfig(), seed=0)
    hist = train(model, [(image, gt, sparse)], TrainConfig(steps=500, lr=3e-3))
    with no_grad():
        result = model(image, sparse)
        final, _ = multi_scale_loss(result.stages, gt, refined=result.refined)
    rmse = [compute_metrics(s.depth.data, downsample_valid_mean(gt, s.depth.shape)).rmse for s in result.stages]
    ratio = final.item() / hist.losses[0]
    again = train(DepthCompletionModel(ModelConfig(), seed=0), [(image, gt, sparse)], TrainConfig(steps=3))
    deterministic = again.losses == hist.losses[:3]
    ok = ratio < 0.10 and rmse[-1] <= rmse[0] and deterministic
    return ok, (f"loss {hist.losses[0]:.4g} -> {final.item():.4g} (ratio {ratio:.3f} < 0.10); "
                f"RMSE stage1 {rmse[0]:.4f}, stage5 {rmse[-1]:.4f}; rerun identical {deterministic}")


# -- 9

def sampler_statistics():
    gt = np.ones((16, 16))
    rng = np.random.default_rng(5)
    rows = np.zeros(16)
    for _ in range(100_000):
        rows[sample_biased(gt, 1, "bottom", 0.35, rng).v[0]] += 1
    worst = float(np.abs(rows / 1e5 - biased_probabilities(gt, "bottom", 0.35).sum(axis=1)).sum())
    n = 100_000
    s = SparseDepthSamples(1000, 100, np.arange(n) % 1000, np.arange(n) // 1000, np.full(n, 3.0))
    hits = int(add_noise(s, sigma=0.1, p_corrupt=0.5, seed=11).corrupted.sum())
    band = 3 * math.sqrt(n * 0.25)
    ok = worst < 0.02 and abs(hits - n / 2) < band
    return ok, f"bottom-mode row-marginal L1 {worst:.4f} < 0.02; corrupted {hits}/{n} (band +/-{band:.0f})"


# -- 10

def _metric_oracle(pred, gt):
    vals = {k: [] for k in ("ae", "rel", "sq", "sqrel", "l10", "ll", "inv", "ratio")}
    for p, g in zip(pred.ravel(), gt.ravel()):
        if g <= 0:
            continue
        vals["ae"].append(abs(p - g))
        vals["rel"].append(abs(p - g) / g)
        vals["sq"].append((p - g) ** 2)
        vals["sqrel"].append((p - g) ** 2 / g)
        if p > 0:
            vals["l10"].append(abs(math.log10(p) - math.log10(g)))
            vals["ll"].append((math.log(p) - math.log(g)) ** 2)
            vals["inv"].append(1 / p - 1 / g)
            vals["ratio"].append(max(p / g, g / p))

    def mean(xs):
        return math.fsum(xs) / len(xs)

    out = {"abs_rel": mean(vals["rel"]), "rmse": math.sqrt(mean(vals["sq"])), "mae": mean(vals["ae"]),
           "log10": mean(vals["l10"]), "rmse_log": math.sqrt(mean(vals["ll"])), "sq_rel": mean(vals["sqrel"]),
           "irmse": math.sqrt(mean([v * v for v in vals["inv"]])), "imae": mean([abs(v) for v in vals["inv"]])}
    for i, t in enumerate((1.25, 1.25 ** 2, 1.25 ** 3), start=1):
        out[f"delta{i}"] = mean([float(r < t) for r in vals["ratio"]])
    return out


def metric_oracle():
    r = np.random.default_rng(0)
    worst = 0.0
    for _ in range(100):
        gt = r.uniform(0.5, 10, size=(16, 16)) * (r.uniform(size=(16, 16)) < 0.9)
        gt[0, 0] = 3.0
        pred = np.where(gt > 0, gt * r.uniform(0.5, 1.8, size=gt.shape), r.uniform(1, 5, size=gt.shape))
        got, want = compute_metrics(pred, gt).as_dict(), _metric_oracle(pred, gt)
        worst = max(worst, max(abs(got[k] - want[k]) for k in FIELDS))
    perfect = compute_metrics(gt, gt)
    perfect_ok = all(getattr(perfect, k) == (1.0 if k.startswith("delta") else 0.0) for k in FIELDS)
    return worst <= 1e-12 and perfect_ok, f"worst oracle gap {worst:.1e}; perfect prediction exact {perfect_ok}"


# -- 11

def relative_range_containment():
    image, gt = synth_scene(SceneSpec(seed=1))
    sparse = sample_random(gt, 500, 1)
    model = DepthCompletionModel(ModelConfig(use_relative_range=True), seed=0)
    with no_grad():
        result = model(image, sparse)
    lo, hi = sparse.d.min(), sparse.d.max()
    ok, n_out = True, 0
    for st in result.stages:
        c = st.centers.data
        inner = c[1:-1]
        n_out += int(np.sum((inner < lo) | (inner > hi)))
        ok &= c.size == st.partition.m + 2 and c[0] == 1.0 and c[-1] == 8.0
    ok &= n_out == 0
    return ok, (f"samples span [{lo:.3f}, {hi:.3f}]; {n_out} interior centers outside; "
                f"boundary categories at 1.0 and 8.0 in all 5 stages: {ok}")


# -- 12

def format_round_trips():
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        _, gt = synth_scene(SceneSpec(seed=2))
        write_dmap(tmp / "gt.dmap", gt)
        back = read_dmap(tmp / "gt.dmap")
        dmap_ok = back.tobytes() == gt.astype("<f4").tobytes()
        write_dmap(tmp / "again.dmap", back)
        dmap_ok &= (tmp / "again.dmap").read_bytes() == (tmp / "gt.dmap").read_bytes()

        samples = sample_random(back.astype(np.float64), 500, 2)
        write_sparse_csv(tmp / "s.csv", samples)
        s2 = read_sparse_csv(tmp / "s.csv", samples.width, samples.height)
        # coordinates are exact; depths carry 9 significant digits, enough to recover any float32 exactly
        csv_ok = (np.array_equal(s2.u, samples.u) and np.array_equal(s2.v, samples.v)
                  and np.max(np.abs(s2.d / samples.d - 1)) <= 5e-9
                  and np.array_equal(s2.d.astype(np.float32), samples.d.astype(np.float32)))

        model = DepthCompletionModel(ModelConfig(), seed=4)
        save_checkpoint(tmp / "c.pddm", model.store)
        state = read_checkpoint(tmp / "c.pddm")
        ckpt_ok = list(state) == list(model.store) and all(
            state[k].tobytes() == model.store[k].data.astype("<f4").tobytes() for k in state)
    ok = dmap_ok and csv_ok and ckpt_ok
    return ok, f"DMAP bitwise {dmap_ok}; sparse CSV coords exact, depths to 9 digits {csv_ok}; checkpoint bitwise {ckpt_ok}"


# -- 13

def cspn_convexity():
    bad_hull, bad_anchor = 0, 0
    for seed in range(20):
        r = np.random.default_rng(seed)
        d = r.uniform(1, 8, size=(12, 10))
        anchors = np.where(r.uniform(size=d.shape) < 0.15, r.uniform(1, 8, size=d.shape), 0.0)
        mask = anchors > 0
        a = r.normal(size=(12, 10, 8)) * r.choice([0.1, 1.0, 10.0])
        one = cspn_refine(d, a, mask, anchors, iters=1).data
        p = np.pad(d, 1, mode="edge")
        stack = np.stack([p[i:i + 12, j:j + 10] for i in range(3) for j in range(3)])
        lo = np.where(mask, np.minimum(stack.min(0), anchors), stack.min(0))
        hi = np.where(mask, np.maximum(stack.max(0), anchors), stack.max(0))
        bad_hull += int(np.sum((one < lo) | (one > hi)))
        full = cspn_refine(d, a, mask, anchors, iters=12).data
        bad_anchor += int(np.sum(full[mask] != anchors[mask]))
    ok = bad_hull == 0 and bad_anchor == 0
    return ok, f"{bad_hull} pixels outside the neighbourhood hull; {bad_anchor} anchors moved"


CRITERIA = [
    (1, "bin-center formula", bin_center_formula, 1e-3),
    (2, "width normalization", normalization, 1.0),
    (3, "depth convexity", convexity, 1.0),
    (4, "doubling schedule", doubling_schedule, None),
    (5, "gradient suite", gradient_suite, 300.0),
    (6, "chamfer zero case", chamfer_zero_case, 10.0),
    (7, "multi-scale weights", multi_scale_weights, None),
    (8, "overfit experiment", overfit, 600.0),
    (9, "sampler statistics", sampler_statistics, 30.0),
    (10, "metric oracle", metric_oracle, 5.0),
    (11, "relative-range containment", relative_range_containment, None),
    (12, "format round trips", format_round_trips, 1.0),
    (13, "CSPN convexity and anchoring", cspn_convexity, 1.0),
]


def evaluate(number):
    _, name, fn, budget = CRITERIA[number - 1]
    start = time.perf_counter()
    ok, detail = fn()
    elapsed = time.perf_counter() - start
    if budget is not None and elapsed > budget:
        ok = False
        detail += f"; over the {budget:g} s budget"
    line = f"[{'PASS' if ok else 'FAIL'}] {number:2d}. {name}: {detail} ({elapsed:.2f} s)"
    RESULTS[number] = line
    return ok, line


@pytest.mark.parametrize("number", [c[0] for c in CRITERIA], ids=[c[1].replace(" ", "_") for c in CRITERIA])
def test_criterion(number):
    ok, line = evaluate(number)
    print(line)
    assert ok, line


if __name__ == "__main__":
    failures = 0
    for number, *_ in CRITERIA:
        ok, line = evaluate(number)
        print(line, flush=True)
        failures += not ok
    sys.exit(1 if failures else 0)
