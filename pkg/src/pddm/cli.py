"""Command-line harness: ``pddm {gen,sample,train,eval,discretize,gradcheck}``.

Every command takes ``--seed``, ``--config`` and ``--out`` plus one flag per
config key (``--n-final 16``, ``--lr 1e-3`` ...).  Outputs go to the ``--out``
directory next to a ``manifest.txt`` holding the resolved configuration and
SHA-256 digests of inputs and outputs; a manifest can be passed back as
``--config`` to replay the run.

Exit status: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

import argparse
import csv
import hashlib
import sys
import warnings
from pathlib import Path

import numpy as np

from . import binning
from .checkpoint import load_checkpoint, save_checkpoint
from .config import SCHEMA, load_config, tiny_config, write_ini
from .data import (
    add_noise, compute_metrics, read_dmap, read_ppm, read_sparse_csv,
    sample_biased, sample_grid, sample_random, synth_scene, write_dmap, write_pgm16, write_ppm,
    write_sparse_csv,
)
from .data.metrics import FIELDS
from .errors import (
    ContractError, DimensionError, DivergenceError, EmptyInputError, PddmError,
    UnsupportedConfigError,
)
from .losses import downsample_valid_mean, multi_scale_loss
from .model import DepthCompletionModel
from .numerics import check_values, no_grad
from .training import train

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2
USAGE_ERRORS = (ContractError, UnsupportedConfigError, DimensionError)

IMAGE_FILE, GT_FILE, SPARSE_FILE = "image.ppm", "gt.dmap", "sparse.csv"
MANIFEST_FILE, CHECKPOINT_FILE, LOG_FILE = "manifest.txt", "checkpoint.pddm", "train_log.csv"


class UsageError(PddmError):
    pass


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out, cfg, command, outputs, inputs=(), seeds=None):
    """Resolved config plus digests; the file is itself a loadable config."""
    parser = cfg.to_ini()
    parser["command"] = {"name": command}
    parser["seeds"] = {k: str(v) for k, v in (seeds or {"seed": cfg.seed}).items()}
    if inputs:
        parser["inputs"] = {Path(p).name: _sha256(p) for p in inputs}
    parser["outputs"] = {Path(p).name: _sha256(p) for p in outputs}
    path = Path(out) / MANIFEST_FILE
    write_ini(parser, path)
    return path


def make_samples(cfg, gt, rng):
    """Dispatch to the sampler named by ``cfg.pattern``, then optional noise."""
    if cfg.pattern == "random":
        samples = sample_random(gt, cfg.n, rng)
    elif cfg.pattern == "grid":
        samples = sample_grid(gt, cfg.stride)
    else:
        samples = sample_biased(gt, cfg.n, cfg.pattern, cfg.alpha, rng)
    if cfg.noise > 0:
        samples = add_noise(samples, cfg.sigma, cfg.noise, rng)
    return samples


def _out_dir(cfg):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def load_scene(scene_dir, sparse_path=None):
    """(image, gt, samples-or-None) from a directory written by ``gen``/``sample``."""
    scene_dir = Path(scene_dir)
    image = read_ppm(scene_dir / IMAGE_FILE)
    gt = read_dmap(scene_dir / GT_FILE).astype(np.float64)
    h, w = gt.shape
    if image.shape[:2] != gt.shape:
        raise DimensionError(f"image {image.shape[:2]} and depth {gt.shape} differ")
    sparse_path = Path(sparse_path) if sparse_path else scene_dir / SPARSE_FILE
    samples = read_sparse_csv(sparse_path, w, h) if sparse_path.is_file() else None
    inputs = [scene_dir / IMAGE_FILE, scene_dir / GT_FILE] + ([sparse_path] if samples else [])
    return image, gt, samples, inputs


def _require_samples(samples):
    if samples is None or not np.any(samples.valid):
        raise UsageError("the model needs sparse depth input; evaluation without samples "
                         "is not supported (the sample-free variant degrades catastrophically)")


def _config_for_checkpoint(args, overrides):
    config = args.config
    if config is None:
        sibling = Path(args.checkpoint).with_name(MANIFEST_FILE)
        if sibling.is_file():
            config = sibling
    cfg = load_config(config, overrides).validate()
    return cfg, config


def _model_from_checkpoint(cfg, path):
    model = DepthCompletionModel(cfg.model_config(), seed=cfg.seed)
    load_checkpoint(path, model.store)
    return model


# -- commands

def cmd_gen(cfg, args):
    out = _out_dir(cfg)
    image, gt = synth_scene(cfg.scene_spec())
    write_ppm(out / IMAGE_FILE, image)
    write_dmap(out / GT_FILE, gt)
    write_pgm16(out / "gt.pgm", gt)
    outputs = [out / IMAGE_FILE, out / GT_FILE, out / "gt.pgm"]
    write_manifest(out, cfg, "gen", outputs, seeds={"scene_seed": cfg.seed})
    print(f"scene {cfg.width}x{cfg.height} depth [{gt.min():.4g}, {gt.max():.4g}] -> {out}")
    return EXIT_OK


def cmd_sample(cfg, args):
    gt = read_dmap(args.gt).astype(np.float64)
    out = _out_dir(cfg)
    samples = make_samples(cfg, gt, np.random.default_rng(cfg.seed))
    write_sparse_csv(out / SPARSE_FILE, samples)
    write_manifest(out, cfg, "sample", [out / SPARSE_FILE], inputs=[args.gt],
                   seeds={"sample_seed": cfg.seed})
    try:
        rng = binning.relative_range(samples)
        span = f"relative range [{rng.d_min:.6g}, {rng.d_max:.6g}]"
    except PddmError:
        span = "relative range undefined (fewer than two distinct depths)"
    print(f"{len(samples)} samples ({samples.pattern}), {span}")
    return EXIT_OK


def cmd_train(cfg, args):
    out = _out_dir(cfg)
    inputs = []
    if args.scene:
        if cfg.batch_size != 1:
            raise UsageError("--scene provides one scene; batch_size must be 1")
        image, gt, samples, inputs = load_scene(args.scene, args.sparse)
        if samples is None:
            samples = make_samples(cfg, gt, np.random.default_rng(cfg.seed))
        scenes = [(image, gt, samples)]
    else:
        scenes = []
        for i in range(cfg.batch_size):
            image, gt = synth_scene(cfg.scene_spec(cfg.seed + i))
            scenes.append((image, gt, make_samples(cfg, gt, np.random.default_rng(cfg.seed + i))))
    _require_samples(scenes[0][2])
    model = DepthCompletionModel(cfg.model_config(), seed=cfg.seed)
    try:
        hist = train(model, scenes, cfg.train_config())
    except DivergenceError as exc:
        print(f"error: training diverged: {exc}; last finite step {exc.last_finite_step}",
              file=sys.stderr)
        return EXIT_FAILURE
    with open(out / LOG_FILE, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "loss"] + [f"rmse_stage{l}" for l in range(1, cfg.L + 1)])
        for row in hist.rows():
            w.writerow([row[0]] + [f"{x:.10g}" for x in row[1:]])
    save_checkpoint(out / CHECKPOINT_FILE, model.store)
    write_manifest(out, cfg, "train", [out / LOG_FILE, out / CHECKPOINT_FILE], inputs,
                   seeds={"model_seed": cfg.seed, "scene_seed": cfg.seed, "sample_seed": cfg.seed})
    if hist.losses:
        print(f"{cfg.steps} steps: loss {hist.losses[0]:.5g} -> {hist.losses[-1]:.5g}")
    print(f"checkpoint -> {out / CHECKPOINT_FILE}")
    return EXIT_OK


def metric_rows(stage_depths, refined, gt):
    """(label, MetricReport) per stage against pooled gt, then the refined map."""
    rows = []
    for l, depth in enumerate(stage_depths, start=1):
        rows.append((f"stage{l}", compute_metrics(depth, downsample_valid_mean(gt, depth.shape))))
    if refined is not None:
        rows.append(("refined", compute_metrics(refined, gt)))
    return rows


def write_metrics_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["stage"] + list(FIELDS) + ["n_valid", "n_excluded"])
        for label, rep in rows:
            d = rep.as_dict()
            w.writerow([label] + [f"{d[k]:.10g}" for k in FIELDS] + [d["n_valid"], d["n_excluded"]])


def cmd_eval(cfg, args):
    if args.no_sample:
        _require_samples(None)
    image, gt, samples, inputs = load_scene(args.scene, args.sparse)
    _require_samples(samples)
    out = _out_dir(cfg)
    model = _model_from_checkpoint(cfg, args.checkpoint)
    with no_grad():
        result = model.forward(image, samples)
    depths = [np.asarray(st.depth.data) for st in result.stages]
    refined = np.asarray(result.refined.data)
    rows = metric_rows(depths, refined, gt)
    write_metrics_csv(out / "metrics.csv", rows)
    outputs = [out / "metrics.csv"]
    for label, depth in zip([f"stage{l}" for l in range(1, len(depths) + 1)] + ["refined"],
                            depths + [refined]):
        write_dmap(out / f"{label}.dmap", depth)
        write_pgm16(out / f"{label}.pgm", depth)
        outputs += [out / f"{label}.dmap", out / f"{label}.pgm"]
    rmse = [rep.rmse for _, rep in rows[:len(depths)]]
    if any(b > a for a, b in zip(rmse, rmse[1:])):
        warnings.warn("per-stage RMSE is not non-increasing: " + ", ".join(f"{r:.4g}" for r in rmse))
    write_manifest(out, cfg, "eval", outputs, inputs + [Path(args.checkpoint)])
    for label, rep in rows:
        print(f"{label:>8}  RMSE {rep.rmse:.5g}  MAE {rep.mae:.5g}  AbsRel {rep.abs_rel:.5g}  "
              f"d1 {rep.delta1:.4f}")
    return EXIT_OK


def _parse_range(text):
    try:
        lo, hi = (float(t) for t in text.split(","))
    except ValueError as exc:
        raise UsageError(f"--range expects 'lo,hi', got {text!r}") from exc
    return binning.DepthRange(lo, hi)


def cmd_discretize(cfg, args):
    out = _out_dir(cfg)
    header, rows, inputs = [f"method = {args.method}"], [], []
    if args.method == "learned":
        if not (args.checkpoint and args.scene):
            raise UsageError("learned discretization needs --checkpoint and --scene")
        image, gt, samples, inputs = load_scene(args.scene, args.sparse)
        _require_samples(samples)
        model = _model_from_checkpoint(cfg, args.checkpoint)
        with no_grad():
            result = model.forward(image, samples)
        r = result.scene_range
        header.append(f"range = [{r.d_min:.9g}, {r.d_max:.9g}] ({r.kind})")
        header.append(f"dataset = [{cfg.d_min:.9g}, {cfg.d_max:.9g}] (boundary categories)")
        for st in result.stages:
            rows.append([st.stage] + list(np.asarray(st.centers.data)))
    else:
        if args.range:
            rng = _parse_range(args.range)
        elif args.sparse:
            samples = read_sparse_csv(args.sparse)
            inputs = [Path(args.sparse)]
            rng = binning.relative_range(samples)
        else:
            rng = cfg.model_config().dataset_range
        n = args.bins or cfg.n_final
        header.append(f"range = [{rng.d_min:.9g}, {rng.d_max:.9g}] ({rng.kind})")
        if args.method == "ud":
            part = binning.uniform_discretization(n, rng)
        else:
            _, shift = binning.sid_edges(n, rng)
            if shift:
                header.append(f"shift = {shift:g} (d_min <= 0; log spacing computed on d + {shift:g})")
            part = binning.sid_discretization(n, rng)
        rows.append([1] + list(binning.bin_centers(part)))
    path = out / "centers.csv"
    with open(path, "w") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        for row in rows:
            fh.write(",".join([str(row[0])] + [f"{c:.10g}" for c in row[1:]]) + "\n")
    write_manifest(out, cfg, "discretize", [path], inputs)
    for line in header:
        print(f"# {line}")
    for row in rows:
        print(f"stage {row[0]} ({len(row) - 1} centers): " + " ".join(f"{c:.4g}" for c in row[1:]))
    return EXIT_OK


def run_gradcheck(cfg, entries=3, tol=1e-3, steps=(1e-5, 1e-6, 1e-7), inject=None, floor=1e-6,
                  jitter=1e-2):
    """Whole-model finite-difference check of the multi-scale loss.

    Parameters are moved off their initialisation by seeded noise of scale
    ``jitter``: the uniform-width start can put a ground-truth depth exactly
    halfway between two bin centers, a kink of the hard-min Chamfer term.
    ``inject`` names a parameter whose backprop gradient is deliberately
    corrupted, a negative control that must make the check fail.
    """
    image, gt = synth_scene(cfg.scene_spec())
    samples = make_samples(cfg, gt, np.random.default_rng(cfg.seed))
    model = DepthCompletionModel(cfg.model_config(), seed=cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    for v in model.store.values():
        v.data = v.data + jitter * rng.standard_normal(v.shape)

    def loss():
        result = model.forward(image, samples)
        total, _ = multi_scale_loss(result.stages, gt, cfg.L, cfg.beta, refined=result.refined,
                                    refined_weight=cfg.refined_weight)
        return total

    hook = None
    if inject is not None:
        if inject not in model.store:
            raise UsageError(f"unknown parameter path {inject!r}")

        def hook(name, g):
            return g * 1.5 + 1e-3 if name == inject else g

    return check_values(loss, dict(model.store.items()), step=steps, tol=tol, max_entries=entries,
                        rng=rng, floor=floor, analytic_hook=hook)


def cmd_gradcheck(cfg, args):
    out = _out_dir(cfg)
    report = run_gradcheck(cfg, args.entries, args.tol, inject=args.inject_wrong_grad)
    path = out / "gradcheck.txt"
    lines = [f"{'PASS' if report.passed else 'FAIL'} max_rel_error={report.max_rel_error:.3e} "
             f"tol={report.tol:g}",
             f"worst parameter: {report.worst_path} at {tuple(int(i) for i in report.worst_index)}"]
    lines += [f"{err:.3e}  {name}" for name, err in
              sorted(report.per_path.items(), key=lambda kv: -kv[1])]
    path.write_text("\n".join(lines) + "\n")
    write_manifest(out, cfg, "gradcheck", [path])
    print("\n".join(lines[:2]))
    return EXIT_OK if report.passed else EXIT_FAILURE


COMMANDS = {"gen": cmd_gen, "sample": cmd_sample, "train": cmd_train, "eval": cmd_eval,
            "discretize": cmd_discretize, "gradcheck": cmd_gradcheck}


def _flag(key):
    return "--" + key.replace("_", "-")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file (a manifest works too)")
    for key, (section, _) in SCHEMA.items():
        common.add_argument(_flag(key), dest=f"cfg_{key}", metavar=key.upper(),
                            help=f"override [{section}] {key}")

    parser = argparse.ArgumentParser(prog="pddm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("gen", parents=[common], help="render a synthetic scene")
    p = sub.add_parser("sample", parents=[common], help="draw sparse samples from a gt DMAP")
    p.add_argument("gt", help="ground-truth DMAP")
    p = sub.add_parser("train", parents=[common], help="fit the model to one or more scenes")
    p.add_argument("--scene", help="directory with image.ppm, gt.dmap and optionally sparse.csv")
    p.add_argument("--sparse", help="sparse CSV (default: <scene>/sparse.csv)")
    p = sub.add_parser("eval", parents=[common], help="metrics and per-stage depth maps")
    p.add_argument("checkpoint")
    p.add_argument("--scene", required=True)
    p.add_argument("--sparse")
    p.add_argument("--no-sample", action="store_true",
                   help="evaluate without sparse input (rejected: not supported)")
    p = sub.add_parser("discretize", parents=[common], help="print bin centers")
    p.add_argument("--method", choices=("ud", "sid", "learned"), default="ud")
    p.add_argument("--bins", type=int, help="bin count for ud/sid (default n_final)")
    p.add_argument("--range", help="'lo,hi' depth range for ud/sid")
    p.add_argument("--sparse", help="sparse CSV; its relative range is used for ud/sid")
    p.add_argument("--checkpoint")
    p.add_argument("--scene")
    p = sub.add_parser("gradcheck", parents=[common], help="whole-model finite differences")
    p.add_argument("--entries", type=int, default=3, help="entries checked per parameter")
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--inject-wrong-grad", metavar="PATH",
                   help="corrupt this parameter's gradient (negative control)")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg_") and v is not None}
    try:
        if args.command == "gradcheck":
            base = tiny_config().as_dict()
            cfg = load_config(args.config, {**base, **overrides} if args.config is None else overrides)
            cfg = cfg.validate()
        elif args.command in ("eval",) or (args.command == "discretize" and args.checkpoint):
            cfg, _ = _config_for_checkpoint(args, overrides)
        else:
            cfg = load_config(args.config, overrides).validate()
    except (ValueError, PddmError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](cfg, args)
    except (UsageError, EmptyInputError) + USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (PddmError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
