"""Depth-completion error metrics over the valid ground-truth pixels."""

import warnings
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ContractError, DimensionError

THRESHOLDS = (1.25, 1.25 ** 2, 1.25 ** 3)
FIELDS = ("abs_rel", "rmse", "mae", "log10", "rmse_log", "sq_rel",
          "delta1", "delta2", "delta3", "irmse", "imae")


@dataclass
class MetricReport:
    abs_rel: float
    rmse: float
    mae: float
    log10: float
    rmse_log: float
    sq_rel: float
    delta1: float
    delta2: float
    delta3: float
    irmse: float  # 1/m
    imae: float  # 1/m
    n_valid: int = 0
    n_excluded: int = 0

    def as_dict(self):
        return asdict(self)


def compute_metrics(pred, gt):
    """Metrics of ``pred`` against ``gt``; gt <= 0 marks invalid pixels.

    Log, ratio and inverse-depth metrics additionally skip pixels whose
    prediction is not positive and report how many were skipped.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise DimensionError(f"prediction {pred.shape} and ground truth {gt.shape} differ")
    valid = gt > 0
    if not valid.any():
        raise ContractError("ground truth has no valid pixels")
    p, g = pred[valid], gt[valid]
    err = p - g

    pos = p > 0
    n_excl = int((~pos).sum())
    if n_excl:
        warnings.warn(f"{n_excl} non-positive predictions excluded from log/ratio/inverse metrics")
    lp, lg = p[pos], g[pos]
    if lp.size:
        ratio = np.maximum(lp / lg, lg / lp)
        deltas = [float(np.mean(ratio < t)) for t in THRESHOLDS]
        log10 = float(np.mean(np.abs(np.log10(lp) - np.log10(lg))))
        rmse_log = float(np.sqrt(np.mean((np.log(lp) - np.log(lg)) ** 2)))
        inv = 1.0 / lp - 1.0 / lg
        irmse = float(np.sqrt(np.mean(inv ** 2)))
        imae = float(np.mean(np.abs(inv)))
    else:
        deltas = [0.0, 0.0, 0.0]
        log10 = rmse_log = irmse = imae = float("nan")

    return MetricReport(
        abs_rel=float(np.mean(np.abs(err) / g)),
        rmse=float(np.sqrt(np.mean(err ** 2))),
        mae=float(np.mean(np.abs(err))),
        log10=log10,
        rmse_log=rmse_log,
        sq_rel=float(np.mean(err ** 2 / g)),
        delta1=deltas[0], delta2=deltas[1], delta3=deltas[2],
        irmse=irmse, imae=imae,
        n_valid=int(valid.sum()), n_excluded=n_excl,
    )
