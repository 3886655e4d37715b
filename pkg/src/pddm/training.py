"""Optimisation loop used by the ``train`` command and the overfit check."""

import logging
from dataclasses import dataclass, field

import numpy as np

from .data.metrics import compute_metrics
from .errors import ContractError, DivergenceError
from .losses import BETA, downsample_valid_mean, multi_scale_loss
from .numerics import Adam, backward, ops

log = logging.getLogger(__name__)

# full-scale reference values (batch 8, 1-cycle schedule peaking at this rate)
PAPER_BATCH_SIZE = 8
PAPER_MAX_LR = 0.00357


@dataclass
class TrainConfig:
    steps: int = 500
    lr: float = 3e-3
    beta: float = BETA
    refined_weight: float = 1.0
    log_every: int = 0


@dataclass
class TrainHistory:
    steps: list = field(default_factory=list)
    losses: list = field(default_factory=list)
    stage_rmse: list = field(default_factory=list)

    def rows(self):
        for s, l, r in zip(self.steps, self.losses, self.stage_rmse):
            yield [s, l] + list(r)


def stage_rmse(result, gt):
    out = []
    for st in result.stages:
        g = downsample_valid_mean(gt, st.depth.shape)
        out.append(compute_metrics(st.depth.data, g).rmse)
    return out


def scene_loss(model, image, gt, sparse, config):
    result = model.forward(image, sparse)
    loss, _ = multi_scale_loss(result.stages, gt, model.config.L, config.beta,
                               refined=result.refined, refined_weight=config.refined_weight)
    return loss, result


def train(model, scenes, config=None, callback=None):
    """Optimise ``model`` with Adam on ``scenes``, a list of (image, gt, sparse).

    Each step averages the loss over every scene (the batch).  Row ``k`` of
    the history holds the loss and per-stage RMSE *before* update ``k``;
    RMSE is averaged over the batch.
    """
    config = config or TrainConfig()
    if not scenes:
        raise ContractError("need at least one training scene")
    opt = Adam(model.store, lr=config.lr)
    hist = TrainHistory()
    last_finite = 0
    for step in range(1, config.steps + 1):
        model.store.zero_grad()
        total, rmse = None, []
        for image, gt, sparse in scenes:
            loss, result = scene_loss(model, image, gt, sparse, config)
            total = loss if total is None else ops.add(total, loss)
            rmse.append(stage_rmse(result, gt))
        total = ops.scale(total, 1.0 / len(scenes))
        value = total.item()
        if not np.isfinite(value):
            raise DivergenceError(f"non-finite loss at step {step}", last_finite)
        last_finite = step
        hist.steps.append(step)
        hist.losses.append(value)
        hist.stage_rmse.append(list(np.mean(rmse, axis=0)))
        backward(total)
        opt.step()
        if config.log_every and step % config.log_every == 0:
            log.info("step %d loss %.5f", step, value)
        if callback is not None:
            callback(step, value, result)
    return hist
