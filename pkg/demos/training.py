"""Overfitting the full model to one synthetic scene.

Every stage predicts depth at its own resolution; the multi-scale loss
weights later stages more, so the final stage should end up the most
accurate.  Pass a step count on the command line (default 150).
"""

import sys

from pddm import DepthCompletionModel, ModelConfig
from pddm.data import SceneSpec, compute_metrics, sample_random, synth_scene
from pddm.losses import downsample_valid_mean
from pddm.numerics import no_grad
from pddm.training import TrainConfig, train

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 150
image, gt = synth_scene(SceneSpec(seed=0))
sparse = sample_random(gt, 500, seed=0)
model = DepthCompletionModel(ModelConfig(), seed=0)
print(f"{model.num_parameters()} parameters, bins per stage {[b.m for b in model.blocks]}")


def report(step, loss, result):
    if step == 1 or step % 25 == 0:
        rmse = [compute_metrics(s.depth.data, downsample_valid_mean(gt, s.depth.shape)).rmse
                for s in result.stages]
        print(f"step {step:4d} loss {loss:8.4f} stage rmse", " ".join(f"{r:.3f}" for r in rmse))


hist = train(model, [(image, gt, sparse)], TrainConfig(steps=steps), callback=report)
with no_grad():
    result = model(image, sparse)
final = compute_metrics(result.refined.data, gt)
print(f"loss {hist.losses[0]:.3f} -> {hist.losses[-1]:.3f}; refined rmse {final.rmse:.4f}, "
      f"abs_rel {final.abs_rel:.4f}, delta1 {final.delta1:.3f}")
