"""Sparse sampling patterns on a synthetic scene.

The random pattern imitates evenly spread measurements, the grid a regular
scanner, and the biased patterns concentrate samples at the bottom, top or
middle rows the way real LiDAR coverage does.  Noise corrupts half of the
samples with Gaussian jitter.
"""

import numpy as np

from pddm.data import (
    SceneSpec, add_noise, biased_probabilities, sample_biased, sample_grid, sample_random,
    synth_scene,
)

image, gt = synth_scene(SceneSpec(seed=0))
print("scene", gt.shape, f"depth in [{gt[gt > 0].min():.2f}, {gt.max():.2f}]")

patterns = {
    "random": sample_random(gt, 500, seed=0),
    "grid": sample_grid(gt, 8),
    **{mode: sample_biased(gt, 500, mode, 0.35, seed=0) for mode in ("bottom", "top", "middle")},
}

# Count samples per band of 8 rows to see where each pattern puts its points.
# The biased law uses D = i for "bottom", so it favours low row indices; with
# row 0 at the top of the array that is the top of the rendered image.
bands = np.arange(0, gt.shape[0] + 1, 8)
print("rows per band:", [f"{a}-{b - 1}" for a, b in zip(bands[:-1], bands[1:])])
for name, s in patterns.items():
    print(f"{name:>7} {len(s):4d} samples", np.histogram(s.v, bands)[0])

# The analytic row law of the bottom pattern, for comparison with the counts above.
p = biased_probabilities(gt, "bottom", 0.35).sum(axis=1)
print("bottom law per band:", np.round(np.add.reduceat(p, bands[:-1]) * 500).astype(int))

noisy = add_noise(patterns["random"], seed=1)
moved = np.abs(noisy.d - patterns["random"].d)
print(f"noise: {noisy.corrupted.sum()} of {len(noisy)} corrupted, mean shift {moved[noisy.corrupted].mean():.3f}")
