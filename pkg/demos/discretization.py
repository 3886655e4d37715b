"""How depth ranges become bins.

Fixed schemes (uniform and spacing-increasing) are compared with a learned
partition, then wrapped in the two boundary categories the model uses so
that depths outside the scene's own range still have somewhere to go.
"""

import numpy as np

from pddm.binning import (
    DepthRange, add_boundary_bins, bin_centers, depth_from_probs, normalize_widths,
    relative_range, sid_discretization, uniform_discretization,
)

np.set_printoptions(precision=3, suppress=True)
dataset = DepthRange(1.0, 8.0)

# Uniform bins split the range evenly, so centers sit at odd multiples of half a width.
print("UD, 4 bins on [0, 8]:", bin_centers(uniform_discretization(4, DepthRange(0.0, 8.0))))

# Spacing-increasing bins grow geometrically: fine near the camera, coarse far away.
sid = sid_discretization(6, dataset)
print("SID widths:", sid.widths)
print("SID centers:", bin_centers(sid))

# A learned partition starts from unconstrained raw widths.  The normalization
# keeps every width strictly positive even when the raw value is very negative.
raw = np.array([2.0, -3.0, 0.5, 0.0, 1.5])
widths = normalize_widths(raw)
print("raw:", raw)
print("widths:", np.array2string(widths, precision=4, suppress_small=False), "sum", widths.sum())

# The interior bins cover only the range of the sparse samples; two boundary
# categories pinned to the dataset ends catch everything else.
samples = np.random.default_rng(0).uniform(2.5, 5.0, 40)
scene = relative_range(samples)
part = add_boundary_bins(uniform_discretization(4, scene), dataset)
centers = bin_centers(part)
print(f"scene range [{scene.d_min:.3f}, {scene.d_max:.3f}] -> centers", centers)

# A pixel's depth is the probability-weighted mean of the centers, so it can
# never leave [min center, max center].
probs = np.random.default_rng(1).dirichlet(np.ones(centers.size), size=(2, 3))
print("depths from random probabilities:\n", depth_from_probs(probs, centers))
