"""The five frequency-distribution views of an image, hard and soft.

Shows how each transform summarizes intensity structure, and how the soft
(differentiable) form approaches the hard one as the temperature drops.
"""

import numpy as np

from freqgan import freqrep as F
from freqgan.tensor import Tensor

rng = np.random.default_rng(1)
img = rng.uniform(-0.9, 0.9, (3, 16, 16)).astype(np.float32)

mu, sigma = F.gauss_local_hard(img, 3)
print("1 gaussian local:   mu/sigma fields", mu.shape, f"sigma in [{sigma.min():.3f}, {sigma.max():.3f}]")

hist = F.histogram_local_hard(img, 3, 16)
print("2 histogram local:  per-pixel bin vectors", hist.shape, f"rows sum to {hist.sum(1).mean():.4f}")

whist = F.weighted_histogram_local_hard(img, 3, 16)
print("3 weighted hist:    center-heavy window weights", whist.shape)

cat = F.categorical_global_hard(img, 16)
print("4 categorical:      one vector per channel", cat.shape)

patch = F.categorical_patch_hard(img, 8, 16)
print("5 patch categorical:", patch.shape, "(channel, patch grid, bins)")

# aggregation identity: the global vector is the mean of the patch vectors
agg = patch.reshape(3, -1, 16).mean(axis=1)
print("   patch mean == global? max gap", np.abs(agg - cat).max())

# convergence holds pointwise away from bin edges: a value exactly on an
# edge keeps splitting its mass between the two bins at any temperature,
# so nudge such values off the edge lattice before comparing
width = 2.0 / 16
k = np.round((img + 1.0) / width)
near_edge = np.abs(img - (-1.0 + k * width)) < 0.01
clean = np.where(near_edge, img + 0.02, img).astype(np.float32)
hist_clean = F.histogram_local_hard(clean, 3, 16)

print("\nsoft -> hard as tau -> 0 (max gap per tau, off bin edges):")
x = Tensor(clean[None])
for tau in (1.0, 0.5, 0.1, 0.01):
    soft = F.histogram_local_soft(x, 3, 16, tau).data[0]
    print(f"  tau {tau:>4}: {np.abs(soft - hist_clean).max():.4f}")
