"""Distance primitives: KL, JS, closed-form Gaussian KL, log loss.

All divergences are reported in bits so the Jensen-Shannon value is
bounded by 1. The last section differentiates a histogram divergence all
the way back to image pixels through the tape.
"""

import numpy as np

from freqgan import divergence as dv
from freqgan import freqrep as F
from freqgan.tensor import Tensor

p, q = [0.5, 0.5], [0.25, 0.75]
print(f"KL(p||q)  = {dv.kl(p, q).item():.5f} bits")
print(f"KL(q||p)  = {dv.kl(q, p).item():.5f} bits   (asymmetric)")
print(f"JSD(p,q)  = {dv.jsd(p, q).item():.5f}        (symmetric, <= 1)")
print(f"JSD of disjoint supports = {dv.jsd([1, 0], [0, 1]).item():.5f}")

print(f"\ngaussian KL, N(0,1) vs N(1,1): {dv.gaussian_kl([0.], [1.], [1.], [1.]).item():.5f} bits"
      " (= 0.5 nats)")
print(f"log loss at a perfect 0.5 match: {dv.log_loss([0.5], [0.5]).item():.5f} (= ln 2)")

# gradient of a histogram JSD with respect to the reconstructed image
rng = np.random.default_rng(2)
real = Tensor(rng.uniform(-0.9, 0.9, (1, 1, 8, 8)).astype(np.float32))
rec = Tensor(rng.uniform(-0.9, 0.9, (1, 1, 8, 8)).astype(np.float32), requires_grad=True)
spec = F.FreqSpec(fd_id=2, bins=16, kernel=3, tau=1.0)
loss = dv.freq_distance(real, rec, spec, dv.DistanceKind("JSD"))
loss.backward()
print(f"\nhistogram JSD(real, rec) = {loss.item():.4f} bits")
print(f"pixel gradient: shape {rec.grad.shape}, |g| mean {np.abs(rec.grad).mean():.2e}")
