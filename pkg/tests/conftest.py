import os

# keep BLAS single-threaded: the acceptance suite parallelizes across
# processes and the box has few cores (set before numpy loads)
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")

import numpy as np
import pytest

import freqgan.tensor as T


def finite_diff_check(build_loss, tensors, eps=1e-3, tol=1e-3):
    """Central finite differences vs analytic grads for every element.

    Relative error uses max(1, |fd|) in the denominator. The actual float32
    perturbation is measured per element so representation error does not
    pollute the estimate. Returns the worst relative error seen.
    """
    loss = build_loss()
    loss.backward()
    worst = 0.0
    for t in tensors:
        assert t.grad is not None, "missing gradient"
        analytic = t.grad.copy()
        flat = t.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            hi = np.float32(orig + eps)
            lo = np.float32(orig - eps)
            flat[i] = hi
            lp = build_loss().item()
            flat[i] = lo
            lm = build_loss().item()
            flat[i] = orig
            fd = (lp - lm) / (float(hi) - float(lo))
            err = abs(float(analytic.reshape(-1)[i]) - fd) / max(1.0, abs(fd))
            worst = max(worst, err)
        t.grad = None
    return worst


def away_from(rng, shape, lo=-1.0, hi=1.0, avoid=(), margin=5e-3):
    """Uniform draw that stays `margin` away from the listed kink points."""
    x = rng.uniform(lo, hi, shape).astype(np.float32)
    for a in avoid:
        close = np.abs(x - a) < margin
        x = np.where(close, x + 2 * margin, x)
    return x


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_tensor(arr, requires_grad=True):
    return T.Tensor(arr, requires_grad=requires_grad)
