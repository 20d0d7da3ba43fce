"""Statistical distance primitives and the distribution cycle loss.

Divergences are reported in bits (base-2 logs) so the Jensen-Shannon value
lands in [0, 1]. Probability vectors are epsilon-smoothed before any log,
since empirical histograms contain exact zeros. All functions accept
Tensors and differentiate through the soft representation pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import freqrep as F
from . import tensor as T
from .tensor import ContractError, DimensionError, Tensor

_INV_LN2 = float(1.0 / np.log(2.0))
DEFAULT_EPS = 1e-8
LOG_CLAMP = 1e-7


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DistanceKind:
    kind: str  # L1 | KLD | JSD | LOG
    epsilon: float = DEFAULT_EPS

    def __post_init__(self):
        if self.kind not in ("L1", "KLD", "JSD", "LOG"):
            raise ConfigError(f"unknown distance kind {self.kind!r}")
        if not (0.0 < self.epsilon <= 1e-3):
            raise ConfigError(f"epsilon must be in (0, 1e-3], got {self.epsilon}")


def _as_t(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float32))


def _check_prob(p: Tensor, q: Tensor, bin_axis: int, tol: float = 1e-5):
    if p.shape != q.shape:
        raise DimensionError(f"distribution shapes differ: {p.shape} vs {q.shape}")
    for name, t in (("P", p), ("Q", q)):
        s = t.data.sum(axis=bin_axis, dtype=np.float64)
        if np.any(np.abs(s - 1.0) > tol) or np.any(t.data < -tol):
            raise ContractError(f"{name} is not normalized along axis {bin_axis}")


def _smooth(p: Tensor, bin_axis: int, eps: float) -> Tensor:
    nbins = p.shape[bin_axis]
    return T.scalar_mul(T.scalar_add(p, eps), 1.0 / (1.0 + nbins * eps))


def _kl_presmoothed(p: Tensor, q: Tensor, bin_axis: int) -> Tensor:
    per = T.tsum(T.mul(p, T.sub(T.log(p), T.log(q))), axes=bin_axis)
    return T.scalar_mul(T.tmean(per), _INV_LN2)


def kl(p, q, bin_axis: int = -1, eps: float = DEFAULT_EPS) -> Tensor:
    """KL(P || Q) in bits, meaned over every non-bin axis. Asymmetric."""
    p, q = _as_t(p), _as_t(q)
    _check_prob(p, q, bin_axis)
    return _kl_presmoothed(_smooth(p, bin_axis, eps), _smooth(q, bin_axis, eps), bin_axis)


def jsd(p, q, bin_axis: int = -1, eps: float = DEFAULT_EPS) -> Tensor:
    """Jensen-Shannon divergence in bits: symmetric, in [0, 1]."""
    p, q = _as_t(p), _as_t(q)
    _check_prob(p, q, bin_axis)
    ps, qs = _smooth(p, bin_axis, eps), _smooth(q, bin_axis, eps)
    m = T.scalar_mul(T.add(ps, qs), 0.5)
    half = T.scalar_mul(
        T.add(_kl_presmoothed(ps, m, bin_axis), _kl_presmoothed(qs, m, bin_axis)), 0.5
    )
    return half


def gaussian_kl(mu1, sigma1, mu2, sigma2, sigma_floor: float = F.SIGMA_FLOOR) -> Tensor:
    """Closed-form KL between two Gaussians, in bits, meaned elementwise."""
    mu1, sigma1, mu2, sigma2 = map(_as_t, (mu1, sigma1, mu2, sigma2))
    for s in (sigma1, sigma2):
        if np.any(s.data < sigma_floor * (1 - 1e-6)):
            raise ContractError(f"sigma below floor {sigma_floor}")
    dm = T.sub(mu1, mu2)
    v1 = T.mul(sigma1, sigma1)
    v2 = T.mul(sigma2, sigma2)
    nats = T.scalar_add(
        T.add(
            T.scalar_mul(T.log(T.div(sigma2, sigma1)), 1.0),
            T.div(T.add(v1, T.mul(dm, dm)), T.scalar_mul(v2, 2.0)),
        ),
        -0.5,
    )
    return T.scalar_mul(T.tmean(nats), _INV_LN2)


def log_loss(real, rec) -> Tensor:
    """Binary cross-entropy (natural log) between [0,1] operands."""
    real, rec = _as_t(real), _as_t(rec)
    if real.shape != rec.shape:
        raise DimensionError(f"log_loss shapes differ: {real.shape} vs {rec.shape}")
    rc = T.clamp(rec, lo=LOG_CLAMP, hi=1.0 - LOG_CLAMP)
    x = real
    term = T.add(
        T.mul(x, T.log(rc)),
        T.mul(T.scalar_add(T.scalar_mul(x, -1.0), 1.0), T.log(T.scalar_add(T.scalar_mul(rc, -1.0), 1.0))),
    )
    return T.scalar_mul(T.tmean(term), -1.0)


def to_unit(img: Tensor) -> Tensor:
    """Map a [-1, 1] image to [0, 1]."""
    return T.scalar_mul(T.scalar_add(img, 1.0), 0.5)


def l1(a, b) -> Tensor:
    a, b = _as_t(a), _as_t(b)
    if a.shape != b.shape:
        raise DimensionError(f"l1 shapes differ: {a.shape} vs {b.shape}")
    return T.tmean(T.absval(T.sub(a, b)))


# ---------------------------------------------------------------------------
# distribution distances over frequency representations


def _rep(x: Tensor, spec: F.FreqSpec):
    if spec.fd_id == 1:
        return F.gauss_local_soft(x, spec.kernel)
    if spec.fd_id == 2:
        return F.histogram_local_soft(x, spec.kernel, spec.bins, spec.tau), 2
    if spec.fd_id == 3:
        return F.weighted_histogram_local_soft(x, spec.kernel, spec.bins, spec.tau), 2
    if spec.fd_id == 4:
        return F.categorical_global_soft(x, spec.bins, spec.tau), 2
    return F.categorical_patch_soft(x, spec.patch, spec.bins, spec.tau), 3


def freq_distance(real: Tensor, rec: Tensor, spec: F.FreqSpec, metric: DistanceKind) -> Tensor:
    """StD(FD(real) || FD(rec)) for one representation under one metric."""
    if spec.fd_id == 1:
        mu_r, sg_r = F.gauss_local_soft(real, spec.kernel)
        mu_g, sg_g = F.gauss_local_soft(rec, spec.kernel)
        if metric.kind == "L1":
            return T.add(l1(mu_r, mu_g), l1(sg_r, sg_g))
        if metric.kind == "JSD":
            return T.scalar_mul(
                T.add(gaussian_kl(mu_r, sg_r, mu_g, sg_g), gaussian_kl(mu_g, sg_g, mu_r, sg_r)),
                0.5,
            )
        # KLD and LOG both fall back to the closed-form divergence: a
        # cross-entropy between Gaussian parameter fields is not defined
        return gaussian_kl(mu_r, sg_r, mu_g, sg_g)
    red_r, ax = _rep(real, spec)
    red_g, _ = _rep(rec, spec)
    if metric.kind == "KLD":
        return kl(red_r, red_g, bin_axis=ax, eps=metric.epsilon)
    if metric.kind == "JSD":
        return jsd(red_r, red_g, bin_axis=ax, eps=metric.epsilon)
    if metric.kind == "LOG":
        return log_loss(red_r, red_g)
    per = T.tsum(T.absval(T.sub(red_r, red_g)), axes=ax)
    return T.tmean(per)


def cycle_divergence_loss(
    real_x: Tensor,
    rec_x: Tensor,
    real_y: Tensor,
    rec_y: Tensor,
    fd_specs: list[F.FreqSpec],
    metric: DistanceKind,
    coeffs: list[float] | None = None,
):
    """Coefficient-weighted sum of both-cycle FD distances.

    With an empty spec list the distance falls back to the image-level form
    (pixel L1 or the log reconstruction loss); divergences need a
    distribution and raise ConfigError. Returns (total, per-spec dict).
    """
    if not fd_specs:
        if metric.kind == "L1":
            total = T.add(l1(real_x, rec_x), l1(real_y, rec_y))
        elif metric.kind == "LOG":
            total = T.add(
                log_loss(to_unit(real_x), to_unit(rec_x)),
                log_loss(to_unit(real_y), to_unit(rec_y)),
            )
        else:
            raise ConfigError(f"{metric.kind} needs at least one frequency representation")
        return total, {}
    if coeffs is None:
        coeffs = [1.0] * len(fd_specs)
    if len(coeffs) != len(fd_specs):
        raise ConfigError("one coefficient per frequency spec required")
    total = None
    parts: dict[int, Tensor] = {}
    for spec, c in zip(fd_specs, coeffs):
        if c == 0.0:
            # skip the whole branch: a zeroed term must leave the loss graph
            # (and therefore every accumulation order) exactly as if the
            # representation were never requested
            parts[spec.fd_id] = Tensor(np.zeros((), dtype=np.float32))
            continue
        d = T.add(
            freq_distance(real_x, rec_x, spec, metric),
            freq_distance(real_y, rec_y, spec, metric),
        )
        d = T.scalar_mul(d, float(c))
        parts[spec.fd_id] = d
        total = d if total is None else T.add(total, d)
    if total is None:
        total = Tensor(np.zeros((), dtype=np.float32))
    return total, parts
