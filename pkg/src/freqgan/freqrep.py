"""Frequency-distribution views of an image.

Five transforms map a C x H x W image in [-1, 1] onto statistical
distributions of its intensities:

  1 local Gaussian (per-pixel window mean/std)
  2 local histogram (per-pixel bin vector over a k x k window)
  3 weighted local histogram (center-heavy spatial weighting)
  4 global categorical (per-channel bin vector)
  5 patch categorical (per-patch per-channel bin vector)

Each comes in a hard numpy form (evaluation, oracles) and a soft form built
from tape ops so gradients reach the image. Soft binning integrates a
triangular kernel of half-width tau * binwidth over each bin and converges
pointwise to the hard histogram as tau -> 0 away from bin edges.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import tensor as T
from .tensor import Tensor

SIGMA_FLOOR = 1e-3


@dataclass(frozen=True)
class FreqSpec:
    """Which transform to apply and with what discretization."""

    fd_id: int  # 1..5
    bins: int = 16
    kernel: int = 3
    patch: int = 8
    tau: float = 1.0

    def __post_init__(self):
        if self.fd_id not in (1, 2, 3, 4, 5):
            raise ValueError(f"fd_id must be 1..5, got {self.fd_id}")
        if self.bins < 2:
            raise ValueError("bins must be >= 2")
        if self.tau <= 0:
            raise ValueError("tau must be positive")

    def with_kernel(self, k: int) -> "FreqSpec":
        return replace(self, kernel=k)


def bin_centers(bins: int) -> np.ndarray:
    width = 2.0 / bins
    return (-1.0 + width * (np.arange(bins) + 0.5)).astype(np.float32)


def _chebyshev_window_weights(k: int, uniform: bool = False) -> np.ndarray:
    """Spatial window weights, largest at the center, normalized to sum 1."""
    if uniform:
        w = np.ones((k, k))
    else:
        r = k // 2
        ax = np.abs(np.arange(k) - r)
        d = np.maximum(ax[:, None], ax[None, :])
        w = np.exp(-0.5 * d.astype(np.float64) ** 2)
    return (w / w.sum()).astype(np.float32)


# ---------------------------------------------------------------------------
# hard (numpy) forms; images are (C, H, W) in [-1, 1]


def _hard_bin_index(img: np.ndarray, bins: int) -> np.ndarray:
    width = 2.0 / bins
    return np.clip(np.floor((img + 1.0) / width), 0, bins - 1).astype(np.intp)


def _one_hot_masses(img: np.ndarray, bins: int) -> np.ndarray:
    """(C, B, H, W) indicator of each pixel's bin."""
    C, H, W = img.shape
    idx = _hard_bin_index(img, bins)
    out = np.zeros((C, bins, H, W), dtype=np.float32)
    c_ix = np.arange(C)[:, None, None]
    h_ix = np.arange(H)[None, :, None]
    w_ix = np.arange(W)[None, None, :]
    out[c_ix, idx, h_ix, w_ix] = 1.0
    return out


def _window_sum_hard(planes: np.ndarray, k: int, weights: np.ndarray | None = None) -> np.ndarray:
    """Sliding reflect-padded k x k sum over the trailing two axes."""
    r = k // 2
    pad = [(0, 0)] * (planes.ndim - 2) + [(r, r), (r, r)]
    padded = np.pad(planes, pad, mode="reflect")
    win = np.lib.stride_tricks.sliding_window_view(padded, (k, k), axis=(-2, -1))
    if weights is None:
        return win.sum(axis=(-2, -1), dtype=np.float64).astype(np.float32)
    return np.einsum("...ij,ij->...", win, weights.astype(np.float64)).astype(np.float32)


def gauss_local_hard(img: np.ndarray, k: int = 3):
    """Per-pixel window mean and (floored) population std, each (C, H, W)."""
    img = np.asarray(img, dtype=np.float32)
    n = k * k
    mu = _window_sum_hard(img, k) / n
    e2 = _window_sum_hard(img * img, k) / n
    var = np.maximum(e2 - mu * mu, SIGMA_FLOOR**2)
    return mu.astype(np.float32), np.sqrt(var).astype(np.float32)


def histogram_local_hard(img: np.ndarray, k: int = 3, bins: int = 16) -> np.ndarray:
    """Per-pixel normalized window histogram, (C, B, H, W)."""
    masses = _one_hot_masses(np.asarray(img, dtype=np.float32), bins)
    counts = _window_sum_hard(masses, k)
    return counts / np.float32(k * k)


def weighted_histogram_local_hard(
    img: np.ndarray, k: int = 3, bins: int = 16, uniform: bool = False
) -> np.ndarray:
    """Center-weighted window histogram, (C, B, H, W); rows sum to 1."""
    masses = _one_hot_masses(np.asarray(img, dtype=np.float32), bins)
    w = _chebyshev_window_weights(k, uniform=uniform)
    return _window_sum_hard(masses, k, weights=w)


def categorical_global_hard(img: np.ndarray, bins: int = 16) -> np.ndarray:
    """Per-channel normalized bin counts, (C, B)."""
    img = np.asarray(img, dtype=np.float32)
    C, H, W = img.shape
    idx = _hard_bin_index(img, bins)
    out = np.zeros((C, bins), dtype=np.float32)
    for c in range(C):
        out[c] = np.bincount(idx[c].ravel(), minlength=bins)
    return out / np.float32(H * W)


def pad_to_multiple(img: np.ndarray, p: int):
    """Reflect-pad trailing H,W up to the next multiple of p."""
    H, W = img.shape[-2], img.shape[-1]
    eh, ew = (-H) % p, (-W) % p
    if eh == 0 and ew == 0:
        return img, (H, W)
    pad = [(0, 0)] * (img.ndim - 2) + [(0, eh), (0, ew)]
    return np.pad(img, pad, mode="reflect"), (H + eh, W + ew)


def categorical_patch_hard(img: np.ndarray, patch: int = 8, bins: int = 16) -> np.ndarray:
    """Per-patch per-channel bin vectors, (C, nPh, nPw, B)."""
    img, (H, W) = pad_to_multiple(np.asarray(img, dtype=np.float32), patch)
    C = img.shape[0]
    idx = _hard_bin_index(img, bins)
    nh, nw = H // patch, W // patch
    blocks = idx.reshape(C, nh, patch, nw, patch).transpose(0, 1, 3, 2, 4)
    out = np.zeros((C, nh, nw, bins), dtype=np.float32)
    for c in range(C):
        for i in range(nh):
            for j in range(nw):
                out[c, i, j] = np.bincount(blocks[c, i, j].ravel(), minlength=bins)
    return out / np.float32(patch * patch)


# ---------------------------------------------------------------------------
# soft (differentiable) forms; images are Tensors of shape (1, C, H, W)


def _window_sum_soft(x: Tensor, k: int, weights: np.ndarray | None = None) -> Tensor:
    """Tape-op sliding window sum over the trailing two axes (reflect border)."""
    r = k // 2
    xp = T.pad_reflect(x, r)
    shape = x.shape
    acc = None
    for dy in range(k):
        for dx in range(k):
            starts = [0] * (len(shape) - 2) + [dy, dx]
            piece = T.tslice(xp, starts, list(shape))
            if weights is not None:
                piece = T.scalar_mul(piece, float(weights[dy, dx]))
            acc = piece if acc is None else T.add(acc, piece)
    return acc


def _tri_cdf(u: Tensor) -> Tensor:
    """CDF of the unit triangular kernel on [-1, 1]; piecewise quadratic."""
    c1 = T.clamp(T.scalar_add(u, 1.0), lo=0.0, hi=1.0)
    c2 = T.clamp(T.scalar_add(T.scalar_mul(u, -1.0), 1.0), lo=0.0, hi=1.0)
    return T.scalar_add(
        T.sub(T.scalar_mul(T.mul(c1, c1), 0.5), T.scalar_mul(T.mul(c2, c2), 0.5)), 0.5
    )


def soft_bin_masses(x: Tensor, bins: int, tau: float) -> Tensor:
    """Soft bin memberships: (1, C, H, W) -> (1, C, B, H, W).

    Each value spreads as a unit-area triangular kernel of half-width
    tau * binwidth, integrated over every bin (outer bins extend to
    infinity, matching the hard binning's clip). Exact partition of unity;
    only the two bins around a value receive gradient.
    """
    _, C, H, W = x.shape
    width = tau * (2.0 / bins)
    inner_edges = (-1.0 + (2.0 / bins) * np.arange(1, bins)).astype(np.float32)
    edges = Tensor(inner_edges.reshape(1, 1, bins - 1, 1, 1))
    xr = T.reshape(x, (1, C, 1, H, W))
    kv = _tri_cdf(T.scalar_mul(T.sub(edges, xr), 1.0 / width))  # (1,C,B-1,H,W)
    ones = Tensor(np.ones((1, C, 1, H, W), dtype=np.float32))
    zeros = Tensor(np.zeros((1, C, 1, H, W), dtype=np.float32))
    hi = T.concat([kv, ones], axis=2)
    lo = T.concat([zeros, kv], axis=2)
    return T.sub(hi, lo)


def _normalize_bins(v: Tensor, bin_axis: int) -> Tensor:
    s = T.tsum(v, axes=bin_axis, keepdims=True)
    return T.div(v, T.scalar_add(s, 1e-12))


def gauss_local_soft(x: Tensor, k: int = 3):
    """Differentiable window mean and floored std, each (1, C, H, W)."""
    n = float(k * k)
    mu = T.scalar_mul(_window_sum_soft(x, k), 1.0 / n)
    e2 = T.scalar_mul(_window_sum_soft(T.mul(x, x), k), 1.0 / n)
    var = T.clamp(T.sub(e2, T.mul(mu, mu)), lo=SIGMA_FLOOR**2)
    return mu, T.sqrt(var)


def histogram_local_soft(x: Tensor, k: int = 3, bins: int = 16, tau: float = 1.0) -> Tensor:
    m = soft_bin_masses(x, bins, tau)
    return _normalize_bins(_window_sum_soft(m, k), bin_axis=2)


def weighted_histogram_local_soft(
    x: Tensor, k: int = 3, bins: int = 16, tau: float = 1.0, uniform: bool = False
) -> Tensor:
    m = soft_bin_masses(x, bins, tau)
    w = _chebyshev_window_weights(k, uniform=uniform)
    return _normalize_bins(_window_sum_soft(m, k, weights=w), bin_axis=2)


def categorical_global_soft(x: Tensor, bins: int = 16, tau: float = 1.0) -> Tensor:
    """(1, C, B) per-channel soft bin frequencies."""
    m = soft_bin_masses(x, bins, tau)
    return _normalize_bins(T.tmean(m, axes=(3, 4)), bin_axis=2)


def categorical_patch_soft(x: Tensor, patch: int = 8, bins: int = 16, tau: float = 1.0) -> Tensor:
    """(1, nPatches, C, B) soft bin frequencies per non-overlapping patch."""
    _, C, H, W = x.shape
    if H % patch or W % patch:
        # pad_reflect is symmetric, so grow on all sides and slice back the
        # window that matches a bottom/right-only reflect pad
        eh, ew = (-H) % patch, (-W) % patch
        pd = max(eh, ew)
        grown = T.pad_reflect(x, pd)
        x = T.tslice(grown, [0, 0, pd, pd], [1, C, H + eh, W + ew])
        H, W = H + eh, W + ew
    m = soft_bin_masses(x, bins, tau)  # (1, C, B, H, W)
    rows = []
    for i in range(H // patch):
        for j in range(W // patch):
            blk = T.tslice(m, [0, 0, 0, i * patch, j * patch], [1, C, bins, patch, patch])
            rows.append(T.reshape(T.tmean(blk, axes=(3, 4)), (1, 1, C, bins)))
    stacked = T.concat(rows, axis=1)
    return _normalize_bins(stacked, bin_axis=3)
