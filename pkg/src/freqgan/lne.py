"""Local neighborhood encoding.

Replaces each pixel by a similarity-weighted average of its k x k
neighbors: weights decay as exp(-||x_i - x_j||^2 / (2 sigma_i^2)) over the
channel-joint Euclidean distance, are normalized over the neighborhood
(center excluded), and the encoded pixel is the weighted neighbor mean.
Pure preprocessing on H x W x C arrays in [-1, 1]; runs before the
networks, never inside them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class LneConfigError(ValueError):
    pass


SIGMA_LOCAL_FLOOR = 0.05


@dataclass(frozen=True)
class LneConfig:
    kernel: int = 3
    sigma: float = 0.3
    sigma_mode: str = "fixed"  # or "per_pixel_local_std"

    def __post_init__(self):
        if self.kernel % 2 == 0 or self.kernel < 3:
            raise LneConfigError(f"kernel must be odd and >= 3, got {self.kernel}")
        if self.sigma_mode not in ("fixed", "per_pixel_local_std"):
            raise LneConfigError(f"unknown sigma_mode {self.sigma_mode!r}")
        if self.sigma_mode == "fixed" and self.sigma <= 0:
            raise LneConfigError(f"sigma must be positive, got {self.sigma}")


@dataclass
class NeighborhoodWeights:
    """Normalized weights, H x W x (k^2 - 1); rows sum to 1."""

    weights: np.ndarray
    kernel: int
    underflow_fallbacks: int = 0


def _windows(image: np.ndarray, k: int) -> np.ndarray:
    """Reflect-padded k x k windows: (H, W, C, k, k)."""
    r = k // 2
    padded = np.pad(image, ((r, r), (r, r), (0, 0)), mode="reflect")
    return np.lib.stride_tricks.sliding_window_view(padded, (k, k), axis=(0, 1))


def _drop_center(flat: np.ndarray, k: int) -> np.ndarray:
    """Remove the center position from a trailing k*k axis."""
    c = (k * k) // 2
    return np.concatenate([flat[..., :c], flat[..., c + 1 :]], axis=-1)


def gaussian_weights(image: np.ndarray, cfg: LneConfig) -> np.ndarray:
    """Raw neighbor weights exp(-d^2 / 2 sigma_i^2), shape H x W x (k^2-1)."""
    img = np.asarray(image, dtype=np.float32)
    if img.ndim != 3:
        raise LneConfigError(f"expected H x W x C image, got shape {img.shape}")
    k = cfg.kernel
    win = _windows(img, k)  # (H, W, C, k, k)
    center = img[:, :, :, None]
    d2 = ((win.reshape(*win.shape[:3], k * k) - center) ** 2).sum(axis=2)
    d2 = _drop_center(d2, k)  # (H, W, k^2-1)
    if cfg.sigma_mode == "fixed":
        sigma2 = np.float32(cfg.sigma) ** 2
    else:
        std = win.reshape(win.shape[0], win.shape[1], -1).std(axis=2)
        sigma2 = (np.maximum(std, SIGMA_LOCAL_FLOOR) ** 2)[:, :, None]
    return np.exp(-d2 / (2.0 * sigma2)).astype(np.float32)


def normalize_weights(raw: np.ndarray, kernel: int) -> NeighborhoodWeights:
    """p_{j|i} = w_{j|i} / sum_j w_{j|i}; uniform fallback on underflow."""
    sums = raw.sum(axis=-1, keepdims=True, dtype=np.float64)
    dead = sums[..., 0] == 0.0
    n_dead = int(dead.sum())
    if n_dead:
        raw = raw.copy()
        raw[dead] = 1.0
        sums = raw.sum(axis=-1, keepdims=True, dtype=np.float64)
    p = (raw / sums).astype(np.float32)
    return NeighborhoodWeights(weights=p, kernel=kernel, underflow_fallbacks=n_dead)


def encode(image: np.ndarray, cfg: LneConfig) -> np.ndarray:
    """Neighborhood-weighted image: out_i = sum_{j != i} p_{j|i} x_j."""
    img = np.asarray(image, dtype=np.float32)
    nw = normalize_weights(gaussian_weights(img, cfg), cfg.kernel)
    k = cfg.kernel
    win = _windows(img, k)
    vals = _drop_center(win.reshape(*win.shape[:3], k * k), k)  # (H, W, C, k^2-1)
    out = np.einsum("hwn,hwcn->hwc", nw.weights, vals)
    return out.astype(np.float32)


def encode_batch(images, cfg: LneConfig):
    return [encode(im, cfg) for im in images]
