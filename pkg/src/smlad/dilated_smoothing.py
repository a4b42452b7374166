"""Gaussian smoothing with dilated taps."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tensor_io import ScoreMap, Stage


@dataclass(frozen=True)
class SmoothingConfig:
    kernel_size: int = 7
    sigma: float = 1.0
    dilation: int = 6

    def __post_init__(self):
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ValueError("kernel_size must be a positive odd integer")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.dilation < 1:
            raise ValueError("dilation must be >= 1")

    @property
    def receptive_field(self) -> int:
        return 1 + self.dilation * (self.kernel_size - 1)


def gaussian_weights(k: int, sigma: float) -> np.ndarray:
    """Unnormalized 2-D Gaussian density sampled at integer offsets from the centre."""
    if k < 1 or k % 2 == 0:
        raise ValueError("k must be a positive odd integer")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    offsets = np.arange(k, dtype=np.float64) - (k - 1) / 2
    sq = offsets[:, None] ** 2 + offsets[None, :] ** 2
    return np.exp(-sq / (2.0 * sigma * sigma)) / (2.0 * math.pi * sigma * sigma)


def gaussian_kernel(k: int, sigma: float) -> np.ndarray:
    """k x k Gaussian kernel rescaled so its entries sum to 1."""
    raw = gaussian_weights(k, sigma)
    return raw / raw.sum()


def dilated_smooth(scores: ScoreMap, cfg: SmoothingConfig = SmoothingConfig()) -> ScoreMap:
    """Convolve with a unit-sum Gaussian whose taps are ``cfg.dilation`` pixels apart.

    Out-of-bounds taps read the reflected image (edge pixel not repeated), so
    every tap carries a value and the weights sum to 1 at every pixel.
    """
    kernel = gaussian_kernel(cfg.kernel_size, cfg.sigma)
    s = scores.data.astype(np.float64)
    h, w = s.shape
    reach = cfg.dilation * (cfg.kernel_size // 2)
    padded = np.pad(s, reach, mode="reflect")
    out = np.zeros((h, w))
    step = cfg.dilation
    for i in range(cfg.kernel_size):
        for j in range(cfg.kernel_size):
            out += kernel[i, j] * padded[i * step : i * step + h, j * step : j * step + w]
    # The result is a convex combination; clipping only removes rounding excursions.
    np.clip(out, s.min(), s.max(), out=out)
    return ScoreMap(out, Stage.POST_SMOOTHING)
