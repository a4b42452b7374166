"""Iterative boundary suppression.

Pixels whose Manhattan ball of radius ``r`` contains a different predicted class
are boundary pixels. Their scores are replaced by the mean over the non-boundary
pixels of a small window, and the process repeats with shrinking ``r`` so that
reliable values propagate from the outer edge of a boundary band inward.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor_io import LabelMap, ScoreMap, Stage


@dataclass(frozen=True)
class BoundaryConfig:
    iterations: int = 4
    initial_width: int = 8
    width_step: int = 2
    pooling_window: int = 3

    def __post_init__(self):
        for name in ("iterations", "initial_width", "width_step", "pooling_window"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.pooling_window % 2 == 0:
            raise ValueError("pooling_window must be odd")
        if self.initial_width - (self.iterations - 1) * self.width_step < 1:
            raise ValueError("boundary width would drop below 1 before the last iteration")

    def widths(self) -> list[int]:
        return [self.initial_width - i * self.width_step for i in range(self.iterations)]


@dataclass(frozen=True, eq=False)
class NonBoundaryMask:
    """1 for non-boundary pixels, 0 for boundary pixels."""

    data: np.ndarray
    width: int

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.uint8)
        if not np.all((arr == 0) | (arr == 1)):
            raise ValueError("mask values must be 0 or 1")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)


def _shift_views(h: int, w: int, dy: int, dx: int):
    """Slices pairing each pixel with its (dy, dx) neighbour, clipped to bounds."""
    dst = (slice(max(0, -dy), h - max(0, dy)), slice(max(0, -dx), w - max(0, dx)))
    src = (slice(max(0, dy), h - max(0, -dy)), slice(max(0, dx), w - max(0, -dx)))
    return dst, src


def non_boundary_mask(preds: LabelMap, r: int) -> NonBoundaryMask:
    if r < 1:
        raise ValueError("boundary width must be >= 1")
    y = preds.data
    h, w = y.shape
    boundary = np.zeros((h, w), dtype=bool)
    # A differing pair is symmetric, so half of the Manhattan ball suffices
    # as long as both endpoints get marked.
    for dy in range(0, min(r, h - 1) + 1):
        span = min(r - dy, w - 1)
        for dx in range(-span, span + 1):
            if dy == 0 and dx <= 0:
                continue
            dst, src = _shift_views(h, w, dy, dx)
            diff = y[dst] != y[src]
            boundary[dst] |= diff
            boundary[src] |= diff
    return NonBoundaryMask((~boundary).astype(np.uint8), r)


def boundary_aware_pool(scores: ScoreMap, mask: NonBoundaryMask, window: int = 3) -> ScoreMap:
    """Replace boundary scores by the mean of non-boundary scores in the window.

    Reads only from the input (synchronous update). Boundary pixels without any
    non-boundary pixel in their clipped window keep their value.
    """
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be a positive odd integer")
    s = scores.data.astype(np.float64)
    m = mask.data
    if s.shape != m.shape:
        raise ValueError(f"shape mismatch: {s.shape} vs {m.shape}")
    h, w = s.shape
    half = window // 2
    weighted = s * m
    pad_s = np.pad(weighted, half)
    pad_m = np.pad(m.astype(np.int64), half)
    num = np.zeros((h, w))
    den = np.zeros((h, w), dtype=np.int64)
    for dy in range(window):
        for dx in range(window):
            num += pad_s[dy : dy + h, dx : dx + w]
            den += pad_m[dy : dy + h, dx : dx + w]
    update = (m == 0) & (den > 0)
    out = s.copy()
    # A mean of equal values can round one ulp past them; keep the hull exact.
    out[update] = np.clip(num[update] / den[update], s.min(), s.max())
    return ScoreMap(out, scores.stage)


def iterative_boundary_suppression(
    scores: ScoreMap, preds: LabelMap, cfg: BoundaryConfig = BoundaryConfig()
) -> ScoreMap:
    if scores.shape != preds.shape:
        raise ValueError(f"shape mismatch: {scores.shape} vs {preds.shape}")
    current = scores
    for r in cfg.widths():
        current = boundary_aware_pool(current, non_boundary_mask(preds, r), cfg.pooling_window)
    return ScoreMap(current.data, Stage.POST_BOUNDARY)
