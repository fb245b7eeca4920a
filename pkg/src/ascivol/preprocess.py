"""CT intensity preprocessing: percentile clipping, z-scoring, windowing.

Clip bands and normalization statistics are dataset-level quantities:
compute them once over the training foreground and reuse them for every
image. Recomputing per image changes the semantics (and, for clipping,
breaks idempotence, since clamping shifts the percentiles of the result).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DimMismatchError,
    EmptyForegroundError,
    EmptyInputError,
    ZeroSdError,
)
from .grid import VoxelGrid


@dataclass(frozen=True)
class ClipSpec:
    """Percentile pair defining the clip band; defaults (0.5, 99.5)."""

    lo_percentile: float = 0.5
    hi_percentile: float = 99.5

    def __post_init__(self):
        if not 0.0 <= self.lo_percentile < 100.0:
            raise ValueError(f"lo_percentile {self.lo_percentile} outside [0, 100)")
        if not 0.0 < self.hi_percentile <= 100.0:
            raise ValueError(f"hi_percentile {self.hi_percentile} outside (0, 100]")
        if self.lo_percentile >= self.hi_percentile:
            raise ValueError("lo_percentile must be strictly below hi_percentile")


@dataclass(frozen=True)
class NormStats:
    """Global intensity mean/sd (HU) applied uniformly to all images."""

    mean: float
    sd: float

    def __post_init__(self):
        if not np.isfinite(self.mean) or not np.isfinite(self.sd) or self.sd < 0:
            raise ValueError(f"invalid normalization stats ({self.mean}, {self.sd})")


@dataclass(frozen=True)
class WindowSpec:
    """HU display window; soft-tissue default is center 50, width 350."""

    center: float = 50.0
    width: float = 350.0

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError(f"window width must be > 0, got {self.width}")


def percentile(values, p: float) -> float:
    """Linear-interpolation percentile on (n-1) ranks.

    With sorted v[0..n-1] and rank r = p/100*(n-1), returns
    v[floor(r)] + (r - floor(r)) * (v[floor(r)+1] - v[floor(r)]).
    """
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    if values.size == 0:
        raise EmptyInputError("percentile of an empty array")
    if not 0.0 <= p <= 100.0:
        raise ValueError(f"percentile p {p} outside [0, 100]")
    return float(np.percentile(values, p, method="linear"))


def clip_band(
    grid: VoxelGrid,
    foreground: VoxelGrid | None = None,
    spec: ClipSpec = ClipSpec(),
) -> tuple[float, float]:
    """Percentile band (lo, hi) from foreground voxels, or all voxels."""
    values = grid.values
    if foreground is not None:
        if foreground.dims != grid.dims:
            raise DimMismatchError(
                f"foreground dims {foreground.dims} != grid dims {grid.dims}"
            )
        values = values[foreground.values > 0.5]
        if values.size == 0:
            raise EmptyForegroundError("foreground mask selects no voxels")
    return (
        percentile(values, spec.lo_percentile),
        percentile(values, spec.hi_percentile),
    )


def clip_to_band(grid: VoxelGrid, band: tuple[float, float]) -> VoxelGrid:
    """Clamp every voxel into [lo, hi]; idempotent for a fixed band."""
    lo, hi = band
    if lo > hi:
        raise ValueError(f"clip band lo {lo} > hi {hi}")
    return grid.with_values(np.clip(grid.values, lo, hi))


def clip_to_percentiles(
    grid: VoxelGrid,
    foreground: VoxelGrid | None = None,
    spec: ClipSpec = ClipSpec(),
) -> VoxelGrid:
    """One-shot clip: derive the band from this grid, then clamp it."""
    return clip_to_band(grid, clip_band(grid, foreground, spec))


def zscore_normalize(grid: VoxelGrid, stats: NormStats) -> VoxelGrid:
    """Map v to (v - mean) / sd with dataset-level stats."""
    if stats.sd == 0:
        raise ZeroSdError("cannot z-score with sd == 0")
    return grid.with_values((grid.values - stats.mean) / stats.sd, kind="scalar")


def apply_window(grid: VoxelGrid, spec: WindowSpec = WindowSpec()) -> VoxelGrid:
    """Linear map of [center-width/2, center+width/2] onto display bytes.

    Values outside the window clamp to 0/255; rounding is half-up so the
    window center lands on 128.
    """
    lo = spec.center - spec.width / 2.0
    scaled = (grid.values - lo) / spec.width * 255.0
    bytes_ = np.floor(np.clip(scaled, 0.0, 255.0) + 0.5)
    return grid.with_values(np.clip(bytes_, 0.0, 255.0), kind="scalar")


def compute_norm_stats(
    grids: Iterable[VoxelGrid],
    foregrounds: Sequence[VoxelGrid | None] | None = None,
) -> dict:
    """Population mean/sd over a dataset of grids.

    When ``foregrounds`` is given, statistics are restricted to voxels
    under each grid's mask. Returns {"mean", "sd", "n_voxels"}; this is the
    JSON document the CLI's norm-stats command emits.
    """
    n = 0
    total = 0.0
    total_sq = 0.0
    grids = list(grids)
    if foregrounds is None:
        foregrounds = [None] * len(grids)
    if len(foregrounds) != len(grids):
        raise DimMismatchError("one foreground entry per grid is required")
    for grid, fg in zip(grids, foregrounds):
        values = grid.values
        if fg is not None:
            if fg.dims != grid.dims:
                raise DimMismatchError(
                    f"foreground dims {fg.dims} != grid dims {grid.dims}"
                )
            values = values[fg.values > 0.5]
        n += values.size
        total += float(values.sum())
        total_sq += float(np.square(values).sum())
    if n == 0:
        raise EmptyInputError("no voxels to compute statistics over")
    mean = total / n
    var = max(total_sq / n - mean * mean, 0.0)
    return {"mean": mean, "sd": float(np.sqrt(var)), "n_voxels": n}
