"""Voxel grid container and geometry helpers.

A :class:`VoxelGrid` is a 3-D scalar lattice with per-axis physical spacing
in millimeters. Values are stored as one flat float array in x-fastest
order: logical index (i, j, k) lives at flat offset ``i + nx*(j + ny*k)``.
That is the same layout the NIfTI payload uses, so I/O never reorders data.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonBinaryMaskError

# Grid kinds. "intensity" carries HU, "probability" lies in [0, 1],
# "binary" contains only {0, 1}, "scalar" is dimensionless (z-scores,
# display bytes) and unconstrained beyond finiteness.
GRID_KINDS = ("intensity", "probability", "binary", "scalar")

# Float fixtures may carry round-off on {0, 1}; anything farther than this
# from an exact label is a real violation, not noise.
BINARY_TOLERANCE = 1e-6


@dataclass(frozen=True)
class VoxelSpacing:
    """Physical voxel edge lengths (dx, dy, dz) in millimeters."""

    dx: float
    dy: float
    dz: float

    def __post_init__(self):
        for name, v in (("dx", self.dx), ("dy", self.dy), ("dz", self.dz)):
            if not np.isfinite(v) or v <= 0:
                raise ValueError(f"spacing {name} must be finite and > 0, got {v}")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.dx, self.dy, self.dz)


def unit_voxel_volume_mm3(spacing: VoxelSpacing) -> float:
    """Volume of one voxel in cubic millimeters: dx * dy * dz."""
    return spacing.dx * spacing.dy * spacing.dz


@dataclass(frozen=True)
class VoxelGrid:
    """A 3-D scalar lattice with spacing and a declared kind.

    ``values`` is a flat float64 array of length nx*ny*nz in x-fastest
    order. Instances are immutable; the values array is set read-only so a
    grid can be shared across threads without copying.
    """

    dims: tuple[int, int, int]
    spacing: VoxelSpacing
    values: np.ndarray = field(repr=False)
    kind: str = "intensity"

    def __post_init__(self):
        nx, ny, nz = self.dims
        if not all(isinstance(d, (int, np.integer)) and d > 0 for d in self.dims):
            raise ValueError(f"dims must be positive integers, got {self.dims}")
        object.__setattr__(self, "dims", (int(nx), int(ny), int(nz)))
        values = np.ascontiguousarray(self.values, dtype=np.float64).reshape(-1)
        if values.size != nx * ny * nz:
            raise ValueError(
                f"values length {values.size} does not match dims {self.dims}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("grid values must be finite (no NaN/Inf)")
        if self.kind not in GRID_KINDS:
            raise ValueError(f"unknown grid kind {self.kind!r}")
        if self.kind == "probability":
            if values.size and (values.min() < 0.0 or values.max() > 1.0):
                raise ValueError("probability grid has values outside [0, 1]")
        elif self.kind == "binary":
            values = _snap_binary(values)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n_voxels(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    def as_3d(self) -> np.ndarray:
        """Read-only (nx, ny, nz) view of the values, x index first."""
        nx, ny, nz = self.dims
        return self.values.reshape((nx, ny, nz), order="F")

    def with_values(self, values: np.ndarray, kind: str | None = None) -> "VoxelGrid":
        """New grid with the same geometry and different values."""
        return VoxelGrid(self.dims, self.spacing, values, kind or self.kind)


def _snap_binary(values: np.ndarray) -> np.ndarray:
    """Coerce near-{0,1} floats to exact labels; reject anything else."""
    off = np.minimum(np.abs(values), np.abs(values - 1.0))
    if off.size and off.max() > BINARY_TOLERANCE:
        worst = float(values.reshape(-1)[int(off.argmax())])
        raise NonBinaryMaskError(
            f"binary grid contains value {worst!r} (tolerance {BINARY_TOLERANCE})"
        )
    return np.where(values > 0.5, 1.0, 0.0)


def flat_index(dims: tuple[int, int, int], i: int, j: int, k: int) -> int:
    """Flat offset of logical voxel (i, j, k) in the documented layout."""
    nx, ny, _ = dims
    return i + nx * (j + ny * k)
