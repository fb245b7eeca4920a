"""Synthetic CT phantoms with analytically known fluid volume.

A phantom is a body ellipsoid filled with soft tissue, containing disjoint
ellipsoidal fluid pockets, in an air background, plus optional Gaussian
noise from a Philox4x64 stream (bit-identical across platforms for a fixed
seed). Voxel membership is decided at voxel centers with no partial
volume, so truth masks and their convergence behavior stay analyzable.

Tissue defaults: air -1000 HU, soft tissue +50 HU, fluid +10 HU with a
detection band of (-20, 30). These are fixture constants picked to be
physiologically plausible, not claims about clinical fluid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .errors import (
    DimMismatchError,
    InvalidBandError,
    OverlappingPocketsError,
    PocketOutsideBodyError,
)
from .grid import VoxelGrid, VoxelSpacing, unit_voxel_volume_mm3

AIR_HU = -1000.0
SOFT_TISSUE_HU = 50.0
FLUID_HU = 10.0
DEFAULT_FLUID_BAND = (-20.0, 30.0)
# Probability ramp width outside the HU band for the surrogate segmenter.
PROB_RAMP_HU = 10.0

_SURFACE_SAMPLES = 32  # per angle; 32x64 points per ellipsoid


@dataclass(frozen=True)
class Ellipsoid:
    """Axis-aligned ellipsoid: center (mm), semi-axes (mm), and fill HU."""

    center: tuple[float, float, float]
    semi_axes: tuple[float, float, float]
    hu: float

    def __post_init__(self):
        if len(self.center) != 3 or len(self.semi_axes) != 3:
            raise ValueError("center and semi_axes must have 3 components")
        if any(a <= 0 for a in self.semi_axes):
            raise ValueError(f"semi-axes must be > 0, got {self.semi_axes}")
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        object.__setattr__(self, "semi_axes", tuple(float(v) for v in self.semi_axes))

    def volume_mm3(self) -> float:
        a, b, c = self.semi_axes
        return 4.0 / 3.0 * math.pi * a * b * c

    def surface_points(self, n: int = _SURFACE_SAMPLES) -> np.ndarray:
        theta = np.linspace(0.0, math.pi, n)
        phi = np.linspace(0.0, 2.0 * math.pi, 2 * n, endpoint=False)
        t, p = np.meshgrid(theta, phi, indexing="ij")
        a, b, c = self.semi_axes
        cx, cy, cz = self.center
        pts = np.stack(
            [
                cx + a * np.sin(t) * np.cos(p),
                cy + b * np.sin(t) * np.sin(p),
                cz + c * np.cos(t),
            ],
            axis=-1,
        )
        return pts.reshape(-1, 3)

    def quad_form(self, points: np.ndarray) -> np.ndarray:
        """((x-c)/a)^2 + ... for an (n, 3) point array; <= 1 means inside."""
        scaled = (points - np.asarray(self.center)) / np.asarray(self.semi_axes)
        return np.sum(scaled * scaled, axis=-1)


@dataclass(frozen=True)
class PhantomSpec:
    dims: tuple[int, int, int]
    spacing: VoxelSpacing
    body: Ellipsoid
    fluid_pockets: tuple[Ellipsoid, ...] = ()
    background_hu: float = AIR_HU
    noise_sd: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.noise_sd < 0:
            raise ValueError(f"noise_sd must be >= 0, got {self.noise_sd}")
        object.__setattr__(self, "fluid_pockets", tuple(self.fluid_pockets))
        self._validate_geometry()

    def _validate_geometry(self):
        for i, pocket in enumerate(self.fluid_pockets):
            if np.any(self.body.quad_form(pocket.surface_points()) > 1.0 + 1e-9):
                raise PocketOutsideBodyError(
                    f"pocket {i} is not contained in the body ellipsoid"
                )
            for j, other in enumerate(self.fluid_pockets):
                if j == i:
                    continue
                if np.any(other.quad_form(pocket.surface_points()) < 1.0 - 1e-9):
                    raise OverlappingPocketsError(
                        f"pockets {i} and {j} overlap; analytic volume "
                        "would double-count"
                    )

    def to_dict(self) -> dict:
        return {
            "dims": list(self.dims),
            "spacing": list(self.spacing.as_tuple()),
            "body": _ellipsoid_dict(self.body),
            "fluid_pockets": [_ellipsoid_dict(p) for p in self.fluid_pockets],
            "background_hu": self.background_hu,
            "noise_sd": self.noise_sd,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "PhantomSpec":
        return cls(
            dims=tuple(int(d) for d in doc["dims"]),
            spacing=VoxelSpacing(*doc["spacing"]),
            body=_ellipsoid_from_dict(doc["body"]),
            fluid_pockets=tuple(
                _ellipsoid_from_dict(p) for p in doc.get("fluid_pockets", [])
            ),
            background_hu=float(doc.get("background_hu", AIR_HU)),
            noise_sd=float(doc.get("noise_sd", 0.0)),
            seed=int(doc.get("seed", 0)),
        )


def _ellipsoid_dict(e: Ellipsoid) -> dict:
    return {"center": list(e.center), "semi_axes": list(e.semi_axes), "hu": e.hu}


def _ellipsoid_from_dict(doc: dict) -> Ellipsoid:
    return Ellipsoid(
        center=tuple(doc["center"]),
        semi_axes=tuple(doc["semi_axes"]),
        hu=float(doc["hu"]),
    )


@dataclass(frozen=True)
class PhantomTruth:
    truth_mask: VoxelGrid = field(repr=False)
    analytic_volume_ml: float
    voxelized_volume_ml: float


def _voxel_centers(dims, spacing: VoxelSpacing):
    nx, ny, nz = dims
    xs = (np.arange(nx) + 0.5) * spacing.dx
    ys = (np.arange(ny) + 0.5) * spacing.dy
    zs = (np.arange(nz) + 0.5) * spacing.dz
    return xs, ys, zs


def _membership(e: Ellipsoid, xs, ys, zs) -> np.ndarray:
    cx, cy, cz = e.center
    a, b, c = e.semi_axes
    q = (
        ((xs - cx) / a)[:, None, None] ** 2
        + ((ys - cy) / b)[None, :, None] ** 2
        + ((zs - cz) / c)[None, None, :] ** 2
    )
    return q <= 1.0


def generate_phantom(spec: PhantomSpec) -> tuple[VoxelGrid, PhantomTruth]:
    """Rasterize a phantom; returns the CT grid and its ground truth.

    A voxel belongs to the truth mask iff its center falls inside any
    pocket. The analytic volume is the sum of exact ellipsoid volumes,
    which is why overlapping pockets are rejected.
    """
    xs, ys, zs = _voxel_centers(spec.dims, spec.spacing)
    ct = np.full(spec.dims, spec.background_hu, dtype=np.float64)
    body = _membership(spec.body, xs, ys, zs)
    ct[body] = spec.body.hu

    truth = np.zeros(spec.dims, dtype=bool)
    for pocket in spec.fluid_pockets:
        inside = _membership(pocket, xs, ys, zs)
        if np.any(inside & truth):
            raise OverlappingPocketsError(
                "pockets share voxels; analytic volume would double-count"
            )
        truth |= inside
        ct[inside] = pocket.hu

    values = ct.reshape(-1, order="F")
    if spec.noise_sd > 0:
        values = values + rng.stream(spec.seed).normal(
            0.0, spec.noise_sd, size=values.size
        )
    ct_grid = VoxelGrid(spec.dims, spec.spacing, values, kind="intensity")
    truth_grid = VoxelGrid(
        spec.dims, spec.spacing, truth.reshape(-1, order="F"), kind="binary"
    )
    analytic_ml = sum(p.volume_mm3() for p in spec.fluid_pockets) / 1000.0
    voxelized_ml = (
        int(truth.sum()) * unit_voxel_volume_mm3(spec.spacing) / 1000.0
    )
    return ct_grid, PhantomTruth(truth_grid, analytic_ml, voxelized_ml)


def baseline_segment(
    ct: VoxelGrid,
    hu_band: tuple[float, float] = DEFAULT_FLUID_BAND,
    body_mask: VoxelGrid | None = None,
) -> tuple[VoxelGrid, VoxelGrid]:
    """Deterministic HU-band segmenter: hard mask plus soft probability map.

    The mask is 1 where lo <= HU <= hi. The probability map is a trapezoid
    that is 1 inside the band and ramps linearly to 0 over PROB_RAMP_HU
    outside it, which gives the uncertainty scorer something graded to work
    with. A body mask, when given, zeroes both outputs outside the body.
    """
    lo, hi = hu_band
    if not lo < hi:
        raise InvalidBandError(f"HU band must satisfy lo < hi, got ({lo}, {hi})")
    v = ct.values
    mask = (v >= lo) & (v <= hi)
    prob = np.clip(
        np.minimum((v - (lo - PROB_RAMP_HU)) / PROB_RAMP_HU,
                   ((hi + PROB_RAMP_HU) - v) / PROB_RAMP_HU),
        0.0,
        1.0,
    )
    if body_mask is not None:
        if body_mask.dims != ct.dims:
            raise DimMismatchError(
                f"body mask dims {body_mask.dims} != ct dims {ct.dims}"
            )
        inside = body_mask.values > 0.5
        mask &= inside
        prob = np.where(inside, prob, 0.0)
    return (
        ct.with_values(mask.astype(np.float64), kind="binary"),
        ct.with_values(prob, kind="probability"),
    )
