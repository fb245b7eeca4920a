"""Fluid volume from binary masks, the 50 mL detection rule, and pockets.

Volume is voxel count times unit voxel volume; mm^3 convert to mL by 1000
with no rounding. The detection boundary is inclusive: exactly 50 mL is
positive, because the negative class is defined as strictly less than the
threshold.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ZeroReferenceError
from .grid import VoxelGrid, unit_voxel_volume_mm3

CATEGORY_POSITIVE = "ascites"
CATEGORY_NEGATIVE = "no-ascites"


@dataclass(frozen=True)
class DetectionPolicy:
    """Minimum segmented volume (mL) for a scan to count as positive."""

    threshold_ml: float = 50.0

    def __post_init__(self):
        if not self.threshold_ml >= 0:
            raise ValueError(f"threshold_ml must be >= 0, got {self.threshold_ml}")

    def detected(self, volume_ml: float) -> bool:
        return volume_ml >= self.threshold_ml


@dataclass(frozen=True)
class VolumeResult:
    voxel_count: int
    volume_ml: float
    detected: bool
    category: str


@dataclass(frozen=True)
class PocketReport:
    """Connected fluid pockets, largest first."""

    n_components: int
    component_volumes_ml: tuple[float, ...]
    largest_fraction: float | None  # None for an empty mask


@dataclass(frozen=True)
class CaseRecord:
    """One scan's predicted and reference fluid volumes (mL)."""

    case_id: str
    pred_ml: float
    ref_ml: float


def mask_volume_ml(
    mask: VoxelGrid, policy: DetectionPolicy = DetectionPolicy()
) -> VolumeResult:
    """Fluid volume of a binary mask plus the detection decision."""
    count = int(np.count_nonzero(mask.values))
    volume_ml = count * unit_voxel_volume_mm3(mask.spacing) / 1000.0
    detected, category = detect(volume_ml, policy)
    return VolumeResult(count, volume_ml, detected, category)


def detect(
    volume_ml: float, policy: DetectionPolicy = DetectionPolicy()
) -> tuple[bool, str]:
    """Apply the detection rule; boundary volume is positive."""
    if volume_ml < 0:
        raise ValueError(f"volume_ml must be >= 0, got {volume_ml}")
    hit = policy.detected(volume_ml)
    return hit, CATEGORY_POSITIVE if hit else CATEGORY_NEGATIVE


def percent_volume_error(pred_ml: float, ref_ml: float) -> float:
    """100 * |pred - ref| / ref, as a percentage of the true volume.

    Undefined for ref_ml == 0; callers must have excluded no-ascites
    references before asking for volume error.
    """
    if ref_ml == 0:
        raise ZeroReferenceError("percent error undefined for zero reference volume")
    if ref_ml < 0 or pred_ml < 0:
        raise ValueError("volumes must be non-negative")
    return 100.0 * abs(pred_ml - ref_ml) / ref_ml


def connected_pockets(mask: VoxelGrid, connectivity: int = 26) -> PocketReport:
    """Decompose a fluid mask into connected components.

    ``connectivity`` is 6 (faces) or 26 (faces, edges, corners; the default
    for fluid blobs). Component volumes come out sorted descending and sum
    to the mask's total volume exactly (integer voxel counts).
    """
    if connectivity not in (6, 26):
        raise ValueError(f"connectivity must be 6 or 26, got {connectivity}")
    structure = ndimage.generate_binary_structure(3, 1 if connectivity == 6 else 3)
    labels, n = ndimage.label(mask.as_3d() > 0.5, structure=structure)
    if n == 0:
        return PocketReport(0, (), None)
    counts = np.bincount(labels.reshape(-1))[1:]  # drop background label 0
    unit_ml = unit_voxel_volume_mm3(mask.spacing) / 1000.0
    volumes = np.sort(counts)[::-1] * unit_ml
    return PocketReport(
        n_components=int(n),
        component_volumes_ml=tuple(float(v) for v in volumes),
        largest_fraction=float(volumes[0] / volumes.sum()),
    )
