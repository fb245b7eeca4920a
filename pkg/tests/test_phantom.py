import numpy as np
import pytest

from ascivol.errors import (
    DimMismatchError,
    InvalidBandError,
    OverlappingPocketsError,
    PocketOutsideBodyError,
)
from ascivol.grid import VoxelGrid, VoxelSpacing
from ascivol.metrics import overlap_counts, overlap_metrics
from ascivol.phantom import (
    AIR_HU,
    FLUID_HU,
    SOFT_TISSUE_HU,
    Ellipsoid,
    PhantomSpec,
    baseline_segment,
    generate_phantom,
)


def sphere_spec(radius, spacing=1.0, noise_sd=0.0, seed=0, center=None):
    extent = 2 * (radius + 12.0)
    n = int(round(extent / spacing))
    mid = extent / 2.0
    if center is None:
        center = (mid, mid, mid)
    return PhantomSpec(
        dims=(n, n, n),
        spacing=VoxelSpacing(spacing, spacing, spacing),
        body=Ellipsoid((mid, mid, mid), (radius + 8.0,) * 3, SOFT_TISSUE_HU),
        fluid_pockets=(Ellipsoid(center, (radius,) * 3, FLUID_HU),),
        noise_sd=noise_sd,
        seed=seed,
    )


class TestGeneration:
    def test_no_pockets(self):
        spec = PhantomSpec(
            dims=(20, 20, 20),
            spacing=VoxelSpacing(1, 1, 1),
            body=Ellipsoid((10, 10, 10), (8, 8, 8), SOFT_TISSUE_HU),
        )
        ct, truth = generate_phantom(spec)
        assert truth.analytic_volume_ml == 0.0
        assert truth.voxelized_volume_ml == 0.0
        assert not truth.truth_mask.values.any()
        # air outside, soft tissue inside
        assert ct.values.min() == AIR_HU
        assert ct.values.max() == SOFT_TISSUE_HU

    def test_liter_sphere(self):
        ct, truth = generate_phantom(sphere_spec(62.035))
        assert truth.analytic_volume_ml == pytest.approx(1000.0, abs=0.01)
        rel_err = abs(truth.voxelized_volume_ml - truth.analytic_volume_ml) / 1000.0
        assert rel_err < 0.02

    def test_deterministic_for_fixed_seed(self):
        spec = sphere_spec(20.0, noise_sd=5.0, seed=42)
        ct_a, _ = generate_phantom(spec)
        ct_b, _ = generate_phantom(spec)
        assert np.array_equal(ct_a.values, ct_b.values)

    def test_seed_changes_noise(self):
        ct_a, _ = generate_phantom(sphere_spec(20.0, noise_sd=5.0, seed=1))
        ct_b, _ = generate_phantom(sphere_spec(20.0, noise_sd=5.0, seed=2))
        assert not np.array_equal(ct_a.values, ct_b.values)

    def test_volume_converges_with_resolution(self):
        errors = []
        for spacing in (2.0, 1.0, 0.5):
            # slightly off-lattice center so symmetry cannot mask error
            _, truth = generate_phantom(
                sphere_spec(25.0, spacing=spacing, center=(37.3, 36.7, 37.1))
            )
            errors.append(
                abs(truth.voxelized_volume_ml - truth.analytic_volume_ml)
            )
        assert errors[0] > errors[1] > errors[2]

    def test_pocket_outside_body_rejected(self):
        with pytest.raises(PocketOutsideBodyError):
            PhantomSpec(
                dims=(40, 40, 40),
                spacing=VoxelSpacing(1, 1, 1),
                body=Ellipsoid((20, 20, 20), (10, 10, 10), SOFT_TISSUE_HU),
                fluid_pockets=(Ellipsoid((28, 20, 20), (5, 5, 5), FLUID_HU),),
            )

    def test_overlapping_pockets_rejected(self):
        with pytest.raises(OverlappingPocketsError):
            PhantomSpec(
                dims=(60, 60, 60),
                spacing=VoxelSpacing(1, 1, 1),
                body=Ellipsoid((30, 30, 30), (25, 25, 25), SOFT_TISSUE_HU),
                fluid_pockets=(
                    Ellipsoid((25, 30, 30), (8, 8, 8), FLUID_HU),
                    Ellipsoid((32, 30, 30), (8, 8, 8), FLUID_HU),
                ),
            )

    def test_spec_json_round_trip(self):
        spec = sphere_spec(20.0, noise_sd=3.0, seed=9)
        assert PhantomSpec.from_dict(spec.to_dict()) == spec


class TestBaselineSegment:
    def test_noise_free_is_exact(self):
        ct, truth = generate_phantom(sphere_spec(25.0))
        mask, prob = baseline_segment(ct)
        metrics = overlap_metrics(overlap_counts(mask, truth.truth_mask))
        assert metrics["dice"] == 1.0
        assert np.array_equal(mask.values, truth.truth_mask.values)

    def test_noisy_dice_stays_high(self):
        for seed in range(10):
            ct, truth = generate_phantom(sphere_spec(25.0, noise_sd=5.0, seed=seed))
            mask, _ = baseline_segment(ct)
            metrics = overlap_metrics(overlap_counts(mask, truth.truth_mask))
            assert metrics["dice"] >= 0.95

    def test_all_air_grid(self):
        grid = VoxelGrid(
            (8, 8, 8), VoxelSpacing(1, 1, 1), np.full(512, AIR_HU), "intensity"
        )
        mask, prob = baseline_segment(grid)
        assert not mask.values.any()
        assert not prob.values.any()

    def test_probability_trapezoid(self):
        hu = np.array([-30.0, -25.0, -20.0, 5.0, 30.0, 35.0, 40.0, 100.0])
        grid = VoxelGrid((8, 1, 1), VoxelSpacing(1, 1, 1), hu, "intensity")
        _, prob = baseline_segment(grid, (-20.0, 30.0))
        assert list(prob.values) == [0.0, 0.5, 1.0, 1.0, 1.0, 0.5, 0.0, 0.0]

    def test_mask_is_hard_band(self):
        hu = np.array([-25.0, -20.0, 30.0, 35.0])
        grid = VoxelGrid((4, 1, 1), VoxelSpacing(1, 1, 1), hu, "intensity")
        mask, _ = baseline_segment(grid, (-20.0, 30.0))
        assert list(mask.values) == [0.0, 1.0, 1.0, 0.0]

    def test_invalid_band(self):
        grid = VoxelGrid((1, 1, 1), VoxelSpacing(1, 1, 1), np.zeros(1), "intensity")
        with pytest.raises(InvalidBandError):
            baseline_segment(grid, (30.0, -20.0))

    def test_body_mask_restriction(self):
        hu = np.full(8, FLUID_HU)
        grid = VoxelGrid((8, 1, 1), VoxelSpacing(1, 1, 1), hu, "intensity")
        body = VoxelGrid(
            (8, 1, 1),
            VoxelSpacing(1, 1, 1),
            np.array([1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]),
            "binary",
        )
        mask, prob = baseline_segment(grid, body_mask=body)
        assert list(mask.values) == [1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]
        assert list(prob.values) == [1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]

    def test_body_mask_dim_mismatch(self):
        grid = VoxelGrid((2, 1, 1), VoxelSpacing(1, 1, 1), np.zeros(2), "intensity")
        body = VoxelGrid((3, 1, 1), VoxelSpacing(1, 1, 1), np.ones(3), "binary")
        with pytest.raises(DimMismatchError):
            baseline_segment(grid, body_mask=body)
