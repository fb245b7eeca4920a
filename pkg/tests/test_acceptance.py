"""Acceptance gate: one test per criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -v``. Every criterion asserts
its stated tolerance; the PASS lines are written straight to the terminal
(bypassing capture) so the gate is readable in any pytest mode.
"""
import json
import math
import subprocess
import sys
import time

import numpy as np
import pytest

from ascivol import (
    BootstrapConfig,
    Ellipsoid,
    LossInputs,
    PhantomSpec,
    VoxelGrid,
    VoxelSpacing,
    baseline_segment,
    bland_altman,
    bootstrap_ci,
    combined_loss,
    combined_loss_grad,
    detection_confusion,
    detection_metrics,
    generate_phantom,
    pearson_r2,
    percent_volume_error,
    power_sample_size,
    rank_for_annotation,
    uncertainty_score,
    write_volume,
)
from ascivol.active import PoolState, UncertaintyScore, advance_round
from ascivol.metrics import overlap_counts
from ascivol.niftiio import read_volume
from ascivol.phantom import FLUID_HU, SOFT_TISSUE_HU
from ascivol.report import emit_report, load_manifest, render_json, run_evaluate

from conftest import independent_nifti_bytes
from test_loss import central_difference_grad
from test_metrics import make_cases


@pytest.fixture
def announce(capsys):
    """Prints the criterion's PASS line through pytest's capture."""

    def _pass(criterion: str, detail: str = ""):
        line = f"ACCEPTANCE PASS {criterion}"
        if detail:
            line += f" -- {detail}"
        with capsys.disabled():
            print(line, flush=True)

    return _pass


def test_criterion_1_detection_reproduction(announce):
    started = time.perf_counter()
    expectations = {
        "internal-ov": ((24, 0, 8, 134), (0.952, 1.000, 0.750, 0.857)),
        "external-lc": ((42, 0, 1, 81), (0.992, 1.000, 0.977, 0.988)),
    }
    for name, (counts, wanted) in expectations.items():
        cases = make_cases(*counts)
        confusion = detection_confusion(cases)
        assert (confusion.tp, confusion.fp, confusion.fn, confusion.tn) == counts
        metrics = detection_metrics(confusion)
        for key, want in zip(("accuracy", "precision", "recall", "f1"), wanted):
            assert metrics[key] == pytest.approx(want, abs=5e-4), (name, key)
    elapsed = time.perf_counter() - started
    assert elapsed < 1.0
    announce("1 detection reproduction", f"{elapsed:.3f}s")


def test_criterion_2_power_formula(announce):
    assert power_sample_size(0.5, 0.05, 0.8) == 32
    announce("2 power formula", "n(0.5, 0.05, 0.8) = 32")


def test_criterion_3_percent_error_captions(announce):
    large = percent_volume_error(3.59, 4.07)
    loculated = percent_volume_error(0.60, 0.76)
    assert large == pytest.approx(11.8, abs=0.1)
    assert loculated == pytest.approx(21.1, abs=0.1)
    # The source figure captions print 13.3% and 21.7% for these volumes;
    # 13.3% is |pred-ref|/pred, i.e. the other denominator. This artifact
    # follows the tabulated definition (percentage of the true volume) and
    # records the discrepancy instead of matching it.
    caption_value = 100.0 * abs(3.59 - 4.07) / 3.59
    assert caption_value == pytest.approx(13.3, abs=0.1)
    announce(
        "3 percent-error definition",
        f"true-volume denominator: {large:.1f}% / {loculated:.1f}% "
        "(captions print 13.3%/21.7%; denominator ambiguity logged)",
    )


def test_criterion_4_loss_gradient_suite(announce):
    started = time.perf_counter()
    worst = 0.0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        y = rng.integers(0, 2, 32)
        y_hat = rng.uniform(0.05, 0.95, 32)
        inp = LossInputs(y, y_hat)
        analytic = combined_loss_grad(inp)
        numeric = central_difference_grad(y, y_hat, inp.epsilon, h=1e-6)
        rel = np.abs(analytic - numeric) / np.maximum(np.abs(numeric), 1e-12)
        worst = max(worst, float(rel.max()))
    assert worst < 1e-4

    rng = np.random.default_rng(0)
    for _ in range(20):
        y = rng.integers(0, 2, 64)
        if not y.any():
            y[0] = 1
        assert combined_loss(LossInputs(y, y.astype(float))) <= 1e-5
    elapsed = time.perf_counter() - started
    assert elapsed < 5.0
    announce(
        "4 loss-kernel gradients",
        f"max rel err {worst:.2e} over 100 seeds, {elapsed:.2f}s",
    )


def _pipeline_phantom(seed: int) -> PhantomSpec:
    a = 26.0 + (seed % 3)
    c = 20.0 + (seed % 2)
    cx = 44.0 + (seed % 5)
    return PhantomSpec(
        dims=(96, 96, 96),
        spacing=VoxelSpacing(1.0, 1.0, 1.0),
        body=Ellipsoid((48.0, 48.0, 48.0), (44.0, 44.0, 44.0), SOFT_TISSUE_HU),
        fluid_pockets=(Ellipsoid((cx, 48.0, 48.0), (a, 24.0, c), FLUID_HU),),
        noise_sd=5.0,
        seed=seed,
    )


def test_criterion_5_phantom_volumetry(tmp_path, announce):
    started = time.perf_counter()

    # analytic liter sphere at 1 mm isotropic
    def liter_sphere(spacing):
        n = int(round(148.0 / spacing))
        mid = 148.0 / 2.0
        return PhantomSpec(
            dims=(n, n, n),
            spacing=VoxelSpacing(spacing, spacing, spacing),
            body=Ellipsoid((mid, mid, mid), (70.0, 70.0, 70.0), SOFT_TISSUE_HU),
            fluid_pockets=(
                Ellipsoid((mid + 0.3, mid - 0.2, mid + 0.1),
                          (62.035, 62.035, 62.035), FLUID_HU),
            ),
        )

    _, truth_1mm = generate_phantom(liter_sphere(1.0))
    assert truth_1mm.analytic_volume_ml == pytest.approx(1000.0, abs=0.01)
    err_1mm = abs(truth_1mm.voxelized_volume_ml - truth_1mm.analytic_volume_ml)
    assert err_1mm / truth_1mm.analytic_volume_ml < 0.02

    _, truth_half = generate_phantom(liter_sphere(0.5))
    err_half = abs(truth_half.voxelized_volume_ml - truth_half.analytic_volume_ml)
    assert err_half < err_1mm

    # full pipeline: generate -> baseline segment -> evaluate
    lines = ["case_id,pred_mask_path,ref_mask_path"]
    for seed in range(10):
        ct, truth = generate_phantom(_pipeline_phantom(seed))
        mask, _ = baseline_segment(ct)
        write_volume(mask, tmp_path / f"pred{seed}.nii")
        write_volume(truth.truth_mask, tmp_path / f"ref{seed}.nii")
        lines.append(f"phantom{seed},pred{seed}.nii,ref{seed}.nii")
    manifest = tmp_path / "manifest.csv"
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")

    report = run_evaluate(
        load_manifest(manifest), cfg=BootstrapConfig(seed=123)
    )
    assert report.failures == []
    assert report.aggregates["n_included"] == 10
    mean_dice = report.aggregates["overlap"]["dice"]["mean"]
    median_pct = report.aggregates["pct_error"]["median"]
    assert mean_dice >= 0.95
    assert median_pct <= 2.0
    elapsed = time.perf_counter() - started
    assert elapsed < 120.0
    announce(
        "5 phantom volumetry",
        f"1mm sphere err {err_1mm / 10:.3f}%, halved-spacing err "
        f"{err_half / 10:.3f}%, pipeline dice {mean_dice:.4f}, "
        f"median pct err {median_pct:.3f}%, {elapsed:.1f}s",
    )


def test_criterion_6_metric_identities(announce):
    rng = np.random.default_rng(60)
    for _ in range(1000):
        tp = int(rng.integers(1, 60))
        fp, fn, tn = (int(v) for v in rng.integers(0, 60, 3))
        from ascivol.metrics import ConfusionMatrix

        m = detection_metrics(ConfusionMatrix(tp, fp, fn, tn))
        harmonic = 2 * m["precision"] * m["recall"] / (m["precision"] + m["recall"])
        assert m["f1"] == pytest.approx(harmonic, rel=1e-12)

    from ascivol.metrics import OverlapCounts, overlap_metrics

    for _ in range(200):
        tp, fp, fn, tn = (int(v) for v in rng.integers(1, 40, 4))
        a = overlap_metrics(OverlapCounts(tp, fp, fn, tn))
        b = overlap_metrics(OverlapCounts(tp, fn, fp, tn))
        assert a["precision"] == b["recall"] and a["recall"] == b["precision"]
        assert a["dice"] == b["dice"]

    from conftest import make_grid

    for _ in range(50):
        p = rng.random((4, 4, 4)) < 0.5
        r = rng.random((4, 4, 4)) < 0.5
        c = overlap_counts(make_grid(p.astype(float)), make_grid(r.astype(float)))
        assert c.tp == int(np.sum(p & r))
        assert c.fp == int(np.sum(p & ~r))
        assert c.fn == int(np.sum(~p & r))
        assert c.tn == int(np.sum(~p & ~r))
    announce("6 metric identities", "1000 tuples + 50 brute-force grids")


def test_criterion_7_statistics_suite(announce):
    cfg = BootstrapConfig(n_resamples=10_000, alpha=0.05, seed=7)

    samples = list(np.random.default_rng(1).normal(size=50))
    assert bootstrap_ci(samples, "mean", cfg) == bootstrap_ci(samples, "mean", cfg)

    lo, hi = bootstrap_ci([2.25] * 12, "mean", cfg)
    assert lo == hi == pytest.approx(2.25, abs=1e-12)

    bern = [1.0] * 75 + [0.0] * 25
    lo, hi = bootstrap_ci(bern, "mean", cfg)
    width = hi - lo
    oracle = 2 * 1.96 * math.sqrt(0.75 * 0.25 / 100)
    assert abs(width - oracle) / oracle < 0.20

    x = np.arange(12.0)
    assert pearson_r2(x, 3.0 * x - 4.0) == pytest.approx(1.0, abs=1e-12)
    rng = np.random.default_rng(2)
    xs, ys = rng.normal(size=40), rng.normal(size=40)
    base = pearson_r2(xs, ys)
    assert pearson_r2(2.5 * xs + 1.0, ys) == pytest.approx(base, abs=1e-9)
    assert pearson_r2(xs, -0.5 * ys + 3.0) == pytest.approx(base, abs=1e-9)

    ref = [0.5, 1.5, 2.5, 3.5]
    result, _ = bland_altman([v + 0.3 for v in ref], ref)
    assert result.bias == pytest.approx(0.3, rel=1e-12)
    assert result.sd_diff == pytest.approx(0.0, abs=1e-12)
    assert result.loa_lo == pytest.approx(0.3, rel=1e-12)
    assert result.loa_hi == pytest.approx(0.3, rel=1e-12)
    announce("7 statistics suite", f"bootstrap width dev {abs(width-oracle)/oracle:.3f}")


def test_criterion_8_active_learning_suite(announce):
    grid = VoxelGrid((64, 1, 1), VoxelSpacing(1, 1, 1), np.full(64, 0.5),
                     "probability")
    assert uncertainty_score(grid, "x").score == pytest.approx(
        math.log(2.0), abs=1e-12
    )
    rng = np.random.default_rng(80)
    for _ in range(200):
        p = rng.random(32)
        grid = VoxelGrid((32, 1, 1), VoxelSpacing(1, 1, 1), p, "probability")
        assert 0.0 <= uncertainty_score(grid, "x").score <= math.log(2.0)

    for _ in range(1000):
        n = int(rng.integers(1, 15))
        ids = list(dict.fromkeys(
            f"s{int(v):03d}" for v in rng.integers(0, 40, n)
        ))
        scores = [
            UncertaintyScore(i, float(rng.choice([0.0, 0.2, 0.2, 0.7])))
            for i in ids
        ]
        k = int(rng.integers(0, len(scores) + 1))
        oracle = [
            s.scan_id for s in sorted(scores, key=lambda s: (-s.score, s.scan_id))
        ][:k]
        assert rank_for_annotation(scores, k) == oracle

    pool = PoolState(
        labeled={f"scan{i:04d}" for i in range(15)},
        unlabeled={f"scan{i:04d}" for i in range(15, 300)},
    )
    total = pool.total
    for _ in range(10):
        batch = sorted(pool.unlabeled)[:15]
        pool = advance_round(pool, batch)
        assert pool.total == total
        assert not (pool.labeled & pool.unlabeled)
    assert pool.round == 10 and len(pool.labeled) == 165
    announce("8 active-learning suite", "1000 rankings + 10 rounds from 15 seeds")


def test_criterion_9_format_round_trips(tmp_path, announce):
    # NIfTI identity for every supported datatype, against an
    # independently packed fixture on the read side.
    datatype_values = {
        "uint8": [0, 1, 1, 0, 0, 1, 0, 1],
        "int16": [-1024, 0, 55, 1200, 7, -3, 2, 1],
        "float32": [0.25, -1.5, 3.75, 0.0, 40.0, -0.125, 2.0, 9.5],
        "float64": [0.1, -1000.0, math.pi, 0.0, 1e-9, 7.0, 2.5, -2.5],
    }
    for datatype, values in datatype_values.items():
        kind = "binary" if datatype == "uint8" else "intensity"
        grid = VoxelGrid((2, 2, 2), VoxelSpacing(0.5, 1.0, 2.0),
                         np.array(values, float), kind)
        path = tmp_path / f"rt_{datatype}.nii"
        write_volume(grid, path, datatype)
        back = read_volume(path, kind)
        if datatype == "float32":
            assert np.array_equal(
                back.values, grid.values.astype(np.float32).astype(np.float64)
            )
        else:
            assert np.array_equal(back.values, grid.values)
        fixture = tmp_path / f"ind_{datatype}.nii"
        np_vals = np.array(values)
        fixture.write_bytes(
            independent_nifti_bytes((2, 2, 2), (0.5, 1.0, 2.0), np_vals, datatype)
        )
        assert np.array_equal(
            read_volume(fixture, kind).values, np_vals.astype(np.float64)
        )

    # report JSON canonical-form byte identity
    values = np.zeros(800)
    values[:400] = 1.0
    grid = VoxelGrid((10, 10, 8), VoxelSpacing(5, 5, 10), values, "binary")
    write_volume(grid, tmp_path / "m1.nii")
    values2 = np.zeros(800)
    values2[:480] = 1.0
    write_volume(
        VoxelGrid((10, 10, 8), VoxelSpacing(5, 5, 10), values2, "binary"),
        tmp_path / "m2.nii",
    )
    manifest = tmp_path / "manifest.csv"
    manifest.write_text(
        "case_id,pred_mask_path,ref_mask_path\n"
        "a,m1.nii,m1.nii\nb,m2.nii,m2.nii\n",
        encoding="utf-8",
    )
    report = run_evaluate(
        load_manifest(manifest), cfg=BootstrapConfig(500, 0.05, 3)
    )
    blob = emit_report(report, "json")
    assert render_json(json.loads(blob.decode())) == blob

    # end-to-end: two CLI invocations, identical bytes (figures included)
    def invoke(out_name):
        out_dir = tmp_path / out_name
        result = subprocess.run(
            [
                sys.executable, "-m", "ascivol.cli", "evaluate",
                str(manifest), "--bootstrap", "500", "--seed", "3",
                "--out", str(out_dir),
            ],
            capture_output=True,
            text=True,
        )
        assert result.returncode == 0, result.stderr
        return out_dir

    first, second = invoke("run1"), invoke("run2")
    compared = []
    for rel in (
        "report.json",
        "per_case.csv",
        "agreement.csv",
        "figures/correlation.png",
        "figures/bland_altman.png",
        "figures/confusion_matrix.png",
        "figures/dice_violin.png",
    ):
        a, b = first / rel, second / rel
        assert a.is_file(), f"missing {rel}"
        assert a.read_bytes() == b.read_bytes(), f"nondeterministic {rel}"
        compared.append(rel)
    announce(
        "9 format round-trips",
        f"4 datatypes, canonical JSON, {len(compared)} byte-identical outputs",
    )
