"""Voxel-level overlap metrics and scan-level detection metrics.

Ratios with a zero denominator are reported as undefined (value None plus
a flag naming the metric), never silently coerced to 0: coercion would
bias aggregate means exactly where small-volume cases already distort
them. Aggregation helpers skip flagged values and say how many they
skipped.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimMismatchError, EmptyMatrixError, SpacingMismatchError
from .grid import VoxelGrid
from .quantify import CaseRecord, DetectionPolicy

SPACING_RTOL = 1e-4

# Fixed per-case CSV column order for metric rows.
CSV_COLUMNS = (
    "case_id",
    "dice",
    "precision",
    "recall",
    "specificity",
    "pred_ml",
    "ref_ml",
    "pct_error",
    "flags",
)


@dataclass(frozen=True)
class OverlapCounts:
    """Voxelwise 2x2 tally for one grid pair."""

    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class ConfusionMatrix:
    """Scan-level 2x2 detection counts."""

    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def overlap_counts(pred: VoxelGrid, ref: VoxelGrid) -> OverlapCounts:
    """Voxelwise TP/FP/FN/TN between two binary grids."""
    if pred.dims != ref.dims:
        raise DimMismatchError(f"pred dims {pred.dims} != ref dims {ref.dims}")
    ps, rs = np.array(pred.spacing.as_tuple()), np.array(ref.spacing.as_tuple())
    if not np.allclose(ps, rs, rtol=SPACING_RTOL, atol=0.0):
        raise SpacingMismatchError(
            f"pred spacing {tuple(ps)} != ref spacing {tuple(rs)}"
        )
    p = pred.values > 0.5
    r = ref.values > 0.5
    tp = int(np.count_nonzero(p & r))
    fp = int(np.count_nonzero(p & ~r))
    fn = int(np.count_nonzero(~p & r))
    tn = p.size - tp - fp - fn
    return OverlapCounts(tp, fp, fn, tn)


def _ratio(num: int, den: int) -> float | None:
    return num / den if den > 0 else None


def overlap_metrics(c: OverlapCounts) -> dict:
    """Dice, precision, recall, specificity from voxel counts.

    Undefined ratios are None and named in the returned "flags" tuple.
    """
    out = {
        "dice": _ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn),
        "precision": _ratio(c.tp, c.tp + c.fp),
        "recall": _ratio(c.tp, c.tp + c.fn),
        "specificity": _ratio(c.tn, c.tn + c.fp),
    }
    out["flags"] = tuple(
        f"undefined-{name}" for name, v in out.items() if v is None
    )
    return out


def detection_confusion(
    cases: Sequence[CaseRecord], policy: DetectionPolicy = DetectionPolicy()
) -> ConfusionMatrix:
    """Scan-level confusion matrix under the detection rule."""
    tp = fp = fn = tn = 0
    for case in cases:
        pred_pos = policy.detected(case.pred_ml)
        ref_pos = policy.detected(case.ref_ml)
        if pred_pos and ref_pos:
            tp += 1
        elif pred_pos:
            fp += 1
        elif ref_pos:
            fn += 1
        else:
            tn += 1
    return ConfusionMatrix(tp, fp, fn, tn)


def detection_metrics(m: ConfusionMatrix) -> dict:
    """Accuracy, precision, recall, F1 over cases; undefined values flagged.

    F1 uses the count form 2*tp / (2*tp + fp + fn), which equals the
    harmonic mean of precision and recall whenever that mean is defined.
    """
    if m.total == 0:
        raise EmptyMatrixError("detection metrics need at least one case")
    out = {
        "accuracy": (m.tp + m.tn) / m.total,
        "precision": _ratio(m.tp, m.tp + m.fp),
        "recall": _ratio(m.tp, m.tp + m.fn),
        "f1": _ratio(2 * m.tp, 2 * m.tp + m.fp + m.fn),
    }
    out["flags"] = tuple(
        f"undefined-{name}" for name, v in out.items() if v is None
    )
    return out


def aggregate_defined(values: Sequence[float | None]) -> dict:
    """Mean/SD over the defined entries; counts how many were skipped."""
    kept = [v for v in values if v is not None]
    skipped = len(values) - len(kept)
    if not kept:
        return {"mean": None, "sd": None, "n": 0, "n_skipped": skipped}
    arr = np.asarray(kept, dtype=np.float64)
    sd = float(arr.std(ddof=1)) if arr.size >= 2 else 0.0
    return {"mean": float(arr.mean()), "sd": sd, "n": arr.size, "n_skipped": skipped}
