"""Batch evaluation over a case manifest and report emission.

The manifest is a UTF-8 CSV with a header and columns case_id,
pred_mask_path, ref_mask_path (optional per command), ct_path (optional);
paths are resolved relative to the manifest file. Per-case failures are
collected and reported, never abort the batch.

Evaluation follows the screening protocol: the confusion matrix covers
every loaded case, but overlap metrics and volume error are computed only
where both prediction and reference pass the detection threshold, since a
scan below it is "no ascites" and carries no volumetric ground truth.

Reports serialize canonically: fixed field order, shortest round-trip
floats, no NaN/Inf (undefined values are null). Emitting, parsing, and
re-emitting a report is byte-identical.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .errors import AscivolError, ManifestError, UnsupportedFormatError
from .metrics import (
    CSV_COLUMNS,
    aggregate_defined,
    detection_confusion,
    detection_metrics,
    overlap_counts,
    overlap_metrics,
)
from .niftiio import read_volume
from .quantify import (
    CaseRecord,
    DetectionPolicy,
    mask_volume_ml,
    percent_volume_error,
)
from .stats import (
    BOOTSTRAP_METHOD,
    RNG_NAME,
    BootstrapConfig,
    bland_altman,
    bootstrap_ci,
    median_iqr,
    pearson_r2,
)
from .errors import ConstantInputError, TooFewSamplesError

REPORT_SCHEMA = "ascivol-report-v1"


@dataclass(frozen=True)
class ManifestRow:
    case_id: str
    pred_mask_path: Path
    ref_mask_path: Path | None = None
    ct_path: Path | None = None


def load_manifest(path: str | Path) -> list[ManifestRow]:
    """Parse a manifest CSV; paths come back resolved against its folder."""
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"manifest not found: {path}")
    base = path.parent
    try:
        with open(path, newline="", encoding="utf-8") as f:
            reader = csv.DictReader(f)
            if reader.fieldnames is None:
                raise ManifestError(f"manifest {path} has no header row")
            fields = [name.strip() for name in reader.fieldnames]
            missing = {"case_id", "pred_mask_path"} - set(fields)
            if missing:
                raise ManifestError(
                    f"manifest {path} missing required columns: {sorted(missing)}"
                )
            rows = []
            for record in reader:
                record = {
                    (k.strip() if k else k): (v.strip() if v else "")
                    for k, v in record.items()
                }
                case_id = record.get("case_id", "")
                pred = record.get("pred_mask_path", "")
                if not case_id or not pred:
                    raise ManifestError(
                        f"manifest {path}: row with empty case_id or pred_mask_path"
                    )
                ref = record.get("ref_mask_path", "")
                ct = record.get("ct_path", "")
                rows.append(
                    ManifestRow(
                        case_id=case_id,
                        pred_mask_path=base / pred,
                        ref_mask_path=base / ref if ref else None,
                        ct_path=base / ct if ct else None,
                    )
                )
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    if not rows:
        raise ManifestError(f"manifest {path} lists no cases")
    ids = [r.case_id for r in rows]
    dupes = {i for i in ids if ids.count(i) > 1}
    if dupes:
        raise ManifestError(f"duplicate case_ids in manifest: {sorted(dupes)}")
    return rows


@dataclass
class EvaluationReport:
    provenance: dict
    cases: list[dict]
    failures: list[dict]
    aggregates: dict

    def to_dict(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "provenance": self.provenance,
            "aggregates": self.aggregates,
            "cases": self.cases,
            "failures": self.failures,
        }


def run_evaluate(
    rows: Sequence[ManifestRow],
    policy: DetectionPolicy = DetectionPolicy(),
    cfg: BootstrapConfig = BootstrapConfig(),
    log_domain_r2: bool = False,
    manifest_path: str | None = None,
) -> EvaluationReport:
    """Evaluate predicted against reference masks for every manifest row."""
    if not rows:
        raise ManifestError("no cases to evaluate")
    for row in rows:
        if row.ref_mask_path is None:
            raise ManifestError(
                f"case {row.case_id}: evaluate needs ref_mask_path for every row"
            )
    cases: list[dict] = []
    failures: list[dict] = []
    for row in rows:
        try:
            cases.append(_evaluate_case(row, policy))
        except AscivolError as exc:
            failures.append(
                {
                    "case_id": row.case_id,
                    "error": type(exc).__name__,
                    "detail": str(exc),
                }
            )
    provenance = {
        "tool": "ascivol",
        "version": __version__,
        "manifest": manifest_path,
        "threshold_ml": policy.threshold_ml,
        "percentile_method": "linear",
        "bootstrap": {
            "method": BOOTSTRAP_METHOD,
            "rng": RNG_NAME,
            "n_resamples": cfg.n_resamples,
            "alpha": cfg.alpha,
            "seed": cfg.seed,
        },
        "r2_domain": "log10" if log_domain_r2 else "raw",
    }
    aggregates = _aggregate(cases, policy, cfg, log_domain_r2)
    return EvaluationReport(provenance, cases, failures, aggregates)


def _evaluate_case(row: ManifestRow, policy: DetectionPolicy) -> dict:
    pred_grid = read_volume(row.pred_mask_path, "binary")
    ref_grid = read_volume(row.ref_mask_path, "binary")
    pred = mask_volume_ml(pred_grid, policy)
    ref = mask_volume_ml(ref_grid, policy)
    included = pred.detected and ref.detected

    flags: list[str] = []
    dice = precision = recall = specificity = pct_error = None
    if included:
        counts = overlap_counts(pred_grid, ref_grid)
        overlap = overlap_metrics(counts)
        dice = overlap["dice"]
        precision = overlap["precision"]
        recall = overlap["recall"]
        specificity = overlap["specificity"]
        flags.extend(overlap["flags"])
        if ref.volume_ml > 0:
            pct_error = percent_volume_error(pred.volume_ml, ref.volume_ml)
        else:
            flags.append("undefined-pct-error")
    else:
        if not pred.detected:
            flags.append("excluded-pred-below-threshold")
        if not ref.detected:
            flags.append("excluded-ref-below-threshold")

    return {
        "case_id": row.case_id,
        "pred_ml": pred.volume_ml,
        "ref_ml": ref.volume_ml,
        "pred_voxels": pred.voxel_count,
        "ref_voxels": ref.voxel_count,
        "pred_detected": pred.detected,
        "ref_detected": ref.detected,
        "included": included,
        "dice": dice,
        "precision": precision,
        "recall": recall,
        "specificity": specificity,
        "pct_error": pct_error,
        "flags": flags,
    }


def _mean_block(values: list, cfg: BootstrapConfig) -> dict:
    block = aggregate_defined(values)
    defined = [v for v in values if v is not None]
    if len(defined) >= 1:
        lo, hi = bootstrap_ci(defined, "mean", cfg)
        block["ci_lo"], block["ci_hi"] = lo, hi
    else:
        block["ci_lo"] = block["ci_hi"] = None
    return {
        key: block[key]
        for key in ("mean", "sd", "ci_lo", "ci_hi", "n", "n_skipped")
    }


def _proportion_block(labels: list, cfg: BootstrapConfig, value) -> dict:
    if value is None or not labels:
        return {"value": value, "ci_lo": None, "ci_hi": None}
    lo, hi = bootstrap_ci(labels, "proportion", cfg)
    return {"value": value, "ci_lo": lo, "ci_hi": hi}


def _aggregate(
    cases: list[dict],
    policy: DetectionPolicy,
    cfg: BootstrapConfig,
    log_domain_r2: bool,
) -> dict:
    included = [c for c in cases if c["included"]]
    overlap = {
        name: _mean_block([c[name] for c in included], cfg)
        for name in ("dice", "precision", "recall", "specificity")
    }

    pct_values = [
        c["pct_error"] for c in included if c["pct_error"] is not None
    ]
    if pct_values:
        pct_block = dict(median_iqr(pct_values))
        pct_block["n"] = len(pct_values)
    else:
        pct_block = {"median": None, "q25": None, "q75": None, "n": 0}

    detection = _detection_block(cases, policy, cfg)
    agreement = _agreement_block(included, log_domain_r2)

    return {
        "n_cases": len(cases),
        "n_included": len(included),
        "overlap": overlap,
        "pct_error": pct_block,
        "detection": detection,
        "agreement": agreement,
    }


def _detection_block(
    cases: list[dict], policy: DetectionPolicy, cfg: BootstrapConfig
) -> dict:
    records = [
        CaseRecord(c["case_id"], c["pred_ml"], c["ref_ml"]) for c in cases
    ]
    confusion = detection_confusion(records, policy)
    block = {
        "confusion": {
            "tp": confusion.tp,
            "fp": confusion.fp,
            "fn": confusion.fn,
            "tn": confusion.tn,
        }
    }
    if confusion.total == 0:
        block["metrics"] = None
        return block
    point = detection_metrics(confusion)
    pred_pos = [c for c in cases if c["pred_detected"]]
    ref_pos = [c for c in cases if c["ref_detected"]]
    correct = [
        1.0 if c["pred_detected"] == c["ref_detected"] else 0.0 for c in cases
    ]
    pairs = [
        (1.0 if c["pred_detected"] else 0.0, 1.0 if c["ref_detected"] else 0.0)
        for c in cases
    ]
    f1_block = {"value": point["f1"], "ci_lo": None, "ci_hi": None}
    if point["f1"] is not None:
        try:
            lo, hi = bootstrap_ci(pairs, "f1-from-labels", cfg)
            f1_block["ci_lo"], f1_block["ci_hi"] = lo, hi
        except TooFewSamplesError:
            pass
    block["metrics"] = {
        "accuracy": _proportion_block(correct, cfg, point["accuracy"]),
        "precision": _proportion_block(
            [1.0 if c["ref_detected"] else 0.0 for c in pred_pos],
            cfg,
            point["precision"],
        ),
        "recall": _proportion_block(
            [1.0 if c["pred_detected"] else 0.0 for c in ref_pos],
            cfg,
            point["recall"],
        ),
        "f1": f1_block,
    }
    return block


def _agreement_block(included: list[dict], log_domain_r2: bool) -> dict | None:
    if len(included) < 2:
        return None
    pred_l = [c["pred_ml"] / 1000.0 for c in included]
    ref_l = [c["ref_ml"] / 1000.0 for c in included]
    result, _ = bland_altman(pred_l, ref_l)
    r2 = None
    try:
        if log_domain_r2:
            if min(pred_l) > 0 and min(ref_l) > 0:
                r2 = pearson_r2(np.log10(pred_l), np.log10(ref_l))
        else:
            r2 = pearson_r2(pred_l, ref_l)
    except ConstantInputError:
        pass
    return {
        "n": len(included),
        "r2": r2,
        "bias_l": result.bias,
        "sd_diff_l": result.sd_diff,
        "loa_lo_l": result.loa_lo,
        "loa_hi_l": result.loa_hi,
    }


# --- serialization ----------------------------------------------------------

def render_json(doc: dict) -> bytes:
    """Canonical JSON bytes: 2-space indent, no NaN, trailing newline."""
    return (json.dumps(doc, indent=2, allow_nan=False) + "\n").encode("utf-8")


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def render_case_csv(cases: list[dict]) -> bytes:
    """Per-case CSV with the fixed metric column order."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for c in cases:
        row = [
            _csv_cell(c[name]) if name != "flags" else ";".join(c["flags"])
            for name in CSV_COLUMNS
        ]
        writer.writerow(row)
    return buf.getvalue().encode("utf-8")


def render_agreement_csv(cases: list[dict]) -> bytes:
    """Plot-ready rows (liters) for the correlation and agreement figures."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["case_id", "pred_l", "ref_l", "mean_l", "diff_l"])
    for c in cases:
        if not c["included"]:
            continue
        pred_l = c["pred_ml"] / 1000.0
        ref_l = c["ref_ml"] / 1000.0
        writer.writerow(
            [
                c["case_id"],
                repr(pred_l),
                repr(ref_l),
                repr((pred_l + ref_l) / 2.0),
                repr(pred_l - ref_l),
            ]
        )
    return buf.getvalue().encode("utf-8")


def emit_report(report: EvaluationReport, format: str = "json") -> bytes:
    """Serialize a report as canonical JSON or as the per-case CSV."""
    if format == "json":
        return render_json(report.to_dict())
    if format == "csv":
        return render_case_csv(report.cases)
    raise UnsupportedFormatError(f"unsupported report format {format!r}")


def write_report_files(
    report: EvaluationReport, out_dir: str | Path, figures: bool = True
) -> list[Path]:
    """Write report.json, per_case.csv, agreement.csv, and figures."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, payload in (
        ("report.json", emit_report(report, "json")),
        ("per_case.csv", emit_report(report, "csv")),
        ("agreement.csv", render_agreement_csv(report.cases)),
    ):
        target = out_dir / name
        target.write_bytes(payload)
        written.append(target)
    if figures:
        from . import figures as figmod

        written.extend(figmod.render_report_figures(report, out_dir / "figures"))
    return written
