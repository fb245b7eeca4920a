"""Command-line interface.

One verb per pipeline procedure: quantify, evaluate, detect, stats,
phantom, select, norm-stats. Exit codes: 0 success, 1 usage error, 2 data
error (evaluate still writes the partial report before exiting 2). The
ASCIVOL_SEED environment variable supplies the default seed.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

from . import __version__
from .active import (
    PoolState,
    UncertaintyScore,
    advance_round,
    rank_for_annotation,
    uncertainty_score,
)
from .errors import AscivolError, ManifestError
from .niftiio import read_volume, write_volume
from .phantom import PhantomSpec, generate_phantom
from .preprocess import compute_norm_stats
from .quantify import DetectionPolicy, connected_pockets, detect, mask_volume_ml
from .report import (
    emit_report,
    load_manifest,
    render_agreement_csv,
    render_json,
    run_evaluate,
    write_report_files,
)
from .stats import BootstrapConfig, compute_agreement

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2

SEED_ENV_VAR = "ASCIVOL_SEED"


class UsageError(Exception):
    """Invalid flag combination detected after parsing."""


class _Parser(argparse.ArgumentParser):
    """argparse that exits 1 (not 2) on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV_VAR, "0")
    try:
        return int(raw)
    except ValueError:
        print(
            f"warning: ignoring non-integer {SEED_ENV_VAR}={raw!r}",
            file=sys.stderr,
        )
        return 0


def _print_json(doc: dict):
    sys.stdout.write(render_json(doc).decode("utf-8"))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="ascivol",
        description="Free-fluid volumetry and evaluation for CT segmentation masks.",
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("quantify", help="volume and pockets of one binary mask")
    p.add_argument("mask", help="NIfTI mask path (.nii or .nii.gz)")
    p.add_argument("--threshold-ml", type=float, default=50.0)
    p.add_argument("--connectivity", type=int, choices=(6, 26), default=26)
    p.set_defaults(func=cmd_quantify)

    p = sub.add_parser("detect", help="apply the detection rule")
    p.add_argument("mask", nargs="?", help="NIfTI mask path")
    p.add_argument("--volume-ml", type=float, help="volume instead of a mask")
    p.add_argument("--threshold-ml", type=float, default=50.0)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser(
        "evaluate", help="score predicted vs reference masks over a manifest"
    )
    p.add_argument("manifest", help="CSV manifest; paths relative to it")
    p.add_argument("--out", help="directory for report files and figures")
    p.add_argument("--threshold-ml", type=float, default=50.0)
    p.add_argument("--bootstrap", type=int, default=10_000)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--log-domain-r2", action="store_true")
    p.add_argument(
        "--format",
        choices=("json", "csv"),
        default="json",
        help="stream printed to stdout when --out is not given",
    )
    p.add_argument(
        "--no-figures", action="store_true", help="skip PNG rendering under --out"
    )
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser(
        "stats", help="agreement statistics from a CSV of volume pairs"
    )
    p.add_argument(
        "volumes",
        help="CSV with pred_ml/ref_ml (or pred_l/ref_l) columns, e.g. per_case.csv",
    )
    p.add_argument("--out", help="directory for agreement.csv and figures")
    p.add_argument("--log-domain-r2", action="store_true")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("phantom", help="generate a synthetic CT phantom")
    p.add_argument("spec", help="phantom spec JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the spec seed")
    p.add_argument("--gzip", action="store_true", help="write .nii.gz volumes")
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("select", help="rank scans for the next annotation round")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--scores", help="CSV with scan_id,score columns")
    src.add_argument(
        "--probs", help="CSV with scan_id,prob_path columns; paths relative to it"
    )
    p.add_argument("-k", "--batch-size", type=int, required=True, dest="k")
    p.add_argument("--method", choices=("entropy", "max-prob"), default="entropy")
    p.add_argument("--pool", help="pool state JSON; restricts ranking to unlabeled")
    p.add_argument(
        "--update-pool",
        action="store_true",
        help="advance the round and rewrite --pool",
    )
    p.add_argument("--out", help="write selected ids here instead of stdout")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser(
        "norm-stats", help="dataset intensity mean/sd from a manifest of CTs"
    )
    p.add_argument("manifest", help="CSV manifest with a ct_path column")
    p.add_argument(
        "--use-foreground",
        action="store_true",
        help="restrict to each row's ref_mask_path voxels",
    )
    p.add_argument("--out", help="also write the JSON here")
    p.set_defaults(func=cmd_norm_stats)

    return parser


def cmd_quantify(args) -> int:
    mask = read_volume(args.mask, "binary")
    result = mask_volume_ml(mask, DetectionPolicy(args.threshold_ml))
    pockets = connected_pockets(mask, args.connectivity)
    _print_json(
        {
            "path": args.mask,
            "voxel_count": result.voxel_count,
            "volume_ml": result.volume_ml,
            "detected": result.detected,
            "category": result.category,
            "threshold_ml": args.threshold_ml,
            "pockets": {
                "connectivity": args.connectivity,
                "n_components": pockets.n_components,
                "component_volumes_ml": list(pockets.component_volumes_ml),
                "largest_fraction": pockets.largest_fraction,
            },
        }
    )
    return EXIT_OK


def cmd_detect(args) -> int:
    if (args.mask is None) == (args.volume_ml is None):
        raise UsageError("detect needs a mask path or --volume-ml, not both")
    if args.mask is not None:
        result = mask_volume_ml(
            read_volume(args.mask, "binary"), DetectionPolicy(args.threshold_ml)
        )
        volume_ml = result.volume_ml
    else:
        volume_ml = args.volume_ml
    detected, category = detect(volume_ml, DetectionPolicy(args.threshold_ml))
    _print_json(
        {
            "volume_ml": volume_ml,
            "threshold_ml": args.threshold_ml,
            "detected": detected,
            "category": category,
        }
    )
    return EXIT_OK


def cmd_evaluate(args) -> int:
    rows = load_manifest(args.manifest)
    seed = args.seed if args.seed is not None else _default_seed()
    report = run_evaluate(
        rows,
        policy=DetectionPolicy(args.threshold_ml),
        cfg=BootstrapConfig(n_resamples=args.bootstrap, alpha=args.alpha, seed=seed),
        log_domain_r2=args.log_domain_r2,
        manifest_path=str(args.manifest),
    )
    if args.out:
        written = write_report_files(report, args.out, figures=not args.no_figures)
        for target in written:
            print(f"wrote {target}", file=sys.stderr)
    else:
        sys.stdout.buffer.write(emit_report(report, args.format))
    if report.failures:
        for failure in report.failures:
            print(
                f"case {failure['case_id']} failed: {failure['detail']}",
                file=sys.stderr,
            )
        return EXIT_DATA
    return EXIT_OK


def _load_volume_pairs(path: str) -> tuple[list[float], list[float], list[str]]:
    """Volume pairs in liters from a CSV with *_ml or *_l columns."""
    try:
        with open(path, newline="", encoding="utf-8") as f:
            reader = csv.DictReader(f)
            fields = set(reader.fieldnames or ())
            if {"pred_ml", "ref_ml"} <= fields:
                pred_col, ref_col, scale = "pred_ml", "ref_ml", 1e-3
            elif {"pred_l", "ref_l"} <= fields:
                pred_col, ref_col, scale = "pred_l", "ref_l", 1.0
            else:
                raise ManifestError(
                    f"{path} needs pred_ml/ref_ml or pred_l/ref_l columns"
                )
            pred, ref, ids = [], [], []
            for i, row in enumerate(reader):
                p, r = row.get(pred_col, ""), row.get(ref_col, "")
                if p == "" or r == "":
                    continue
                pred.append(float(p) * scale)
                ref.append(float(r) * scale)
                ids.append(row.get("case_id") or f"row{i}")
    except OSError as exc:
        raise ManifestError(f"cannot read {path}: {exc}") from exc
    except ValueError as exc:
        raise ManifestError(f"non-numeric volume in {path}: {exc}") from exc
    if not pred:
        raise ManifestError(f"{path} holds no usable volume pairs")
    return pred, ref, ids


def cmd_stats(args) -> int:
    pred_l, ref_l, ids = _load_volume_pairs(args.volumes)
    result = compute_agreement(pred_l, ref_l, log_domain_r2=args.log_domain_r2)
    doc = {
        "n": len(pred_l),
        "r2": result.r2,
        "r2_domain": "log10" if args.log_domain_r2 else "raw",
        "bias_l": result.bias,
        "sd_diff_l": result.sd_diff,
        "loa_lo_l": result.loa_lo,
        "loa_hi_l": result.loa_hi,
    }
    _print_json(doc)
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "agreement.json").write_bytes(render_json(doc))
        cases = [
            {
                "case_id": cid,
                "pred_ml": p * 1000.0,
                "ref_ml": r * 1000.0,
                "included": True,
            }
            for cid, p, r in zip(ids, pred_l, ref_l)
        ]
        (out_dir / "agreement.csv").write_bytes(render_agreement_csv(cases))
        if not args.no_figures:
            from . import figures

            for target in figures.agreement_figures(pred_l, ref_l, result, out_dir):
                print(f"wrote {target}", file=sys.stderr)
    return EXIT_OK


def cmd_phantom(args) -> int:
    try:
        with open(args.spec, encoding="utf-8") as f:
            doc = json.load(f)
    except OSError as exc:
        raise ManifestError(f"cannot read phantom spec {args.spec}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ManifestError(f"invalid phantom spec {args.spec}: {exc}") from exc
    if args.seed is not None:
        doc["seed"] = args.seed
    try:
        spec = PhantomSpec.from_dict(doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise ManifestError(f"invalid phantom spec {args.spec}: {exc}") from exc
    ct, truth = generate_phantom(spec)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    suffix = ".nii.gz" if args.gzip else ".nii"
    ct_path = out_dir / f"ct{suffix}"
    truth_path = out_dir / f"truth{suffix}"
    write_volume(ct, ct_path, datatype="float32")
    write_volume(truth.truth_mask, truth_path, datatype="uint8")
    summary = {
        "ct_path": ct_path.name,
        "truth_path": truth_path.name,
        "analytic_volume_ml": truth.analytic_volume_ml,
        "voxelized_volume_ml": truth.voxelized_volume_ml,
        "spec": spec.to_dict(),
    }
    (out_dir / "truth.json").write_bytes(render_json(summary))
    _print_json(summary)
    return EXIT_OK


def _scores_from_csv(path: str) -> list[UncertaintyScore]:
    try:
        with open(path, newline="", encoding="utf-8") as f:
            reader = csv.DictReader(f)
            if not {"scan_id", "score"} <= set(reader.fieldnames or ()):
                raise ManifestError(f"{path} needs scan_id and score columns")
            return [
                UncertaintyScore(row["scan_id"], float(row["score"]))
                for row in reader
            ]
    except OSError as exc:
        raise ManifestError(f"cannot read {path}: {exc}") from exc
    except ValueError as exc:
        raise ManifestError(f"bad score in {path}: {exc}") from exc


def _scores_from_probs(path: str, method: str) -> list[UncertaintyScore]:
    base = Path(path).parent
    try:
        with open(path, newline="", encoding="utf-8") as f:
            reader = csv.DictReader(f)
            if not {"scan_id", "prob_path"} <= set(reader.fieldnames or ()):
                raise ManifestError(f"{path} needs scan_id and prob_path columns")
            scores = []
            for row in reader:
                grid = read_volume(base / row["prob_path"], "probability")
                scores.append(
                    uncertainty_score(grid, row["scan_id"], method=method)
                )
            return scores
    except OSError as exc:
        raise ManifestError(f"cannot read {path}: {exc}") from exc


def cmd_select(args) -> int:
    if args.update_pool and not args.pool:
        raise UsageError("--update-pool requires --pool")
    if args.scores:
        scores = _scores_from_csv(args.scores)
    else:
        scores = _scores_from_probs(args.probs, args.method)

    pool = None
    if args.pool:
        try:
            with open(args.pool, encoding="utf-8") as f:
                pool = PoolState.from_dict(json.load(f))
        except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ManifestError(f"cannot read pool {args.pool}: {exc}") from exc
        before = len(scores)
        scores = [s for s in scores if s.scan_id in pool.unlabeled]
        if len(scores) != before:
            print(
                f"ignoring {before - len(scores)} scored scans outside the "
                "unlabeled pool",
                file=sys.stderr,
            )

    selected = rank_for_annotation(scores, args.k)
    text = "\n".join(selected) + ("\n" if selected else "")
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)

    if args.update_pool:
        pool = advance_round(pool, selected)
        Path(args.pool).write_bytes(render_json(pool.to_dict()))
        print(
            f"pool advanced to round {pool.round}: "
            f"{len(pool.labeled)} labeled, {len(pool.unlabeled)} unlabeled",
            file=sys.stderr,
        )
    return EXIT_OK


def _norm_manifest_rows(path: str) -> list[tuple[str, Path, Path | None]]:
    p = Path(path)
    if not p.is_file():
        raise ManifestError(f"manifest not found: {p}")
    base = p.parent
    rows = []
    with open(p, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if not {"case_id", "ct_path"} <= set(reader.fieldnames or ()):
            raise ManifestError(f"{path} needs case_id and ct_path columns")
        for i, row in enumerate(reader):
            ct = (row.get("ct_path") or "").strip()
            if not ct:
                raise ManifestError(f"{path}: row with empty ct_path")
            mask = (row.get("ref_mask_path") or "").strip()
            rows.append(
                (
                    row.get("case_id") or f"row{i}",
                    base / ct,
                    base / mask if mask else None,
                )
            )
    if not rows:
        raise ManifestError(f"manifest {path} lists no cases")
    return rows


def cmd_norm_stats(args) -> int:
    grids = []
    foregrounds = []
    for case_id, ct_path, mask_path in _norm_manifest_rows(args.manifest):
        grids.append(read_volume(ct_path, "intensity"))
        if args.use_foreground:
            if mask_path is None:
                raise ManifestError(
                    f"case {case_id}: --use-foreground needs ref_mask_path"
                )
            foregrounds.append(read_volume(mask_path, "binary"))
        else:
            foregrounds.append(None)
    doc = compute_norm_stats(grids, foregrounds)
    if args.out:
        Path(args.out).write_bytes(render_json(doc))
    _print_json(doc)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"ascivol: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except AscivolError as exc:
        print(f"ascivol: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
