"""Figure rendering for evaluation reports.

Renders the standard agreement panel from a report: predicted-vs-reference
scatter with r^2, Bland-Altman plot with bias and 1.96-SD limits, the
detection confusion matrix, and the per-case Dice distribution. Output is
PNG next to the delimited report files; the Agg backend keeps this usable
on headless machines and the files deterministic.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

DPI = 150
_BLUE = "#5a60bf"


def render_report_figures(report, out_dir: str | Path) -> list[Path]:
    """Render every figure the report's data supports; returns the paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cases = report.cases if hasattr(report, "cases") else report["cases"]
    aggregates = (
        report.aggregates if hasattr(report, "aggregates") else report["aggregates"]
    )
    included = [c for c in cases if c["included"]]
    pred_l = np.array([c["pred_ml"] / 1000.0 for c in included])
    ref_l = np.array([c["ref_ml"] / 1000.0 for c in included])

    written = []
    agreement = aggregates.get("agreement")
    if agreement is not None and len(included) >= 2:
        written.append(
            correlation_figure(
                pred_l, ref_l, agreement.get("r2"), out_dir / "correlation.png"
            )
        )
        written.append(
            bland_altman_figure(
                pred_l,
                ref_l,
                agreement["bias_l"],
                agreement["loa_lo_l"],
                agreement["loa_hi_l"],
                out_dir / "bland_altman.png",
            )
        )
    detection = aggregates.get("detection")
    if detection and detection["confusion"]:
        written.append(
            confusion_figure(detection["confusion"], out_dir / "confusion_matrix.png")
        )
    dice = [c["dice"] for c in included if c["dice"] is not None]
    if dice:
        written.append(dice_distribution_figure(dice, out_dir / "dice_violin.png"))
    return written


def correlation_figure(pred_l, ref_l, r2, path: Path) -> Path:
    """Automated vs reference volume scatter, log-log when volumes allow."""
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    ax.scatter(ref_l, pred_l, s=22, color=_BLUE, alpha=0.75, edgecolors="none")
    lo = min(np.min(ref_l), np.min(pred_l))
    hi = max(np.max(ref_l), np.max(pred_l))
    if lo > 0:
        ax.set_xscale("log")
        ax.set_yscale("log")
        span = (lo * 0.8, hi * 1.25)
    else:
        pad = 0.05 * (hi - lo if hi > lo else 1.0)
        span = (lo - pad, hi + pad)
    ax.plot(span, span, color="gray", linewidth=1, linestyle="--", zorder=0)
    ax.set_xlim(span)
    ax.set_ylim(span)
    ax.set_xlabel("Reference volume (L)")
    ax.set_ylabel("Predicted volume (L)")
    title = "Volume agreement"
    if r2 is not None:
        title += f" (r$^2$ = {r2:.2f})"
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path


def bland_altman_figure(pred_l, ref_l, bias, loa_lo, loa_hi, path: Path) -> Path:
    means = (pred_l + ref_l) / 2.0
    diffs = pred_l - ref_l
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    ax.scatter(means, diffs, s=22, color=_BLUE, alpha=0.75, edgecolors="none")
    ax.axhline(bias, color="black", linewidth=1.2, label=f"bias = {bias:+.3f} L")
    for y, name in ((loa_lo, "-1.96 SD"), (loa_hi, "+1.96 SD")):
        ax.axhline(y, color="gray", linewidth=1, linestyle="--")
        ax.annotate(
            f"{name} = {y:+.3f}",
            xy=(1.0, y),
            xycoords=("axes fraction", "data"),
            xytext=(-4, 3),
            textcoords="offset points",
            ha="right",
            fontsize=8,
            color="dimgray",
        )
    ax.set_xlabel("Mean of predicted and reference (L)")
    ax.set_ylabel("Predicted - reference (L)")
    ax.set_title("Bland-Altman agreement")
    ax.legend(loc="upper right", fontsize=8, frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path


def confusion_figure(confusion: dict, path: Path) -> Path:
    counts = np.array(
        [
            [confusion["tp"], confusion["fn"]],
            [confusion["fp"], confusion["tn"]],
        ],
        dtype=float,
    )
    fig, ax = plt.subplots(figsize=(3.8, 3.4))
    cmap = matplotlib.colors.LinearSegmentedColormap.from_list(
        "bluewhite", ["white", _BLUE]
    )
    ax.imshow(counts, cmap=cmap, vmin=0)
    for (row, col), value in np.ndenumerate(counts):
        shade = value > counts.max() * 0.6 if counts.max() > 0 else False
        ax.text(
            col,
            row,
            f"{int(value)}",
            ha="center",
            va="center",
            color="white" if shade else "black",
        )
    ax.set_xticks([0, 1], ["positive", "negative"])
    ax.set_yticks([0, 1], ["positive", "negative"])
    ax.set_xlabel("Reference")
    ax.set_ylabel("Predicted")
    ax.set_title("Detection confusion matrix")
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path


def dice_distribution_figure(dice, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(3.2, 4.0))
    parts = ax.violinplot([list(dice)], showmedians=True)
    for body in parts["bodies"]:
        body.set_facecolor(_BLUE)
        body.set_alpha(0.6)
    parts["cmedians"].set_color("darkorange")
    ax.set_xticks([1], ["cases"])
    ax.set_ylabel("Dice")
    ax.set_ylim(0.0, 1.05)
    ax.set_title(f"Dice distribution (n = {len(dice)})")
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path


def agreement_figures(pred_l, ref_l, result, out_dir: str | Path) -> list[Path]:
    """Correlation + Bland-Altman pair for a standalone stats run."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pred_l = np.asarray(pred_l, dtype=float)
    ref_l = np.asarray(ref_l, dtype=float)
    return [
        correlation_figure(pred_l, ref_l, result.r2, out_dir / "correlation.png"),
        bland_altman_figure(
            pred_l,
            ref_l,
            result.bias,
            result.loa_lo,
            result.loa_hi,
            out_dir / "bland_altman.png",
        ),
    ]
