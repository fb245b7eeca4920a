"""ascivol: free-fluid volumetry and evaluation for CT segmentation masks.

Quantifies ascites volume from binary masks, applies the 50 mL detection
rule, scores predicted against reference segmentations (overlap metrics,
detection confusion, bootstrap confidence intervals, Bland-Altman
agreement), and supports the surrounding workflow: NIfTI-1 I/O, intensity
preprocessing, the Dice+BCE training loss kernel, synthetic phantoms with
analytic ground truth, and uncertainty-based annotation scheduling.
"""

__version__ = "0.1.0"

from .active import (
    PoolState,
    UncertaintyScore,
    advance_round,
    rank_for_annotation,
    uncertainty_score,
)
from .grid import VoxelGrid, VoxelSpacing, unit_voxel_volume_mm3
from .loss import (
    LossInputs,
    bce_loss,
    combined_loss,
    combined_loss_grad,
    soft_dice_loss,
)
from .metrics import (
    ConfusionMatrix,
    OverlapCounts,
    detection_confusion,
    detection_metrics,
    overlap_counts,
    overlap_metrics,
)
from .niftiio import NiftiHeader, read_volume, write_volume
from .phantom import (
    Ellipsoid,
    PhantomSpec,
    PhantomTruth,
    baseline_segment,
    generate_phantom,
)
from .preprocess import (
    ClipSpec,
    NormStats,
    WindowSpec,
    apply_window,
    clip_to_percentiles,
    compute_norm_stats,
    percentile,
    zscore_normalize,
)
from .quantify import (
    CaseRecord,
    DetectionPolicy,
    PocketReport,
    VolumeResult,
    connected_pockets,
    detect,
    mask_volume_ml,
    percent_volume_error,
)
from .report import (
    EvaluationReport,
    ManifestRow,
    emit_report,
    load_manifest,
    run_evaluate,
    write_report_files,
)
from .stats import (
    AgreementResult,
    BootstrapConfig,
    bland_altman,
    bootstrap_ci,
    compute_agreement,
    mean_sd_ci,
    median_iqr,
    normal_quantile,
    pearson_r2,
    power_sample_size,
)

__all__ = [
    "__version__",
    "AgreementResult",
    "BootstrapConfig",
    "CaseRecord",
    "ClipSpec",
    "ConfusionMatrix",
    "DetectionPolicy",
    "Ellipsoid",
    "EvaluationReport",
    "LossInputs",
    "ManifestRow",
    "NiftiHeader",
    "NormStats",
    "OverlapCounts",
    "PhantomSpec",
    "PhantomTruth",
    "PocketReport",
    "PoolState",
    "UncertaintyScore",
    "VolumeResult",
    "VoxelGrid",
    "VoxelSpacing",
    "WindowSpec",
    "advance_round",
    "apply_window",
    "baseline_segment",
    "bce_loss",
    "bland_altman",
    "bootstrap_ci",
    "clip_to_percentiles",
    "combined_loss",
    "combined_loss_grad",
    "compute_agreement",
    "compute_norm_stats",
    "connected_pockets",
    "detect",
    "detection_confusion",
    "detection_metrics",
    "emit_report",
    "generate_phantom",
    "load_manifest",
    "mask_volume_ml",
    "mean_sd_ci",
    "median_iqr",
    "normal_quantile",
    "overlap_counts",
    "overlap_metrics",
    "pearson_r2",
    "percent_volume_error",
    "percentile",
    "power_sample_size",
    "rank_for_annotation",
    "read_volume",
    "run_evaluate",
    "soft_dice_loss",
    "uncertainty_score",
    "unit_voxel_volume_mm3",
    "write_report_files",
    "write_volume",
    "zscore_normalize",
]
