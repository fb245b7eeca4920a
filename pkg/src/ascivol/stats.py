"""Statistical battery: bootstrap CIs, summary stats, agreement, power.

Confidence intervals use the percentile bootstrap (resample with
replacement, take empirical percentiles of the replicate statistics).
Replicate k draws from the counter-based stream (seed, k), so results are
deterministic for a fixed seed no matter how replicates are scheduled.
Limits of agreement hard-code the conventional 1.96 multiplier rather than
recomputing it from alpha.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import rng
from .errors import (
    ConstantInputError,
    EmptyInputError,
    InvalidParameterError,
    LengthMismatchError,
    TooFewSamplesError,
)
from .preprocess import percentile

LOA_MULTIPLIER = 1.96
BOOTSTRAP_METHOD = "percentile"
RNG_NAME = "philox4x64"


@dataclass(frozen=True)
class BootstrapConfig:
    n_resamples: int = 10_000
    alpha: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.n_resamples < 1:
            raise InvalidParameterError("n_resamples must be >= 1")
        if not 0.0 < self.alpha < 1.0:
            raise InvalidParameterError("alpha must be in (0, 1)")


@dataclass(frozen=True)
class AgreementResult:
    """Bland-Altman bias and limits of agreement, optionally with r^2."""

    bias: float
    sd_diff: float
    loa_lo: float
    loa_hi: float
    r2: float | None = None

    def __post_init__(self):
        lo = self.bias - LOA_MULTIPLIER * self.sd_diff
        hi = self.bias + LOA_MULTIPLIER * self.sd_diff
        if not (math.isclose(lo, self.loa_lo, abs_tol=1e-12)
                and math.isclose(hi, self.loa_hi, abs_tol=1e-12)):
            raise ValueError("limits of agreement inconsistent with bias/sd")


def _reduce_mean(arr: np.ndarray) -> float:
    return float(arr.mean())


def _reduce_median(arr: np.ndarray) -> float:
    return percentile(arr, 50.0)


def _reduce_proportion(arr: np.ndarray) -> float:
    if not np.all((arr == 0.0) | (arr == 1.0)):
        raise InvalidParameterError("proportion reducer needs 0/1 samples")
    return float(arr.mean())


def _reduce_f1_from_labels(arr: np.ndarray) -> float | None:
    # arr rows are (pred_label, ref_label) in {0, 1}.
    pred = arr[:, 0] > 0.5
    ref = arr[:, 1] > 0.5
    tp = int(np.count_nonzero(pred & ref))
    fp = int(np.count_nonzero(pred & ~ref))
    fn = int(np.count_nonzero(~pred & ref))
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom > 0 else None


REDUCERS = {
    "mean": _reduce_mean,
    "median": _reduce_median,
    "proportion": _reduce_proportion,
    "f1-from-labels": _reduce_f1_from_labels,
}


def bootstrap_ci(
    samples,
    statistic: str = "mean",
    cfg: BootstrapConfig = BootstrapConfig(),
) -> tuple[float, float]:
    """Percentile-bootstrap CI of a named statistic.

    ``samples`` is a scalar sequence, except for "f1-from-labels" where
    each entry is a (pred_label, ref_label) pair. Replicates whose
    statistic is undefined (e.g. F1 with no positives in the resample) are
    dropped from the percentile computation.
    """
    if statistic not in REDUCERS:
        raise InvalidParameterError(
            f"unknown statistic {statistic!r}; choose from {sorted(REDUCERS)}"
        )
    arr = np.asarray(samples, dtype=np.float64)
    if statistic == "f1-from-labels":
        arr = arr.reshape(-1, 2)
    else:
        arr = arr.reshape(-1)
    n = arr.shape[0]
    if n == 0:
        raise EmptyInputError("bootstrap needs at least one sample")
    reducer = REDUCERS[statistic]
    stats = np.empty(cfg.n_resamples, dtype=np.float64)
    kept = 0
    for k in range(cfg.n_resamples):
        idx = rng.stream(cfg.seed, k).integers(0, n, size=n)
        value = reducer(arr[idx])
        if value is not None:
            stats[kept] = value
            kept += 1
    if kept == 0:
        raise TooFewSamplesError("statistic undefined on every bootstrap replicate")
    stats = stats[:kept]
    return (
        percentile(stats, 100.0 * cfg.alpha / 2.0),
        percentile(stats, 100.0 * (1.0 - cfg.alpha / 2.0)),
    )


def mean_sd_ci(samples, cfg: BootstrapConfig = BootstrapConfig()) -> dict:
    """Mean, sample SD (n-1), and bootstrap CI of the mean."""
    arr = np.asarray(samples, dtype=np.float64).reshape(-1)
    if arr.size < 2:
        raise TooFewSamplesError("mean_sd_ci needs at least 2 samples")
    lo, hi = bootstrap_ci(arr, "mean", cfg)
    return {
        "mean": float(arr.mean()),
        "sd": float(arr.std(ddof=1)),
        "ci_lo": lo,
        "ci_hi": hi,
    }


def median_iqr(samples) -> dict:
    """Median with 25th/75th percentiles (same interpolation as percentile)."""
    arr = np.asarray(samples, dtype=np.float64).reshape(-1)
    if arr.size == 0:
        raise EmptyInputError("median_iqr of an empty sequence")
    return {
        "median": percentile(arr, 50.0),
        "q25": percentile(arr, 25.0),
        "q75": percentile(arr, 75.0),
    }


def pearson_r2(x, y) -> float:
    """Square of the Pearson correlation coefficient."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.size != y.size:
        raise LengthMismatchError(f"lengths differ: {x.size} vs {y.size}")
    if x.size < 2:
        raise TooFewSamplesError("correlation needs at least 2 pairs")
    xc = x - x.mean()
    yc = y - y.mean()
    sxx = float(np.dot(xc, xc))
    syy = float(np.dot(yc, yc))
    if sxx == 0.0 or syy == 0.0:
        raise ConstantInputError("correlation undefined for constant input")
    r = float(np.dot(xc, yc)) / math.sqrt(sxx * syy)
    return r * r


def bland_altman(pred, ref) -> tuple[AgreementResult, list[tuple[float, float]]]:
    """Mean bias and 1.96-SD limits of agreement for pred vs ref.

    Differences are pred - ref. The second return value holds the
    (mean-of-pair, difference) rows the agreement plot is drawn from.
    """
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    ref = np.asarray(ref, dtype=np.float64).reshape(-1)
    if pred.size != ref.size:
        raise LengthMismatchError(f"lengths differ: {pred.size} vs {ref.size}")
    if pred.size < 2:
        raise TooFewSamplesError("Bland-Altman needs at least 2 pairs")
    diff = pred - ref
    bias = float(diff.mean())
    sd_diff = float(diff.std(ddof=1))
    result = AgreementResult(
        bias=bias,
        sd_diff=sd_diff,
        loa_lo=bias - LOA_MULTIPLIER * sd_diff,
        loa_hi=bias + LOA_MULTIPLIER * sd_diff,
    )
    points = [
        (float(m), float(d)) for m, d in zip((pred + ref) / 2.0, diff)
    ]
    return result, points


def compute_agreement(pred, ref, log_domain_r2: bool = False) -> AgreementResult:
    """Bland-Altman plus r^2 in one result.

    ``log_domain_r2`` correlates log10 volumes instead of raw ones (both
    sides must then be strictly positive); bias and limits of agreement
    stay in the raw domain either way.
    """
    result, _ = bland_altman(pred, ref)
    x = np.asarray(pred, dtype=np.float64)
    y = np.asarray(ref, dtype=np.float64)
    if log_domain_r2:
        if np.any(x <= 0) or np.any(y <= 0):
            raise InvalidParameterError("log-domain r^2 needs positive volumes")
        x, y = np.log10(x), np.log10(y)
    return replace(result, r2=pearson_r2(x, y))


# Acklam's rational approximation to the standard normal quantile
# (relative error < 1.2e-9 on its own), sharpened to near machine
# precision with one Halley step against the exact erfc-based CDF.
_ACKLAM_A = (
    -3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
    1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00,
)
_ACKLAM_B = (
    -5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
    6.680131188771972e+01, -1.328068155288572e+01,
)
_ACKLAM_C = (
    -7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
    -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00,
)
_ACKLAM_D = (
    7.784695709041462e-03, 3.224671290700398e-01,
    2.445134137142996e+00, 3.754408661907416e+00,
)
_ACKLAM_P_LOW = 0.02425


def normal_quantile(p: float) -> float:
    """Standard normal quantile (inverse CDF) for p in (0, 1)."""
    if not 0.0 < p < 1.0:
        raise InvalidParameterError(f"quantile needs p in (0, 1), got {p}")
    if p > 0.5:
        # Fold onto the lower half; 1 - p is exact for p >= 0.5, and the
        # erfc in the refinement would cancel badly against p near 1.
        return -normal_quantile(1.0 - p)
    a, b, c, d = _ACKLAM_A, _ACKLAM_B, _ACKLAM_C, _ACKLAM_D
    if p < _ACKLAM_P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / \
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    else:
        q = p - 0.5
        r = q * q
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q / \
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0)
    # Halley refinement: e is the CDF error at x.
    e = 0.5 * math.erfc(-x / math.sqrt(2.0)) - p
    u = e * math.sqrt(2.0 * math.pi) * math.exp(x * x / 2.0)
    return x - u / (1.0 + x * u / 2.0)


def power_sample_size(d: float, alpha: float = 0.05, power: float = 0.8) -> int:
    """Normal-approximation sample size per condition.

    n = ceil(((z_{1-alpha/2} + z_power) / d)^2) for effect size d; the
    textbook medium effect d=0.5 at alpha 0.05 and 80% power gives 32.
    """
    if not d > 0:
        raise InvalidParameterError(f"effect size must be > 0, got {d}")
    if not 0.0 < alpha < 1.0 or not 0.0 < power < 1.0:
        raise InvalidParameterError("alpha and power must lie in (0, 1)")
    z = normal_quantile(1.0 - alpha / 2.0) + normal_quantile(power)
    return math.ceil((z / d) ** 2)
