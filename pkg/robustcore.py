#!/usr/bin/env python3
"""
rscrub Robust Univariate Statistics
Median/MAD, kurtosis, robust detrending, central-normality transform and
univariate outlier imputation
"""

import logging

import numpy as np
from scipy import stats

from config import Config
from models import (
    DegenerateSeriesError,
    DenseMatrix,
    ImputationResult,
    ScrubError,
    TransformParams,
)
from utils import parallel_map

logger = logging.getLogger(__name__)

# Residual scales below this fraction of the series magnitude count as zero
_DEGENERATE_RTOL = 1e-12


def _as_series(s, min_length=1, name='series'):
    values = np.asarray(s, dtype=np.float64).ravel()
    if len(values) < min_length:
        raise ValueError(f"{name} needs length >= {min_length}, got {len(values)}")
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{name} must be finite")
    return values


# ============================================
# LOCATION / SCALE / SHAPE
# ============================================
def median(s):
    """Midpoint median (mean of the two middle values for even length)"""
    return float(np.median(_as_series(s)))


def mad(s, scaled=False):
    """
    Median absolute deviation from the median

    Multiplied by 1.4826 when scaled, which makes it consistent for the
    Gaussian standard deviation. A constant series gives 0.
    """
    values = _as_series(s, min_length=2)
    raw = float(np.median(np.abs(values - np.median(values))))
    return raw * Config.MAD_SCALE if scaled else raw


def excess_kurtosis(s):
    """
    Mean fourth standardized moment minus 3

    Uses the population standard deviation (divisor T) over the same T
    points, no small-sample correction.

    Raises:
        DegenerateSeriesError: constant series
    """
    values = _as_series(s, min_length=4)
    centered = values - values.mean()
    sd = np.sqrt(np.mean(centered ** 2))
    if sd == 0 or sd <= _DEGENERATE_RTOL * np.max(np.abs(values)):
        raise DegenerateSeriesError("kurtosis undefined for a constant series")
    return float(np.mean((centered / sd) ** 4) - 3.0)


# ============================================
# DETRENDING
# ============================================
def robust_detrend(s, degree=Config.DETREND_DEGREE):
    """
    Remove a bisquare-IRLS polynomial trend and divide by robust scale

    The output has median 0 and scaled MAD 1. Time is mapped to [-1, 1]
    before building the polynomial basis.

    Raises:
        ValueError: T <= degree + 2
        DegenerateSeriesError: residual MAD is zero
    """
    values = _as_series(s)
    T = len(values)
    if T <= degree + 2:
        raise ValueError(f"robust_detrend needs T > degree + 2, got T={T}, degree={degree}")

    basis = np.polynomial.polynomial.polyvander(np.linspace(-1.0, 1.0, T), degree)
    coef = np.linalg.lstsq(basis, values, rcond=None)[0]
    magnitude = max(np.max(np.abs(values)), 1.0)

    for _ in range(Config.DETREND_MAX_ITER):
        resid = values - basis @ coef
        scale = Config.MAD_SCALE * np.median(np.abs(resid - np.median(resid)))
        if scale <= _DEGENERATE_RTOL * magnitude:
            break
        u = resid / (Config.BISQUARE_C * scale)
        weights = np.where(np.abs(u) < 1.0, (1.0 - u ** 2) ** 2, 0.0)
        sw = np.sqrt(weights)
        new_coef = np.linalg.lstsq(basis * sw[:, None], values * sw, rcond=None)[0]
        change = np.max(np.abs(new_coef - coef))
        coef = new_coef
        if change < Config.DETREND_TOL:
            break

    resid = values - basis @ coef
    resid = resid - np.median(resid)
    scale = mad(resid, scaled=True)
    if scale <= _DEGENERATE_RTOL * magnitude:
        raise DegenerateSeriesError("detrended series has zero robust scale")
    return resid / scale


# ============================================
# ROBUST TRANSFORM TO CENTRAL NORMALITY
# ============================================
def _lambda_grid():
    count = int(round((Config.YJ_LAMBDA_MAX - Config.YJ_LAMBDA_MIN) / Config.YJ_LAMBDA_STEP)) + 1
    return np.round(np.linspace(Config.YJ_LAMBDA_MIN, Config.YJ_LAMBDA_MAX, count), 10)


def _trimmed_nll(z, central, lmbda):
    """Profile negative log-likelihood of the central observations after Yeo-Johnson(lmbda)"""
    y = stats.yeojohnson(z, lmbda)
    if not np.all(np.isfinite(y)):
        return np.inf
    # mean and variance profiled out over the central set only
    variance = np.var(y[central])
    if not np.isfinite(variance) or variance <= 0:
        return np.inf
    zc = z[central]
    log_jacobian = (lmbda - 1.0) * np.sum(np.sign(zc) * np.log1p(np.abs(zc)))
    return 0.5 * len(zc) * np.log(variance) - log_jacobian


def _grid_fit(z, subset):
    """Grid lambda minimizing the profile criterion over subset, None when nothing is finite"""
    grid = _lambda_grid()
    criteria = np.array([_trimmed_nll(z, subset, lmbda) for lmbda in grid])
    if not np.any(np.isfinite(criteria)):
        return None
    return float(grid[int(np.argmin(criteria))])


def _reweighted_fit(z, lmbda):
    """One reweighting step: refit on every point the initial fit does not put in the tails"""
    y = stats.yeojohnson(z, lmbda)
    scale = mad(y, scaled=True)
    if scale <= 0:
        return lmbda
    cutoff = stats.norm.ppf(Config.YJ_REWEIGHT_QUANTILE)
    kept = np.flatnonzero(np.abs(y - np.median(y)) <= cutoff * scale)
    refit = _grid_fit(z, kept)
    return lmbda if refit is None else refit


def robust_transform(s):
    """
    Monotone Yeo-Johnson transform fitted on the central bulk

    The series is first standardized by median and scaled MAD. lambda is
    picked on the grid [-4, 4] step 0.05 by minimizing the trimmed
    negative log-likelihood of the central 80% of points (closest to the
    median), so outliers cannot drag the fit. One reweighting step then
    refits lambda on every point within the YJ_REWEIGHT_QUANTILE normal
    band of that first fit. The result is re-centered by its median and
    scaled by its scaled MAD. Rank order is preserved.

    Returns:
        (np.ndarray, TransformParams)

    Raises:
        ValueError: T < 20
        DegenerateSeriesError: zero MAD before or after the transform
    """
    values = _as_series(s, min_length=Config.MIN_TRANSFORM_LENGTH)
    pre_center = float(np.median(values))
    pre_scale = mad(values, scaled=True)
    if pre_scale <= _DEGENERATE_RTOL * max(np.max(np.abs(values)), 1.0):
        raise DegenerateSeriesError("robust transform needs a positive MAD")
    z = (values - pre_center) / pre_scale

    n_central = max(int(np.floor(Config.YJ_CENTRAL_FRACTION * len(z))), 3)
    central = np.argsort(np.abs(z), kind='stable')[:n_central]

    params = TransformParams(pre_center=pre_center, pre_scale=pre_scale)
    initial = _grid_fit(z, central)
    if initial is None:
        params.family = 'identity'
        params.warning = 'no lambda on the grid gave a finite criterion; identity used'
        logger.warning(f"Robust transform fell back to identity (T={len(z)})")
        y = z
    else:
        params.family = 'yeo-johnson'
        params.initial_lmbda = initial
        params.lmbda = _reweighted_fit(z, initial)
        y = stats.yeojohnson(z, params.lmbda)

    center = float(np.median(y))
    scale = mad(y, scaled=True)
    if scale <= 0:
        raise DegenerateSeriesError("transformed series has zero MAD")
    params.center = center
    params.scale = scale
    return (y - center) / scale, params


def apply_transform(s, params):
    """Apply previously fitted TransformParams to new values"""
    z = (np.asarray(s, dtype=np.float64) - params.pre_center) / params.pre_scale
    y = stats.yeojohnson(z, params.lmbda) if params.family == 'yeo-johnson' else z
    return (y - params.center) / params.scale


# ============================================
# UNIVARIATE OUTLIER IMPUTATION
# ============================================
def detect_univariate_outliers(s, mad_cut=Config.MAD_CUT):
    """
    Indices farther than mad_cut scaled MADs from the median

    Raises:
        DegenerateSeriesError: MAD is zero; skip or flag the component
    """
    values = _as_series(s, min_length=2)
    center = np.median(values)
    raw_mad = np.median(np.abs(values - center))
    if raw_mad <= 0:
        raise DegenerateSeriesError("MAD is zero; component cannot be screened")
    band = mad_cut * Config.MAD_SCALE * raw_mad
    return np.flatnonzero(np.abs(values - center) > band)


def impute_univariate(s, outliers):
    """
    Replace each outlier by the mean of its nearest non-outlier neighbours

    At either end of the series only one donor exists and its value is
    used, so the output keeps the input length.

    Raises:
        ValueError: index out of range, or every index is an outlier
    """
    values = _as_series(s)
    T = len(values)
    outliers = np.unique(np.asarray(outliers, dtype=np.intp))
    if len(outliers) == 0:
        return values.copy()
    if outliers[0] < 0 or outliers[-1] >= T:
        raise ValueError(f"outlier indices must be in [0, {T})")
    if len(outliers) == T:
        raise ValueError("every observation is an outlier; no donors left")

    is_donor = np.ones(T, dtype=bool)
    is_donor[outliers] = False
    idx = np.arange(T)

    # nearest donor at or before t, and at or after t (-1 / T when none)
    prev_donor = np.maximum.accumulate(np.where(is_donor, idx, -1))
    next_donor = np.minimum.accumulate(np.where(is_donor, idx, T)[::-1])[::-1]

    out = values.copy()
    before = prev_donor[outliers]
    after = next_donor[outliers]
    has_before = before >= 0
    has_after = after < T
    left = np.where(has_before, values[np.clip(before, 0, T - 1)], 0.0)
    right = np.where(has_after, values[np.clip(after, 0, T - 1)], 0.0)
    both = has_before & has_after
    out[outliers] = np.where(both, 0.5 * (left + right), np.where(has_before, left, right))
    return out


def impute_column(s, mad_cut=Config.MAD_CUT):
    """transform -> detect -> impute for one column"""
    transformed, params = robust_transform(s)
    outliers = detect_univariate_outliers(transformed, mad_cut)
    imputed = impute_univariate(transformed, outliers)
    return ImputationResult(imputed=imputed, outlier_indices=outliers, transform_params=params)


def impute_matrix(X, mad_cut=Config.MAD_CUT, workers=1):
    """
    Column-wise univariate outlier imputation

    Columns whose MAD is zero (before or after the transform) pass through
    unchanged with status 'passthrough'. Other per-column failures are
    recorded the same way.

    Returns:
        (DenseMatrix X0, list[ImputationResult])

    Raises:
        ScrubError: every column failed
    """
    values = X.values

    def run(j):
        column = values[:, j]
        try:
            return impute_column(column, mad_cut)
        except (ScrubError, ValueError) as e:
            logger.warning(f"Column {j} passed through unimputed: {e}")
            return ImputationResult(
                imputed=column.copy(),
                outlier_indices=np.empty(0, dtype=np.intp),
                status='passthrough',
                message=str(e),
            )

    results = parallel_map(run, range(X.cols), workers)
    if all(r.status != 'ok' for r in results):
        raise ScrubError(
            "univariate imputation failed for every column: "
            + "; ".join(r.message for r in results)
        )

    imputed = np.column_stack([r.imputed for r in results])
    return DenseMatrix(imputed, row_labels=X.row_labels, col_labels=X.col_labels), results
