#!/usr/bin/env python3
"""Tests for robust univariate statistics and imputation"""

import numpy as np
import pytest

from models import DegenerateSeriesError, DenseMatrix, ScrubError
from robustcore import (
    apply_transform,
    detect_univariate_outliers,
    excess_kurtosis,
    impute_column,
    impute_matrix,
    impute_univariate,
    mad,
    median,
    robust_detrend,
    robust_transform,
)


# ============================================
# MEDIAN / MAD / KURTOSIS
# ============================================
def test_median_even_length():
    assert median([4, 1, 3, 2]) == 2.5


def test_mad_raw_and_scaled():
    s = [1, 2, 3, 4, 100]
    assert mad(s) == 1.0
    assert mad(s, scaled=True) == pytest.approx(1.4826)


def test_mad_constant_is_zero():
    assert mad([3.0] * 10) == 0.0


@pytest.mark.parametrize('a, b', [(3.0, 7.0), (-0.25, -100.0), (1.0, 1e6)])
def test_mad_location_invariant_scale_equivariant(rng, a, b):
    s = rng.standard_normal(301)
    assert mad(a * s + b) == pytest.approx(abs(a) * mad(s), rel=1e-9)


def test_excess_kurtosis_gaussian_near_zero(rng):
    assert abs(excess_kurtosis(rng.standard_normal(200000))) < 0.05


def test_excess_kurtosis_uniform(rng):
    # uniform law: -1.2
    assert excess_kurtosis(rng.uniform(size=200000)) == pytest.approx(-1.2, abs=0.02)


def test_excess_kurtosis_spike_is_positive(rng):
    s = rng.standard_normal(500)
    s[::50] += 15.0
    assert excess_kurtosis(s) > 3.0


def test_excess_kurtosis_constant():
    with pytest.raises(DegenerateSeriesError):
        excess_kurtosis(np.full(50, 2.0))


def test_excess_kurtosis_two_point_series():
    assert excess_kurtosis(np.tile([-1.0, 1.0], 50)) == pytest.approx(-2.0, abs=1e-12)


def test_excess_kurtosis_affine_invariant(rng):
    s = rng.standard_t(5, size=1000)
    assert abs(excess_kurtosis(2.5 * s - 4.0) - excess_kurtosis(s)) < 1e-10


def test_excess_kurtosis_single_huge_value(rng):
    s = rng.standard_normal(1000)
    s[500] = 100.0
    assert excess_kurtosis(s) > 50.0


# ============================================
# DETREND
# ============================================
def test_detrend_removes_quadratic(rng):
    t = np.linspace(0, 1, 400)
    s = 5.0 + 3.0 * t - 4.0 * t ** 2 + rng.standard_normal(400)
    d = robust_detrend(s)
    assert np.median(d) == pytest.approx(0.0, abs=1e-12)
    assert mad(d, scaled=True) == pytest.approx(1.0)
    assert abs(np.corrcoef(d, t)[0, 1]) < 0.1


def test_detrend_resists_spikes(rng):
    t = np.linspace(-1, 1, 300)
    clean = 2.0 * t + 0.1 * rng.standard_normal(300)
    spiked = clean.copy()
    spiked[::30] += 50.0
    d_clean = robust_detrend(clean)
    d_spiked = robust_detrend(spiked)
    others = np.setdiff1d(np.arange(300), np.arange(0, 300, 30))
    assert np.max(np.abs(d_clean[others] - d_spiked[others])) < 0.5
    assert np.all(d_spiked[::30] > 20.0)


def test_detrend_exact_polynomial_is_degenerate():
    t = np.linspace(0, 1, 50)
    with pytest.raises(DegenerateSeriesError):
        robust_detrend(1.0 + 2.0 * t + t ** 2)


def test_detrend_too_short():
    with pytest.raises(ValueError):
        robust_detrend([1.0, 2.0, 3.0, 4.0], degree=2)


# ============================================
# ROBUST TRANSFORM
# ============================================
def test_transform_preserves_rank_order(rng):
    s = rng.lognormal(size=300)
    y, params = robust_transform(s)
    np.testing.assert_array_equal(np.argsort(s, kind='stable'), np.argsort(y, kind='stable'))
    assert params.family == 'yeo-johnson'


def test_transform_standardizes(rng):
    y, _ = robust_transform(rng.gamma(2.0, size=500))
    assert np.median(y) == pytest.approx(0.0, abs=1e-12)
    assert mad(y, scaled=True) == pytest.approx(1.0)


def test_transform_symmetrizes_skewed_bulk(rng):
    def asymmetry(v):
        q10, q50, q90 = np.quantile(v, [0.1, 0.5, 0.9])
        return abs((q90 - q50) - (q50 - q10)) / (q90 - q10)

    s = rng.lognormal(sigma=0.8, size=2000)
    y, params = robust_transform(s)
    assert params.lmbda < 1.0
    assert asymmetry(y) < asymmetry(s)


def _bowley(v):
    q1, q2, q3 = np.quantile(v, [0.25, 0.5, 0.75])
    return (q3 + q1 - 2.0 * q2) / (q3 - q1)


@pytest.mark.parametrize('seed', [0, 1, 2])
def test_transform_gaussian_keeps_lambda_one(seed):
    s = np.random.default_rng(seed).standard_normal(5000)
    y, params = robust_transform(s)
    assert abs(params.lmbda - 1.0) <= 0.05 + 1e-9
    standardized = (s - np.median(s)) / mad(s, scaled=True)
    assert np.corrcoef(y, standardized)[0, 1] > 0.999


@pytest.mark.parametrize('seed', [0, 1, 2])
def test_transform_lognormal_halves_central_skew(seed):
    s = np.exp(np.random.default_rng(seed).standard_normal(5000))
    y, params = robust_transform(s)
    assert abs(params.lmbda) <= 0.25
    assert params.initial_lmbda < 1.0
    assert abs(_bowley(y)) <= 0.5 * _bowley(s)


def test_transform_keeps_outliers_in_tail(rng):
    s = rng.standard_normal(400)
    s[7] = 40.0
    y, _ = robust_transform(s)
    assert y[7] > 8.0


def test_apply_transform_matches_fit(rng):
    s = rng.gamma(3.0, size=200)
    y, params = robust_transform(s)
    np.testing.assert_allclose(apply_transform(s, params), y)


def test_transform_constant_series():
    with pytest.raises(DegenerateSeriesError):
        robust_transform(np.full(40, 1.0))


def test_transform_too_short(rng):
    with pytest.raises(ValueError):
        robust_transform(rng.standard_normal(19))


# ============================================
# OUTLIER DETECTION / IMPUTATION
# ============================================
def test_detect_outliers():
    s = np.array([0.0, 1.0, -1.0, 0.5, -0.5, 30.0])
    np.testing.assert_array_equal(detect_univariate_outliers(s, 4.0), [5])


def test_detect_outliers_zero_mad():
    with pytest.raises(DegenerateSeriesError):
        detect_univariate_outliers([1.0, 1.0, 1.0, 5.0])


def test_impute_worked_trace():
    out = impute_univariate([1.0, 100.0, 200.0, 4.0], [1, 2])
    np.testing.assert_array_equal(out, [1.0, 2.5, 2.5, 4.0])


def test_impute_boundary_single_donor():
    np.testing.assert_array_equal(impute_univariate([100.0, 2.0, 3.0], [0]), [2.0, 2.0, 3.0])
    np.testing.assert_array_equal(impute_univariate([1.0, 2.0, 300.0], [2]), [1.0, 2.0, 2.0])


def test_impute_no_outliers_is_identity():
    np.testing.assert_array_equal(impute_univariate([1.0, 2.0], []), [1.0, 2.0])


def test_impute_all_outliers():
    with pytest.raises(ValueError):
        impute_univariate([1.0, 2.0], [0, 1])


def test_impute_index_out_of_range():
    with pytest.raises(ValueError):
        impute_univariate([1.0, 2.0], [2])


def test_impute_matrix_passthrough_column(rng):
    values = np.column_stack([rng.standard_normal(100), np.full(100, 3.0)])
    values[10, 0] = 25.0
    X0, results = impute_matrix(DenseMatrix(values))
    assert results[0].status == 'ok'
    assert 10 in results[0].outlier_indices
    assert results[1].status == 'passthrough'
    np.testing.assert_array_equal(X0.values[:, 1], values[:, 1])
    assert abs(X0.values[10, 0]) < 4.0


def test_impute_matrix_all_columns_fail():
    with pytest.raises(ScrubError):
        impute_matrix(DenseMatrix(np.ones((30, 2))))


def test_impute_matrix_parallel_matches_sequential(rng):
    X = DenseMatrix(rng.standard_t(3, size=(150, 4)))
    a, _ = impute_matrix(X, workers=1)
    b, _ = impute_matrix(X, workers=4)
    np.testing.assert_array_equal(a.values, b.values)


def test_redetection_skips_imputed_points(rng):
    s = rng.standard_normal(600)
    s[[40, 41, 200, 333, 590]] = [12.0, -15.0, 20.0, -9.0, 11.0]
    result = impute_column(s)
    assert len(result.outlier_indices) >= 5
    again = detect_univariate_outliers(result.imputed, 4.0)
    assert np.intersect1d(again, result.outlier_indices).size == 0


def test_impute_matrix_recovers_injected_spikes(rng):
    T, K = 1000, 4
    values = rng.standard_normal((T, K))
    injected = []
    for j in range(K):
        rows = rng.choice(np.arange(1, T - 1), size=5, replace=False)
        values[rows, j] += rng.choice([-10.0, 10.0], size=5)
        injected.append(rows)
    _, results = impute_matrix(DenseMatrix(values))
    hits = sum(np.isin(rows, r.outlier_indices).sum() for rows, r in zip(injected, results))
    assert hits >= 0.9 * 5 * K
