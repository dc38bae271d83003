#!/usr/bin/env python3
"""
rscrub Minimum Covariance Determinant
FastMCD (random starts, C-steps, shortlist refinement) and robust distances
"""

import logging
import time

import numpy as np
from scipy import linalg
from scipy.stats import chi2

from config import Config
from models import DenseMatrix, McdFit, RdSeries, SingularCovarianceError
from utils import format_duration, parallel_map, spawn_generators, substream

logger = logging.getLogger(__name__)

# Cholesky pivots smaller than this (relative to the largest) mean singular
_SINGULAR_RTOL = 1e-12


def as_array(X):
    if isinstance(X, DenseMatrix):
        return X.values
    values = np.asarray(X, dtype=np.float64)
    return values.reshape(-1, 1) if values.ndim == 1 else values


def default_h(n, p):
    """Maximum-breakdown subset size floor((n + p + 1) / 2)"""
    return (n + p + 1) // 2


def consistency_factor(h, n, p):
    """
    Factor making the raw h-subset covariance consistent at the Gaussian

    (h/n) / P(chi2_{p+2} < q) with q the h/n quantile of chi2_p; 1 when h = n.
    """
    if h >= n:
        return 1.0
    fraction = h / n
    q = chi2.ppf(fraction, p)
    return float(fraction / chi2.cdf(q, p + 2))


# ============================================
# SUBSET STATISTICS
# ============================================
def cholesky_lower(covariance):
    """
    Lower Cholesky factor of a covariance matrix

    Raises:
        SingularCovarianceError: not positive definite
    """
    try:
        L = linalg.cholesky(covariance, lower=True, check_finite=False)
    except linalg.LinAlgError as e:
        raise SingularCovarianceError(f"covariance is not positive definite: {e}") from e
    diag = np.diag(L)
    if diag.min() <= _SINGULAR_RTOL * max(diag.max(), 1e-300):
        raise SingularCovarianceError("covariance is numerically singular")
    return L


def mahalanobis_sq(values, mean, L):
    """Squared Mahalanobis distances of rows given the lower Cholesky factor L"""
    z = linalg.solve_triangular(L, (values - mean).T, lower=True, check_finite=False)
    return np.einsum('ij,ij->j', z, z)


def subset_stats(values, subset):
    """Mean, covariance (divisor h - 1), Cholesky factor and log-determinant of rows in subset"""
    rows = values[subset]
    mean = rows.mean(axis=0)
    if len(subset) > 1:
        covariance = np.atleast_2d(np.cov(rows, rowvar=False, ddof=1))
    else:
        covariance = np.zeros((values.shape[1], values.shape[1]))
    L = cholesky_lower(covariance)
    logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
    return mean, covariance, L, logdet


def _closest(d2, h):
    # stable sort: ties at the h-th position go to the lowest row index
    return np.sort(np.argsort(d2, kind='stable')[:h])


# ============================================
# C-STEP
# ============================================
def c_step(X, subset, h=None):
    """
    One concentration step

    Refits mean/covariance on subset and returns the h rows with the
    smallest Mahalanobis distances (sorted indices). The covariance
    determinant of the returned subset never exceeds that of the input.

    Raises:
        SingularCovarianceError: subset covariance is singular
    """
    values = as_array(X)
    subset = np.asarray(subset, dtype=np.intp)
    h = len(subset) if h is None else h
    mean, _, L, _ = subset_stats(values, subset)
    return _closest(mahalanobis_sq(values, mean, L), h)


def _concentrate(values, subset, h, max_steps, tol):
    """Run C-steps until the subset repeats, logdet stalls or max_steps is hit"""
    _, _, _, logdet = subset_stats(values, subset)
    for _ in range(max_steps):
        new_subset = c_step(values, subset, h)
        _, _, _, new_logdet = subset_stats(values, new_subset)
        converged = np.array_equal(new_subset, subset) or abs(logdet - new_logdet) < tol
        subset, logdet = new_subset, new_logdet
        if converged:
            break
    return subset, logdet


def _run_start(values, h, rng):
    """Draw a (p+1)-subset, expand to h rows, run the initial C-steps"""
    n, p = values.shape
    for _ in range(Config.MCD_START_RETRIES):
        start = rng.choice(n, size=p + 1, replace=False)
        try:
            mean, _, L, _ = subset_stats(values, start)
            subset = _closest(mahalanobis_sq(values, mean, L), h)
            return _concentrate(values, subset, h, Config.MCD_INITIAL_CSTEPS, 0.0)
        except SingularCovarianceError:
            continue
    return None


# ============================================
# FAST MCD
# ============================================
def fast_mcd(X, h=None, n_starts=Config.MCD_N_STARTS, seed=Config.SEED,
             consistency_correction=True, workers=1):
    """
    FastMCD estimate of robust location and scatter

    Each start draws its own generator from the seed, so the result is
    identical for any worker count. The best MCD_SHORTLIST distinct
    subsets after the initial C-steps are iterated to convergence and the
    lowest determinant wins (earliest start on ties).

    Args:
        X: DenseMatrix or (n, p) array
        h: subset size, default floor((n + p + 1) / 2)
        consistency_correction: rescale the covariance to be consistent at
            the Gaussian model; the factor is kept in McdFit

    Raises:
        ValueError: n <= p + 1, or h outside [default_h, n]
        SingularCovarianceError: every start degenerated
    """
    values = as_array(X)
    n, p = values.shape
    if p < 1 or n <= p + 1:
        raise ValueError(f"fast_mcd needs n > p + 1, got n={n}, p={p}")
    h_min = default_h(n, p)
    h = h_min if h is None else int(h)
    if not (h_min <= h <= n):
        raise ValueError(f"h must be in [{h_min}, {n}], got {h}")
    if n_starts < 1:
        raise ValueError(f"n_starts must be >= 1, got {n_starts}")

    started = time.time()
    if h == n:
        best = np.arange(n, dtype=np.intp)
    else:
        best = _search(values, h, n_starts, seed, workers)

    mean, raw_cov, _, _ = subset_stats(values, best)
    factor = consistency_factor(h, n, p) if consistency_correction else 1.0
    covariance = raw_cov * factor
    fit = McdFit(
        mean=mean,
        covariance=covariance,
        included=best,
        n=n,
        h=h,
        log_determinant=float(np.sum(np.log(np.linalg.eigvalsh(covariance)))),
        consistency_factor=factor,
        raw_covariance=raw_cov,
    )
    logger.debug(f"fast_mcd n={n} p={p} h={h} starts={n_starts} in {format_duration(time.time() - started)}")
    return fit


def _canonical_order(values):
    """Rows sorted by classical Mahalanobis distance, lexicographically on ties"""
    keys = values.T[::-1]
    try:
        L = cholesky_lower(np.atleast_2d(np.cov(values, rowvar=False)))
    except SingularCovarianceError:
        return np.lexsort(keys)
    d2 = mahalanobis_sq(values, values.mean(axis=0), L)
    return np.lexsort(np.vstack([keys, np.round(d2, Config.MCD_ORDER_DECIMALS)]))


def _search(values, h, n_starts, seed, workers):
    # starts index rows of the canonical order: invariant to row permutation and affine maps
    order = _canonical_order(values)
    best = _search_sorted(values[order], h, n_starts, seed, workers)
    return np.sort(order[best])


def _search_sorted(values, h, n_starts, seed, workers):
    rngs = spawn_generators(substream(seed, 'fast_mcd'), n_starts)
    results = parallel_map(lambda rng: _run_start(values, h, rng), rngs, workers)
    candidates = [r for r in results if r is not None]
    if not candidates:
        raise SingularCovarianceError(
            f"all {n_starts} MCD starts gave singular covariances (retry budget {Config.MCD_START_RETRIES})"
        )

    shortlist = []
    seen = set()
    for subset, logdet in sorted(candidates, key=lambda c: c[1]):
        key = subset.tobytes()
        if key in seen:
            continue
        seen.add(key)
        shortlist.append(subset)
        if len(shortlist) == Config.MCD_SHORTLIST:
            break

    best, best_logdet = None, np.inf
    for subset in shortlist:
        try:
            subset, logdet = _concentrate(values, subset, h, Config.MCD_MAX_ITER, Config.MCD_TOL)
        except SingularCovarianceError:
            logger.debug("Dropping shortlisted subset that became singular")
            continue
        if logdet < best_logdet:
            best, best_logdet = subset, logdet
    if best is None:
        raise SingularCovarianceError("every shortlisted MCD subset became singular")
    return best


# ============================================
# ROBUST DISTANCES
# ============================================
def robust_distances(X, fit):
    """
    RD of every row against fit's mean and covariance

    Uses a Cholesky solve, never an explicit inverse.

    Raises:
        ValueError: column count differs from fit.p
    """
    values = as_array(X)
    if values.shape[1] != fit.p:
        raise ValueError(f"X has {values.shape[1]} columns but the fit has p={fit.p}")
    L = cholesky_lower(fit.covariance)
    return RdSeries(np.sqrt(np.maximum(mahalanobis_sq(values, fit.mean, L), 0.0)), fit)
