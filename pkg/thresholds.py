#!/usr/bin/env python3
"""
rscrub RD Cutoff Estimators
Scaled-F theoretical baseline, empirical quantile on imputed data and the
bootstrap quantile distribution with CI lower bounds
"""

import logging

import numpy as np
from scipy.stats import chi2, f as f_dist

from config import Config
from mcd import as_array, cholesky_lower, consistency_factor, default_h, fast_mcd, mahalanobis_sq, robust_distances
from models import BootstrapError, DegreesOfFreedomError, RdSeries, ThresholdEstimate
from utils import parallel_map, spawn_generators, substream, validate_ci_level, validate_probability

logger = logging.getLogger(__name__)

# Small-sample correction of the asymptotic degrees of freedom
_DF_INTERCEPT = 0.725
_DF_P_SLOPE = -0.00663
_DF_LOGN_SLOPE = -0.0780


def rd_quantile(distances, level):
    """Linear-interpolation (type 7) quantile of an RD array"""
    return float(np.quantile(np.asarray(distances, dtype=np.float64), level, method='linear'))


def _check_alpha(alpha):
    valid, msg = validate_probability(alpha, 'alpha')
    if not valid:
        raise ValueError(msg)


# ============================================
# THEORETICAL (SCALED F)
# ============================================
def _scatter_variance(n, p, h):
    """
    Asymptotic variance of a diagonal element of the consistent raw MCD
    scatter at the standard Gaussian, from its influence function.

    The influence function components are linear in (1, I, I*R) with
    R ~ chi2_p and I = 1{R <= q}, so their second moments come from the
    Gram matrix of that basis.
    """
    fraction = h / n
    q = chi2.ppf(fraction, p)
    s0 = chi2.cdf(q, p + 2) / fraction
    density = chi2.pdf(q, p)

    a = density * q ** 2 / (p * (p + 2))
    beta = fraction * s0 - 2.0 * a
    gamma = 2.0 * density * q ** 2 / (p ** 2 * (p + 2))

    e_i = fraction
    e_ir = p * chi2.cdf(q, p + 2)
    e_ir2 = p * (p + 2) * chi2.cdf(q, p + 4)
    gram = np.array([
        [1.0, e_i, e_ir],
        [e_i, e_i, e_ir],
        [e_ir, e_ir, e_ir2],
    ])

    denom = beta + p * gamma
    trace = np.array([(-p * fraction * s0 + q * fraction) / denom, -q / denom, 1.0 / denom])
    off_diag = np.array([0.0, 0.0, 1.0 / beta])
    diag = -np.array([
        -fraction * s0 + (q / p) * fraction - gamma * trace[0],
        -(q / p) - gamma * trace[1],
        -gamma * trace[2],
    ]) / beta

    return float(
        3.0 / (p * (p + 2)) * off_diag @ gram @ off_diag
        - (2.0 / p) * off_diag @ gram @ diag
        + diag @ gram @ diag
    )


def hardin_rocke_df(n, p, h=None):
    """
    Estimated Wishart degrees of freedom of the MCD scatter

    Returns:
        (m_asymptotic, m_predicted, c) where c = P(chi2_{p+2} < q) / (h/n)
        is the inverse consistency factor
    """
    h = default_h(n, p) if h is None else h
    if h >= n:
        return float(n), float(n), 1.0
    m_asy = 2.0 * n / _scatter_variance(n, p, h)
    m_pred = m_asy * np.exp(_DF_INTERCEPT + _DF_P_SLOPE * p + _DF_LOGN_SLOPE * np.log(n))
    return float(m_asy), float(m_pred), 1.0 / consistency_factor(h, n, p)


def theoretical_cutoff(n, p, h=None, alpha=Config.ALPHA, consistency_correction=True):
    """
    (1 - alpha) cutoff from the scaled-F approximation for RDs outside the MCD subset

    RD^2 ~ p*m/(m-p+1) * F(p, m-p+1) on the consistent scale; on the raw
    scale the quantile is multiplied by the consistency factor.

    Raises:
        DegreesOfFreedomError: estimated m <= p
    """
    _check_alpha(alpha)
    if n <= p:
        raise ValueError(f"theoretical_cutoff needs n > p, got n={n}, p={p}")
    h = default_h(n, p) if h is None else h
    m_asy, m, c = hardin_rocke_df(n, p, h)
    if m <= p:
        raise DegreesOfFreedomError(
            f"degrees-of-freedom estimate m={m:.3f} too small for n={n}, p={p}"
        )

    df2 = m - p + 1
    scale = p * m / df2
    if not consistency_correction:
        scale /= c
    cutoff_sq = scale * f_dist.ppf(1.0 - alpha, p, df2)
    return ThresholdEstimate(
        cutoff=float(np.sqrt(cutoff_sq)),
        method='theoretical',
        alpha=alpha,
        detail={'m': m, 'm_asymptotic': m_asy, 'c': c, 'df1': p, 'df2': df2, 'n': n, 'p': p, 'h': h},
    )


# ============================================
# EMPIRICAL
# ============================================
def empirical_cutoff(X0, alpha=Config.ALPHA, seed=Config.SEED, fit=None,
                     n_starts=Config.MCD_N_STARTS, consistency_correction=True, workers=1):
    """
    (1 - alpha) quantile of the RDs of the imputed matrix against its own MCD fit

    A fit may be passed in to share one MCD between estimators.
    """
    _check_alpha(alpha)
    if fit is None:
        fit = fast_mcd(X0, n_starts=n_starts, seed=seed,
                       consistency_correction=consistency_correction, workers=workers)
    rds = robust_distances(X0, fit)
    return ThresholdEstimate(
        cutoff=rd_quantile(rds.distances, 1.0 - alpha),
        method='empirical',
        alpha=alpha,
        detail={'n': int(len(rds)), 'h': int(fit.h)},
    )


# ============================================
# BOOTSTRAP
# ============================================
def bootstrap_quantiles(X0, alpha=Config.ALPHA, B=Config.BOOTSTRAP_REPS, seed=Config.SEED,
                        fit=None, n_starts=Config.MCD_N_STARTS, consistency_correction=True,
                        workers=1):
    """
    Bootstrap distribution of the (1 - alpha) RD quantile

    The included and excluded MCD subsets are resampled separately, each
    uniformly with replacement to its own size. Only the mean is refitted
    (on the resampled included rows); the main covariance stays fixed.
    RDs are taken over the union of both resamples.

    Returns:
        np.ndarray of B replicate quantiles, in replicate order

    Raises:
        ValueError: B below the minimum
        BootstrapError: the MCD fit excludes no rows
    """
    _check_alpha(alpha)
    if B < Config.MIN_BOOTSTRAP_REPS:
        raise ValueError(f"B must be >= {Config.MIN_BOOTSTRAP_REPS}, got {B}")
    values = as_array(X0)
    if fit is None:
        fit = fast_mcd(values, n_starts=n_starts, seed=seed,
                       consistency_correction=consistency_correction, workers=workers)

    included, excluded = fit.included, fit.excluded
    if len(excluded) == 0:
        raise BootstrapError("bootstrap requires excluded observations (h = n)")
    L = cholesky_lower(fit.covariance)
    level = 1.0 - alpha

    def replicate(rng):
        s1 = rng.choice(included, size=len(included), replace=True)
        s2 = rng.choice(excluded, size=len(excluded), replace=True)
        mean = values[s1].mean(axis=0)
        d2 = mahalanobis_sq(values[np.concatenate([s1, s2])], mean, L)
        return rd_quantile(np.sqrt(np.maximum(d2, 0.0)), level)

    rngs = spawn_generators(substream(seed, 'bootstrap'), B)
    return np.array(parallel_map(replicate, rngs, workers), dtype=np.float64)


def bootstrap_lb_cutoff(replicates, ci_level=Config.LB_LEVEL, alpha=Config.ALPHA):
    """
    Lower confidence bound of the bootstrap quantile distribution

    The cutoff is the (1 - ci_level)/2 quantile of the replicates, e.g.
    the 2.5th percentile for the 95% bound.
    """
    replicates = np.asarray(replicates, dtype=np.float64).ravel()
    if len(replicates) == 0:
        raise ValueError("replicates must not be empty")
    valid, msg = validate_ci_level(ci_level)
    if not valid:
        raise ValueError(msg)
    level = (1.0 - ci_level) / 2.0
    return ThresholdEstimate(
        cutoff=rd_quantile(replicates, level),
        method='bootstrap_lb',
        alpha=alpha,
        detail={'ci_level': float(ci_level), 'quantile_level': level, 'replicates': replicates},
    )


def bootstrap_summary_cutoff(replicates, statistic='mean', alpha=Config.ALPHA):
    """Mean or median of the bootstrap quantile distribution as the cutoff"""
    replicates = np.asarray(replicates, dtype=np.float64).ravel()
    if len(replicates) == 0:
        raise ValueError("replicates must not be empty")
    if statistic == 'mean':
        cutoff = float(np.mean(replicates))
    elif statistic == 'median':
        cutoff = rd_quantile(replicates, 0.5)
    else:
        raise ValueError(f"statistic must be 'mean' or 'median', got {statistic!r}")
    return ThresholdEstimate(
        cutoff=cutoff,
        method=f'bootstrap_{statistic}',
        alpha=alpha,
        detail={'replicates': replicates},
    )


# ============================================
# FLAGGING
# ============================================
def apply_cutoff(rds, t):
    """flag[i] = rds[i] > cutoff"""
    distances = rds.distances if isinstance(rds, RdSeries) else np.asarray(rds, dtype=np.float64)
    return distances > t.cutoff


def estimate_thresholds(X0, config, h=None, workers=1):
    """
    Every threshold config.threshold_method asks for

    Empirical and bootstrap estimators share one fresh MCD fit on X0.
    bootstrap_lb yields one estimate per CI level in config.ci_levels
    plus config.lb_level.

    Returns:
        list[ThresholdEstimate]
    """
    values = as_array(X0)
    n, p = values.shape
    method = config.threshold_method
    wanted = set(Config.THRESHOLD_METHODS[:-1]) if method == 'all' else {method}
    estimates = []

    if 'theoretical' in wanted:
        estimates.append(theoretical_cutoff(
            n, p, h=h, alpha=config.alpha, consistency_correction=config.consistency_correction
        ))

    if wanted - {'theoretical'}:
        fit = fast_mcd(values, h=h, n_starts=config.n_starts, seed=config.seed,
                       consistency_correction=config.consistency_correction, workers=workers)

        if 'empirical' in wanted:
            estimates.append(empirical_cutoff(values, config.alpha, fit=fit))

        if wanted & {'bootstrap_lb', 'bootstrap_mean', 'bootstrap_median'}:
            replicates = bootstrap_quantiles(
                values, config.alpha, config.bootstrap_reps, config.seed, fit=fit, workers=workers
            )
            if 'bootstrap_lb' in wanted:
                levels = sorted(set(config.ci_levels) | {config.lb_level})
                estimates.extend(bootstrap_lb_cutoff(replicates, level, config.alpha) for level in levels)
            for statistic in ('mean', 'median'):
                if f'bootstrap_{statistic}' in wanted:
                    estimates.append(bootstrap_summary_cutoff(replicates, statistic, config.alpha))

    for t in estimates:
        logger.info(f"Threshold {t.label}: cutoff {t.cutoff:.4f}")
    return estimates
