#!/usr/bin/env python3
"""
rscrub Scrubbing Pipeline
Dimension handling, kurtosis selection, detrend, MCD, imputation,
thresholds, flagging and artifact intensity maps
"""

import logging
import time
from contextlib import contextmanager
from functools import lru_cache

import numpy as np

from config import Config
from mcd import fast_mcd, robust_distances
from models import (
    ComponentMatrix,
    DegenerateSeriesError,
    DenseMatrix,
    RunConfig,
    ScrubError,
    ScrubReport,
    StageError,
    UnsupportedFeatureError,
)
from robustcore import excess_kurtosis, impute_matrix, robust_detrend
from thresholds import apply_cutoff, estimate_thresholds
from utils import format_duration, format_fraction, parallel_map

logger = logging.getLogger(__name__)

_NULL_CHUNK = 500


# ============================================
# DIMENSION HANDLING
# ============================================
def reduce_dimension(Y, target_q=None, raw_lowdim=False, variance_explained=Config.VARIANCE_EXPLAINED):
    """
    Turn a T x V matrix into component time courses

    raw_lowdim passes the matrix through unchanged when it has at most
    T/2 columns; wider matrices fall through to PCA. For PCA the columns
    are centered and the top-q principal component scores are returned,
    q being target_q or the smallest count reaching variance_explained of the total variance.
    The PCA loadings are kept as the spatial maps.

    Raises:
        ValueError: T < 20 or target_q > rank
        DegenerateSeriesError: matrix has rank 0
    """
    T, V = Y.shape
    if T < Config.MIN_REDUCE_ROWS:
        raise ValueError(f"reduce_dimension needs T >= {Config.MIN_REDUCE_ROWS}, got {T}")

    if raw_lowdim:
        if V <= T / 2:
            return ComponentMatrix(Y, source='raw_lowdim')
        logger.info(f"raw_lowdim input is {T}x{V}, wider than rows/2; reducing with PCA")

    centered = Y.values - Y.values.mean(axis=0)
    U, s, Vt = np.linalg.svd(centered, full_matrices=False)
    tol = s.max(initial=0.0) * max(T, V) * np.finfo(np.float64).eps
    rank = int(np.sum(s > tol))
    if rank == 0:
        raise DegenerateSeriesError("input matrix has rank 0 after centering")

    if target_q is not None:
        if target_q > rank:
            raise ValueError(f"target_q={target_q} exceeds the matrix rank {rank}")
        q = int(target_q)
    else:
        explained = np.cumsum(s[:rank] ** 2) / np.sum(s[:rank] ** 2)
        q = int(np.searchsorted(explained, variance_explained - 1e-12)) + 1
        q = min(q, rank, T - 1)

    scores = U[:, :q] * s[:q]
    labels = [f"PC{k + 1}" for k in range(q)]
    logger.info(f"PCA kept {q} of rank {rank} components ({T}x{V} input)")
    return ComponentMatrix(
        DenseMatrix(scores, row_labels=Y.row_labels, col_labels=labels),
        source='internal_pca',
        spatial=DenseMatrix(Vt[:q], row_labels=labels, col_labels=Y.col_labels),
    )


# ============================================
# KURTOSIS SELECTION
# ============================================
@lru_cache(maxsize=64)
def kurtosis_null_quantile(T, q_level):
    """
    q_level quantile of excess kurtosis for i.i.d. Gaussian series of length T

    Monte Carlo with a fixed seed, cached per (T, q_level).
    """
    rng = np.random.default_rng(np.random.SeedSequence([Config.KURTOSIS_NULL_SEED, int(T)]))
    draws = []
    remaining = Config.KURTOSIS_NULL_DRAWS
    while remaining > 0:
        size = min(_NULL_CHUNK, remaining)
        z = rng.standard_normal((size, T))
        z -= z.mean(axis=1, keepdims=True)
        m2 = np.mean(z ** 2, axis=1)
        m4 = np.mean(z ** 4, axis=1)
        draws.append(m4 / m2 ** 2 - 3.0)
        remaining -= size
    return float(np.quantile(np.concatenate(draws), q_level))


def component_kurtosis(cm):
    """Excess kurtosis per column; NaN for constant columns"""
    values = []
    for j in range(cm.n_components):
        try:
            values.append(excess_kurtosis(cm.data.column(j)))
        except DegenerateSeriesError:
            values.append(np.nan)
    return np.array(values, dtype=np.float64)


def select_high_kurtosis(cm, q_level=Config.KURTOSIS_QUANTILE, kurtosis=None):
    """
    Keep components whose excess kurtosis beats the Gaussian null quantile

    When none qualify the single highest-kurtosis column is kept and a
    warning logged. Output columns are a subset of the input columns in
    their original order.
    """
    if kurtosis is None:
        kurtosis = component_kurtosis(cm)
    ranked = np.where(np.isnan(kurtosis), -np.inf, kurtosis)
    threshold = kurtosis_null_quantile(cm.data.rows, q_level)
    keep = np.flatnonzero(ranked > threshold)
    if len(keep) == 0:
        keep = np.array([int(np.argmax(ranked))])
        logger.warning(
            f"No component exceeded the kurtosis null quantile {threshold:.3f}; "
            f"keeping column {cm.column_ids[keep[0]]}"
        )
    return _select(cm, keep)


def _select(cm, positions):
    positions = [int(j) for j in positions]
    spatial = None
    if cm.spatial is not None:
        rows = cm.spatial.values[positions]
        labels = None if cm.spatial.row_labels is None else [cm.spatial.row_labels[j] for j in positions]
        spatial = DenseMatrix(rows, row_labels=labels, col_labels=cm.spatial.col_labels)
    return ComponentMatrix(
        cm.data.select_columns(positions),
        source=cm.source,
        spatial=spatial,
        column_ids=[cm.column_ids[j] for j in positions],
    )


# ============================================
# PIPELINE
# ============================================
@contextmanager
def _stage(name):
    started = time.time()
    logger.info(f"Stage {name} started")
    try:
        yield
    except StageError:
        raise
    except (ScrubError, ValueError, np.linalg.LinAlgError) as e:
        logger.error(f"Stage {name} failed: {e}")
        raise StageError(name, e) from e
    except Exception as e:
        logger.error(f"Stage {name} failed unexpectedly: {e}", exc_info=True)
        raise StageError(name, e) from e
    logger.info(f"Stage {name} finished in {format_duration(time.time() - started)}")


class Scrubber:
    """
    Immutable pipeline bound to one validated RunConfig

    Safe to share between threads; run() keeps no state on the instance.
    """

    def __init__(self, config=None, workers=None):
        self.config = (config or RunConfig()).validate()
        self.workers = workers

    def components(self, data, spatial=None):
        """ComponentMatrix from raw data, or pass through a ComponentMatrix"""
        if isinstance(data, ComponentMatrix):
            return data
        cfg = self.config
        cm = reduce_dimension(
            data, target_q=cfg.n_components, raw_lowdim=cfg.raw_lowdim,
            variance_explained=cfg.variance_explained,
        )
        if spatial is not None and cm.source == 'raw_lowdim':
            cm = ComponentMatrix(cm.data, source='raw_lowdim', spatial=spatial)
        return cm

    def run(self, data, spatial=None):
        """
        Run the full pipeline

        Args:
            data: DenseMatrix (reduced per config) or ComponentMatrix
                (used as given, e.g. external ICA time courses)
            spatial: optional Q x V maps for raw_lowdim input

        Returns:
            ScrubReport

        Raises:
            StageError: tagged with the failing stage
        """
        cfg = self.config
        started = time.time()

        with _stage('reduce'):
            cm = self.components(data, spatial)

        with _stage('select'):
            kurtosis = component_kurtosis(cm)
            if cfg.select_components:
                selected = select_high_kurtosis(cm, cfg.kurtosis_quantile, kurtosis=kurtosis)
            else:
                selected = cm

        with _stage('detrend'):
            X = selected.data
            if cfg.detrend:
                columns = parallel_map(
                    lambda j: robust_detrend(X.column(j), cfg.detrend_degree), range(X.cols), self.workers
                )
                X = DenseMatrix(np.column_stack(columns), row_labels=X.row_labels, col_labels=X.col_labels)

        with _stage('mcd'):
            fit = fast_mcd(X, n_starts=cfg.n_starts, seed=cfg.seed,
                           consistency_correction=cfg.consistency_correction, workers=self.workers)
            rds = robust_distances(X, fit)

        with _stage('impute'):
            X0, imputation = impute_matrix(X, cfg.mad_cut, self.workers)

        with _stage('threshold'):
            estimates = estimate_thresholds(X0, cfg, workers=self.workers)

        report = ScrubReport(
            flags=np.zeros(len(rds), dtype=bool),
            rds=rds,
            thresholds=estimates,
            active_method=cfg.active_method,
            selected_components=list(selected.column_ids),
            kurtosis_values=kurtosis,
            config=cfg,
            diagnostics=[r.summary(column=cid) for cid, r in zip(selected.column_ids, imputation)],
        )

        with _stage('flag'):
            report.flags = apply_cutoff(rds, report.threshold())

        if cm.spatial is not None and report.flags.any():
            with _stage('artifact_map'):
                report.artifact_map = artifact_map(report, cm)

        logger.info(
            f"Flagged {int(report.flags.sum())}/{report.n_observations} volumes "
            f"({format_fraction(report.flag_fraction)}) with {report.active_label} "
            f"in {format_duration(time.time() - started)}"
        )
        return report


def scrub(data, config=None, spatial=None, workers=None):
    """Run the pipeline once; see Scrubber.run"""
    return Scrubber(config, workers).run(data, spatial)


# ============================================
# ARTIFACT MAP
# ============================================
def artifact_map(report, cm):
    """
    Mean absolute artifact intensity over flagged volumes

    For each flagged volume t the V-vector A*[t] @ S* is formed from the
    selected components; absolute values are averaged across volumes.
    Returns an empty array when nothing was flagged.

    Raises:
        UnsupportedFeatureError: cm has no spatial maps
    """
    if cm.spatial is None:
        raise UnsupportedFeatureError("artifact map needs spatial maps (S)")
    flagged = report.flagged_indices
    if len(flagged) == 0:
        logger.warning("No flagged volumes; artifact map is empty")
        return np.empty(0, dtype=np.float64)

    position = {cid: j for j, cid in enumerate(cm.column_ids)}
    missing = [cid for cid in report.selected_components if cid not in position]
    if missing:
        raise ValueError(f"selected components {missing} are not in the component matrix")
    cols = [position[cid] for cid in report.selected_components]

    A = cm.data.values[np.ix_(flagged, cols)]
    S = cm.spatial.values[cols]
    return np.mean(np.abs(A @ S), axis=0)
