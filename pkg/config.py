#!/usr/bin/env python3
"""
rscrub Configuration
Central configuration for the scrubbing library and CLI
This is the SINGLE SOURCE OF TRUTH for version number and run defaults.
All other files should import and use Config.VERSION.
"""

import os


def _get_thread_count():
    """
    Get worker count for parallel sections

    Priority:
    1. Environment variable RSCRUB_THREADS (0 = auto)
    2. Number of CPUs reported by the OS
    """
    raw = os.environ.get('RSCRUB_THREADS', '0').strip()
    try:
        threads = int(raw)
    except ValueError:
        print(f"Warning: ignoring invalid RSCRUB_THREADS={raw!r}")
        threads = 0

    if threads <= 0:
        threads = os.cpu_count() or 1

    return threads


class Config:
    """rscrub configuration"""

    # ============================================
    # APPLICATION
    # ============================================
    # ⚠️ SINGLE SOURCE OF TRUTH for version number
    VERSION = '1.2.0'
    APP_NAME = 'rscrub robust volume scrubbing'
    REPORT_SCHEMA = 2

    # ============================================
    # RUN DEFAULTS
    # ============================================
    ALPHA = 0.01
    BOOTSTRAP_REPS = 1000
    CI_LEVELS = (0.50, 0.80, 0.95)
    LB_LEVEL = 0.95             # active CI level for bootstrap_lb
    SEED = 0
    KURTOSIS_QUANTILE = 0.99
    MAD_CUT = 4.0
    MAD_SCALE = 1.4826
    DETREND_DEGREE = 2
    THRESHOLD_METHOD = 'empirical'
    THRESHOLD_METHODS = (
        'empirical', 'bootstrap_lb', 'theoretical',
        'bootstrap_mean', 'bootstrap_median', 'all',
    )
    MIN_BOOTSTRAP_REPS = 100

    # ============================================
    # MCD
    # ============================================
    MCD_N_STARTS = 500
    MCD_INITIAL_CSTEPS = 2
    MCD_SHORTLIST = 10
    MCD_MAX_ITER = 100
    MCD_TOL = 1e-9
    MCD_START_RETRIES = 10
    MCD_ORDER_DECIMALS = 8           # rounding of the distance key used to order rows before the search

    # ============================================
    # ROBUST TRANSFORM (Yeo-Johnson grid search)
    # ============================================
    YJ_LAMBDA_MIN = -4.0
    YJ_LAMBDA_MAX = 4.0
    YJ_LAMBDA_STEP = 0.05
    YJ_CENTRAL_FRACTION = 0.80
    YJ_REWEIGHT_QUANTILE = 0.995     # refit lambda on points within this normal quantile
    MIN_TRANSFORM_LENGTH = 20

    # ============================================
    # DETREND (bisquare IRLS)
    # ============================================
    BISQUARE_C = 4.685
    DETREND_MAX_ITER = 20
    DETREND_TOL = 1e-8

    # ============================================
    # KURTOSIS SELECTION
    # ============================================
    KURTOSIS_NULL_DRAWS = 5000
    KURTOSIS_NULL_SEED = 20240601

    # ============================================
    # PCA FALLBACK
    # ============================================
    VARIANCE_EXPLAINED = 0.9
    MIN_REDUCE_ROWS = 20

    # ============================================
    # SIMULATION
    # ============================================
    AR1_BURN_IN = 200
    BURST_MAGNITUDE = 10.0
    TOY_VOLUMES = 145
    TOY_NOISY_FRACTION = 0.4         # share of toy volumes in the high-variance artifact state
    TOY_NOISY_SCALE = 5.0
    MIN_MAC_VOLUMES = 10

    # ============================================
    # FILES
    # ============================================
    BINARY_MAGIC = b'RSCRUB1'
    MISSING_TOKENS = ('', 'na', 'nan', 'null', 'none', '?')

    # ============================================
    # PARALLELISM
    # ============================================
    # RSCRUB_THREADS caps parallelism (0 = auto)
    THREADS = _get_thread_count()

    # ============================================
    # LOGGING
    # ============================================
    LOG_DIR = os.environ.get('RSCRUB_LOG_DIR', '')
    LOG_LEVEL = os.environ.get('RSCRUB_LOG_LEVEL', 'WARNING')
    LOG_FORMAT = '[%(asctime)s] %(levelname)s in %(module)s:%(lineno)d: %(message)s'
    LOG_DATEFMT = '%Y-%m-%d %H:%M:%S'
    LOG_MAX_BYTES = 10 * 1024 * 1024
    LOG_BACKUPS = 10
