#!/usr/bin/env python3
"""
rscrub Utility Functions
Validators, logging setup, seed sub-streams and ordered parallel map
"""

import logging
import math
import os
import sys
import zlib
from concurrent.futures import ThreadPoolExecutor
from logging.handlers import RotatingFileHandler

import numpy as np


# ============================================
# VALIDATION
# ============================================
# Validators return (is_valid, error_message); collect_errors gathers
# the failures into one list.

def validate_probability(value, name='probability'):
    """
    Validate an open-interval probability

    Returns:
        (bool, str): (is_valid, error_message)
    """
    try:
        value = float(value)
    except (ValueError, TypeError):
        return False, f"{name} must be a number"

    if not (0.0 < value < 1.0):
        return False, f"{name} must be in (0, 1), got {value}"

    return True, ""


def validate_alpha(alpha):
    """Validate significance level: 0 < alpha < 0.5"""
    valid, msg = validate_probability(alpha, 'alpha')
    if not valid:
        return valid, msg
    if alpha >= 0.5:
        return False, f"alpha must be < 0.5, got {alpha}"
    return True, ""


def validate_ci_level(level, name='ci_level'):
    """Validate a confidence level for lower bounds: 0.5 <= level < 1"""
    try:
        level = float(level)
    except (ValueError, TypeError):
        return False, f"{name} must be a number"

    # closed at 0.5: default levels include 0.50
    if not (0.5 <= level < 1.0):
        return False, f"{name} must be in [0.5, 1), got {level}"

    return True, ""


def validate_positive(value, name, minimum=None):
    """
    Validate a positive number, optionally with an inclusive minimum

    Returns:
        (bool, str): (is_valid, error_message)
    """
    try:
        number = float(value)
    except (ValueError, TypeError):
        return False, f"{name} must be a number"

    if math.isnan(number) or number <= 0:
        return False, f"{name} must be positive, got {value}"

    if minimum is not None and number < minimum:
        return False, f"{name} must be >= {minimum}, got {value}"

    return True, ""


def collect_errors(results):
    """Turn a list of (is_valid, message) pairs into the list of failure messages"""
    return [msg for valid, msg in results if not valid]


# ============================================
# LOGGING SETUP
# ============================================
def setup_logging(level='WARNING', log_dir=None):
    """
    Setup structured logging with rotation

    Console output goes to stderr.
    When log_dir is given, INFO+ goes to rscrub.log and ERROR+ to
    error.log, both rotated at 10 MB.
    """
    from config import Config

    root = logging.getLogger()
    root.handlers.clear()
    root.setLevel(logging.DEBUG)

    log_format = logging.Formatter(Config.LOG_FORMAT, datefmt=Config.LOG_DATEFMT)

    console = logging.StreamHandler(sys.stderr)
    console.setLevel(getattr(logging, str(level).upper(), logging.WARNING))
    console.setFormatter(log_format)
    root.addHandler(console)

    if log_dir:
        os.makedirs(log_dir, mode=0o755, exist_ok=True)

        info_handler = RotatingFileHandler(
            os.path.join(log_dir, 'rscrub.log'),
            maxBytes=Config.LOG_MAX_BYTES, backupCount=Config.LOG_BACKUPS
        )
        info_handler.setLevel(logging.INFO)
        info_handler.setFormatter(log_format)
        root.addHandler(info_handler)

        error_handler = RotatingFileHandler(
            os.path.join(log_dir, 'error.log'),
            maxBytes=Config.LOG_MAX_BYTES, backupCount=Config.LOG_BACKUPS
        )
        error_handler.setLevel(logging.ERROR)
        error_handler.setFormatter(log_format)
        root.addHandler(error_handler)

    logging.getLogger(__name__).info(f"{Config.APP_NAME} v{Config.VERSION} logging configured")


# ============================================
# RANDOMNESS
# ============================================
def substream(seed, name):
    """
    Named sub-stream of a run seed

    Every random consumer draws from its own SeedSequence keyed by
    (seed, crc32(name)).
    """
    return np.random.SeedSequence([int(seed), zlib.crc32(name.encode('utf-8'))])


def spawn_generators(seed_seq, count):
    """One independent Generator per task, fixed by task index"""
    return [np.random.default_rng(child) for child in seed_seq.spawn(count)]


# ============================================
# PARALLELISM
# ============================================
def resolve_workers(workers=None):
    """Worker count: explicit value, else Config.THREADS"""
    if workers is None or workers <= 0:
        from config import Config
        return Config.THREADS
    return int(workers)


def parallel_map(fn, items, workers=None):
    """Map fn over items on a thread pool, results in input order"""
    items = list(items)
    workers = min(resolve_workers(workers), max(len(items), 1))
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ============================================
# FORMATTING
# ============================================
def format_duration(seconds):
    """Format seconds to human readable duration"""
    if seconds < 1:
        return f"{seconds * 1000:.0f}ms"
    if seconds < 60:
        return f"{seconds:.1f}s"

    minutes = int(seconds // 60)
    hours = minutes // 60
    minutes = minutes % 60
    secs = int(seconds % 60)

    parts = []
    if hours > 0:
        parts.append(f"{hours}h")
    if minutes > 0:
        parts.append(f"{minutes}m")
    parts.append(f"{secs}s")
    return ' '.join(parts)


def format_fraction(value):
    """Format a rate as a percentage"""
    return f"{value * 100:.2f}%"
