#!/usr/bin/env python3
"""
Mean Absolute Change Harness
Compares connectivity after method-based scrubbing against random removal
of the same number of volumes
"""

import logging

import numpy as np

from config import Config
from models import RunConfig, ScrubError
from scrub import Scrubber
from thresholds import apply_cutoff
from utils import parallel_map, spawn_generators, substream

logger = logging.getLogger(__name__)

# keeps arctanh finite for perfectly correlated pairs
_R_CLIP = 1.0 - 1e-12


def fisher_z_connectivity(ts):
    """Fisher-z of the Pearson correlation for every node pair (upper triangle, row-major)"""
    values = ts.values if hasattr(ts, 'values') else np.asarray(ts, dtype=np.float64)
    if values.shape[1] < 2:
        raise ValueError("connectivity needs at least 2 nodes")
    r = np.corrcoef(values, rowvar=False)
    upper = np.triu_indices(values.shape[1], k=1)
    return np.arctanh(np.clip(r[upper], -_R_CLIP, _R_CLIP))


def _subject_change(ts, flags, n_permutations, rng):
    values = ts.values
    T = values.shape[0]
    flags = np.asarray(flags, dtype=bool)
    if flags.shape != (T,):
        raise ValueError(f"flags length {flags.shape[0]} != T={T}")
    removed = int(flags.sum())
    if T - removed < Config.MIN_MAC_VOLUMES:
        raise ScrubError(
            f"scrubbing leaves {T - removed} volumes, need >= {Config.MIN_MAC_VOLUMES}"
        )

    z_scrubbed = fisher_z_connectivity(values[~flags])
    delta = np.zeros_like(z_scrubbed)
    for _ in range(n_permutations):
        keep = np.ones(T, dtype=bool)
        keep[rng.choice(T, size=removed, replace=False)] = False
        delta += z_scrubbed - fisher_z_connectivity(values[keep])
    return np.abs(delta / n_permutations)


def mac(fc_data, flags, cfg, seed=Config.SEED, workers=None):
    """
    Mean absolute change of connectivity

    For each subject the scrubbed Fisher-z connectivity is compared with
    n_permutations random removals of the same count; the change is
    averaged over permutations, made absolute, then averaged over pairs
    and subjects. Zero flags give exactly 0.

    Raises:
        ScrubError: a subject keeps fewer than MIN_MAC_VOLUMES volumes
    """
    if len(fc_data) != len(flags):
        raise ValueError(f"{len(fc_data)} subjects but {len(flags)} flag arrays")
    if len(fc_data) == 0:
        raise ValueError("mac needs at least one subject")
    if cfg.n_permutations < 1:
        raise ValueError("n_permutations must be >= 1")

    children = substream(seed, 'mac').spawn(len(fc_data))
    changes = parallel_map(
        lambda args: _subject_change(args[0], args[1], cfg.n_permutations, np.random.default_rng(args[2])),
        list(zip(fc_data, flags, children)),
        workers,
    )
    return float(np.mean([np.mean(c) for c in changes]))


def scrub_flags(fc_data, method, run_config=None, workers=None):
    """Flag each subject's node time series with the scrubbing pipeline"""
    base = (run_config or RunConfig()).to_dict()
    base.update(threshold_method=method, raw_lowdim=True)
    cfg = RunConfig.from_dict(base)
    scrubber = Scrubber(cfg, workers=1)
    return parallel_map(lambda ts: scrubber.run(ts).flags, fc_data, workers)


def cutoff_labels(methods, lb_levels=Config.CI_LEVELS):
    """Report labels for methods; bootstrap_lb expands to one label per CI level"""
    labels = []
    for method in methods:
        if method == 'bootstrap_lb':
            labels.extend(f"bootstrap_lb_{round(level * 100):d}" for level in lb_levels)
        else:
            labels.append(method)
    return list(dict.fromkeys(labels))


def scrub_flag_sets(fc_data, methods, lb_levels=Config.CI_LEVELS, run_config=None, workers=None):
    """
    Flags for several cutoffs from one pipeline run per subject

    Every cutoff comes from the same MCD fit and bootstrap replicates, so
    the censoring rates differ only through the threshold.

    Returns:
        dict of label -> per-subject flag arrays, in cutoff_labels order
    """
    base = (run_config or RunConfig()).to_dict()
    wanted = set(methods)
    method = wanted.pop() if len(wanted) == 1 else 'all'
    base.update(threshold_method=method, raw_lowdim=True, ci_levels=list(lb_levels))
    scrubber = Scrubber(RunConfig.from_dict(base), workers=1)
    reports = parallel_map(scrubber.run, fc_data, workers)

    flag_sets = {}
    for label in cutoff_labels(methods, lb_levels):
        flag_sets[label] = [
            apply_cutoff(r.rds, next(t for t in r.thresholds if t.label == label)) for r in reports
        ]
    return flag_sets


def random_equal_count(flags, seed=Config.SEED):
    """Random flags removing the same number of volumes per subject"""
    rngs = spawn_generators(substream(seed, 'random_flags'), len(flags))
    matched = []
    for f, rng in zip(flags, rngs):
        f = np.asarray(f, dtype=bool)
        mask = np.zeros(f.shape[0], dtype=bool)
        mask[rng.choice(f.shape[0], size=int(f.sum()), replace=False)] = True
        matched.append(mask)
    return matched


def mac_table(fc_data, method_flags, cfg, seed=Config.SEED, workers=None):
    """
    MAC per flagging method with its censoring rate

    Args:
        method_flags: mapping of method name -> per-subject flag arrays

    Returns:
        dict of columns (method, censoring_rate, mac)
    """
    total = sum(ts.rows for ts in fc_data)
    columns = {'method': [], 'censoring_rate': [], 'mac': []}
    for name, flags in method_flags.items():
        rate = sum(int(np.sum(f)) for f in flags) / total
        value = mac(fc_data, flags, cfg, seed=seed, workers=workers)
        logger.info(f"MAC {name}: {value:.4f} at censoring rate {rate:.4f}")
        columns['method'].append(name)
        columns['censoring_rate'].append(rate)
        columns['mac'].append(value)
    return columns
