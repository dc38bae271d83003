#!/usr/bin/env python3
"""
Long Monte Carlo acceptance runs

Skipped unless pytest is given --runslow.
"""

import time

import numpy as np
import pytest

from models import ComponentMatrix, DenseMatrix, MacConfig, RunConfig, SimConfig
from scrub import scrub
from simlab import fpr_experiment, gen_fc_subjects, gen_iid_gaussian, inject_bursts, mac, scrub_flags

pytestmark = pytest.mark.slow


# ============================================
# FALSE POSITIVE RATES
# ============================================
@pytest.mark.parametrize('model, phi, n, low, high', [
    ('iid_gaussian', 0.0, 1000, 0.005, 0.021),
    ('ar1', 0.4, 1000, 0.007, 0.023),
    ('ar1', 0.9, 200, 0.03, 0.09),
])
def test_theoretical_fpr(model, phi, n, low, high):
    sim = SimConfig(n=n, p=5, model=model, phi=phi, replicates=100, alpha=0.01, seed=101)
    result = fpr_experiment(sim, 'theoretical')
    assert low <= result.mean_fpr <= high


def test_theoretical_fpr_grows_with_autocorrelation():
    means = [
        fpr_experiment(SimConfig(n=1000, p=5, model=model, phi=phi, replicates=100, alpha=0.01, seed=102),
                       'theoretical').mean_fpr
        for model, phi in (('iid_gaussian', 0.0), ('ar1', 0.9))
    ]
    assert means[1] > means[0]


def test_empirical_fpr():
    sim = SimConfig(n=1000, p=5, replicates=1000, alpha=0.01, seed=202)
    result = fpr_experiment(sim, 'empirical')
    assert np.mean(result.per_replicate_fpr <= 0.02) >= 0.99
    assert 0.01 <= result.mean_fpr <= 0.02


def test_bootstrap_lb_fpr():
    sim = SimConfig(n=1000, p=5, replicates=1000, alpha=0.01, seed=303)
    result = fpr_experiment(sim, 'bootstrap_lb', RunConfig(bootstrap_reps=1000, lb_level=0.95))
    assert 0.012 <= result.mean_fpr <= 0.03
    assert np.mean(result.per_replicate_fpr >= 0.008) >= 0.95
    empirical = fpr_experiment(sim, 'empirical')
    assert result.mean_fpr > empirical.mean_fpr


def test_empirical_fpr_increases_with_alpha():
    means = [
        fpr_experiment(SimConfig(n=1000, p=5, replicates=100, alpha=a, seed=404), 'empirical').mean_fpr
        for a in (0.005, 0.01, 0.05)
    ]
    assert means[0] <= means[1] <= means[2]


# ============================================
# SENSITIVITY
# ============================================
def test_injected_bursts_majority_of_seeds():
    hits = 0
    for seed in range(20):
        volumes = np.sort(np.random.default_rng(seed).choice(1000, size=20, replace=False))
        Y = inject_bursts(gen_iid_gaussian(1000, 5, seed=seed), volumes, seed=seed)
        report = scrub(Y, RunConfig(raw_lowdim=True, select_components=False, seed=seed))
        hits += report.flags[volumes].sum() >= 18 and report.flag_fraction < 0.05
    assert hits > 10


def test_scrubbing_beats_random_removal():
    wins = 0
    for seed in range(20):
        subjects, _ = gen_fc_subjects(5, 200, 10, 10, seed=seed)
        cfg = MacConfig(n_subjects=5, n_nodes=10, n_permutations=20)
        flags = scrub_flags(subjects, 'empirical', RunConfig(seed=seed))
        rng = np.random.default_rng(seed)
        shuffled = [rng.permutation(f) for f in flags]
        wins += mac(subjects, flags, cfg, seed=seed) > mac(subjects, shuffled, cfg, seed=seed)
    assert wins > 10


# ============================================
# RUNTIME
# ============================================
def test_desk_scale_runtime():
    rng = np.random.default_rng(909)
    A = rng.standard_normal((1200, 30))
    A[rng.choice(1200, size=30, replace=False), :5] += 8.0
    cm = ComponentMatrix(DenseMatrix(A))
    config = RunConfig(threshold_method='bootstrap_lb', bootstrap_reps=1000)

    started = time.perf_counter()
    report = scrub(cm, config, workers=4)
    assert time.perf_counter() - started < 60.0
    assert report.n_observations == 1200
