#!/usr/bin/env python3
"""
Synthetic Data Generators
Outlier-free Gaussian / AR(1) matrices, burst artifacts, toy sessions and
functional-connectivity subjects

Every generator takes `seed` as an int, SeedSequence or Generator.
"""

import numpy as np
from scipy import signal

from config import Config
from models import ComponentMatrix, DenseMatrix


def _rng(seed):
    return np.random.default_rng(seed)


def gen_iid_gaussian(n, p, seed=Config.SEED):
    """n x p standard-normal matrix"""
    if n < 1 or p < 1:
        raise ValueError(f"need n >= 1 and p >= 1, got n={n}, p={p}")
    return DenseMatrix(_rng(seed).standard_normal((n, p)))


def _ar1_columns(rng, n, p, phi):
    burn = Config.AR1_BURN_IN
    start = rng.standard_normal(p)
    innovations = np.sqrt(1.0 - phi ** 2) * rng.standard_normal((n + burn, p))
    series, _ = signal.lfilter([1.0], [1.0, -phi], innovations, axis=0, zi=(phi * start)[None, :])
    return series[burn:]


def gen_ar1(n, p, phi, seed=Config.SEED):
    """
    n x p matrix of independent stationary Gaussian AR(1) columns

    Innovation variance 1 - phi^2 keeps the marginal variance at 1. The
    chain starts from its stationary law and the first AR1_BURN_IN steps
    are discarded.
    """
    if not abs(phi) < 1:
        raise ValueError(f"|phi| must be < 1, got {phi}")
    if n < 1 or p < 1:
        raise ValueError(f"need n >= 1 and p >= 1, got n={n}, p={p}")
    return DenseMatrix(_ar1_columns(_rng(seed), n, p, phi))


def inject_bursts(X, volumes, magnitude=Config.BURST_MAGNITUDE, seed=Config.SEED):
    """
    Add a burst artifact to the given rows

    All bursts share one random unit direction; each row gets
    magnitude times that direction with a random sign.
    """
    rng = _rng(seed)
    values = np.array(X.values)
    volumes = np.asarray(volumes, dtype=np.intp)
    direction = rng.standard_normal(values.shape[1])
    direction /= np.linalg.norm(direction)
    signs = rng.choice([-1.0, 1.0], size=len(volumes))
    values[volumes] += magnitude * signs[:, None] * direction[None, :]
    return DenseMatrix(values, row_labels=X.row_labels, col_labels=X.col_labels)


def gen_toy_session(seed=Config.SEED, T=Config.TOY_VOLUMES, n_components=8, n_voxels=200):
    """
    Toy single-session component decomposition

    Up to four artifact components share a high-variance state on
    TOY_NOISY_FRACTION of the volumes (scale mixture, strongly
    non-Gaussian); the rest are smooth AR(1). Component 1 also carries
    bursts on quiet volumes. Spatial maps are Gaussian.

    Returns:
        (ComponentMatrix, np.ndarray of burst volumes)
    """
    if n_components < 2:
        raise ValueError("toy session needs at least 2 components")
    rng = _rng(seed)
    A = _ar1_columns(rng, T, n_components, 0.3)

    n_artifact = min(4, n_components // 2)
    noisy = np.zeros(T, dtype=bool)
    noisy[rng.choice(T, size=int(round(Config.TOY_NOISY_FRACTION * T)), replace=False)] = True
    scale = np.where(noisy, Config.TOY_NOISY_SCALE, 1.0)
    A[:, :n_artifact] = scale[:, None] * rng.standard_normal((T, n_artifact))

    quiet = np.flatnonzero(~noisy[5:T - 5]) + 5
    bursts = np.sort(rng.choice(quiet, size=max(T // 20, 1), replace=False))
    A[bursts, 1] += rng.choice([-1.0, 1.0], size=len(bursts)) * 8.0

    S = rng.standard_normal((n_components, n_voxels))
    labels = [f"IC{k + 1}" for k in range(n_components)]
    cm = ComponentMatrix(
        DenseMatrix(A, col_labels=labels),
        source='external_ica',
        spatial=DenseMatrix(S, row_labels=labels),
    )
    return cm, bursts


def gen_fc_subjects(n_subjects, T, n_nodes, burst_count, seed=Config.SEED, n_factors=3):
    """
    Node time series with latent network structure and burst artifacts

    Each subject mixes n_factors shared AR(1) factors through its own
    loadings plus unit node noise; burst_count volumes then receive a
    strong common artifact across all nodes.

    Returns:
        (list[DenseMatrix], list[np.ndarray]) time series and the true
        burst volumes per subject
    """
    if n_nodes < 3:
        raise ValueError(f"n_nodes must be >= 3, got {n_nodes}")
    if not 0 <= burst_count < T:
        raise ValueError(f"burst_count must be in [0, T), got {burst_count}")
    subjects, bursts = [], []
    for child in _seed_sequence(seed).spawn(n_subjects):
        rng = _rng(child)
        factors = _ar1_columns(rng, T, n_factors, 0.5)
        loadings = rng.standard_normal((n_nodes, n_factors))
        ts = factors @ loadings.T + rng.standard_normal((T, n_nodes))
        volumes = np.sort(rng.choice(T, size=burst_count, replace=False))
        artifact = rng.standard_normal(n_nodes)
        ts[volumes] += Config.BURST_MAGNITUDE * rng.standard_normal((len(volumes), 1)) * artifact[None, :]
        subjects.append(DenseMatrix(ts))
        bursts.append(volumes)
    return subjects, bursts


def _seed_sequence(seed):
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if isinstance(seed, np.random.Generator):
        return np.random.SeedSequence(int(seed.integers(2 ** 63)))
    return np.random.SeedSequence(int(seed))
