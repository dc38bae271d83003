#!/usr/bin/env python3
"""
Shared pytest fixtures for the rscrub suite
"""

import os
import sys

import numpy as np
import pytest

# Add project root to path
ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, ROOT)

DATA_DIR = os.path.join(ROOT, 'data')


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False,
                     help='run long Monte Carlo acceptance suites')


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: long Monte Carlo run, needs --runslow')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip_slow = pytest.mark.skip(reason='needs --runslow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def toy_path():
    return os.path.join(DATA_DIR, 'toy_session.csv')


@pytest.fixture
def toy_spatial_path():
    return os.path.join(DATA_DIR, 'toy_spatial.csv')


@pytest.fixture
def fast_config():
    """RunConfig with fewer MCD starts and the minimum bootstrap size"""
    from models import RunConfig
    return RunConfig(n_starts=50, bootstrap_reps=100)
