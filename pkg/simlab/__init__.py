#!/usr/bin/env python3
"""
rscrub Simulation Lab
Synthetic generators and the FPR / MAC evaluation harnesses
"""

from .generators import gen_ar1, gen_fc_subjects, gen_iid_gaussian, gen_toy_session, inject_bursts
from .fpr import fpr_experiment, fpr_table
from .mac import (
    cutoff_labels,
    fisher_z_connectivity,
    mac,
    mac_table,
    random_equal_count,
    scrub_flag_sets,
    scrub_flags,
)

__all__ = [
    'gen_iid_gaussian',
    'gen_ar1',
    'inject_bursts',
    'gen_toy_session',
    'gen_fc_subjects',
    'fpr_experiment',
    'fpr_table',
    'fisher_z_connectivity',
    'mac',
    'mac_table',
    'scrub_flags',
    'scrub_flag_sets',
    'cutoff_labels',
    'random_equal_count',
]
