#!/usr/bin/env python3
"""
rscrub Domain Models
Dataclasses for matrices, fits, thresholds and reports, plus the error tree
"""

from dataclasses import dataclass, field, asdict
from typing import Optional
import logging

import numpy as np

from config import Config
from utils import (
    validate_probability,
    validate_alpha,
    validate_ci_level,
    validate_positive,
    collect_errors,
)

logger = logging.getLogger(__name__)


# ============================================
# ERRORS
# ============================================
class ScrubError(Exception):
    """Base class for all rscrub failures"""


class ConfigError(ScrubError):
    """Invalid run or simulation configuration"""


class MatrixParseError(ScrubError):
    """Delimited input could not be parsed (row/col are 1-based source coordinates)"""

    def __init__(self, message, row=None, col=None):
        self.row = row
        self.col = col
        where = ''
        if row is not None:
            where = f" (row {row}" + (f", column {col})" if col is not None else ")")
        super().__init__(f"{message}{where}")


class MissingValueError(MatrixParseError):
    """A missing-value token was found; missing data is unsupported"""


class EmptyMatrixError(ScrubError):
    """Input file holds no data"""


class MatrixFormatError(ScrubError):
    """Binary input is malformed"""


class ReportFormatError(ScrubError):
    """Report document is malformed or has an unknown schema"""


class DegenerateSeriesError(ScrubError):
    """Series has zero robust scale or is constant"""


class SingularCovarianceError(ScrubError):
    """Subset covariance is not positive definite"""


class DegreesOfFreedomError(ScrubError):
    """Estimated covariance degrees of freedom too small for the F approximation"""


class BootstrapError(ScrubError):
    """Bootstrap cannot run on the given MCD structure"""


class UnsupportedFeatureError(ScrubError):
    """Requested feature needs inputs that were not supplied"""


class StageError(ScrubError):
    """Pipeline stage failure, tagged with the stage name"""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {cause}")


# ============================================
# MATRICES
# ============================================
@dataclass(eq=False)
class DenseMatrix:
    """
    Row-major T x V matrix of 64-bit floats

    Rows are observations (volumes), columns are variables or components.
    The values array is copied and made read-only.
    """

    values: np.ndarray
    row_labels: Optional[list] = None
    col_labels: Optional[list] = None

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim == 1:
            values = values.reshape(-1, 1)
        if values.ndim != 2:
            raise ValueError(f"DenseMatrix needs 2-D values, got {values.ndim}-D")
        if values.shape[0] < 1 or values.shape[1] < 1:
            raise ValueError(f"DenseMatrix needs rows >= 1 and cols >= 1, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("DenseMatrix values must all be finite")
        values.flags.writeable = False
        self.values = values

        if self.row_labels is not None:
            self.row_labels = [str(x) for x in self.row_labels]
            if len(self.row_labels) != values.shape[0]:
                raise ValueError("row_labels length must equal rows")
        if self.col_labels is not None:
            self.col_labels = [str(x) for x in self.col_labels]
            if len(self.col_labels) != values.shape[1]:
                raise ValueError("col_labels length must equal cols")

    @property
    def rows(self):
        return self.values.shape[0]

    @property
    def cols(self):
        return self.values.shape[1]

    @property
    def shape(self):
        return self.values.shape

    def column(self, j):
        return self.values[:, j]

    def select_columns(self, indices):
        """Sub-matrix of the given columns, labels carried along"""
        indices = list(indices)
        labels = None
        if self.col_labels is not None:
            labels = [self.col_labels[j] for j in indices]
        return DenseMatrix(self.values[:, indices], row_labels=self.row_labels, col_labels=labels)


COMPONENT_SOURCES = ('external_ica', 'internal_pca', 'raw_lowdim')


@dataclass(eq=False)
class ComponentMatrix:
    """
    T x Q component time courses with provenance

    column_ids map each column back to its index in the matrix the
    components were first produced as, so selections stay traceable.
    """

    data: DenseMatrix
    source: str = 'external_ica'
    spatial: Optional[DenseMatrix] = None
    column_ids: Optional[tuple] = None

    def __post_init__(self):
        if self.source not in COMPONENT_SOURCES:
            raise ValueError(f"source must be one of {COMPONENT_SOURCES}, got {self.source!r}")
        if self.spatial is not None and self.spatial.rows != self.data.cols:
            raise ValueError(
                f"spatial maps need one row per component: {self.spatial.rows} != {self.data.cols}"
            )
        if self.column_ids is None:
            self.column_ids = tuple(range(self.data.cols))
        else:
            self.column_ids = tuple(int(j) for j in self.column_ids)
            if len(self.column_ids) != self.data.cols:
                raise ValueError("column_ids length must equal number of components")

    @property
    def n_components(self):
        return self.data.cols


# ============================================
# UNIVARIATE
# ============================================
@dataclass
class TransformParams:
    """Fitted robust transform: pre-standardize, Yeo-Johnson, re-standardize"""

    family: str = 'identity'
    lmbda: float = 1.0
    initial_lmbda: Optional[float] = None
    pre_center: float = 0.0
    pre_scale: float = 1.0
    center: float = 0.0
    scale: float = 1.0
    warning: Optional[str] = None

    def to_dict(self):
        return asdict(self)


@dataclass(eq=False)
class ImputationResult:
    """Per-column outcome of transform -> detect -> impute"""

    imputed: np.ndarray
    outlier_indices: np.ndarray
    transform_params: TransformParams = field(default_factory=TransformParams)
    status: str = 'ok'              # ok | passthrough
    message: str = ''

    def summary(self, column=None):
        """JSON-friendly diagnostics entry"""
        entry = {
            'status': self.status,
            'n_outliers': int(len(self.outlier_indices)),
            'outlier_indices': [int(t) for t in self.outlier_indices],
            'transform': self.transform_params.to_dict(),
        }
        if column is not None:
            entry['column'] = int(column)
        if self.message:
            entry['message'] = self.message
        return entry


# ============================================
# MCD
# ============================================
@dataclass(eq=False)
class McdFit:
    """
    Minimum covariance determinant solution

    mean/covariance are the sample moments of the included rows (divisor
    h - 1); covariance is multiplied by consistency_factor when the
    correction is on, raw_covariance keeps the unscaled matrix.
    """

    mean: np.ndarray
    covariance: np.ndarray
    included: Optional[np.ndarray] = None
    excluded: Optional[np.ndarray] = None
    log_determinant: Optional[float] = None
    n: int = 0
    h: int = 0
    consistency_factor: float = 1.0
    raw_covariance: Optional[np.ndarray] = None

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        self.covariance = np.atleast_2d(np.asarray(self.covariance, dtype=np.float64))
        p = self.mean.shape[0]
        if self.covariance.shape != (p, p):
            raise ValueError(f"covariance must be {p}x{p}, got {self.covariance.shape}")
        if self.included is None:
            self.included = np.arange(self.n, dtype=np.intp) if self.n else np.empty(0, dtype=np.intp)
        self.included = np.sort(np.asarray(self.included, dtype=np.intp))
        if not self.n:
            self.n = int(len(self.included))
        if not self.h:
            self.h = int(len(self.included))
        if self.excluded is None:
            self.excluded = np.setdiff1d(np.arange(self.n, dtype=np.intp), self.included)
        self.excluded = np.sort(np.asarray(self.excluded, dtype=np.intp))
        if self.log_determinant is None:
            self.log_determinant = float(np.linalg.slogdet(self.covariance)[1])
        if self.raw_covariance is None:
            self.raw_covariance = self.covariance / self.consistency_factor

    @property
    def determinant(self):
        """exp(log_determinant); inf when it overflows"""
        with np.errstate(over='ignore'):
            return float(np.exp(self.log_determinant))

    @property
    def p(self):
        return self.mean.shape[0]


@dataclass(eq=False)
class RdSeries:
    """Robust distances of every row against one MCD fit"""

    distances: np.ndarray
    fit: McdFit

    def __post_init__(self):
        self.distances = np.asarray(self.distances, dtype=np.float64)

    def __len__(self):
        return len(self.distances)


# ============================================
# THRESHOLDS
# ============================================
THRESHOLD_TAGS = ('theoretical', 'empirical', 'bootstrap_lb', 'bootstrap_mean', 'bootstrap_median')


@dataclass(eq=False)
class ThresholdEstimate:
    """RD cutoff (RD scale, not RD^2) with its method tag and diagnostics"""

    cutoff: float
    method: str
    alpha: float
    detail: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in THRESHOLD_TAGS:
            raise ValueError(f"unknown threshold method {self.method!r}")
        self.cutoff = float(self.cutoff)
        if not np.isfinite(self.cutoff) or self.cutoff < 0:
            raise ValueError(f"cutoff must be finite and >= 0, got {self.cutoff}")

    @property
    def label(self):
        """Method tag, suffixed with the CI level for bootstrap lower bounds"""
        if self.method == 'bootstrap_lb' and 'ci_level' in self.detail:
            return f"bootstrap_lb_{round(self.detail['ci_level'] * 100):d}"
        return self.method


# ============================================
# RUN CONFIGURATION
# ============================================
@dataclass(frozen=True)
class RunConfig:
    """
    Per-run configuration

    Defaults come from Config. Call validate() before use; it raises one
    ConfigError naming every violated constraint.
    """

    alpha: float = Config.ALPHA
    bootstrap_reps: int = Config.BOOTSTRAP_REPS
    ci_levels: tuple = Config.CI_LEVELS
    seed: int = Config.SEED
    kurtosis_quantile: float = Config.KURTOSIS_QUANTILE
    mad_cut: float = Config.MAD_CUT
    detrend_degree: int = Config.DETREND_DEGREE
    threshold_method: str = Config.THRESHOLD_METHOD
    lb_level: float = Config.LB_LEVEL
    n_starts: int = Config.MCD_N_STARTS
    consistency_correction: bool = True
    detrend: bool = True
    select_components: bool = True
    raw_lowdim: bool = False
    n_components: Optional[int] = None
    variance_explained: float = Config.VARIANCE_EXPLAINED

    def validate(self):
        """Raise ConfigError if any field is out of range; return self otherwise"""
        errors = collect_errors([
            validate_alpha(self.alpha),
            validate_positive(self.bootstrap_reps, 'bootstrap_reps', minimum=Config.MIN_BOOTSTRAP_REPS),
            validate_probability(self.kurtosis_quantile, 'kurtosis_quantile'),
            validate_positive(self.mad_cut, 'mad_cut'),
            validate_ci_level(self.lb_level, 'lb_level'),
            validate_positive(self.n_starts, 'n_starts', minimum=1),
            validate_probability(self.variance_explained, 'variance_explained'),
        ])
        if not self.ci_levels:
            errors.append("ci_levels must not be empty")
        for level in self.ci_levels:
            valid, msg = validate_ci_level(level, 'ci_level')
            if not valid:
                errors.append(msg)
        if self.threshold_method not in Config.THRESHOLD_METHODS:
            errors.append(
                f"threshold_method must be one of: {', '.join(Config.THRESHOLD_METHODS)}"
            )
        if not isinstance(self.detrend_degree, (int, np.integer)) or self.detrend_degree < 0:
            errors.append("detrend_degree must be a non-negative integer")
        if self.n_components is not None and self.n_components < 1:
            errors.append("n_components must be >= 1")
        if not isinstance(self.seed, (int, np.integer)) or not (0 <= self.seed < 2 ** 64):
            errors.append("seed must be an unsigned 64-bit integer")

        if errors:
            raise ConfigError("; ".join(errors))
        return self

    @property
    def active_method(self):
        """Method whose cutoff drives the flags; `all` reports empirical"""
        return 'empirical' if self.threshold_method == 'all' else self.threshold_method

    def to_dict(self):
        data = asdict(self)
        data['ci_levels'] = [float(c) for c in self.ci_levels]
        return data

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        if 'ci_levels' in data:
            data['ci_levels'] = tuple(data['ci_levels'])
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            logger.warning(f"Ignoring unknown RunConfig keys: {sorted(unknown)}")
        return cls(**{k: v for k, v in data.items() if k in known})


# ============================================
# REPORT
# ============================================
@dataclass(eq=False)
class ScrubReport:
    """
    Serializable outcome of one scrubbing run

    flags[i] is true iff rds.distances[i] exceeds the cutoff of the
    active threshold.
    """

    flags: np.ndarray
    rds: RdSeries
    thresholds: list
    active_method: str
    selected_components: list
    kurtosis_values: np.ndarray
    config: RunConfig
    diagnostics: list = field(default_factory=list)
    artifact_map: Optional[np.ndarray] = None

    def __post_init__(self):
        self.flags = np.asarray(self.flags, dtype=bool)
        self.kurtosis_values = np.asarray(self.kurtosis_values, dtype=np.float64)
        self.selected_components = [int(j) for j in self.selected_components]

    @property
    def n_observations(self):
        return len(self.flags)

    @property
    def flagged_indices(self):
        return np.flatnonzero(self.flags)

    @property
    def flag_fraction(self):
        return float(self.flags.mean()) if len(self.flags) else 0.0

    def threshold(self, label=None):
        """Look up a threshold by label; default is the active one"""
        label = label or self.active_label
        for estimate in self.thresholds:
            if estimate.label == label or estimate.method == label:
                return estimate
        raise KeyError(f"no threshold labelled {label!r}")

    @property
    def active_label(self):
        if self.active_method == 'bootstrap_lb':
            return f"bootstrap_lb_{round(self.config.lb_level * 100):d}"
        return self.active_method


# ============================================
# SIMULATION
# ============================================
SIM_MODELS = ('iid_gaussian', 'ar1')


@dataclass(frozen=True)
class SimConfig:
    """Outlier-free simulation setup for false positive rate experiments"""

    n: int = 1000
    p: int = 5
    model: str = 'iid_gaussian'
    phi: float = 0.0
    replicates: int = 100
    alpha: float = Config.ALPHA
    seed: int = Config.SEED

    def __post_init__(self):
        if self.model not in SIM_MODELS:
            raise ConfigError(f"model must be one of {SIM_MODELS}, got {self.model!r}")
        if not abs(self.phi) < 1:
            raise ConfigError(f"|phi| must be < 1, got {self.phi}")
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")
        if self.n <= self.p + 1 or self.p < 1:
            raise ConfigError(f"need n > p + 1 and p >= 1, got n={self.n}, p={self.p}")


@dataclass(eq=False)
class FprResult:
    """Per-replicate false positive rates for one threshold method"""

    per_replicate_fpr: np.ndarray
    method: str
    sim: Optional[SimConfig] = None

    def __post_init__(self):
        self.per_replicate_fpr = np.asarray(self.per_replicate_fpr, dtype=np.float64)

    @property
    def mean_fpr(self):
        return float(np.mean(self.per_replicate_fpr))


@dataclass(frozen=True)
class MacConfig:
    """Mean absolute change setup: S subjects, P = n_nodes choose 2 pairs, R permutations"""

    n_subjects: int = 10
    n_nodes: int = 20
    n_permutations: int = 100
    scrub_method: str = 'empirical'

    @property
    def n_pairs(self):
        return self.n_nodes * (self.n_nodes - 1) // 2

    def validate(self):
        """Check the harness invariants (n_nodes >= 3, R >= 10)"""
        errors = collect_errors([
            validate_positive(self.n_subjects, 'n_subjects', minimum=1),
            validate_positive(self.n_nodes, 'n_nodes', minimum=3),
            validate_positive(self.n_permutations, 'n_permutations', minimum=10),
        ])
        if errors:
            raise ConfigError("; ".join(errors))
        return self
