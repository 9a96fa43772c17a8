import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import ClassVar, Dict, List, Optional, Tuple

import numpy as np

from lossbudget.exceptions import (ConfigurationError, InsufficientPointsError,
                                   InvalidTraceError, KindMismatchError,
                                   LabelMismatchError, NonPositiveInputError,
                                   ShapeMismatchError, UnitMismatchError)

# participation unit -> unit of the matching loss factor, so that p * gamma is dimensionless
PARTICIPATION_UNITS = {
    'dimensionless': 'dimensionless',
    'S/m': 'ohm*m',
    '1/ohm': 'ohm',
}
GAMMA_UNITS = tuple(PARTICIPATION_UNITS.values())

_UNIT_ALIASES = {
    None: 'dimensionless',
    '': 'dimensionless',
    '1': 'dimensionless',
    'S m^-1': 'S/m',
    '1/Ω': '1/ohm',
    '1/Ohm': '1/ohm',
    'Ω^-1': '1/ohm',
    'S': '1/ohm',
    'Ω·m': 'ohm*m',
    'Ω m': 'ohm*m',
    'ohm m': 'ohm*m',
    'ohm·m': 'ohm*m',
    'Ω': 'ohm',
    'Ohm': 'ohm',
}


def normalize_unit(unit):
    return _UNIT_ALIASES.get(unit, unit)


@dataclass(frozen=True)
class Quantity:
    """A value with its one-sigma uncertainty."""
    value: float
    sigma: float = 0.0

    def __str__(self):
        return f'{self.value:.4g} ± {self.sigma:.2g}'


# resonance

@dataclass(eq=False)
class S21Trace:
    """Complex transmission of a hanger-coupled mode versus frequency."""
    frequency: np.ndarray
    s21: np.ndarray
    input_power: Optional[float] = None
    label: str = ''

    MIN_SAMPLES: ClassVar[int] = 32

    def __post_init__(self):
        self.frequency = np.asarray(self.frequency, dtype=float)
        self.s21 = np.asarray(self.s21, dtype=complex)
        if self.frequency.ndim != 1 or self.frequency.shape != self.s21.shape:
            raise InvalidTraceError('frequency and s21 must be 1-D arrays of equal length')
        if self.frequency.size < self.MIN_SAMPLES:
            raise InvalidTraceError(
                f'trace has {self.frequency.size} samples, at least {self.MIN_SAMPLES} required')
        if np.any(np.diff(self.frequency) <= 0):
            raise InvalidTraceError('frequencies must be strictly increasing')
        if not np.all(np.isfinite(self.s21)):
            raise InvalidTraceError('s21 contains non-finite samples')
        if self.input_power is not None and self.input_power < 0:
            raise NonPositiveInputError('input power must be non-negative')

    def __len__(self):
        return self.frequency.size

    @property
    def span(self):
        return self.frequency[-1] - self.frequency[0]

    def scaled(self, factor):
        """Same trace seen through a cable of complex gain ``factor``."""
        return replace(self, s21=self.s21 * complex(factor))


@dataclass(frozen=True)
class ResonanceFit:
    f0: float
    q_int: Quantity
    q_ext: Quantity
    q_tot: Quantity
    impedance_mismatch_angle: float
    residual_rms: float
    f0_sigma: float = 0.0
    angle_sigma: float = 0.0
    amplitude: float = 1.0
    phase: float = 0.0
    delay: float = 0.0
    input_power: Optional[float] = None
    label: str = ''

    @property
    def omega(self):
        return 2 * math.pi * self.f0

    @property
    def coupling_ratio(self):
        """Q_ext / Q_int; values well above 1 mean an undercoupled mode."""
        return self.q_ext.value / self.q_int.value


@dataclass(eq=False)
class DecayTrace:
    delay: np.ndarray
    population: np.ndarray

    def __post_init__(self):
        self.delay = np.asarray(self.delay, dtype=float)
        self.population = np.asarray(self.population, dtype=float)
        if self.delay.ndim != 1 or self.delay.shape != self.population.shape:
            raise InvalidTraceError('delay and population must be 1-D arrays of equal length')
        if np.any(self.delay < 0):
            raise InvalidTraceError('delays must be non-negative')
        if np.any(np.diff(self.delay) <= 0):
            raise InvalidTraceError('delays must be strictly increasing')
        if not np.all(np.isfinite(self.population)):
            raise InvalidTraceError('population contains non-finite samples')


@dataclass(frozen=True)
class DecayFit:
    t1: Quantity
    amplitude: Quantity
    offset: Quantity
    residual_rms: float = 0.0


# tls-model

@dataclass(frozen=True)
class PowerSweepPoint:
    nbar: float
    q_int: float
    sigma_q: float = 0.0

    def __post_init__(self):
        if not self.nbar > 0:
            raise NonPositiveInputError(f'nbar must be positive, got {self.nbar}')
        if not self.q_int > 0:
            raise NonPositiveInputError(f'q_int must be positive, got {self.q_int}')
        if self.sigma_q < 0:
            raise NonPositiveInputError(f'sigma_q must be non-negative, got {self.sigma_q}')


@dataclass(eq=False)
class TlsFit:
    """Parameters of the saturable TLS loss model.

    The model is carried in inverse-Q form. ``covariance`` is ordered as
    ``PARAMETERS``; a zero inverse quality factor means that loss channel is absent.
    """
    q0_inverse: float
    q1_inverse: float
    n_c: float
    beta: float
    covariance: np.ndarray = field(default_factory=lambda: np.zeros((4, 4)))
    nbar_range: Tuple[float, float] = (0.0, math.inf)
    degenerate: bool = False
    reason: str = ''
    mode: str = ''

    PARAMETERS: ClassVar[Tuple[str, ...]] = ('q0_inverse', 'q1_inverse', 'n_c', 'beta')
    MAX_BETA: ClassVar[float] = 4.0

    def __post_init__(self):
        if self.q0_inverse < 0 or self.q1_inverse < 0:
            raise NonPositiveInputError('inverse quality factors must be non-negative')
        if not self.n_c > 0:
            raise NonPositiveInputError(f'n_c must be positive, got {self.n_c}')
        if not 0 < self.beta <= self.MAX_BETA:
            raise NonPositiveInputError(f'beta must lie in (0, {self.MAX_BETA}], got {self.beta}')
        cov = np.asarray(self.covariance, dtype=float)
        if cov.shape != (4, 4):
            raise ShapeMismatchError('TLS covariance must be 4x4')
        self.covariance = 0.5 * (cov + cov.T)

    @classmethod
    def from_quality_factors(cls, q0, q1, n_c, beta, **kwargs):
        return cls(q0_inverse=0.0 if math.isinf(q0) else 1.0 / q0,
                   q1_inverse=0.0 if math.isinf(q1) else 1.0 / q1,
                   n_c=n_c, beta=beta, **kwargs)

    def sigma(self, name):
        i = self.PARAMETERS.index(name)
        return math.sqrt(max(self.covariance[i, i], 0.0))

    @staticmethod
    def _reciprocal(inverse, sigma):
        if inverse == 0:
            return Quantity(math.inf, math.inf if sigma else 0.0)
        return Quantity(1.0 / inverse, sigma / inverse ** 2)

    @property
    def q0(self):
        return self._reciprocal(self.q0_inverse, self.sigma('q0_inverse'))

    @property
    def q1(self):
        return self._reciprocal(self.q1_inverse, self.sigma('q1_inverse'))

    @property
    def n_c_sigma(self):
        return self.sigma('n_c')

    @property
    def beta_sigma(self):
        return self.sigma('beta')


# participation

FIELD_INTEGRAL_KINDS = ('metal_air', 'metal_substrate', 'substrate_air', 'bulk', 'conductor', 'seam')


@dataclass(frozen=True)
class FieldIntegrals:
    """Field integrals exported from an electromagnetic solve for one region.

    ``integral`` is the surface, line or volume integral appropriate to
    ``kind``; electric kinds normalize by ``total_electric_energy`` (the
    all-space D.E integral), magnetic kinds by ``total_magnetic_energy``.
    """
    kind: str
    integral: float
    total_electric_energy: Optional[float] = None
    total_magnetic_energy: Optional[float] = None
    omega: Optional[float] = None
    thickness: float = 3e-9
    rel_permittivity: float = 10.0
    label: str = ''

    def __post_init__(self):
        if self.kind not in FIELD_INTEGRAL_KINDS:
            raise KindMismatchError(f'unknown field-integral kind {self.kind!r}')
        if self.thickness <= 0:
            raise NonPositiveInputError('interface thickness must be positive')
        if self.rel_permittivity < 1:
            raise NonPositiveInputError('interface permittivity must be at least 1')


@dataclass(eq=False)
class ConvergenceSeries:
    n_elements: np.ndarray
    p: np.ndarray
    dimension: int = 3

    MIN_POINTS: ClassVar[int] = 4

    def __post_init__(self):
        self.n_elements = np.asarray(self.n_elements, dtype=float)
        self.p = np.asarray(self.p, dtype=float)
        if self.n_elements.shape != self.p.shape or self.p.ndim != 1:
            raise ShapeMismatchError('n_elements and p must be 1-D arrays of equal length')
        if self.p.size < self.MIN_POINTS:
            raise InsufficientPointsError(
                f'convergence series has {self.p.size} points, at least {self.MIN_POINTS} required')
        if np.any(np.diff(self.n_elements) <= 0):
            raise InvalidTraceError('element counts must be strictly increasing')
        if not np.all(np.isfinite(self.p)):
            raise InvalidTraceError('participations must be finite')
        if self.dimension < 1:
            raise NonPositiveInputError('dimension must be at least 1')

    def __len__(self):
        return self.p.size


@dataclass(frozen=True)
class PowerLawFit:
    p_infinity: Quantity
    exponent: float
    order: float
    amplitude: float


@dataclass(frozen=True)
class ConvergenceResult:
    p_infinity: Quantity
    tail_points: int
    slope: float
    power_law: Optional[PowerLawFit] = None


@dataclass(frozen=True)
class SeamGeometry:
    impedance: float
    width: float
    length: Optional[float] = None
    positions: Optional[Tuple[float, ...]] = None


@dataclass(frozen=True)
class StitchResult:
    """Local-to-global field-amplitude ratio along a stitching line."""
    factor: float
    sigma: float
    n_samples: int

    @property
    def factor_squared(self):
        return self.factor ** 2


# solver

@dataclass(eq=False)
class ParticipationTable:
    mode_labels: Tuple[str, ...]
    mechanism_labels: Tuple[str, ...]
    values: np.ndarray
    units: Tuple[str, ...]
    groups: Dict[str, Tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        self.mode_labels = tuple(self.mode_labels)
        self.mechanism_labels = tuple(self.mechanism_labels)
        self.units = tuple(normalize_unit(u) for u in self.units)
        self.values = np.array(self.values, dtype=float, ndmin=2)
        if len(set(self.mode_labels)) != len(self.mode_labels):
            raise ConfigurationError(f'duplicate mode labels in {self.mode_labels}')
        if len(set(self.mechanism_labels)) != len(self.mechanism_labels):
            raise ConfigurationError(f'duplicate mechanism labels in {self.mechanism_labels}')
        if self.values.shape != (len(self.mode_labels), len(self.mechanism_labels)):
            raise ShapeMismatchError(
                f'participation values have shape {self.values.shape}, expected '
                f'{(len(self.mode_labels), len(self.mechanism_labels))}')
        if len(self.units) != len(self.mechanism_labels):
            raise ShapeMismatchError('every mechanism needs exactly one unit tag')
        for label, unit in zip(self.mechanism_labels, self.units):
            if unit not in PARTICIPATION_UNITS:
                raise UnitMismatchError(f'mechanism {label!r} has unknown unit {unit!r}')
        if np.any(self.values < 0) or not np.all(np.isfinite(self.values)):
            raise NonPositiveInputError('participations must be finite and non-negative')

    def mode_index(self, mode):
        try:
            return self.mode_labels.index(mode)
        except ValueError:
            raise LabelMismatchError(f'unknown mode {mode!r}') from None

    def mechanism_index(self, label):
        try:
            return self.mechanism_labels.index(label)
        except ValueError:
            raise LabelMismatchError(f'unknown mechanism {label!r}') from None

    def unit(self, label):
        return self.units[self.mechanism_index(label)]

    def gamma_unit(self, label):
        return PARTICIPATION_UNITS[self.unit(label)]

    def column(self, label):
        return self.values[:, self.mechanism_index(label)].copy()

    def row(self, mode):
        """Participations of one mode as ``{mechanism: (p, unit)}``."""
        values = self.values[self.mode_index(mode)]
        return {label: (float(p), unit)
                for label, p, unit in zip(self.mechanism_labels, values, self.units)}

    def value(self, mode, mechanism):
        return float(self.values[self.mode_index(mode), self.mechanism_index(mechanism)])

    def select(self, mechanisms=None, modes=None):
        mechanisms = self.mechanism_labels if mechanisms is None else tuple(mechanisms)
        modes = self.mode_labels if modes is None else tuple(modes)
        rows = [self.mode_index(m) for m in modes]
        cols = [self.mechanism_index(m) for m in mechanisms]
        return ParticipationTable(
            mode_labels=modes,
            mechanism_labels=mechanisms,
            values=self.values[np.ix_(rows, cols)],
            units=tuple(self.units[c] for c in cols),
        )

    def scale_column(self, label, factor):
        values = self.values.copy()
        values[:, self.mechanism_index(label)] *= factor
        return replace(self, values=values)

    def with_value(self, mode, mechanism, value):
        values = self.values.copy()
        values[self.mode_index(mode), self.mechanism_index(mechanism)] = value
        return replace(self, values=values)

    def aggregate(self, groups=None):
        from lossbudget.participation import aggregate_table
        return aggregate_table(self, self.groups if groups is None else groups)


@dataclass(eq=False)
class InverseQVector:
    """Per-mode inverse internal quality factors at one photon number.

    ``covariance`` is only set when the entries are correlated, e.g. after
    known contributions were subtracted from several modes; otherwise the
    modes are independent with ``sigmas``.
    """
    mode_labels: Tuple[str, ...]
    values: np.ndarray
    sigmas: np.ndarray
    nbar: float = 1.0
    negative_modes: Tuple[str, ...] = ()
    covariance: Optional[np.ndarray] = None

    def __post_init__(self):
        self.mode_labels = tuple(self.mode_labels)
        self.values = np.asarray(self.values, dtype=float).reshape(-1)
        self.sigmas = np.asarray(self.sigmas, dtype=float).reshape(-1)
        if not (len(self.mode_labels) == self.values.size == self.sigmas.size):
            raise ShapeMismatchError('labels, values and sigmas must have equal length')
        if np.any(self.sigmas < 0):
            raise NonPositiveInputError('sigmas must be non-negative')
        if self.covariance is not None:
            self.covariance = np.asarray(self.covariance, dtype=float)
            if self.covariance.shape != (self.values.size, self.values.size):
                raise ShapeMismatchError('covariance must be square over the modes')

    def covariance_matrix(self):
        if self.covariance is None:
            return np.diag(self.sigmas ** 2)
        return self.covariance

    @classmethod
    def from_quality_factors(cls, mode_labels, q_int, sigma_q=None, nbar=1.0):
        q_int = np.asarray(q_int, dtype=float)
        if np.any(q_int <= 0):
            raise NonPositiveInputError('internal quality factors must be positive')
        sigma_q = np.zeros_like(q_int) if sigma_q is None else np.asarray(sigma_q, dtype=float)
        return cls(mode_labels, 1.0 / q_int, sigma_q / q_int ** 2, nbar=nbar)

    def value(self, mode):
        return float(self.values[self.mode_labels.index(mode)])

    def select(self, modes):
        idx = [self.mode_labels.index(m) for m in modes]
        covariance = None if self.covariance is None else self.covariance[np.ix_(idx, idx)]
        return InverseQVector(tuple(modes), self.values[idx], self.sigmas[idx], nbar=self.nbar,
                              negative_modes=tuple(m for m in self.negative_modes if m in modes),
                              covariance=covariance)


@dataclass(frozen=True)
class LossFactorEstimate:
    """A loss factor with its uncertainty, or a bound, and where it came from."""
    label: str
    value: Optional[float] = None
    sigma: float = 0.0
    unit: str = 'dimensionless'
    provenance: str = 'solved'
    upper_bound: Optional[float] = None
    lower_bound: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, 'unit', normalize_unit(self.unit))
        if self.unit not in GAMMA_UNITS:
            raise UnitMismatchError(f'loss factor {self.label!r} has unknown unit {self.unit!r}')
        if self.sigma < 0:
            raise NonPositiveInputError(f'loss factor {self.label!r} has negative sigma')
        if self.value is None and self.upper_bound is None and self.lower_bound is None:
            raise ConfigurationError(f'loss factor {self.label!r} has neither a value nor a bound')

    @property
    def bounded(self):
        return self.upper_bound is not None

    def central(self):
        """(value, sigma) used when this estimate is subtracted as a known contribution."""
        if self.bounded:
            return self.upper_bound / 2, self.upper_bound / 2
        if self.value is None:
            raise ConfigurationError(f'loss factor {self.label!r} is only a lower bound')
        return self.value, self.sigma


@dataclass(eq=False)
class SolveResult:
    """Loss factors from inverting a participation matrix."""
    estimates: Tuple[LossFactorEstimate, ...]
    covariance: np.ndarray
    condition_number: float
    method: str = 'linear'
    nbar: float = 1.0
    mode_labels: Tuple[str, ...] = ()

    def __iter__(self):
        return iter(self.estimates)

    def __len__(self):
        return len(self.estimates)

    @property
    def labels(self):
        return tuple(e.label for e in self.estimates)

    def __getitem__(self, label):
        for estimate in self.estimates:
            if estimate.label == label:
                return estimate
        raise KeyError(label)


@dataclass(eq=False)
class PowerCurve:
    nbar: np.ndarray
    labels: Tuple[str, ...]
    values: np.ndarray
    sigmas: np.ndarray
    condition_numbers: np.ndarray
    extrapolated: np.ndarray

    def curve(self, label):
        i = self.labels.index(label)
        return self.values[:, i], self.sigmas[:, i]


# budget

@dataclass(frozen=True)
class BudgetRow:
    label: str
    participation: float
    gamma: float
    gamma_sigma: float
    unit: str
    contribution: float
    contribution_sigma: float
    share: Optional[float]
    q_limit: float
    bounded: bool = False
    provenance: str = ''


@dataclass(eq=False)
class LossBudget:
    mode: str
    rows: Tuple[BudgetRow, ...]
    total_inverse_q: Quantity
    q_int: Quantity
    t1: Quantity
    omega: float
    worst_case_inverse_q: float

    @property
    def labels(self):
        return tuple(r.label for r in self.rows)

    @property
    def worst_case_q_int(self):
        return 1.0 / self.worst_case_inverse_q

    def row(self, label):
        for row in self.rows:
            if row.label == label:
                return row
        raise KeyError(label)


@dataclass(eq=False)
class BudgetComparison:
    budget_labels: Tuple[str, ...]
    mechanism_labels: Tuple[str, ...]
    shares: Dict[Tuple[str, str], Optional[float]]
    q_limits: Dict[Tuple[str, str], Optional[float]]

    def share(self, mechanism, budget):
        return self.shares[(mechanism, budget)]

    def q_limit(self, mechanism, budget):
        return self.q_limits[(mechanism, budget)]

    def to_text(self, threshold=0.1):
        from lossbudget.budget import render_comparison_text
        return render_comparison_text(self, threshold)


# harness-io

@dataclass(frozen=True)
class ModeTruth:
    """Ground truth of one synthetic mode."""
    label: str
    f0: float
    q_ext: float
    tls: TlsFit
    angle: float = 0.0
    amplitude: float = 1.0
    phase: float = 0.0
    delay: float = 0.0


@dataclass(eq=False)
class SyntheticScenario:
    modes: Tuple[ModeTruth, ...]
    nbar_grid: np.ndarray
    seed: int = 0
    s21_sigma: float = 0.0
    q_relative_sigma: float = 0.0
    n_points: int = 201
    span_linewidths: float = 20.0
    label: str = ''
    reconstruction: bool = False

    def __post_init__(self):
        self.modes = tuple(self.modes)
        self.nbar_grid = np.asarray(self.nbar_grid, dtype=float)
        if self.s21_sigma < 0 or self.q_relative_sigma < 0:
            raise NonPositiveInputError('noise sigmas must be non-negative')
        if np.any(self.nbar_grid <= 0):
            raise NonPositiveInputError('photon-number grid must be positive')
        if self.seed < 0:
            raise NonPositiveInputError('seed must be non-negative')

    def mode(self, label):
        for index, mode in enumerate(self.modes):
            if mode.label == label:
                return index, mode
        raise LabelMismatchError(f'scenario has no mode {label!r}')


@dataclass
class AnalysisConfig:
    participations: Path
    target_mode: str
    loss_factors: Optional[Path] = None
    modes: List[str] = field(default_factory=list)
    q_int: Dict[str, List[float]] = field(default_factory=dict)
    sweeps: Dict[str, Path] = field(default_factory=dict)
    traces: Dict[str, List[dict]] = field(default_factory=dict)
    scenario: Optional[Path] = None
    solve_for: List[str] = field(default_factory=list)
    remainder: Optional[dict] = None
    convergence: List[dict] = field(default_factory=list)
    omega: Optional[float] = None
    nbar: float = 1.0
    tail_points: Optional[int] = None
    mc_samples: int = 0
    seed: int = 0
    surface_correction: Optional[Dict[str, float]] = None
    source: Optional[Path] = None


@dataclass(eq=False)
class PipelineResult:
    """Everything one pipeline run produced, in memory."""
    config: AnalysisConfig
    participations: ParticipationTable
    inverse_q: Optional[InverseQVector]
    budget: LossBudget
    loss_factors: Tuple[LossFactorEstimate, ...]
    resonance_fits: Dict[str, List[ResonanceFit]] = field(default_factory=dict)
    tls_fits: Dict[str, TlsFit] = field(default_factory=dict)
    solve: Optional[SolveResult] = None
    remainder: Optional[LossFactorEstimate] = None
    convergence: Dict[Tuple[str, str], ConvergenceResult] = field(default_factory=dict)
    out: Optional[Path] = None

    def loss_factor(self, label):
        for estimate in self.loss_factors:
            if estimate.label == label:
                return estimate
        raise KeyError(label)
