"""
Process configuration: navigation matrix, initial state, scheme
classification and tenability checks
"""
import enum
import logging
import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from polya.errors import DomainError, ValidationError

logger = logging.getLogger(__name__)

MAX_SEED = 2 ** 64


@dataclass(frozen=True)
class Constant:
    """Almost surely constant navigation entry"""
    value: float

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValidationError([f"constant entry must be finite, got {self.value}"])
        object.__setattr__(self, 'value', float(self.value))

    def mean(self):
        return self.value

    def mgf(self, u):
        return math.exp(u * self.value)

    def __str__(self):
        return repr(self.value)


@dataclass(frozen=True)
class ExponentialRV:
    """Exponentially distributed navigation entry with the given rate"""
    rate: float

    def __post_init__(self):
        if not (math.isfinite(self.rate) and self.rate > 0):
            raise ValidationError([f"exponential rate must be positive, got {self.rate}"])
        object.__setattr__(self, 'rate', float(self.rate))

    def mean(self):
        return 1.0 / self.rate

    def mgf(self, u):
        if u >= self.rate:
            raise DomainError(f"Exp({self.rate}) MGF undefined at u={u}")
        return self.rate / (self.rate - u)

    def __str__(self):
        return f"exp({self.rate!r})"


EntrySpec = Union[Constant, ExponentialRV]


def as_entry(value):
    """Coerce a number or an EntrySpec into an EntrySpec"""
    if isinstance(value, (Constant, ExponentialRV)):
        return value
    return Constant(float(value))


@dataclass(frozen=True)
class NavigationMatrix:
    """Square grid of (possibly random) navigation entries, row i fires with coordinate i"""
    entries: tuple

    def __post_init__(self):
        rows = tuple(tuple(as_entry(e) for e in row) for row in self.entries)
        c = len(rows)
        problems = []
        if c < 1:
            problems.append("navigation matrix must have at least one row")
        for i, row in enumerate(rows):
            if len(row) != c:
                problems.append(f"row {i} has {len(row)} entries, expected {c}")
        if problems:
            raise ValidationError(problems)
        object.__setattr__(self, 'entries', rows)

    @classmethod
    def from_rows(cls, rows):
        return cls(tuple(tuple(row) for row in rows))

    @classmethod
    def from_flat(cls, dimension, values):
        """Build from a row-major flat list of entries"""
        values = list(values)
        if len(values) != dimension * dimension:
            raise ValidationError([
                f"matrix has {len(values)} entries, expected {dimension * dimension}"
            ])
        return cls(tuple(tuple(values[i * dimension:(i + 1) * dimension])
                         for i in range(dimension)))

    @property
    def dimension(self):
        return len(self.entries)

    @property
    def has_random_entries(self):
        return any(isinstance(e, ExponentialRV) for row in self.entries for e in row)

    def flat(self):
        return [e for row in self.entries for e in row]


@dataclass(frozen=True)
class InitialState:
    """Starting position X(0) of the walk"""
    coordinates: tuple

    def __post_init__(self):
        coords = tuple(float(x) for x in self.coordinates)
        problems = []
        if not coords:
            problems.append("initial state must have at least one coordinate")
        for j, x in enumerate(coords):
            if not math.isfinite(x) or x < 0:
                problems.append(f"coordinate {j} must be a nonnegative real, got {x}")
        if coords and not problems and sum(coords) <= 0:
            problems.append("initial coordinates must have a positive sum")
        if problems:
            raise ValidationError(problems)
        object.__setattr__(self, 'coordinates', coords)

    @property
    def dimension(self):
        return len(self.coordinates)

    def as_array(self):
        return np.array(self.coordinates, dtype=float)


# Scheme catalog

@dataclass(frozen=True)
class General:
    """No named closed-form pattern"""


@dataclass(frozen=True)
class DiagonalConstant:
    alphas: tuple

    def canonical_matrix(self):
        c = len(self.alphas)
        return NavigationMatrix.from_rows(
            [[self.alphas[i] if i == j else 0.0 for j in range(c)] for i in range(c)]
        )


@dataclass(frozen=True)
class DiagonalExponential:
    rates: tuple

    def canonical_matrix(self):
        c = len(self.rates)
        return NavigationMatrix.from_rows(
            [[ExponentialRV(self.rates[i]) if i == j else 0.0 for j in range(c)]
             for i in range(c)]
        )


@dataclass(frozen=True)
class Ehrenfest:
    gamma: float

    def canonical_matrix(self):
        g = self.gamma
        return NavigationMatrix.from_rows([[-g, g], [g, -g]])


@dataclass(frozen=True)
class Hill:
    gamma: float

    def canonical_matrix(self):
        g = self.gamma
        return NavigationMatrix.from_rows([[-g, -g], [g, g]])


@dataclass(frozen=True)
class BalancedTriangular:
    alpha: float
    delta: float

    def __post_init__(self):
        if not (0 < self.alpha < self.delta):
            raise ValidationError([
                f"balanced triangular scheme needs 0 < alpha < delta, got {self.alpha}, {self.delta}"
            ])

    def canonical_matrix(self):
        return NavigationMatrix.from_rows(
            [[self.alpha, self.delta - self.alpha], [0.0, self.delta]]
        )


Scheme = Union[General, DiagonalConstant, DiagonalExponential, Ehrenfest, Hill, BalancedTriangular]


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to run an ensemble"""
    matrix: NavigationMatrix
    init: InitialState
    horizon: float
    checkpoints: tuple
    ensemble_size: int
    master_seed: int

    def __post_init__(self):
        checkpoints = tuple(float(t) for t in self.checkpoints)
        object.__setattr__(self, 'checkpoints', checkpoints)
        object.__setattr__(self, 'horizon', float(self.horizon))
        problems = []
        if self.init.dimension != self.matrix.dimension:
            problems.append(
                f"init has {self.init.dimension} coordinates but matrix dimension is {self.matrix.dimension}"
            )
        if not (math.isfinite(self.horizon) and self.horizon >= 0):
            problems.append(f"horizon must be a nonnegative real, got {self.horizon}")
        if not checkpoints:
            problems.append("at least one checkpoint is required")
        if any(b <= a for a, b in zip(checkpoints, checkpoints[1:])):
            problems.append("checkpoints must be strictly increasing")
        if checkpoints and (checkpoints[0] < 0 or checkpoints[-1] > self.horizon):
            problems.append("checkpoints must lie in [0, horizon]")
        if not (isinstance(self.ensemble_size, int) and self.ensemble_size >= 1):
            problems.append(f"ensemble_size must be a positive integer, got {self.ensemble_size}")
        if not (isinstance(self.master_seed, int) and 0 <= self.master_seed < MAX_SEED):
            problems.append(f"seed must be an unsigned 64-bit integer, got {self.master_seed}")
        if problems:
            raise ValidationError(problems)

    def replace(self, **changes):
        fields = dict(matrix=self.matrix, init=self.init, horizon=self.horizon,
                      checkpoints=self.checkpoints, ensemble_size=self.ensemble_size,
                      master_seed=self.master_seed)
        fields.update(changes)
        return ScenarioConfig(**fields)


class TenabilityStatus(enum.Enum):
    OK = 'ok'
    VIOLATED = 'violated'
    UNKNOWN = 'unknown'


@dataclass(frozen=True)
class TenabilityReport:
    status: TenabilityStatus
    violations: tuple = ()
    warning: bool = False

    @property
    def ok(self):
        return self.status is TenabilityStatus.OK


# Operations

def _constant_values(matrix):
    if matrix.has_random_entries:
        return None
    return [[e.value for e in row] for row in matrix.entries]


def _is_diagonal(matrix):
    for i, row in enumerate(matrix.entries):
        for j, e in enumerate(row):
            if i != j and not (isinstance(e, Constant) and e.value == 0.0):
                return False
    return True


def classify(matrix):
    """
    Return the most specific named scheme matching the matrix

    Entries are compared exactly as stored; General is the fallback.
    """
    a = _constant_values(matrix)
    if a is not None and matrix.dimension == 2:
        (a00, a01), (a10, a11) = a
        g = a01
        if g > 0 and a00 == -g and a10 == g and a11 == -g:
            return Ehrenfest(g)
        g = a10
        if g > 0 and a00 == -g and a01 == -g and a11 == g:
            return Hill(g)
        if a10 == 0.0 and 0 < a00 < a11 and a01 == a11 - a00:
            return BalancedTriangular(a00, a11)

    if _is_diagonal(matrix):
        diagonal = [matrix.entries[i][i] for i in range(matrix.dimension)]
        if all(isinstance(e, Constant) and e.value > 0 for e in diagonal):
            return DiagonalConstant(tuple(e.value for e in diagonal))
        if all(isinstance(e, ExponentialRV) for e in diagonal):
            return DiagonalExponential(tuple(e.rate for e in diagonal))

    return General()


INTEGRALITY_TOLERANCE = 1e-9


def lattice_count(q):
    """
    Nearest integer to a nonnegative quotient such as X(0)/gamma, or None
    when q is negative or further than a relative 1e-9 from an integer
    """
    n = round(q)
    if q < 0 or abs(q - n) > INTEGRALITY_TOLERANCE * max(1.0, abs(q)):
        return None
    return int(n)


def check_tenability(matrix, init):
    """Report-only tenability check for the scheme the matrix belongs to"""
    scheme = classify(matrix)
    x = init.coordinates
    violations = []
    if init.dimension != matrix.dimension:
        violations.append("init dimension differs from matrix dimension")
        return TenabilityReport(TenabilityStatus.VIOLATED, tuple(violations))

    if isinstance(scheme, Ehrenfest):
        qx, qy = x[0] / scheme.gamma, x[1] / scheme.gamma
        if lattice_count(qx) is None:
            violations.append(f"X(0)/gamma = {qx} must be a nonnegative integer")
        if lattice_count(qy) is None:
            violations.append(f"Y(0)/gamma = {qy} must be a nonnegative integer")
        if lattice_count(qx) == 0 and lattice_count(qy) == 0:
            violations.append("X(0) and Y(0) must not both be zero")
    elif isinstance(scheme, Hill):
        if not x[1] > x[0]:
            violations.append("Y(0) > X(0) required")
    elif isinstance(scheme, General):
        logger.warning("no general tenability criterion; relying on runtime guards")
        return TenabilityReport(TenabilityStatus.UNKNOWN, (), warning=True)
    # diagonal and balanced triangular schemes only need a valid init

    if violations:
        return TenabilityReport(TenabilityStatus.VIOLATED, tuple(violations))
    return TenabilityReport(TenabilityStatus.OK)


def row_mean_matrix(matrix):
    """Entrywise expectation E[A]"""
    return np.array([[e.mean() for e in row] for row in matrix.entries], dtype=float)


def row_mgf(matrix, i, u):
    """
    Joint MGF of row i at u, entries of a row being independent

    Raises DomainError when an exponential entry is evaluated at u_j >= rate.
    """
    u = np.asarray(u, dtype=float)
    if u.shape != (matrix.dimension,):
        raise DomainError(f"u must have length {matrix.dimension}")
    value = 1.0
    for entry, uj in zip(matrix.entries[i], u):
        value *= entry.mgf(float(uj))
    return value


def psi_functions(matrix):
    """One callable u -> psi_i(u) per row"""
    return [(lambda u, i=i: row_mgf(matrix, i, u)) for i in range(matrix.dimension)]
