"""
Closed-form moment generating functions, moments, total-size probabilities
and limit laws for the named schemes

Every MGF is evaluated in log space through log1p/expm1 so that it returns
exactly 1 at the zero argument and keeps precision near it. Evaluation
outside the region where a base is positive raises DomainError.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from polya import numerics
from polya.errors import DomainError, NoLimitSpec, UnsupportedScheme
from polya.model import (
    BalancedTriangular,
    DiagonalConstant,
    DiagonalExponential,
    Ehrenfest,
    Hill,
    lattice_count,
)

logger = logging.getLogger(__name__)


def _check_time(t):
    if not t >= 0:
        raise DomainError(f"t must be nonnegative, got {t}")


def _log1p_checked(q, what):
    if not q > -1.0:
        raise DomainError(f"{what}: base {1.0 + q} is not positive")
    return math.log1p(q)


# Moments

@dataclass(frozen=True)
class MomentSet:
    """First and second moments of the coordinates at one time"""
    means: np.ndarray
    covariance: np.ndarray

    @classmethod
    def from_moments(cls, means, covariance):
        return cls(np.asarray(means, dtype=float), np.asarray(covariance, dtype=float))

    @property
    def variances(self):
        return np.diagonal(self.covariance).copy()

    @property
    def second_moments(self):
        return self.covariance + np.outer(self.means, self.means)


def mean_vector(mean_matrix, init, t):
    """e^{E[A]^T t} X(0)"""
    _check_time(t)
    M = np.asarray(mean_matrix, dtype=float)
    x0 = init.as_array() if hasattr(init, 'as_array') else np.asarray(init, dtype=float)
    if t == 0:
        return x0.copy()
    return numerics.matrix_exp(M.T, t) @ x0


def moments_diag_constant(alpha, x0, t):
    """Mean and variance of one coordinate with constant diagonal entry alpha"""
    _check_time(t)
    g = math.exp(alpha * t)
    return x0 * g, alpha * x0 * g * math.expm1(alpha * t)


def moments_diag_exponential(x0, t, rate=1.0):
    """Mean and variance of one coordinate with an Exp(rate) diagonal entry"""
    _check_time(t)
    g = math.exp(t / rate)
    return x0 * g, (2.0 * x0 / rate) * g * math.expm1(t / rate)


def moments_ehrenfest(gamma, x0, y0, t):
    _check_time(t)
    lam = x0 + y0
    a = math.exp(-2.0 * gamma * t)
    mean_x = lam / 2.0 + (x0 - lam / 2.0) * a
    var = -gamma * lam * math.expm1(-4.0 * gamma * t) / 4.0
    return MomentSet.from_moments([mean_x, lam - mean_x], [[var, -var], [-var, var]])


def moments_hill(gamma, x0, y0, t):
    """
    Exact moments of the hill scheme; Y - X is constant so every
    (co)variance equals Var X
    """
    _check_time(t)
    if not y0 > x0:
        raise DomainError(f"hill moments need y0 > x0, got {x0}, {y0}")
    lam = y0 - x0
    drift = lam * gamma * t
    var = lam * gamma ** 3 * t * t + (2 * x0 + lam) * gamma ** 2 * t
    return MomentSet.from_moments([drift + x0, drift + y0], [[var, var], [var, var]])


def moments_triangular(alpha, delta, x0, y0, t):
    """
    Means, variances and covariance of the balanced triangular scheme

    The second moments follow as covariance plus the outer product of the
    means. Var Y is assembled from the total size variance to avoid
    cancelling large second moments.
    """
    _check_time(t)
    if not (0 < alpha < delta):
        raise DomainError(f"needs 0 < alpha < delta, got {alpha}, {delta}")
    s0 = x0 + y0
    ea, ed = math.exp(alpha * t), math.exp(delta * t)
    mean_x = x0 * ea
    mean_y = s0 * ed - mean_x
    var_x = alpha * x0 * ea * math.expm1(alpha * t)
    cov = alpha * x0 * ea * ea * math.expm1((delta - alpha) * t)
    var_total = delta * s0 * ed * math.expm1(delta * t)
    var_y = var_total - var_x - 2.0 * cov
    return MomentSet.from_moments([mean_x, mean_y], [[var_x, cov], [cov, var_y]])


def moments_for(scheme, init, t):
    """Closed-form MomentSet at time t for any named scheme"""
    x = init.coordinates
    if isinstance(scheme, Ehrenfest):
        return moments_ehrenfest(scheme.gamma, x[0], x[1], t)
    if isinstance(scheme, Hill):
        return moments_hill(scheme.gamma, x[0], x[1], t)
    if isinstance(scheme, BalancedTriangular):
        return moments_triangular(scheme.alpha, scheme.delta, x[0], x[1], t)
    if isinstance(scheme, DiagonalConstant):
        pairs = [moments_diag_constant(a, xi, t) for a, xi in zip(scheme.alphas, x)]
    elif isinstance(scheme, DiagonalExponential):
        pairs = [moments_diag_exponential(xi, t, rate) for rate, xi in zip(scheme.rates, x)]
    else:
        raise UnsupportedScheme(f"no closed-form moments for {scheme!r}")
    means, variances = zip(*pairs)
    return MomentSet.from_moments(means, np.diag(variances))


# MGFs

def mgf_diag_constant(alpha, x0, t, u):
    """(1 - e^{alpha t}(1 - e^{-alpha u}))^{-x0/alpha}"""
    _check_time(t)
    q = math.exp(alpha * t) * math.expm1(-alpha * u)
    return math.exp(-(x0 / alpha) * _log1p_checked(q, "mgf_diag_constant"))


def mgf_diag_exponential(x0, t, u, rate=1.0):
    """
    exp(rate x0 T(z)) with z = (u/rate) e^{(t-u)/rate} and T the tree function

    For rate 1 and x0 = 1 this is e^{-W(-u e^{t-u})}.
    """
    _check_time(t)
    if u >= rate:
        raise DomainError(f"Exp({rate}) entry MGF undefined at u={u}")
    z = (u / rate) * math.exp((t - u) / rate)
    if z > numerics.INV_E:
        raise DomainError(f"mgf_diag_exponential: argument {z} beyond 1/e")
    return math.exp(rate * x0 * numerics.tree_function(z))


def mgf_ehrenfest(gamma, x0, y0, t, u):
    """
    MGF of X(t) for the Ehrenfest scheme

    With a = e^{-2 gamma t}, w = e^{gamma u}:
    ((1 + w + a(w-1)) / (1 + w - a(w-1)))^{x0/gamma} ((1 + w - a(w-1))/2)^{lambda/gamma}
    """
    _check_time(t)
    lam = x0 + y0
    a = math.exp(-2.0 * gamma * t)
    em = math.expm1(gamma * u)
    log_n = _log1p_checked(em * (1.0 + a) / 2.0, "mgf_ehrenfest")
    log_d = _log1p_checked(em * (1.0 - a) / 2.0, "mgf_ehrenfest")
    return math.exp((x0 / gamma) * (log_n - log_d) + (lam / gamma) * log_d)


def mgf_hill(gamma, x0, y0, t, u):
    """(e^{gamma u} - g)^{x0/gamma} / (1 - g)^{y0/gamma} with g = gamma t (e^{gamma u} - 1)"""
    _check_time(t)
    em = math.expm1(gamma * u)
    log_a = _log1p_checked(em * (1.0 - gamma * t), "mgf_hill")
    log_b = _log1p_checked(-gamma * t * em, "mgf_hill")
    return math.exp((x0 / gamma) * log_a - (y0 / gamma) * log_b)


def mgf_ehrenfest_joint(gamma, x0, y0, t, u, v):
    """E[e^{uX + vY}] using Y = lambda - X"""
    return math.exp((x0 + y0) * v) * mgf_ehrenfest(gamma, x0, y0, t, u - v)


def mgf_hill_joint(gamma, x0, y0, t, u, v):
    """E[e^{uX + vY}] using Y = X + lambda"""
    return math.exp((y0 - x0) * v) * mgf_hill(gamma, x0, y0, t, u + v)


def characteristic_curves(alpha, delta, t, u, v):
    """
    Invariants of the triangular characteristic flow

    x_c = e^{alpha t}(e^{-alpha u} - e^{-alpha v}), y_c = e^{delta t}(e^{-delta v} - 1)
    """
    x_c = math.exp(alpha * t) * (math.expm1(-alpha * u) - math.expm1(-alpha * v))
    y_c = math.exp(delta * t) * math.expm1(-delta * v)
    return x_c, y_c


def invert_characteristics(alpha, delta, t, x_c, y_c):
    """The (u, v) at time t lying on the curves (x_c, y_c)"""
    v = -_log1p_checked(y_c * math.exp(-delta * t), "invert_characteristics") / delta
    q = x_c * math.exp(-alpha * t) + math.expm1(-alpha * v)
    u = -_log1p_checked(q, "invert_characteristics") / alpha
    return u, v


def mgf_triangular(alpha, delta, x0, y0, t, u, v):
    """
    Joint MGF of the balanced triangular scheme

    (x_c + (1 + y_c)^{alpha/delta})^{-x0/alpha} (1 + y_c)^{-y0/delta}, which
    equals e^{-x0 t - y0 t}(e^{-alpha u} - e^{-alpha v} + (e^{-delta v} - 1 +
    e^{-delta t})^{alpha/delta})^{-x0/alpha}(e^{-delta v} - 1 + e^{-delta t})^{-y0/delta}.
    """
    _check_time(t)
    if not (0 < alpha < delta):
        raise DomainError(f"needs 0 < alpha < delta, got {alpha}, {delta}")
    x_c, y_c = characteristic_curves(alpha, delta, t, u, v)
    log_y = _log1p_checked(y_c, "mgf_triangular")
    log_outer = _log1p_checked(x_c + math.expm1((alpha / delta) * log_y), "mgf_triangular")
    return math.exp(-(x0 / alpha) * log_outer - (y0 / delta) * log_y)


def mgf_total_balanced(delta, x0, y0, t, v):
    """(1 - e^{delta t} + e^{delta(t - v)})^{-(x0 + y0)/delta}"""
    _check_time(t)
    q = math.exp(delta * t) * math.expm1(-delta * v)
    return math.exp(-((x0 + y0) / delta) * _log1p_checked(q, "mgf_total_balanced"))


def kolmogorov_prob(i, delta, ell, t):
    """
    P(total = i + ell*delta at time t) for the pure-birth total size

    ((i/delta) rising ell / ell!) e^{-i t} (1 - e^{-delta t})^ell, in log space.
    """
    _check_time(t)
    if ell < 0 or int(ell) != ell:
        raise DomainError(f"ell must be a nonnegative integer, got {ell}")
    if t == 0:
        return 1.0 if ell == 0 else 0.0
    log_p = (float(numerics.log_rising_factorial(i / delta, ell)) - special.gammaln(ell + 1.0)
             - i * t + ell * math.log(-math.expm1(-delta * t)))
    return math.exp(log_p)


def joint_mgf(scheme, init):
    """
    phi(t, u) for a named scheme started at init

    Diagonal schemes have independent coordinates, so their joint MGF is a
    product of marginals.
    """
    x = init.coordinates
    if isinstance(scheme, Ehrenfest):
        return lambda t, u: mgf_ehrenfest_joint(scheme.gamma, x[0], x[1], t, u[0], u[1])
    if isinstance(scheme, Hill):
        return lambda t, u: mgf_hill_joint(scheme.gamma, x[0], x[1], t, u[0], u[1])
    if isinstance(scheme, BalancedTriangular):
        return lambda t, u: mgf_triangular(scheme.alpha, scheme.delta, x[0], x[1], t, u[0], u[1])
    if isinstance(scheme, DiagonalConstant):
        return lambda t, u: math.prod(
            mgf_diag_constant(a, xi, t, ui) for a, xi, ui in zip(scheme.alphas, x, u))
    if isinstance(scheme, DiagonalExponential):
        return lambda t, u: math.prod(
            mgf_diag_exponential(xi, t, ui, rate) for rate, xi, ui in zip(scheme.rates, x, u))
    raise UnsupportedScheme(f"no closed-form MGF for {scheme!r}")


# Limit laws

@dataclass(frozen=True)
class ExpDecay:
    rate: float

    def factor(self, t):
        return math.exp(-self.rate * t)


@dataclass(frozen=True)
class InverseTime:

    def factor(self, t):
        if not t > 0:
            raise DomainError("inverse-time scaling needs t > 0")
        return 1.0 / t


@dataclass(frozen=True)
class Identity:

    def factor(self, t):
        return 1.0


@dataclass(frozen=True)
class Gamma:
    """Gamma(shape, scale); shape 0 is the point mass at zero"""
    shape: float
    scale: float

    def mean(self):
        return self.shape * self.scale

    def variance(self):
        return self.shape * self.scale ** 2

    def mgf(self, s):
        if s * self.scale >= 1.0:
            raise DomainError(f"Gamma MGF undefined at s={s}")
        return math.exp(-self.shape * math.log1p(-self.scale * s))


@dataclass(frozen=True)
class Binomial:
    """step * Bin(n, p), supported on the lattice {0, step, ..., n*step}"""
    n: int
    p: float
    step: float = 1.0

    def mean(self):
        return self.step * self.n * self.p

    def variance(self):
        return self.step ** 2 * self.n * self.p * (1.0 - self.p)

    def mgf(self, s):
        return (1.0 - self.p + self.p * math.exp(self.step * s)) ** self.n

    def support(self):
        return self.step * np.arange(self.n + 1)


@dataclass(frozen=True)
class LambertStar:
    """
    scale times the sum of `power` (possibly fractional) Lambert variables W*

    W* has MGF T(s)/s for s <= 1/e and moments E[W*^k] = (k+1)^{k-1}.
    """
    power: float = 1.0
    scale: float = 1.0

    @staticmethod
    def raw_moment(k):
        return float((k + 1) ** (k - 1))

    def mean(self):
        return self.power * self.scale * self.raw_moment(1)

    def variance(self):
        return self.power * self.scale ** 2 * (self.raw_moment(2) - self.raw_moment(1) ** 2)

    def mgf(self, s):
        z = self.scale * s
        if z == 0:
            return 1.0
        return (numerics.tree_function(z) / z) ** self.power


@dataclass(frozen=True)
class LimitSpec:
    """Scaling applied to X_j(t) and the law it converges to"""
    scaling: object
    law: object

    def scaled(self, values, t):
        return np.asarray(values, dtype=float) * self.scaling.factor(t)


def limit_spec(scheme, init):
    """
    Per-coordinate limit laws of the named schemes

    Raises:
        NoLimitSpec: for the balanced triangular and general schemes
    """
    x = init.coordinates
    if isinstance(scheme, DiagonalConstant):
        return tuple(LimitSpec(ExpDecay(a), Gamma(xi / a, a)) for a, xi in zip(scheme.alphas, x))
    if isinstance(scheme, DiagonalExponential):
        return tuple(LimitSpec(ExpDecay(1.0 / rate), LambertStar(rate * xi, 1.0 / rate))
                     for rate, xi in zip(scheme.rates, x))
    if isinstance(scheme, Ehrenfest):
        q = (x[0] + x[1]) / scheme.gamma
        n = lattice_count(q)
        if n is None:
            raise DomainError(f"Ehrenfest limit needs (X(0)+Y(0))/gamma integral, got {q}")
        law = Binomial(n, 0.5, scheme.gamma)
        return (LimitSpec(Identity(), law), LimitSpec(Identity(), law))
    if isinstance(scheme, Hill):
        lam = x[1] - x[0]
        law = Gamma(lam / scheme.gamma, scheme.gamma ** 2)
        return (LimitSpec(InverseTime(), law), LimitSpec(InverseTime(), law))
    raise NoLimitSpec(f"no known limit law for {scheme!r}")
