"""
Numerical kernels: Lambert W, tree function, matrix exponential, rising
factorials, a closed-form 2F1 special case, fixed-step ODE oracles and the
finite-difference PDE residual checker
"""
import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg, special

from config import Config
from polya.errors import DomainError, TruncationWarning

logger = logging.getLogger(__name__)

INV_E = math.exp(-1.0)

# Relative slack accepted when an argument sits on the branch point up to rounding
_BRANCH_SLACK = 4 * np.finfo(float).eps


# Lambert W

def lambert_w0(z):
    """
    Principal branch of the Lambert W function for real z >= -1/e

    Halley iteration from a piecewise initial guess: branch-point series
    near -1/e, log1p in the middle range, log - log log for large z.

    Args:
        z: real argument

    Returns:
        w >= -1 with w * exp(w) = z
    """
    z = float(z)
    if math.isnan(z) or z == math.inf:
        raise DomainError(f"lambert_w0 undefined at z={z}")
    if z < -INV_E:
        if z < -INV_E * (1.0 + _BRANCH_SLACK):
            raise DomainError(f"lambert_w0 requires z >= -1/e, got {z}")
        z = -INV_E
    if z == 0.0:
        return 0.0
    if z == -INV_E:
        return -1.0

    if z < -0.25:
        p = math.sqrt(max(2.0 * (math.e * z + 1.0), 0.0))
        w = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p ** 3
    elif z < 3.0:
        w = math.log1p(z)
    else:
        l1 = math.log(z)
        l2 = math.log(l1)
        w = l1 - l2 + l2 / l1

    for _ in range(64):
        ew = math.exp(w)
        f = w * ew - z
        if f == 0.0:
            break
        wp1 = w + 1.0
        step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1))
        w -= step
        if abs(step) <= 1e-15 * (1.0 + abs(w)):
            break
    return w


def tree_function(z):
    """T(z) = -W0(-z), defined for z <= 1/e"""
    z = float(z)
    if z > INV_E * (1.0 + _BRANCH_SLACK):
        raise DomainError(f"tree function requires z <= 1/e, got {z}")
    return -lambert_w0(-min(z, INV_E))


# Linear algebra and combinatorics

def matrix_exp(M, t=1.0):
    """e^{Mt} for a small dense square matrix"""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DomainError(f"matrix_exp needs a square matrix, got shape {M.shape}")
    return linalg.expm(M * t)


def rising_factorial(x, ell):
    """x (x+1) ... (x+ell-1); the empty product is 1"""
    if ell < 0 or int(ell) != ell:
        raise DomainError(f"rising factorial needs a nonnegative integer order, got {ell}")
    return math.prod(x + k for k in range(int(ell)))


def log_rising_factorial(x, ell):
    """log of the rising factorial for x > 0, vectorized over ell"""
    if x <= 0:
        raise DomainError(f"log_rising_factorial needs x > 0, got {x}")
    ell = np.asarray(ell, dtype=float)
    return special.gammaln(x + ell) - special.gammaln(x)


def hyp2f1_special(mu, Z):
    """
    2F1(mu, 1; 2; Z) = (1 - (1-Z)^(1-mu)) / ((1-mu) Z)

    Evaluated through expm1/log1p; the mu -> 1 limit is -log(1-Z)/Z and
    the Z -> 0 limit is the series 1 + mu Z / 2.
    """
    if Z >= 1.0:
        raise DomainError(f"hyp2f1_special requires Z < 1, got {Z}")
    if abs(Z) < 1e-8:
        return 1.0 + mu * Z / 2.0
    log1mz = math.log1p(-Z)
    if abs(mu - 1.0) < 1e-8:
        return -log1mz / Z
    return -math.expm1((1.0 - mu) * log1mz) / ((1.0 - mu) * Z)


def kolmogorov_distribution(i, delta, ell_max, t):
    """
    Closed-form P(total = i + ell*delta at time t) for ell = 0..ell_max

    Computed in log space so large ell stays finite.
    """
    if i <= 0 or delta <= 0:
        raise DomainError(f"kolmogorov probabilities need i > 0 and delta > 0, got {i}, {delta}")
    if t < 0:
        raise DomainError(f"t must be nonnegative, got {t}")
    ell = np.arange(int(ell_max) + 1, dtype=float)
    if t == 0:
        out = np.zeros_like(ell)
        out[0] = 1.0
        return out
    log_p = (log_rising_factorial(i / delta, ell) - special.gammaln(ell + 1.0)
             - i * t + ell * np.log(-np.expm1(-delta * t)))
    return np.exp(log_p)


# ODE oracles

@dataclass(frozen=True)
class OdeSolution:
    grid: np.ndarray
    values: np.ndarray
    step_size_used: float

    @property
    def final(self):
        return self.values[-1]


def rk4_step(f, t, y, h):
    """One classical Runge-Kutta step of y' = f(t, y) from t to t + h"""
    half = 0.5 * h
    k1 = f(t, y)
    k2 = f(t + half, y + half * k1)
    k3 = f(t + half, y + half * k2)
    k4 = f(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)


def integrate_fixed(f, y0, t_end, h_max):
    """Classical RK4 on a uniform grid over [0, t_end] with step at most h_max"""
    y0 = np.array(y0, dtype=float)
    if t_end < 0:
        raise DomainError(f"t_end must be nonnegative, got {t_end}")
    if t_end == 0:
        return OdeSolution(np.zeros(1), y0[np.newaxis, :], 0.0)
    num_step = max(1, math.ceil(t_end / h_max))
    dt = t_end / num_step
    grid = np.linspace(0.0, t_end, num_step + 1)
    values = np.empty((num_step + 1, y0.size))
    values[0] = y0
    y = y0
    for n in range(num_step):
        y = rk4_step(f, grid[n], y, dt)
        values[n + 1] = y
    return OdeSolution(grid, values, dt)


def ode_solve_kolmogorov(i, delta, ell_max, t_end):
    """
    Integrate the truncated forward equations of the pure-birth total size

    Component ell is P(total = i + ell*delta). Mass above ell_max leaks out of
    the truncated system; a TruncationWarning is raised when the leak exceeds
    1e-8 at t_end.
    """
    if i <= 0 or delta <= 0:
        raise DomainError(f"kolmogorov system needs i > 0 and delta > 0, got {i}, {delta}")
    rates = i + delta * np.arange(int(ell_max) + 1, dtype=float)

    def forward(t, p):
        dp = -rates * p
        dp[1:] += rates[:-1] * p[:-1]
        return dp

    p0 = np.zeros(rates.size)
    p0[0] = 1.0
    h_max = min(1e-3, 0.1 / rates[-1])
    solution = integrate_fixed(forward, p0, t_end, h_max)
    deficit = 1.0 - solution.final.sum()
    if deficit > 1e-8:
        warnings.warn(
            f"truncation at ell_max={ell_max} loses mass {deficit:.3g} by t={t_end}",
            TruncationWarning,
            stacklevel=2,
        )
    logger.debug("kolmogorov rk4: i=%s delta=%s ell_max=%s steps=%d",
                 i, delta, ell_max, solution.grid.size - 1)
    return solution


def ode_solve_mean(mean_matrix, init, t_end):
    """Integrate d/dt m = E[A]^T m from m(0) = init"""
    M = np.asarray(mean_matrix, dtype=float)
    MT = M.T.copy()
    scale = float(np.abs(M).sum(axis=1).max()) if M.size else 0.0
    h_max = 1e-3 if scale == 0 else min(1e-3, 0.1 / scale)
    return integrate_fixed(lambda t, m: MT @ m, init, t_end, h_max)


def ode_second_moments_triangular(alpha, delta, x0, y0, t_end):
    """
    Cascaded second-moment system of the balanced triangular scheme

    State is (E[X^2], E[XY], E[Y^2]); the first moments enter as known
    forcing terms.
    """
    if not (0 < alpha < delta):
        raise DomainError(f"needs 0 < alpha < delta, got {alpha}, {delta}")
    beta = delta - alpha
    total = x0 + y0

    def moments(t, m):
        ex = x0 * math.exp(alpha * t)
        ey = total * math.exp(delta * t) - ex
        xx, xy, yy = m
        return np.array([
            2 * alpha * xx + alpha ** 2 * ex,
            beta * xx + (alpha + delta) * xy + alpha * beta * ex,
            2 * beta * xy + 2 * delta * yy + beta ** 2 * ex + delta ** 2 * ey,
        ])

    h_max = min(1e-3, 0.1 / (2 * delta))
    return integrate_fixed(moments, [x0 * x0, x0 * y0, y0 * y0], t_end, h_max)


# PDE residual

@dataclass(frozen=True)
class PdeResidual:
    residual: float
    dominant: float

    @property
    def relative(self):
        if self.dominant == 0:
            return abs(self.residual)
        return abs(self.residual) / self.dominant


def pde_residual(phi, psis, point, h=None):
    """
    Residual of d(phi)/dt + sum_i (1 - psi_i(u)) d(phi)/du_i at a point

    All partials are central differences of step h on the (2c+2)-point
    stencil around (t, u).

    Args:
        phi: callable (t, u) -> MGF value
        psis: one callable u -> psi_i(u) per coordinate
        point: (t, u) with u a length-c vector
        h: difference step, Config.FD_STEP by default

    Returns:
        PdeResidual with the raw residual and the largest single term
    """
    h = Config.FD_STEP if h is None else h
    t, u = point
    u = np.asarray(u, dtype=float)
    terms = [(phi(t + h, u) - phi(t - h, u)) / (2 * h)]
    for i, psi in enumerate(psis):
        e = np.zeros_like(u)
        e[i] = h
        d_i = (phi(t, u + e) - phi(t, u - e)) / (2 * h)
        terms.append((1.0 - psi(u)) * d_i)
    residual = math.fsum(terms)
    return PdeResidual(residual, max(abs(x) for x in terms))
