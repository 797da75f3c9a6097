"""
Verification batteries: the canonical acceptance battery and the battery
built for a single user scenario
"""
import functools
import logging
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import special

from config import Config
from polya import analytic, numerics
from polya.errors import DomainError, TruncationWarning
from polya.model import (
    BalancedTriangular,
    DiagonalConstant,
    DiagonalExponential,
    Ehrenfest,
    ExponentialRV,
    General,
    Hill,
    InitialState,
    NavigationMatrix,
    ScenarioConfig,
    check_tenability,
    classify,
    psi_functions,
    row_mean_matrix,
)
from polya.simulate import WalkState, auxiliary_rng, sample_ensemble
from polya.verify import (
    CheckKind,
    bounded_check,
    check_conservation,
    check_event_probabilities,
    check_limit,
    compare_mgf_grid,
    compare_moments,
    oracle_check,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SuiteCase:
    """A named group of checks; `run(workers)` returns CheckResults"""
    name: str
    kind: CheckKind
    run: Callable
    config: Optional[ScenarioConfig] = None

    def descriptor(self):
        return f"{self.name}|{self.config!r}"


# Closed form against the governing PDE

_PDE_TIMES = (0.2, 0.4, 0.7, 1.0)

_PDE_SCHEMES = (
    ('diag-constant', DiagonalConstant((1.0, 2.0)), (1.0, 0.5), (-0.2, 0.05), (-0.2, 0.05)),
    ('diag-exponential', DiagonalExponential((1.0, 2.0)), (1.0, 1.0), (-0.3, 0.05), (-0.3, 0.05)),
    ('ehrenfest', Ehrenfest(1.0), (3.0, 5.0), (-0.3, 0.3), (-0.3, 0.3)),
    ('hill', Hill(1.0), (1.0, 3.0), (-0.15, 0.15), (-0.15, 0.15)),
    ('triangular', BalancedTriangular(1.0, 2.0), (1.0, 1.0), (-0.2, 0.1), (-0.2, 0.03)),
)


def _box_points(u_range, v_range):
    (u0, u1), (v0, v1) = u_range, v_range
    return [(u0, v0), (u0, v1), (u1, v0), (u1, v1), ((u0 + u1) / 2, (v0 + v1) / 2)]


def pde_checks(workers=None):
    checks = []
    for name, scheme, x0, u_range, v_range in _PDE_SCHEMES:
        phi = analytic.joint_mgf(scheme, InitialState(x0))
        psis = psi_functions(scheme.canonical_matrix())
        for t in _PDE_TIMES:
            for u in _box_points(u_range, v_range):
                r = numerics.pde_residual(phi, psis, (t, np.array(u)))
                checks.append(oracle_check(
                    f"pde {name} t={t:g} u={list(u)}", r.relative, 0.0,
                    Config.PDE_TOLERANCE, relative=False, kind=CheckKind.PDE_RESIDUAL))
    return checks


# Closed forms against ODE oracles

def kolmogorov_checks(workers=None):
    """Total-size probabilities against RK4, and mass of the closed form"""
    checks = []
    for i in (1.0, 2.0, 3.5):
        for delta in (1.0, 2.0):
            for t in (0.5, 1.0, 2.0, 5.0):
                closed = np.array([analytic.kolmogorov_prob(i, delta, ell, t) for ell in range(51)])
                with warnings.catch_warnings():
                    warnings.simplefilter('ignore', TruncationWarning)
                    rk4 = numerics.ode_solve_kolmogorov(i, delta, 50, t).final
                label = f"kolmogorov i={i:g} delta={delta:g} t={t:g}"
                checks.append(oracle_check(f"{label} rk4", float(np.abs(rk4 - closed).max()),
                                           0.0, 1e-8, relative=False))
                ell_max = math.ceil(40.0 * math.exp(delta * t)) + 50
                mass = math.fsum(numerics.kolmogorov_distribution(i, delta, ell_max, t))
                checks.append(oracle_check(f"{label} mass", mass, 1.0, 1e-8, relative=False))
    return checks


def _draw_scheme(kind, rng):
    """Random scheme, initial state and time for the mean battery"""
    t = rng.uniform(0.1, 2.0)
    if kind == 'ehrenfest':
        gamma = rng.uniform(0.2, 2.0)
        k = rng.integers(0, 7, size=2)
        if k.sum() == 0:
            k[1] = 1
        return Ehrenfest(gamma), (gamma * k[0], gamma * k[1]), t
    if kind == 'hill':
        x = rng.uniform(0.0, 3.0)
        return Hill(rng.uniform(0.2, 2.0)), (x, x + rng.uniform(0.1, 3.0)), t
    if kind == 'triangular':
        alpha = rng.uniform(0.1, 2.5)
        return (BalancedTriangular(alpha, rng.uniform(alpha + 0.1, 3.0)),
                tuple(rng.uniform(0.1, 3.0, size=2)), t)
    if kind == 'diag-constant':
        return DiagonalConstant(tuple(rng.uniform(0.1, 2.0, size=2))), tuple(rng.uniform(0.1, 3.0, size=2)), t
    return DiagonalExponential(tuple(rng.uniform(0.5, 3.0, size=2))), tuple(rng.uniform(0.1, 3.0, size=2)), t


def _normwise(observed, expected):
    return float(np.abs(observed - expected).max() / np.abs(expected).max())


def mean_checks(seed, workers=None):
    """matrix_exp and RK4 means against the closed forms on random draws"""
    checks = []
    kinds = ('ehrenfest', 'hill', 'triangular', 'diag-constant', 'diag-exponential')
    for n, kind in enumerate(kinds):
        rng = auxiliary_rng(seed, 10 + n)
        for draw in range(20):
            scheme, x0, t = _draw_scheme(kind, rng)
            init = InitialState(x0)
            M = row_mean_matrix(scheme.canonical_matrix())
            closed = analytic.moments_for(scheme, init, t).means
            by_expm = analytic.mean_vector(M, init, t)
            by_ode = numerics.ode_solve_mean(M, init.coordinates, t).final
            label = f"mean {kind} draw {draw}"
            checks.append(oracle_check(f"{label} expm", _normwise(by_expm, closed), 0.0,
                                       1e-8, relative=False))
            checks.append(oracle_check(f"{label} rk4", _normwise(by_ode, closed), 0.0,
                                       1e-8, relative=False))
    return checks


def second_moment_checks(seed, workers=None):
    checks = []
    rng = auxiliary_rng(seed, 20)
    for draw in range(10):
        alpha = rng.uniform(0.1, 2.5)
        delta = rng.uniform(alpha + 0.1, 3.0)
        x0, y0 = rng.uniform(0.1, 3.0, size=2)
        t = rng.uniform(0.1, 2.0)
        second = analytic.moments_triangular(alpha, delta, x0, y0, t).second_moments
        closed = np.array([second[0, 0], second[0, 1], second[1, 1]])
        ode = numerics.ode_second_moments_triangular(alpha, delta, x0, y0, t).final
        for name, o, c in zip(('E[X^2]', 'E[XY]', 'E[Y^2]'), ode, closed):
            checks.append(oracle_check(f"second moments draw {draw} {name}", float(o), float(c), 1e-7))
    return checks


def _tree_series(z, terms=60):
    return math.fsum(ell ** (ell - 1) / math.factorial(ell) * z ** ell for ell in range(1, terms + 1))


def lambert_grid():
    """1000 points over (-1/e, 1e6]"""
    negative = -numerics.INV_E * (1.0 - np.logspace(-12, 0, 400, endpoint=False))
    positive = np.logspace(-12, 6, 600)
    return np.concatenate([negative, positive])


def numerics_checks(seed, workers=None):
    checks = []
    worst = 0.0
    for z in lambert_grid():
        w = numerics.lambert_w0(z)
        worst = max(worst, abs(w * math.exp(w) - z) / max(1.0, abs(z)))
    checks.append(oracle_check("lambert identity", worst, 0.0, 1e-12, relative=False))

    checks.append(oracle_check("tree function series z=0.2", numerics.tree_function(0.2),
                               _tree_series(0.2), 1e-10))
    star = analytic.LambertStar()
    checks.append(oracle_check("lambert law mean", star.mean(), _series_coefficient(1), 1e-12))
    checks.append(oracle_check("lambert law second moment", star.variance() + star.mean() ** 2,
                               math.factorial(2) * _series_coefficient(2), 1e-12))

    rng = auxiliary_rng(seed, 30)
    worst = 0.0
    for _ in range(20):
        M = rng.normal(size=(4, 4))
        M *= 2.0 / np.linalg.norm(M, 2)
        s, t = rng.uniform(0.0, 1.0, size=2)
        whole = numerics.matrix_exp(M, s + t)
        split = numerics.matrix_exp(M, s) @ numerics.matrix_exp(M, t)
        worst = max(worst, np.abs(whole - split).max() / np.abs(whole).max())
    checks.append(oracle_check("matrix_exp semigroup", float(worst), 0.0, 1e-10, relative=False))

    worst = 0.0
    for mu in np.arange(1, 10) / 10.0:
        for Z in np.linspace(-0.9, 0.9, 19):
            ref = special.hyp2f1(mu, 1.0, 2.0, Z)
            worst = max(worst, abs(numerics.hyp2f1_special(mu, Z) - ref) / abs(ref))
    checks.append(oracle_check("hyp2f1_special vs 2F1", float(worst), 0.0, 1e-10, relative=False))

    exact = all(numerics.rising_factorial(1, n) == math.factorial(n) for n in range(21))
    exact = exact and numerics.rising_factorial(2.5, 3) == 39.375
    checks.append(oracle_check("rising factorial exactness", float(exact), 1.0, 0.0))
    return checks


def _series_coefficient(k):
    """Coefficient of s^k in T(s)/s = sum l^(l-1) s^(l-1) / l!"""
    ell = k + 1
    return ell ** (ell - 1) / math.factorial(ell)


# Monte Carlo against closed forms

def _grid_for(config, samples):
    """Small symmetric-safe grid: zero and a negative diagonal point"""
    t = config.checkpoints[-1]
    scale = float(np.abs(samples.at(t)).mean(axis=0).max())
    c = config.matrix.dimension
    step = -0.5 / (c * max(scale, 1e-12))
    return {t: [np.zeros(c), np.full(c, step)]}


def scenario_checks(config, workers=None, mgf_grid=None, label=''):
    """
    Simulate a scenario and check it against every closed form its scheme has

    Args:
        config: ScenarioConfig
        mgf_grid: {checkpoint: [u, ...]}; a small default grid when omitted
    """
    scheme = classify(config.matrix)
    report = check_tenability(config.matrix, config.init)
    if report.violations:
        raise DomainError('; '.join(report.violations))
    samples = sample_ensemble(config, workers)
    stats = samples.to_stats()

    checks = []
    if isinstance(scheme, General):
        M = row_mean_matrix(config.matrix)
        for k, t in enumerate(config.checkpoints):
            mean = analytic.mean_vector(M, config.init, t)
            se = stats.mean_se()[k]
            for j in range(stats.dimension):
                checks.append(bounded_check(f"{label}t={t:g}:mean[{j}]", CheckKind.MOMENT,
                                            stats.mean[k, j], mean[j], se[j], Config.Z_THRESHOLD))
        return checks

    for t in config.checkpoints:
        checks.extend(compare_moments(stats, analytic.moments_for(scheme, config.init, t), t,
                                      label=label))
    checks.extend(check_conservation(config, samples, label=label))
    phi = analytic.joint_mgf(scheme, config.init)
    grid = mgf_grid if mgf_grid is not None else _grid_for(config, samples)
    for t, points in grid.items():
        checks.extend(compare_mgf_grid(samples, phi, points, t, label=label))
    return checks


def limit_checks(config, workers=None, label=''):
    scheme = classify(config.matrix)
    samples = sample_ensemble(config, workers)
    return check_limit(scheme, config.init, config.checkpoints[-1], samples, label=label)


def window_checks(seed, workers=None):
    matrix = Ehrenfest(1.0).canonical_matrix()
    state = WalkState(0.0, np.array([3.0, 5.0]))
    return check_event_probabilities(state, matrix, 0.01, 1_000_000, auxiliary_rng(seed, 0))


def _scenario(matrix, init, horizon, checkpoints, n, seed):
    return ScenarioConfig(
        matrix=NavigationMatrix.from_rows(matrix),
        init=InitialState(init),
        horizon=horizon,
        checkpoints=checkpoints,
        ensemble_size=n,
        master_seed=seed,
    )


def canonical_battery(ensemble_size=None, seed=None):
    """
    The acceptance battery

    Args:
        ensemble_size: trajectories per Monte Carlo case, Config.CANONICAL_ENSEMBLE_SIZE by default
        seed: master seed of every case, Config.DEFAULT_SEED by default
    """
    n = Config.CANONICAL_ENSEMBLE_SIZE if ensemble_size is None else ensemble_size
    seed = Config.DEFAULT_SEED if seed is None else seed
    partial = functools.partial
    logger.info("canonical battery: %d trajectories per case, seed %d", n, seed)

    diag = _scenario([[1.0]], (1.0,), 1.0, (0.5, 1.0), n, seed)
    ehrenfest = _scenario([[-1.0, 1.0], [1.0, -1.0]], (3.0, 5.0), 10.0, (1.0, 10.0), n, seed)
    hill = _scenario([[-1.0, -1.0], [1.0, 1.0]], (1.0, 3.0), 2.0, (2.0,), n, seed)
    triangular = _scenario([[1.0, 1.0], [0.0, 2.0]], (1.0, 1.0), 1.0, (0.5, 1.0), n, seed)

    limit_ehrenfest = _scenario([[-1.0, 1.0], [1.0, -1.0]], (3.0, 5.0), 10.0, (10.0,), n, seed)
    limit_diag = _scenario([[1.0]], (2.0,), 8.0, (8.0,), n, seed)
    limit_hill = _scenario([[-1.0, -1.0], [1.0, 1.0]], (1.0, 3.0), 50.0, (50.0,), n, seed)
    limit_exponential = _scenario([[ExponentialRV(1.0)]], (1.0,), 8.0, (8.0,), n, seed)

    def mc(name, config, grid):
        return SuiteCase(name, CheckKind.MOMENT,
                         partial(_run_scenario, config, grid, name), config)

    def limit(name, config):
        return SuiteCase(name, CheckKind.LIMIT, partial(_run_limit, config, name), config)

    return [
        SuiteCase('pde-residual', CheckKind.PDE_RESIDUAL, pde_checks),
        SuiteCase('kolmogorov', CheckKind.ORACLE, kolmogorov_checks),
        SuiteCase('mean-agreement', CheckKind.ORACLE, partial(mean_checks, seed)),
        SuiteCase('second-moments', CheckKind.ORACLE, partial(second_moment_checks, seed)),
        SuiteCase('numerics', CheckKind.ORACLE, partial(numerics_checks, seed)),
        mc('mc-diag-constant', diag, {1.0: [(0.0,), (0.1,), (-0.2,)]}),
        mc('mc-ehrenfest', ehrenfest, {1.0: [(0.1, 0.0), (0.05, -0.05)],
                                       10.0: [(0.0, 0.0), (0.1, 0.0)]}),
        mc('mc-hill', hill, {2.0: [(0.05, 0.0)]}),
        mc('mc-triangular', triangular, {0.5: [(0.0, 0.0), (0.1, 0.05)]}),
        limit('limit-ehrenfest', limit_ehrenfest),
        limit('limit-diag-constant', limit_diag),
        limit('limit-hill', limit_hill),
        limit('limit-diag-exponential', limit_exponential),
        SuiteCase('event-window', CheckKind.EVENT_WINDOW, partial(window_checks, seed)),
    ]


def _run_scenario(config, grid, name, workers=None):
    return scenario_checks(config, workers, grid, label=f"{name} ")


def _run_limit(config, name, workers=None):
    return limit_checks(config, workers, label=f"{name} ")


def scenario_cases(config):
    """Battery for a user scenario: moments, path invariants and a small MGF grid"""
    return [SuiteCase('scenario', CheckKind.MOMENT,
                      functools.partial(_run_scenario, config, None, 'scenario'), config)]
