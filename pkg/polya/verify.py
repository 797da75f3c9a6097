"""
Statistical and numerical cross-verification: Monte Carlo against closed
forms, closed forms against the PDE and ODE oracles, and scaled limits
"""
import csv
import enum
import hashlib
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats as scipy_stats

from config import Config
from polya.analytic import Binomial, limit_spec, moments_for
from polya.errors import DomainError, InsufficientSamples, PolyaError
from polya.model import BalancedTriangular, Ehrenfest, Hill, classify
from polya.simulate import event_window_counts
from polya.stats import EnsembleStats

logger = logging.getLogger(__name__)

LATTICE_TOLERANCE = 1e-9
CONSERVATION_TOLERANCE = 1e-9


class CheckKind(str, enum.Enum):
    MOMENT = 'moment'
    MGF_GRID = 'mgf-grid'
    PDE_RESIDUAL = 'pde-residual'
    ORACLE = 'oracle'
    LIMIT = 'limit'
    EVENT_WINDOW = 'event-window'
    INVARIANT = 'invariant'


@dataclass(frozen=True)
class CheckResult:
    """
    One verification record

    For statistical checks `score` is the z-score and `threshold` the bound it
    must stay within; for oracle checks both are in units of the compared
    quantity (error and tolerance).
    """
    name: str
    kind: CheckKind
    observed: float
    expected: float
    score: float
    threshold: float
    passed: bool

    def as_dict(self):
        record = asdict(self)
        record['kind'] = self.kind.value
        return record


CSV_FIELDS = ('name', 'kind', 'observed', 'expected', 'score', 'threshold', 'passed')


@dataclass
class VerificationReport:
    checks: list = field(default_factory=list)
    config_digest: str = ''
    master_seed: int = 0

    @property
    def overall_pass(self):
        return all(check.passed for check in self.checks)

    def failed(self):
        return [check for check in self.checks if not check.passed]

    def extend(self, checks):
        self.checks.extend(checks)

    def to_json(self):
        return json.dumps({
            'checks': [check.as_dict() for check in self.checks],
            'config_digest': self.config_digest,
            'master_seed': self.master_seed,
            'overall_pass': self.overall_pass,
        }, sort_keys=True, indent=2) + '\n'

    def to_csv(self):
        out = io.StringIO()
        writer = csv.writer(out, lineterminator='\n')
        writer.writerow(CSV_FIELDS)
        for check in self.checks:
            writer.writerow([
                check.name, check.kind.value, _fmt(check.observed), _fmt(check.expected),
                _fmt(check.score), _fmt(check.threshold), 'true' if check.passed else 'false',
            ])
        return out.getvalue()


def _fmt(x):
    return '%.17g' % x


# Building blocks

def bounded_check(name, kind, observed, expected, se, z, slack=0.0):
    """Pass when |observed - expected| <= z*se + slack"""
    diff = observed - expected
    bound = z * se + slack
    passed = bool(abs(diff) <= bound)
    if se > 0:
        score, threshold = diff / se, bound / se
    else:
        score = 0.0 if diff == 0 else math.copysign(math.inf, diff)
        threshold = math.inf if bound > 0 else 0.0
    return CheckResult(name, CheckKind(kind), float(observed), float(expected),
                       float(score), float(threshold), passed)


def oracle_check(name, observed, expected, tolerance, relative=True, kind=CheckKind.ORACLE):
    """Deterministic comparison against an independent evaluation"""
    err = abs(observed - expected)
    if relative:
        err /= max(abs(expected), np.finfo(float).tiny)
    return CheckResult(name, CheckKind(kind), float(observed), float(expected),
                       float(err), float(tolerance), bool(err <= tolerance))


def _samples_at(samples, checkpoint):
    if hasattr(samples, 'at'):
        return samples.at(checkpoint)
    return np.asarray(samples, dtype=float)


# Operations

def compare_moments(stats, analytic, checkpoint, z_threshold=None, label=''):
    """
    z-score empirical means, variances and covariances against closed forms

    Variance standard errors use the empirical fourth central moment;
    covariance standard errors use a Cauchy-Schwarz bound.

    Raises:
        InsufficientSamples: fewer than Config.MIN_SAMPLES trajectories
    """
    z = Config.Z_THRESHOLD if z_threshold is None else z_threshold
    if stats.n < Config.MIN_SAMPLES:
        raise InsufficientSamples(f"{stats.n} samples, need at least {Config.MIN_SAMPLES}")
    k = stats.checkpoint_index(checkpoint)
    mean, mean_se = stats.mean[k], stats.mean_se()[k]
    var, var_se = stats.variance()[k], stats.variance_se()[k]
    cov = stats.covariance()[k]
    prefix = f"{label}t={checkpoint:g}:"

    checks = []
    for j in range(stats.dimension):
        checks.append(bounded_check(f"{prefix}mean[{j}]", CheckKind.MOMENT,
                                    mean[j], analytic.means[j], mean_se[j], z))
        checks.append(bounded_check(f"{prefix}var[{j}]", CheckKind.MOMENT,
                                    var[j], analytic.variances[j], var_se[j], z))
    for j in range(stats.dimension):
        for l in range(j + 1, stats.dimension):
            se = stats.covariance_se(j, l)[k]
            checks.append(bounded_check(f"{prefix}cov[{j},{l}]", CheckKind.MOMENT,
                                        cov[j, l], analytic.covariance[j, l], se, z))
    return checks


def bonferroni_threshold(z_threshold, m):
    """z bound keeping the family-wise error of m checks at that of one check at z_threshold"""
    if m <= 1:
        return z_threshold
    return float(scipy_stats.norm.isf(scipy_stats.norm.sf(z_threshold) / m))


def compare_mgf_grid(samples, phi, grid, checkpoint, z_threshold=None, label=''):
    """
    Empirical mean of e^{<u, X>} against phi(checkpoint, u) on a grid

    Raises:
        DomainError: a grid point leaves the empirical stability region
            sum_j |u_j| E|X_j| <= 2 or the domain of phi
    """
    z = bonferroni_threshold(Config.Z_THRESHOLD if z_threshold is None else z_threshold, len(grid))
    values = _samples_at(samples, checkpoint)
    n = values.shape[0]
    if n < Config.MIN_SAMPLES:
        raise InsufficientSamples(f"{n} samples, need at least {Config.MIN_SAMPLES}")
    typical = np.abs(values).mean(axis=0)

    checks = []
    for u in grid:
        u = np.asarray(u, dtype=float)
        if float(np.abs(u) @ typical) > 2.0:
            raise DomainError(f"grid point {u.tolist()} outside the empirical MGF stability region")
        expected = phi(checkpoint, u)
        e = np.exp(values @ u)
        se = float(e.std(ddof=1) / math.sqrt(n))
        name = f"{label}t={checkpoint:g}:mgf{u.tolist()}"
        checks.append(bounded_check(name, CheckKind.MGF_GRID, float(e.mean()), expected, se, z))
    return checks


def check_limit(scheme, init, t_large, samples, z_threshold=None, label=''):
    """
    Compare the scaled ensemble at t_large with the scheme's limit law

    Mean and variance are z-scored with an allowance equal to the closed-form
    transient |exact(t_large) - law|. Binomial limits also require every
    scaled value to sit on the lattice {0, step, ..., n*step}.

    Raises:
        NoLimitSpec: the scheme has no limit law
    """
    z = Config.Z_THRESHOLD if z_threshold is None else z_threshold
    specs = limit_spec(scheme, init)
    exact = moments_for(scheme, init, t_large)
    values = _samples_at(samples, t_large)
    if values.shape[0] < Config.MIN_SAMPLES:
        raise InsufficientSamples(f"{values.shape[0]} samples, need at least {Config.MIN_SAMPLES}")

    checks = []
    for j, spec in enumerate(specs):
        f = spec.scaling.factor(t_large)
        scaled = spec.scaled(values[:, j], t_large)
        st = EnsembleStats.from_samples((t_large,), scaled.reshape(-1, 1, 1))
        law = spec.law
        prefix = f"{label}limit t={t_large:g}:"
        checks.append(bounded_check(
            f"{prefix}mean[{j}]", CheckKind.LIMIT, st.mean[0, 0], law.mean(),
            st.mean_se()[0, 0], z, slack=abs(f * exact.means[j] - law.mean())))
        checks.append(bounded_check(
            f"{prefix}var[{j}]", CheckKind.LIMIT, st.variance()[0, 0], law.variance(),
            st.variance_se()[0, 0], z, slack=abs(f * f * exact.variances[j] - law.variance())))
        if isinstance(law, Binomial):
            q = scaled / law.step
            on_lattice = (np.abs(q - np.rint(q)) <= LATTICE_TOLERANCE) & (q > -0.5) & (q < law.n + 0.5)
            checks.append(oracle_check(f"{prefix}lattice[{j}]", float(on_lattice.mean()), 1.0,
                                       0.0, kind=CheckKind.LIMIT))
    return checks


def check_event_probabilities(state, matrix, delta_t, trials, rng, z_threshold=None, label=''):
    """
    Window event frequencies against the leading-order probabilities
    e^{-dt S}, dt X_i e^{-dt S} and 0, with allowance (dt S)^2
    """
    z = Config.Z_THRESHOLD if z_threshold is None else z_threshold
    counts = event_window_counts(state, matrix, delta_t, trials, rng)
    x = np.asarray(state.coords, dtype=float)
    total = float(np.clip(x, 0.0, None).sum())
    dt = max(delta_t, 0.0)
    p_zero = math.exp(-dt * total)
    allowance = (dt * total) ** 2

    def se(p, observed):
        p = p if 0 < p < 1 else observed
        return math.sqrt(p * (1 - p) / trials)

    prefix = f"{label}window dt={delta_t:g}:"
    checks = [bounded_check(f"{prefix}P(0)", CheckKind.EVENT_WINDOW, counts.zero, p_zero,
                            se(p_zero, counts.zero), z, allowance)]
    for i, observed in enumerate(counts.one):
        p = dt * max(x[i], 0.0) * p_zero
        checks.append(bounded_check(f"{prefix}P(1,type {i})", CheckKind.EVENT_WINDOW,
                                    observed, p, se(p, observed), z, allowance))
    checks.append(bounded_check(f"{prefix}P(>=2)", CheckKind.EVENT_WINDOW, counts.many, 0.0,
                                se(0.0, counts.many), z, allowance))
    return checks


def check_conservation(config, samples, label=''):
    """
    Path invariants: Ehrenfest X+Y, hill Y-X, and balanced-triangular growth
    X+Y = i + delta*events (at a checkpoint equal to the horizon; earlier
    checkpoints must sit on the i + delta*N lattice)
    """
    scheme = classify(config.matrix)
    values = samples.values
    x0 = config.init.coordinates
    prefix = f"{label}invariant:"
    checks = []
    if isinstance(scheme, Ehrenfest):
        lam = x0[0] + x0[1]
        dev = np.abs(values.sum(axis=2) - lam).max()
        checks.append(oracle_check(f"{prefix}X+Y", float(dev), 0.0,
                                   CONSERVATION_TOLERANCE * max(1.0, lam),
                                   relative=False, kind=CheckKind.INVARIANT))
    elif isinstance(scheme, Hill):
        lam = x0[1] - x0[0]
        dev = np.abs(values[:, :, 1] - values[:, :, 0] - lam).max()
        checks.append(oracle_check(f"{prefix}Y-X", float(dev), 0.0,
                                   CONSERVATION_TOLERANCE * max(1.0, lam),
                                   relative=False, kind=CheckKind.INVARIANT))
    elif isinstance(scheme, BalancedTriangular):
        i = x0[0] + x0[1]
        levels = (values.sum(axis=2) - i) / scheme.delta
        tol = CONSERVATION_TOLERANCE * max(1.0, float(np.abs(levels).max()))
        dev = np.abs(levels - np.rint(levels)).max()
        checks.append(oracle_check(f"{prefix}X+Y lattice", float(dev), 0.0, tol,
                                   relative=False, kind=CheckKind.INVARIANT))
        if config.checkpoints[-1] == config.horizon:
            dev = np.abs(levels[:, -1] - samples.event_counts).max()
            checks.append(oracle_check(f"{prefix}X+Y = i + delta*events", float(dev), 0.0, tol,
                                       relative=False, kind=CheckKind.INVARIANT))
    else:
        logger.debug("no path invariant for %r", scheme)
    return checks


def config_digest(cases):
    h = hashlib.sha256()
    for case in cases:
        h.update(case.descriptor().encode('utf-8'))
        h.update(b'\n')
    return h.hexdigest()


def run_full_suite(cases, workers=None, master_seed=0):
    """
    Run every case and aggregate the checks

    A PolyaError raised inside a case becomes a failed check for that case;
    anything else propagates.
    """
    report = VerificationReport(config_digest=config_digest(cases), master_seed=master_seed)
    for case in cases:
        logger.info("running %s", case.name)
        try:
            checks = case.run(workers)
        except PolyaError as e:
            logger.error("%s failed: %s", case.name, e)
            checks = [CheckResult(f"{case.name}:error", CheckKind(case.kind), math.nan,
                                  math.nan, math.nan, math.nan, False)]
        bad = sum(1 for c in checks if not c.passed)
        logger.debug("%s: %d checks, %d failed", case.name, len(checks), bad)
        report.extend(checks)
    return report
