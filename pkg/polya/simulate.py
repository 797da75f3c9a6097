"""
Exact event-driven simulation of the walk

The master clock rings after an exponential wait with rate equal to the
coordinate sum; the coordinate that fires is drawn with probability
proportional to its value and the matching row of the navigation matrix is
added to the state.

Seed derivation (fixed, part of the reproducibility contract): trajectory k
of a run with master seed s draws every uniform from

    numpy.random.Generator(numpy.random.PCG64(
        numpy.random.SeedSequence(s, spawn_key=(k,))))

Auxiliary streams (event windows) use spawn_key=(1, n). Each event consumes
one row of uniforms: column 0 drives the waiting time, column 1 the type
draw, and columns 2.. the exponential increments of the fired row when the
matrix has random entries. Trajectories are grouped into fixed blocks of
ENSEMBLE_BLOCK_SIZE and block statistics are merged in block order, so
results do not depend on the number of workers.
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from config import Config
from polya.errors import EnsembleFailure, RateUnderflow, TenabilityBreach
from polya.model import ExponentialRV
from polya.stats import EnsembleStats

__all__ = [
    'ENSEMBLE_BLOCK_SIZE', 'EnsembleSamples', 'EnsembleStats', 'EventRecord',
    'RowSampler', 'Trajectory', 'WalkState', 'WindowCounts', 'auxiliary_rng',
    'event_window_counts', 'run_ensemble', 'sample_ensemble', 'simulate_path',
    'step', 'trajectory_rng',
]

logger = logging.getLogger(__name__)

ENSEMBLE_BLOCK_SIZE = 4096
AUXILIARY_STREAM = 1
# cap on floats in a lockstep group's uniform buffer; refills shorten below CHUNK_STEPS to fit
UNIFORM_BUFFER_LIMIT = 2 ** 23


def trajectory_rng(master_seed, trajectory_index):
    return np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(master_seed, spawn_key=(trajectory_index,))))


def auxiliary_rng(master_seed, n):
    return np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(master_seed, spawn_key=(AUXILIARY_STREAM, n))))


@dataclass(frozen=True)
class WalkState:
    time: float
    coords: np.ndarray

    @classmethod
    def initial(cls, init):
        return cls(0.0, init.as_array())


@dataclass(frozen=True)
class EventRecord:
    event_time: float
    fired_coordinate: int
    applied_increments: np.ndarray


@dataclass(frozen=True)
class Trajectory:
    trajectory_index: int
    times: tuple
    checkpoint_values: np.ndarray
    event_count: int


class RowSampler:
    """Realizes rows of a navigation matrix from pre-drawn uniforms"""

    def __init__(self, matrix):
        c = matrix.dimension
        self.dimension = c
        self.constants = np.zeros((c, c))
        self.inverse_rates = np.zeros((c, c))
        for i, row in enumerate(matrix.entries):
            for j, entry in enumerate(row):
                if isinstance(entry, ExponentialRV):
                    self.inverse_rates[i, j] = 1.0 / entry.rate
                else:
                    self.constants[i, j] = entry.value
        self.random = bool(self.inverse_rates.any())
        self.width = 2 + (c if self.random else 0)

    def increments(self, fired, uniforms):
        incr = self.constants[fired]
        if self.random:
            incr = incr - np.log1p(-uniforms[:, 2:2 + self.dimension]) * self.inverse_rates[fired]
        return incr


def _fire(weights, cum, u):
    """Index i with probability weights_i / sum, clamped to the last positive weight"""
    fired = (cum <= (u * cum[:, -1])[:, np.newaxis]).sum(axis=1)
    last = weights.shape[1] - 1 - np.argmax(weights[:, ::-1] > 0, axis=1)
    return np.minimum(fired, last)


def step(state, matrix, rng, sampler=None):
    """
    Advance one event from the given state

    Args:
        state: WalkState to move from
        matrix: NavigationMatrix
        rng: numpy Generator; one row of uniforms is consumed

    Returns:
        (new WalkState, EventRecord)
    """
    sampler = sampler or RowSampler(matrix)
    x = np.asarray(state.coords, dtype=float)
    weights = np.clip(x, 0.0, None)[np.newaxis, :]
    cum = np.cumsum(weights, axis=1)
    total = cum[0, -1]
    if not total > 0:
        raise RateUnderflow(f"coordinate sum {x.sum()!r} is not positive")

    u = rng.random(sampler.width)[np.newaxis, :]
    wait = -np.log1p(-u[0, 0]) / total
    fired = _fire(weights, cum, u[:, 1])
    incr = sampler.increments(fired, u)[0]
    new = x + incr
    if (new < -Config.TENABILITY_GUARD).any():
        raise TenabilityBreach(f"coordinates {new.tolist()} fell below zero")
    event_time = state.time + wait
    return WalkState(event_time, new), EventRecord(event_time, int(fired[0]), incr)


def _record_checkpoints(samples, ids, x, next_cp, cp_time, cp_ext, t_next):
    """Store the state in force at every checkpoint passed before t_next"""
    hit = np.flatnonzero(cp_time < t_next)
    while hit.size:
        samples[ids[hit], next_cp[hit]] = x[hit]
        next_cp[hit] += 1
        cp_time[hit] = cp_ext[next_cp[hit]]
        hit = hit[cp_time[hit] < t_next[hit]]


def _refill(rngs, ids, chunk, width):
    steps = max(1, min(chunk, UNIFORM_BUFFER_LIMIT // (ids.size * width)))
    buf = np.empty((ids.size, steps, width))
    for row, k in enumerate(ids):
        buf[row] = rngs[k].random((steps, width))
    return buf


def _simulate_block(config, start, stop, guard, chunk):
    """
    Run trajectories [start, stop) in lockstep

    Only active trajectories are kept in the working arrays; a trajectory
    leaves them when its next event falls past the horizon or it fails.
    Every active trajectory advances one event per iteration, so the event
    count of a finished trajectory is the iteration count.

    Returns:
        (start, samples (B, K, c), event counts (B,), failure records)
    """
    sampler = RowSampler(config.matrix)
    width = sampler.width
    checkpoints = np.asarray(config.checkpoints, dtype=float)
    cp_ext = np.append(checkpoints, np.inf)
    B, c = stop - start, sampler.dimension
    rngs = [trajectory_rng(config.master_seed, k) for k in range(start, stop)]

    samples = np.full((B, checkpoints.size, c), np.nan)
    events = np.zeros(B, dtype=np.int64)
    failures = []

    ids = np.arange(B)
    t = np.zeros(B)
    x = np.tile(config.init.as_array(), (B, 1))
    next_cp = np.zeros(B, dtype=np.int64)
    cp_time = np.full(B, cp_ext[0])
    buf = np.empty((0, 0, width))
    slot = ids
    pos = 0
    done = 0
    while ids.size:
        if pos == buf.shape[1]:
            buf = _refill(rngs, ids, chunk, width)
            slot = np.arange(ids.size)
            pos = 0
        u = buf[slot, pos]
        pos += 1

        weights = np.clip(x, 0.0, None)
        cum = np.cumsum(weights, axis=1)
        total = cum[:, -1]
        underflow = ~(total > 0)
        if underflow.any():
            for k, row in zip(ids[underflow], x[underflow]):
                failures.append((start + int(k), 'RateUnderflow', done,
                                 f"coordinate sum {row.sum()!r} is not positive"))
            events[ids[underflow]] = done
            keep = ~underflow
            ids, slot, t, x, next_cp, cp_time, u, weights, cum, total = (
                a[keep] for a in (ids, slot, t, x, next_cp, cp_time, u, weights, cum, total))
            if not ids.size:
                break

        t_next = t - np.log1p(-u[:, 0]) / total
        _record_checkpoints(samples, ids, x, next_cp, cp_time, cp_ext, t_next)

        over = t_next > config.horizon
        if over.any():
            events[ids[over]] = done
            keep = ~over
            ids, slot, t_next, x, next_cp, cp_time, u, weights, cum = (
                a[keep] for a in (ids, slot, t_next, x, next_cp, cp_time, u, weights, cum))
            if not ids.size:
                break

        fired = _fire(weights, cum, u[:, 1])
        x_new = x + sampler.increments(fired, u)
        breach = (x_new < -guard).any(axis=1)
        if breach.any():
            for k, row in zip(ids[breach], x_new[breach]):
                failures.append((start + int(k), 'TenabilityBreach', done,
                                 f"coordinates {row.tolist()} fell below zero"))
            events[ids[breach]] = done
            keep = ~breach
            ids, slot, t_next, x_new, next_cp, cp_time = (
                a[keep] for a in (ids, slot, t_next, x_new, next_cp, cp_time))
        t, x = t_next, x_new
        done += 1

    return start, samples, events, failures


def _run_block(task):
    config, start, stop, guard, chunk = task
    result = _simulate_block(config, start, stop, guard, chunk)
    logger.debug("group [%d, %d) done, %d failures", start, stop, len(result[3]))
    return result


_FAILURE_TYPES = {'RateUnderflow': RateUnderflow, 'TenabilityBreach': TenabilityBreach}


def _failure_error(record):
    index, kind, event_count, message = record
    return _FAILURE_TYPES[kind](message, trajectory_index=index, event_count=event_count)


def _blocks(ensemble_size):
    return [(s, min(s + ENSEMBLE_BLOCK_SIZE, ensemble_size))
            for s in range(0, ensemble_size, ENSEMBLE_BLOCK_SIZE)]


def _lockstep_groups(ensemble_size, workers):
    """At most `workers` contiguous runs of whole blocks, each simulated in lockstep"""
    blocks = _blocks(ensemble_size)
    if not blocks:
        return []
    size = -(-len(blocks) // max(1, min(workers, len(blocks))))
    return [(blocks[i][0], blocks[min(i + size, len(blocks)) - 1][1])
            for i in range(0, len(blocks), size)]


def _split_blocks(results):
    for start, samples, events, failures in results:
        for lo in range(0, samples.shape[0], ENSEMBLE_BLOCK_SIZE):
            hi = min(lo + ENSEMBLE_BLOCK_SIZE, samples.shape[0])
            yield (start + lo, samples[lo:hi], events[lo:hi],
                   [f for f in failures if start + lo <= f[0] < start + hi])


def _run_blocks(config, workers):
    """Yield block results in block order"""
    workers = workers or Config.WORKERS
    tasks = [(config, start, stop, Config.TENABILITY_GUARD, Config.CHUNK_STEPS)
             for start, stop in _lockstep_groups(config.ensemble_size, workers)]
    logger.info("simulating %d trajectories in %d groups on %d workers",
                config.ensemble_size, len(tasks), workers)
    if workers <= 1 or len(tasks) <= 1:
        yield from _split_blocks(map(_run_block, tasks))
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        yield from _split_blocks(pool.map(_run_block, tasks))


def simulate_path(config, trajectory_index):
    """Single trajectory, identical to trajectory `trajectory_index` of an ensemble run"""
    _, samples, events, failures = _simulate_block(
        config, trajectory_index, trajectory_index + 1,
        Config.TENABILITY_GUARD, Config.CHUNK_STEPS)
    if failures:
        raise _failure_error(failures[0])
    return Trajectory(trajectory_index, config.checkpoints, samples[0], int(events[0]))


@dataclass(frozen=True)
class EnsembleSamples:
    """Raw checkpoint values of a whole ensemble"""
    times: tuple
    values: np.ndarray
    event_counts: np.ndarray

    def at(self, t):
        """Samples at checkpoint t, shape (N, c)"""
        hits = [k for k, s in enumerate(self.times) if abs(s - t) <= 1e-12 * max(1.0, abs(t))]
        if not hits:
            raise KeyError(t)
        return self.values[:, hits[0], :]

    def to_stats(self):
        """Block-wise reduction, bitwise identical to run_ensemble"""
        stats = EnsembleStats.empty(self.times, self.values.shape[2])
        for start, stop in _blocks(self.values.shape[0]):
            stats = stats.merge(EnsembleStats.from_samples(self.times, self.values[start:stop]))
        return stats


def sample_ensemble(config, workers=None):
    """Run the ensemble and keep every trajectory's checkpoint values"""
    values, counts, failures = [], [], []
    for _, samples, events, block_failures in _run_blocks(config, workers):
        values.append(samples)
        counts.append(events)
        failures.extend(block_failures)
    if failures:
        raise EnsembleFailure([_failure_error(f) for f in failures])
    return EnsembleSamples(config.checkpoints, np.concatenate(values), np.concatenate(counts))


def run_ensemble(config, workers=None):
    """
    Run config.ensemble_size trajectories and merge their statistics

    Raises:
        EnsembleFailure: when any trajectory breached tenability or underflowed
    """
    stats = EnsembleStats.empty(config.checkpoints, config.matrix.dimension)
    failures = []
    for _, samples, _, block_failures in _run_blocks(config, workers):
        failures.extend(block_failures)
        if not failures:
            stats = stats.merge(EnsembleStats.from_samples(config.checkpoints, samples))
    if failures:
        raise EnsembleFailure([_failure_error(f) for f in failures])
    logger.info("ensemble of %d trajectories complete", stats.n)
    return stats


@dataclass(frozen=True)
class WindowCounts:
    """Empirical event-count probabilities over a window (t, t + delta_t]"""
    trials: int
    zero: float
    one: np.ndarray
    many: float


def event_window_counts(state, matrix, delta_t, trials, rng):
    """
    Estimate P(no event), P(exactly one event of type i) and P(two or more)
    over `trials` independent windows starting at `state`
    """
    sampler = RowSampler(matrix)
    c = sampler.dimension
    if delta_t <= 0:
        return WindowCounts(trials, 1.0, np.zeros(c), 0.0)
    x = np.asarray(state.coords, dtype=float)
    weights = np.tile(np.clip(x, 0.0, None), (trials, 1))
    cum = np.cumsum(weights, axis=1)
    total = cum[:, -1]
    if not total[0] > 0:
        raise RateUnderflow(f"coordinate sum {x.sum()!r} is not positive")

    u = rng.random((trials, sampler.width + 1))
    first = -np.log1p(-u[:, 0]) / total
    fired = _fire(weights, cum, u[:, 1])
    after = np.clip(x + sampler.increments(fired, u[:, :sampler.width]), 0.0, None).sum(axis=1)
    positive = after > 0
    second = np.where(positive, -np.log1p(-u[:, -1]) / np.where(positive, after, 1.0), np.inf)

    hit = first <= delta_t
    many = hit & (first + second <= delta_t)
    one = hit & ~many
    return WindowCounts(
        trials=trials,
        zero=float((~hit).mean()),
        one=np.bincount(fired[one], minlength=c) / trials,
        many=float(many.mean()),
    )
