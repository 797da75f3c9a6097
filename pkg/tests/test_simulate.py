import math

import numpy as np
import pytest

from config import Config
from polya import simulate
from polya.analytic import moments_diag_constant, moments_hill
from polya.errors import EnsembleFailure, RateUnderflow, TenabilityBreach
from polya.model import (
    BalancedTriangular,
    Ehrenfest,
    ExponentialRV,
    Hill,
    InitialState,
    NavigationMatrix,
    ScenarioConfig,
)
from polya.simulate import (
    ENSEMBLE_BLOCK_SIZE,
    WalkState,
    auxiliary_rng,
    event_window_counts,
    run_ensemble,
    sample_ensemble,
    simulate_path,
    step,
    trajectory_rng,
)


def scenario(matrix, init, horizon=1.0, checkpoints=None, n=1000, seed=0):
    return ScenarioConfig(matrix, InitialState(init), horizon,
                          checkpoints or (horizon,), n, seed)


EHRENFEST = Ehrenfest(1.0).canonical_matrix()
HILL = Hill(1.0).canonical_matrix()
TRIANGULAR = BalancedTriangular(1.0, 2.0).canonical_matrix()


class TestStep:
    def test_only_positive_coordinate_fires(self):
        state = WalkState(0.0, np.array([5.0, 0.0]))
        rng = np.random.default_rng(0)
        for _ in range(50):
            _, record = step(state, EHRENFEST, rng)
            assert record.fired_coordinate == 0

    def test_ehrenfest_moves(self):
        state = WalkState.initial(InitialState((3.0, 5.0)))
        rng = np.random.default_rng(1)
        seen = set()
        for _ in range(200):
            new, record = step(state, EHRENFEST, rng)
            assert new.time > 0
            assert record.event_time == new.time
            seen.add(tuple(new.coords))
        assert seen == {(2.0, 6.0), (4.0, 4.0)}

    def test_mean_wait(self):
        state = WalkState.initial(InitialState((3.0, 5.0)))
        rng = np.random.default_rng(2)
        n = 20_000
        waits = np.array([step(state, EHRENFEST, rng)[0].time for _ in range(n)])
        # Exp(8) wait: mean 1/8, sd 1/8
        assert abs(waits.mean() - 1 / 8) <= 4 * (1 / 8) / math.sqrt(n)

    def test_firing_frequencies(self):
        state = WalkState.initial(InitialState((3.0, 5.0)))
        rng = np.random.default_rng(3)
        n = 20_000
        fired = np.array([step(state, EHRENFEST, rng)[1].fired_coordinate for _ in range(n)])
        p = 3 / 8
        assert abs((fired == 0).mean() - p) <= 4 * math.sqrt(p * (1 - p) / n)

    def test_exponential_increment(self):
        matrix = NavigationMatrix.from_rows([[ExponentialRV(2.0)]])
        state = WalkState.initial(InitialState((1.0,)))
        rng = np.random.default_rng(4)
        n = 20_000
        incr = np.array([step(state, matrix, rng)[1].applied_increments[0] for _ in range(n)])
        assert (incr > 0).all()
        assert abs(incr.mean() - 0.5) <= 4 * 0.5 / math.sqrt(n)

    def test_rate_underflow(self):
        with pytest.raises(RateUnderflow):
            step(WalkState(0.0, np.zeros(2)), EHRENFEST, np.random.default_rng(0))

    def test_tenability_breach(self):
        matrix = NavigationMatrix.from_rows([[-2.0]])
        with pytest.raises(TenabilityBreach):
            step(WalkState(0.0, np.array([1.0])), matrix, np.random.default_rng(0))


class TestSimulatePath:
    def test_zero_horizon(self):
        config = scenario(EHRENFEST, (3.0, 5.0), horizon=0.0)
        path = simulate_path(config, 0)
        np.testing.assert_array_equal(path.checkpoint_values, [[3.0, 5.0]])
        assert path.event_count == 0

    def test_ehrenfest_conserves_sum(self):
        config = scenario(EHRENFEST, (3.0, 5.0), horizon=10.0, checkpoints=(1.0, 5.0, 10.0))
        for k in range(20):
            values = simulate_path(config, k).checkpoint_values
            np.testing.assert_array_equal(values.sum(axis=1), 8.0)

    def test_triangular_size_tracks_events(self):
        config = scenario(TRIANGULAR, (1.0, 1.0), horizon=1.0)
        for k in range(20):
            path = simulate_path(config, k)
            assert path.checkpoint_values[0].sum() == 2.0 + 2.0 * path.event_count

    def test_matches_step_loop(self):
        """The batched simulator replays exactly the events of repeated step calls"""
        config = scenario(HILL, (1.0, 3.0), horizon=2.0, checkpoints=(0.5, 1.0, 2.0), seed=11)
        for k in (0, 3, 17):
            rng = trajectory_rng(11, k)
            state = WalkState.initial(config.init)
            pending = list(config.checkpoints)
            expected, events = [], 0
            while True:
                new, _ = step(state, config.matrix, rng)
                assert new.time > state.time
                while pending and pending[0] < new.time:
                    expected.append(state.coords)
                    pending.pop(0)
                if new.time > config.horizon:
                    break
                state = new
                events += 1
            path = simulate_path(config, k)
            np.testing.assert_array_equal(path.checkpoint_values, np.array(expected))
            assert path.event_count == events

    def test_failure_is_reported(self):
        config = scenario(NavigationMatrix.from_rows([[-2.0]]), (1.0,), horizon=100.0)
        with pytest.raises(TenabilityBreach) as err:
            simulate_path(config, 4)
        assert err.value.trajectory_index == 4
        assert err.value.event_count == 0


class TestEnsemble:
    def test_worker_count_does_not_change_results(self):
        config = scenario(EHRENFEST, (3.0, 5.0), horizon=1.0, checkpoints=(0.5, 1.0), n=5000, seed=3)
        assert 5000 > ENSEMBLE_BLOCK_SIZE
        assert run_ensemble(config, workers=1).identical(run_ensemble(config, workers=2))

    def test_single_trajectory(self):
        config = scenario(HILL, (1.0, 3.0), n=1)
        stats = run_ensemble(config)
        assert stats.n == 1
        np.testing.assert_array_equal(stats.mean[0], simulate_path(config, 0).checkpoint_values[0])

    def test_samples_reduce_to_ensemble_stats(self):
        config = scenario(TRIANGULAR, (1.0, 1.0), n=5000, checkpoints=(0.5, 1.0))
        samples = sample_ensemble(config)
        assert samples.values.shape == (5000, 2, 2)
        assert samples.to_stats().identical(run_ensemble(config))
        np.testing.assert_array_equal(samples.at(0.5), samples.values[:, 0, :])
        with pytest.raises(KeyError):
            samples.at(0.7)

    def test_chunk_size_is_invisible(self, monkeypatch):
        config = scenario(HILL, (1.0, 3.0), n=300, checkpoints=(0.5, 1.0))
        before = sample_ensemble(config)
        monkeypatch.setattr(Config, 'CHUNK_STEPS', 7)
        after = sample_ensemble(config)
        np.testing.assert_array_equal(before.values, after.values)
        np.testing.assert_array_equal(before.event_counts, after.event_counts)

    def test_buffer_limit_is_invisible(self, monkeypatch):
        config = scenario(HILL, (1.0, 3.0), n=300, checkpoints=(0.5, 1.0))
        before = sample_ensemble(config)
        monkeypatch.setattr(simulate, 'UNIFORM_BUFFER_LIMIT', 5)
        after = sample_ensemble(config)
        np.testing.assert_array_equal(before.values, after.values)
        np.testing.assert_array_equal(before.event_counts, after.event_counts)

    def test_lockstep_groups(self):
        assert simulate._lockstep_groups(10_000, 1) == [(0, 10_000)]
        assert simulate._lockstep_groups(10_000, 2) == [(0, 8192), (8192, 10_000)]
        assert simulate._lockstep_groups(10_000, 8) == [(0, 4096), (4096, 8192), (8192, 10_000)]
        assert simulate._lockstep_groups(100, 4) == [(0, 100)]

    def test_groups_split_back_into_blocks(self):
        config = scenario(EHRENFEST, (3.0, 5.0), horizon=0.5, n=2 * ENSEMBLE_BLOCK_SIZE + 10, seed=8)
        one = sample_ensemble(config, workers=1)
        three = sample_ensemble(config, workers=3)
        np.testing.assert_array_equal(one.values, three.values)
        np.testing.assert_array_equal(one.event_counts, three.event_counts)
        assert run_ensemble(config, workers=1).identical(run_ensemble(config, workers=3))

    def test_trajectories_are_independent_of_ensemble_size(self):
        small = sample_ensemble(scenario(EHRENFEST, (3.0, 5.0), n=50))
        large = sample_ensemble(scenario(EHRENFEST, (3.0, 5.0), n=200))
        np.testing.assert_array_equal(small.values, large.values[:50])

    def test_diag_constant_mean(self):
        config = scenario(NavigationMatrix.from_rows([[1.0]]), (1.0,), n=4000, seed=5)
        stats = run_ensemble(config)
        mean, var = moments_diag_constant(1.0, 1.0, 1.0)
        assert abs(stats.mean[0, 0] - mean) <= 4 * math.sqrt(var / stats.n)

    def test_hill_mean(self):
        config = scenario(HILL, (1.0, 3.0), horizon=2.0, n=4000, seed=6)
        stats = run_ensemble(config)
        exact = moments_hill(1.0, 1.0, 3.0, 2.0)
        for j in range(2):
            assert abs(stats.mean[0, j] - exact.means[j]) <= 4 * math.sqrt(exact.variances[j] / stats.n)

    def test_failures_are_collected(self):
        config = scenario(NavigationMatrix.from_rows([[-2.0]]), (1.0,), horizon=100.0, n=10)
        with pytest.raises(EnsembleFailure) as err:
            run_ensemble(config)
        assert len(err.value.failures) == 10
        assert sorted(f.trajectory_index for f in err.value.failures) == list(range(10))
        with pytest.raises(EnsembleFailure):
            sample_ensemble(config)


class TestEventWindow:
    state = WalkState.initial(InitialState((3.0, 5.0)))

    def test_empty_window(self):
        counts = event_window_counts(self.state, EHRENFEST, 0.0, 100, auxiliary_rng(0, 0))
        assert counts.zero == 1.0
        assert counts.many == 0.0
        np.testing.assert_array_equal(counts.one, [0.0, 0.0])

    def test_probabilities_sum_to_one(self):
        counts = event_window_counts(self.state, EHRENFEST, 0.05, 10_000, auxiliary_rng(0, 1))
        assert counts.zero + counts.one.sum() + counts.many == pytest.approx(1.0)

    def test_small_window_frequencies(self):
        dt, trials = 0.01, 100_000
        counts = event_window_counts(self.state, EHRENFEST, dt, trials, auxiliary_rng(0, 2))
        p_zero = math.exp(-8 * dt)
        assert abs(counts.zero - p_zero) <= 4 * math.sqrt(p_zero * (1 - p_zero) / trials) + (8 * dt) ** 2
        assert counts.one[1] > counts.one[0]

    def test_auxiliary_streams_differ(self):
        a = auxiliary_rng(0, 0).random(4)
        b = auxiliary_rng(0, 1).random(4)
        c = trajectory_rng(0, 1).random(4)
        assert not np.array_equal(a, b)
        assert not np.array_equal(b, c)
