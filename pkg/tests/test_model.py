import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from polya.errors import DomainError, ValidationError
from polya.model import (
    BalancedTriangular,
    Constant,
    DiagonalConstant,
    DiagonalExponential,
    Ehrenfest,
    ExponentialRV,
    General,
    Hill,
    InitialState,
    NavigationMatrix,
    ScenarioConfig,
    TenabilityStatus,
    check_tenability,
    classify,
    lattice_count,
    psi_functions,
    row_mean_matrix,
    row_mgf,
)

positive = st.floats(min_value=0.01, max_value=100.0, allow_nan=False, allow_infinity=False)
coordinate = st.floats(min_value=0.0, max_value=100.0, allow_nan=False, allow_infinity=False)


def matrix(rows):
    return NavigationMatrix.from_rows(rows)


class TestEntries:
    def test_constant_mgf(self):
        assert Constant(2.0).mgf(0.5) == pytest.approx(math.e)
        assert Constant(-1.0).mean() == -1.0

    def test_exponential_mean_and_mgf(self):
        e = ExponentialRV(4.0)
        assert e.mean() == 0.25
        assert e.mgf(2.0) == pytest.approx(2.0)
        with pytest.raises(DomainError):
            e.mgf(4.0)

    def test_exponential_rate_must_be_positive(self):
        with pytest.raises(ValidationError):
            ExponentialRV(0.0)

    def test_str_forms(self):
        assert str(ExponentialRV(2.0)) == 'exp(2.0)'
        assert str(Constant(1.5)) == '1.5'


class TestValidation:
    def test_non_square_matrix(self):
        with pytest.raises(ValidationError) as err:
            NavigationMatrix(((1.0, 2.0), (3.0,)))
        assert err.value.problems

    def test_from_flat_length(self):
        with pytest.raises(ValidationError):
            NavigationMatrix.from_flat(2, [1.0, 2.0, 3.0])

    @pytest.mark.parametrize('coords', [(-1.0, 2.0), (0.0, 0.0), (math.inf, 1.0), ()])
    def test_bad_initial_state(self, coords):
        with pytest.raises(ValidationError):
            InitialState(coords)

    def test_triangular_needs_alpha_below_delta(self):
        with pytest.raises(ValidationError):
            BalancedTriangular(2.0, 1.0)

    def test_scenario_checkpoints(self):
        base = dict(matrix=matrix([[1.0]]), init=InitialState((1.0,)), horizon=1.0,
                    ensemble_size=10, master_seed=0)
        with pytest.raises(ValidationError):
            ScenarioConfig(checkpoints=(0.5, 0.5), **base)
        with pytest.raises(ValidationError):
            ScenarioConfig(checkpoints=(2.0,), **base)
        with pytest.raises(ValidationError):
            ScenarioConfig(checkpoints=(1.0,), **{**base, 'master_seed': -1})
        config = ScenarioConfig(checkpoints=(0.0, 1.0), **base)
        assert config.replace(ensemble_size=20).ensemble_size == 20

    def test_scenario_dimension_mismatch(self):
        with pytest.raises(ValidationError):
            ScenarioConfig(matrix([[1.0]]), InitialState((1.0, 1.0)), 1.0, (1.0,), 10, 0)


class TestClassify:
    def test_examples(self):
        assert classify(matrix([[2.0, 0.0], [0.0, 3.0]])) == DiagonalConstant((2.0, 3.0))
        assert classify(matrix([[-1.0, 1.0], [1.0, -1.0]])) == Ehrenfest(1.0)
        assert classify(matrix([[1.0, 1.0], [0.0, 2.0]])) == BalancedTriangular(1.0, 2.0)
        assert classify(matrix([[-1.0, -1.0], [1.0, 1.0]])) == Hill(1.0)
        assert classify(matrix([[ExponentialRV(1.0)]])) == DiagonalExponential((1.0,))

    def test_general_fallback(self):
        assert classify(matrix([[1.0, 2.0], [3.0, 4.0]])) == General()
        assert classify(matrix([[-2.0]])) == General()
        assert classify(matrix([[ExponentialRV(1.0), 1.0], [0.0, 1.0]])) == General()

    @given(positive)
    def test_ehrenfest_and_hill_reconstruct(self, g):
        for scheme in (Ehrenfest(g), Hill(g)):
            m = scheme.canonical_matrix()
            assert classify(m) == scheme
            assert classify(m).canonical_matrix() == m

    @given(positive, positive)
    def test_triangular_reconstructs(self, alpha, delta):
        assume(alpha < delta)
        scheme = BalancedTriangular(alpha, delta)
        assert classify(scheme.canonical_matrix()) == scheme

    @given(st.lists(positive, min_size=1, max_size=4))
    def test_diagonal_reconstructs(self, alphas):
        scheme = DiagonalConstant(tuple(alphas))
        m = scheme.canonical_matrix()
        assert classify(m).canonical_matrix() == m


class TestTenability:
    def test_ehrenfest_examples(self):
        ok = check_tenability(Ehrenfest(1.0).canonical_matrix(), InitialState((3.0, 5.0)))
        assert ok.ok
        bad = check_tenability(Ehrenfest(2.0).canonical_matrix(), InitialState((3.0, 4.0)))
        assert bad.status is TenabilityStatus.VIOLATED
        assert any('X(0)/gamma' in v for v in bad.violations)

    def test_ehrenfest_fractional_gamma(self):
        # 0.3 / 0.1 evaluates to 2.9999999999999996
        report = check_tenability(Ehrenfest(0.1).canonical_matrix(), InitialState((0.3, 0.5)))
        assert report.ok
        bad = check_tenability(Ehrenfest(0.1).canonical_matrix(), InitialState((0.35, 0.5)))
        assert len(bad.violations) == 1
        assert bad.violations[0].startswith('X(0)/gamma')

    def test_lattice_count(self):
        assert lattice_count(0.3 / 0.1) == 3
        assert lattice_count((0.3 + 0.5) / 0.1) == 8
        assert lattice_count(0.0) == 0
        assert lattice_count(2.5) is None
        assert lattice_count(-1.0) is None

    def test_hill_example(self):
        report = check_tenability(Hill(1.0).canonical_matrix(), InitialState((2.0, 1.0)))
        assert report.violations == ("Y(0) > X(0) required",)

    @given(coordinate, coordinate)
    def test_hill_iff(self, x, y):
        assume(x + y > 0)
        report = check_tenability(Hill(1.0).canonical_matrix(), InitialState((x, y)))
        assert report.ok == (y > x)

    def test_general_is_unknown(self):
        report = check_tenability(matrix([[1.0, 2.0], [3.0, 4.0]]), InitialState((1.0, 1.0)))
        assert report.status is TenabilityStatus.UNKNOWN
        assert report.warning

    def test_diagonal_always_tenable(self):
        m = DiagonalExponential((1.0, 2.0)).canonical_matrix()
        assert check_tenability(m, InitialState((0.0, 1.0))).ok


class TestRowFunctions:
    def test_row_mean_matrix(self):
        rows = [[1.0, 2.0], [0.0, -3.0]]
        np.testing.assert_array_equal(row_mean_matrix(matrix(rows)), rows)
        np.testing.assert_array_equal(
            row_mean_matrix(DiagonalExponential((1.0, 1.0)).canonical_matrix()), np.eye(2))
        assert row_mean_matrix(matrix([[ExponentialRV(4.0)]]))[0, 0] == 0.25

    def test_row_mgf_examples(self):
        m = Ehrenfest(1.0).canonical_matrix()
        assert row_mgf(m, 0, [0.2, 0.3]) == pytest.approx(math.exp(-0.2 + 0.3))
        assert row_mgf(matrix([[ExponentialRV(1.0)]]), 0, [0.5]) == pytest.approx(2.0)

    def test_row_mgf_domain(self):
        with pytest.raises(DomainError):
            row_mgf(matrix([[ExponentialRV(1.0)]]), 0, [1.0])
        with pytest.raises(DomainError):
            row_mgf(matrix([[1.0]]), 0, [0.1, 0.2])

    @given(st.lists(st.one_of(st.floats(-5, 5), positive.map(ExponentialRV)), min_size=4, max_size=4))
    def test_row_mgf_is_one_at_zero(self, entries):
        m = NavigationMatrix.from_flat(2, entries)
        for i in range(2):
            assert row_mgf(m, i, np.zeros(2)) == 1.0

    @given(st.floats(0.0, 3.0), st.floats(-1.0, 0.4), st.floats(0.01, 0.5))
    def test_row_mgf_increasing_for_nonnegative_entries(self, a, u, du):
        m = matrix([[a, ExponentialRV(1.0)], [0.0, 1.0]])
        lo, hi = row_mgf(m, 0, [0.0, u]), row_mgf(m, 0, [0.0, u + du])
        assert hi > lo

    def test_psi_functions(self):
        psis = psi_functions(Hill(1.0).canonical_matrix())
        assert psis[1](np.array([0.1, 0.2])) == pytest.approx(math.exp(0.3))
