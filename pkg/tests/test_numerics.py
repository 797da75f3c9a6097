import math
import warnings

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from polya import numerics
from polya.analytic import mgf_diag_constant
from polya.errors import DomainError, TruncationWarning
from polya.model import NavigationMatrix, psi_functions
from polya.suite import lambert_grid


class TestLambert:
    def test_examples(self):
        assert numerics.lambert_w0(0.0) == 0.0
        assert numerics.lambert_w0(math.e) == pytest.approx(1.0, rel=1e-14)
        assert numerics.lambert_w0(-numerics.INV_E) == -1.0

    def test_domain(self):
        with pytest.raises(DomainError):
            numerics.lambert_w0(-0.5)
        with pytest.raises(DomainError):
            numerics.lambert_w0(math.nan)

    def test_identity_on_grid(self):
        for z in lambert_grid():
            w = numerics.lambert_w0(z)
            assert w >= -1.0
            assert abs(w * math.exp(w) - z) <= 1e-12 * max(1.0, abs(z))

    @pytest.mark.parametrize('z', [-0.3678, -0.2, 1e-8, 0.5, 10.0, 1e5])
    def test_against_mpmath(self, z):
        assert numerics.lambert_w0(z) == pytest.approx(float(mpmath.lambertw(z).real), rel=1e-12)

    def test_tree_function(self):
        assert numerics.tree_function(0.0) == 0.0
        assert numerics.tree_function(numerics.INV_E) == 1.0
        series = mpmath.nsum(lambda l: l ** (l - 1) * mpmath.mpf(0.2) ** l / mpmath.factorial(l),
                             [1, 60])
        assert numerics.tree_function(0.2) == pytest.approx(float(series), rel=1e-10)
        with pytest.raises(DomainError):
            numerics.tree_function(0.5)

    @given(st.floats(-50.0, 0.36))
    def test_tree_function_inverse(self, z):
        T = numerics.tree_function(z)
        assert T * math.exp(-T) == pytest.approx(z, rel=1e-12, abs=1e-300)


class TestMatrixExp:
    def test_identity_at_zero(self):
        np.testing.assert_array_equal(numerics.matrix_exp(np.ones((3, 3)), 0.0), np.eye(3))

    def test_diagonal(self):
        np.testing.assert_allclose(numerics.matrix_exp(np.diag([1.0, -2.0]), 0.5),
                                   np.diag([math.exp(0.5), math.exp(-1.0)]), rtol=1e-14)

    def test_ehrenfest_generator(self):
        a = math.exp(-2.0)
        expected = 0.5 * np.array([[1 + a, 1 - a], [1 - a, 1 + a]])
        M = np.array([[-1.0, 1.0], [1.0, -1.0]]).T
        np.testing.assert_allclose(numerics.matrix_exp(M, 1.0), expected, rtol=1e-13)

    def test_against_series(self):
        rng = np.random.default_rng(3)
        M = rng.normal(size=(4, 4))
        M *= 5.0 / np.linalg.norm(M, 2)
        oracle = np.array(mpmath.expm(mpmath.matrix(M.tolist())).tolist(), dtype=float)
        np.testing.assert_allclose(numerics.matrix_exp(M), oracle, rtol=1e-12,
                                   atol=1e-12 * np.abs(oracle).max())

    def test_needs_square(self):
        with pytest.raises(DomainError):
            numerics.matrix_exp(np.ones((2, 3)))


class TestCombinatorics:
    def test_rising_factorial(self):
        assert numerics.rising_factorial(0.7, 0) == 1
        assert numerics.rising_factorial(1, 5) == 120
        assert numerics.rising_factorial(2.5, 3) == 39.375
        with pytest.raises(DomainError):
            numerics.rising_factorial(1.0, -1)

    def test_log_rising_factorial(self):
        for x, ell in ((0.5, 7), (2.0, 0), (3.5, 20)):
            assert numerics.log_rising_factorial(x, ell) == pytest.approx(
                math.log(numerics.rising_factorial(x, ell)), rel=1e-13, abs=1e-13)

    def test_hyp2f1_examples(self):
        assert numerics.hyp2f1_special(0.3, 1e-12) == pytest.approx(1.0)
        assert numerics.hyp2f1_special(0.0, 0.6) == pytest.approx(1.0, rel=1e-14)
        assert numerics.hyp2f1_special(0.5, 0.75) == pytest.approx(4.0 / 3.0, rel=1e-14)
        assert numerics.hyp2f1_special(1.0, 0.5) == pytest.approx(-math.log(0.5) / 0.5, rel=1e-14)
        with pytest.raises(DomainError):
            numerics.hyp2f1_special(0.5, 1.0)

    @pytest.mark.parametrize('mu', np.arange(1, 10) / 10.0)
    def test_hyp2f1_against_mpmath(self, mu):
        for Z in np.linspace(-0.9, 0.9, 19):
            ref = float(mpmath.hyp2f1(mu, 1, 2, Z))
            assert numerics.hyp2f1_special(mu, Z) == pytest.approx(ref, rel=1e-10)


class TestOde:
    def test_rk4_step_is_fourth_order_taylor(self):
        # for y' = y one step reproduces the Taylor polynomial of e^h
        h = 0.1
        y = numerics.rk4_step(lambda t, y: y, 0.0, np.array([1.0]), h)
        assert y[0] == pytest.approx(1 + h + h ** 2 / 2 + h ** 3 / 6 + h ** 4 / 24, rel=1e-15)

    def test_kolmogorov_initial(self):
        solution = numerics.ode_solve_kolmogorov(2.0, 1.0, 10, 0.0)
        np.testing.assert_array_equal(solution.final, np.eye(11)[0])

    def test_kolmogorov_matches_closed_form(self):
        with warnings.catch_warnings():
            warnings.simplefilter('error', TruncationWarning)
            solution = numerics.ode_solve_kolmogorov(2.0, 1.0, 60, 1.0)
        assert solution.grid[0] == 0.0 and solution.grid[-1] == 1.0
        expected = 2 * math.exp(-2.0) * (1 - math.exp(-1.0))
        assert solution.final[1] == pytest.approx(expected, rel=1e-8)
        assert solution.final.sum() == pytest.approx(1.0, abs=1e-8)
        assert solution.values.min() >= -1e-10

    def test_kolmogorov_truncation_warns(self):
        with pytest.warns(TruncationWarning):
            numerics.ode_solve_kolmogorov(1.0, 1.0, 2, 3.0)

    def test_mean_zero_matrix(self):
        solution = numerics.ode_solve_mean(np.zeros((2, 2)), [3.0, 5.0], 1.0)
        np.testing.assert_array_equal(solution.final, [3.0, 5.0])
        np.testing.assert_array_equal(solution.values[0], [3.0, 5.0])

    def test_mean_examples(self):
        assert numerics.ode_solve_mean([[1.0]], [1.0], 1.0).final[0] == pytest.approx(math.e, rel=1e-10)
        final = numerics.ode_solve_mean([[-1.0, 1.0], [1.0, -1.0]], [3.0, 5.0], 2.0).final
        a = math.exp(-4.0)
        np.testing.assert_allclose(final, [4 - a, 4 + a], rtol=1e-10)

    def test_second_moments(self):
        start = numerics.ode_second_moments_triangular(1.0, 2.0, 1.5, 0.5, 0.0).final
        np.testing.assert_array_equal(start, [2.25, 0.75, 0.25])
        end = numerics.ode_second_moments_triangular(1.0, 2.0, 1.0, 1.0, 1.0).final
        assert end[0] == pytest.approx(2 * math.e ** 2 - math.e, rel=1e-7)
        with pytest.raises(DomainError):
            numerics.ode_second_moments_triangular(2.0, 1.0, 1.0, 1.0, 1.0)


class TestPdeResidual:
    psis = psi_functions(NavigationMatrix.from_rows([[1.0]]))

    @staticmethod
    def phi(t, u):
        return mgf_diag_constant(1.0, 1.0, t, u[0])

    def test_constant_function(self):
        r = numerics.pde_residual(lambda t, u: 1.0, self.psis, (0.5, np.array([0.1])))
        assert r.residual == 0.0
        assert r.relative == 0.0

    def test_true_solution(self):
        r = numerics.pde_residual(self.phi, self.psis, (0.5, np.array([0.1])), h=1e-5)
        assert r.relative <= 1e-6

    def test_detects_perturbation(self):
        def perturbed(t, u):
            return self.phi(t, u) * (1 + 0.01 * u[0])
        r = numerics.pde_residual(perturbed, self.psis, (0.5, np.array([0.1])))
        assert r.relative > 1e-3

    def test_halving_step(self):
        point = (0.5, np.array([0.1]))
        coarse = abs(numerics.pde_residual(self.phi, self.psis, point, h=1e-2).residual)
        fine = abs(numerics.pde_residual(self.phi, self.psis, point, h=5e-3).residual)
        assert 3.0 < coarse / fine < 5.0
