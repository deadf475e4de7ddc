"""
Tests for integrators.py module.
"""

import math
import numpy as np
import pytest
from integrators import (
    PHI1, PHI2, SCHEME_NAMES, DivergenceError, ExpRkTableau, SplitProduct, SplitTableau,
    tableau_exponential_euler, tableau_erk2, tableau_erk2l, check_order_conditions,
    step_eerk, step_split_euler, step_erk2l, make_stepper, step_count, integrate
)
from operators import diagonal_operator, diagonal_split, laplacian_1d_dirichlet, split_laplacian_2d
from phi_core import phi_scalar
from problems import InitialDataSpec, Problem, allen_cahn, heat, linear_forced_problem
from utils import ConfigurationError


def zero_forcing(t, u):
    return np.zeros_like(u)


def cubic(t, u):
    return u - u ** 3


class TestTableaus:
    """Test tableau construction and stiff order conditions."""

    def test_exponential_euler(self):
        """Test the single weight is φ_1 and the order-1 residual vanishes."""
        tab = tableau_exponential_euler()
        assert tab.stages == 1
        assert tab.b[0].evaluate(np.array([0.0]))[0] == 1.0
        report = check_order_conditions(tab, 1, np.linspace(-20.0, 0.0, 30))
        assert report.max_residual == 0.0

    def test_erk2_order_conditions(self):
        """Test erk2 satisfies the order-2 conditions on the negative axis."""
        tab = tableau_erk2(0.5)
        assert check_order_conditions(tab, 2, [-5.0]).max_residual <= 1e-14
        report = check_order_conditions(tab, 2, np.linspace(-50.0, 0.0, 50))
        assert report.satisfied(1e-12)
        assert set(report.residuals) == {"b_sum", "b_c_sum", "stage_2"}

    def test_erk2_c2_one(self):
        """Test c2 = 1 is admissible."""
        tab = tableau_erk2(1.0)
        assert tab.c == (0.0, 1.0)
        assert check_order_conditions(tab, 2, np.linspace(-10.0, 0.0, 11)).satisfied()

    def test_corrupted_weight_detected(self):
        """Test a perturbed weight violates the order conditions."""
        tab = tableau_erk2(0.5)
        broken = ExpRkTableau(label="broken", c=tab.c, b=(tab.b[0], tab.b[1].scaled(1.1)),
                              a=tab.a, order=2)
        report = check_order_conditions(broken, 2, np.linspace(-10.0, 0.0, 50))
        assert report.max_residual >= 0.01 * phi_scalar(2, -1.0)
        assert not report.satisfied()

    def test_invalid_c2(self):
        """Test c2 outside (0, 1] is rejected."""
        for c2 in (0.0, -0.5, 1.5):
            with pytest.raises(ConfigurationError):
                tableau_erk2(c2)
            with pytest.raises(ConfigurationError):
                tableau_erk2l(c2)

    def test_invalid_tableau_shape(self):
        """Test structural validation of tableaus."""
        with pytest.raises(ConfigurationError):
            ExpRkTableau(label="x", c=(0.5,), b=(PHI1,), a=((),), order=1)
        with pytest.raises(ConfigurationError):
            ExpRkTableau(label="x", c=(0.0, 0.5), b=(PHI1,), a=((), (PHI1,)), order=1)
        with pytest.raises(ConfigurationError):
            ExpRkTableau(label="x", c=(0.0, 0.5), b=(PHI1, PHI2), a=((), ()), order=2)
        with pytest.raises(ConfigurationError):
            check_order_conditions(tableau_erk2(), 3, [-1.0])

    def test_erk2l_prefactors(self):
        """Test the factorized weights carry 2/c2 and c2."""
        tab = tableau_erk2l(0.5)
        assert tab.c == (0.0, 0.5)
        assert tab.b2[0].prefactor == 4.0
        assert tab.b1[1].prefactor == -4.0
        assert tab.a21[0].prefactor == 0.5
        # at z = 0 the factorized b2 matches the unsplit φ2(0)/c2
        value = tab.b2[0].prefactor * phi_scalar(2, 0.0) ** 2
        assert value == pytest.approx(phi_scalar(2, 0.0) / 0.5)

    def test_split_tableau_validation(self):
        """Test split tableaus must keep the second-order structure."""
        tab = tableau_erk2l(0.5)
        with pytest.raises(ConfigurationError):
            SplitTableau(label="bad", c2=0.5, b1=tab.b1,
                         b2=(SplitProduct(3.0, PHI2, PHI2),), a21=tab.a21)
        with pytest.raises(ConfigurationError):
            SplitTableau(label="bad", c2=0.5, b1=tab.b1, b2=tab.b2,
                         a21=(SplitProduct(1.0, PHI1, PHI1),))


class TestSteps:
    """Test single steps against closed forms."""

    def test_zero_forcing_is_semigroup(self):
        """Test f ≡ 0 gives u_{n+1} = e^{τA}u_n for every scheme."""
        op = split_laplacian_2d(8, 0.2)
        u0 = np.random.default_rng(0).standard_normal(op.shape)
        expected = op.full.apply_multiplier(op.full.phi_multiplier(0, 0.05), u0)
        for name in SCHEME_NAMES:
            u1, _ = make_stepper(name)(op, zero_forcing, 0.0, 0.05, u0)
            np.testing.assert_allclose(u1, expected, atol=1e-11)

    def test_exponential_euler_constant_forcing(self):
        """Test u' = -u + 1 from 0 over τ = 0.5 gives 1 - e^{-0.5}."""
        op = diagonal_operator([-1.0])
        u1, record = step_eerk(tableau_exponential_euler(), op, lambda t, u: np.ones_like(u), 0.0, 0.5, np.zeros(1))
        assert u1[0] == pytest.approx(1.0 - math.exp(-0.5), rel=1e-14)
        assert record is None

    def test_erk2_linear_forcing(self):
        """Test u' = -u + t from 0 over τ = 1 gives e^{-1}."""
        op = diagonal_operator([-1.0])
        u1, _ = step_eerk(tableau_erk2(0.5), op, lambda t, u: np.full_like(u, t), 0.0, 1.0, np.zeros(1))
        assert u1[0] == pytest.approx(math.exp(-1.0), rel=1e-13)

    def test_split_euler_scalar(self):
        """Test the scalar split Euler step and its defect against exponential Euler."""
        op = diagonal_split([-1.0], [-1.0])
        ones = lambda t, u: np.ones_like(u)
        split, _ = step_split_euler(op, ones, 0.0, 1.0, np.zeros((1, 1)))
        unsplit, _ = step_eerk(tableau_exponential_euler(), op, ones, 0.0, 1.0, np.zeros((1, 1)))
        assert split[0, 0] == pytest.approx((1.0 - math.exp(-1.0)) ** 2, rel=1e-14)
        assert unsplit[0, 0] == pytest.approx((1.0 - math.exp(-2.0)) / 2.0, rel=1e-14)
        assert unsplit[0, 0] - split[0, 0] == pytest.approx(0.03275596, abs=1e-8)

    def test_erk2l_classical_limit(self):
        """Test A = 0 reduces erk2l to the classical two-stage method."""
        op = diagonal_split([0.0], [0.0])
        u1, _ = step_erk2l(tableau_erk2l(0.5), op, lambda t, u: -2.0 * u, 0.0, 0.1, np.ones((1, 1)))
        assert u1[0, 0] == pytest.approx(0.82, rel=1e-14)

    def test_split_schemes_collapse_without_second_direction(self):
        """Test A2 = 0 makes split schemes coincide with their unsplit versions."""
        lam = [-0.5, -3.0, -40.0]
        split_op = diagonal_split(lam, [0.0])
        plain_op = diagonal_operator(lam)
        u0 = np.array([0.3, -0.7, 0.9])
        for c2 in (0.5, 1.0):
            split, _ = step_erk2l(tableau_erk2l(c2), split_op, cubic, 0.0, 0.2, u0[:, None])
            plain, _ = step_eerk(tableau_erk2(c2), plain_op, cubic, 0.0, 0.2, u0)
            np.testing.assert_allclose(split[:, 0], plain, rtol=1e-13, atol=1e-15)
        split, _ = step_split_euler(split_op, cubic, 0.0, 0.2, u0[:, None])
        plain, _ = step_eerk(tableau_exponential_euler(), plain_op, cubic, 0.0, 0.2, u0)
        np.testing.assert_allclose(split[:, 0], plain, rtol=1e-13, atol=1e-15)

    def test_erk2l_hand_expansion(self):
        """Test erk2l on a scalar split pair against the hand-expanded formulas."""
        a1, a2, tau, c2 = -1.0, -2.0, 0.5, 0.5
        op = diagonal_split([a1], [a2])
        f = lambda t, u: np.cos(u) + t
        u0 = 0.4
        z1, z2 = tau * a1, tau * a2
        f1 = math.cos(u0)
        stage = (math.exp(c2 * (z1 + z2)) * u0
                 + tau * c2 * phi_scalar(1, c2 * z1) * phi_scalar(1, c2 * z2) * f1)
        f2 = math.cos(stage) + c2 * tau
        b1 = phi_scalar(1, z1) * phi_scalar(1, z2) - (2.0 / c2) * phi_scalar(2, z1) * phi_scalar(2, z2)
        b2 = (2.0 / c2) * phi_scalar(2, z1) * phi_scalar(2, z2)
        expected = math.exp(z1 + z2) * u0 + tau * (b1 * f1 + b2 * f2)
        u1, record = step_erk2l(tableau_erk2l(c2), op, f, 0.0, tau, np.full((1, 1), u0), keep_record=True)
        assert u1[0, 0] == pytest.approx(expected, rel=1e-14)
        assert record.stages[1][0, 0] == pytest.approx(stage, rel=1e-14)
        assert len(record.stage_values) == 2

    def test_split_close_to_unsplit_on_allen_cahn(self):
        """Test one erk2l step stays within τ² of erk2 on a smooth Allen–Cahn state."""
        op = split_laplacian_2d(16, 0.01)
        problem = allen_cahn(op, InitialDataSpec("smooth_compatible"))
        tau = 1e-3
        split, _ = make_stepper("erk2l")(op, problem.nonlinearity, 0.0, tau, problem.u0)
        plain, _ = make_stepper("erk2")(op, problem.nonlinearity, 0.0, tau, problem.u0)
        assert np.max(np.abs(split - plain)) <= tau ** 2

    def test_step_records(self):
        """Test records hold the step start and stage values."""
        op = laplacian_1d_dirichlet(8, 0.1)
        u0 = np.linspace(-0.5, 0.5, 7)
        _, record = step_eerk(tableau_erk2(0.5), op, cubic, 0.3, 0.1, u0, keep_record=True)
        assert record.t_n == 0.3
        assert record.tau == 0.1
        np.testing.assert_array_equal(record.u_n, u0)
        assert len(record.stages) == 2
        np.testing.assert_allclose(record.stage_values[0], cubic(0.3, u0))

    def test_invalid_arguments(self):
        """Test bad step sizes, operators and scheme names."""
        op = laplacian_1d_dirichlet(8)
        u0 = np.zeros(7)
        with pytest.raises(ConfigurationError):
            step_eerk(tableau_erk2(), op, cubic, 0.0, 0.0, u0)
        with pytest.raises(ConfigurationError):
            step_split_euler(op, cubic, 0.0, 0.1, u0)
        with pytest.raises(ConfigurationError):
            step_erk2l(tableau_erk2l(), op, cubic, 0.0, 0.1, u0)
        with pytest.raises(ConfigurationError, match="unknown scheme"):
            make_stepper("rk4")


class TestIntegrate:
    """Test the fixed-step driver."""

    def test_step_count(self):
        """Test step counts and partition checks."""
        assert step_count(0.1, 0.1) == 1
        assert step_count(0.025, 0.1) == 4
        assert step_count(1.0 / 3.0, 1.0) == 3
        with pytest.raises(ConfigurationError):
            step_count(0.3, 1.0)
        with pytest.raises(ConfigurationError):
            step_count(0.0, 1.0)

    def test_single_step(self):
        """Test τ = T takes exactly one step."""
        problem = heat(laplacian_1d_dirichlet(8, 0.1), InitialDataSpec("pyramid"))
        result = integrate(make_stepper("expeuler"), problem, 0.1, 0.1)
        assert result.steps == 1

    def test_partition_error(self):
        """Test T not a multiple of τ is rejected."""
        problem = heat(laplacian_1d_dirichlet(8, 0.1), InitialDataSpec("pyramid"))
        with pytest.raises(ConfigurationError):
            integrate(make_stepper("expeuler"), problem, 0.3, 1.0)

    def test_heat_equation_exact(self):
        """Test every scheme reproduces the heat semigroup."""
        problem = heat(split_laplacian_2d(8, 0.1), InitialDataSpec("pyramid"))
        exact = problem.exact(0.1)
        for name in SCHEME_NAMES:
            result = integrate(make_stepper(name), problem, 0.025, 0.1)
            assert np.max(np.abs(result.state - exact)) <= 1e-10, name

    def test_linear_forcing_exact(self):
        """Test exponential Euler is exact for constant and erk2 for affine forcing."""
        op = laplacian_1d_dirichlet(16, 0.1)
        constant = linear_forced_problem(op, [1.0], InitialDataSpec("smooth_compatible"))
        result = integrate(make_stepper("expeuler"), constant, 0.1, 0.5)
        np.testing.assert_allclose(result.state, constant.exact(0.5), atol=1e-12)

        affine = linear_forced_problem(op, [1.0, 2.0], InitialDataSpec("smooth_compatible"))
        result = integrate(make_stepper("erk2"), affine, 0.1, 0.5)
        np.testing.assert_allclose(result.state, affine.exact(0.5), atol=1e-11)

    def test_observer(self):
        """Test the observer sees every step with its starting state."""
        problem = heat(laplacian_1d_dirichlet(8, 0.1), InitialDataSpec("hat"))
        seen = []
        integrate(make_stepper("erk2"), problem, 0.025, 0.1,
                  observer=lambda n, record: seen.append((n, record.t_n, record.u_n.copy())))
        assert [n for n, _, _ in seen] == [0, 1, 2, 3]
        assert seen[2][1] == pytest.approx(0.05)
        np.testing.assert_array_equal(seen[0][2], problem.u0)

    def test_divergence(self):
        """Test a non-finite nonlinearity reports the failing step."""
        def blow_up(t, u):
            return np.full_like(u, np.inf) if t >= 0.2 - 1e-12 else np.zeros_like(u)

        problem = Problem(operator=diagonal_operator([-1.0]), nonlinearity=blow_up,
                          u0=np.ones(1), label="blow_up")
        with pytest.raises(DivergenceError) as excinfo:
            integrate(make_stepper("expeuler"), problem, 0.1, 1.0)
        assert excinfo.value.step_index == 2
        assert excinfo.value.t_n == pytest.approx(0.2)
        assert "step 2" in str(excinfo.value)

    def test_deterministic(self):
        """Test repeated integrations are bitwise identical."""
        problem = allen_cahn(split_laplacian_2d(12, 0.01), InitialDataSpec("pyramid"))
        first = integrate(make_stepper("erk2l"), problem, 0.01, 0.05).state
        second = integrate(make_stepper("erk2l"), problem, 0.01, 0.05).state
        np.testing.assert_array_equal(first, second)

    def test_initial_state_untouched(self):
        """Test integrate does not mutate the problem's initial state."""
        problem = allen_cahn(laplacian_1d_dirichlet(16, 0.01), InitialDataSpec("pyramid"))
        before = problem.u0.copy()
        integrate(make_stepper("expeuler"), problem, 0.01, 0.05)
        np.testing.assert_array_equal(problem.u0, before)
