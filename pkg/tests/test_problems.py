"""
Tests for problems.py module.
"""

import math
import numpy as np
import pytest
from integrators import integrate, make_stepper
from operators import (
    Grid, apply_operator, diagonal_operator, laplacian_1d_dirichlet, split_laplacian_2d
)
from problems import (
    InitialDataSpec, UnsupportedForcingError, make_initial_data, linear_forced_problem,
    allen_cahn, burgers, heat
)
from utils import ConfigurationError, ShapeError


class TestInitialData:
    """Test the initial data families."""

    def test_spec_validation(self):
        """Test invalid kinds, regularity indices and seeds."""
        with pytest.raises(ConfigurationError):
            InitialDataSpec(kind="gaussian")
        with pytest.raises(ConfigurationError):
            InitialDataSpec(kind="fourier_decay", gamma=1.5)
        with pytest.raises(ConfigurationError):
            InitialDataSpec(kind="fourier_decay", seed=-1)
        with pytest.raises(ConfigurationError):
            InitialDataSpec(kind="fourier_decay", seed=1.5)

    def test_hat_values(self):
        """Test the 1D hat on N=4."""
        u0 = make_initial_data(InitialDataSpec("hat"), Grid(1, 4))
        np.testing.assert_allclose(u0, [0.5, 1.0, 0.5])

    def test_smooth_compatible_values(self):
        """Test the smooth family peaks at 0.9 in the centre."""
        assert make_initial_data(InitialDataSpec("smooth_compatible"), Grid(1, 2))[0] == pytest.approx(0.9)
        assert make_initial_data(InitialDataSpec("smooth_compatible"), Grid(2, 2))[0, 0] == pytest.approx(0.9)

    def test_pyramid_values(self):
        """Test the pyramid is 1 - 2·max|x - 1/2|."""
        u0 = make_initial_data(InitialDataSpec("pyramid"), Grid(2, 4))
        assert u0[1, 1] == pytest.approx(1.0)
        assert u0[0, 0] == pytest.approx(0.5)
        assert u0[0, 1] == pytest.approx(0.5)
        hat = make_initial_data(InitialDataSpec("hat"), Grid(2, 4))
        assert hat[0, 0] == pytest.approx(0.25)

    @pytest.mark.parametrize("kind", ["hat", "pyramid", "fourier_decay", "smooth_compatible"])
    def test_bounded_and_small_near_boundary(self, kind):
        """Test max norm <= 1 and O(h) values next to the boundary."""
        for grid in (Grid(1, 64), Grid(2, 32)):
            u0 = make_initial_data(InitialDataSpec(kind, gamma=0.75, seed=2), grid)
            assert u0.shape == grid.shape
            assert np.max(np.abs(u0)) <= 1.0 + 1e-15
            if kind != "fourier_decay":
                edge = u0[0] if grid.dims == 1 else u0[0, :]
                assert np.max(np.abs(edge)) <= 4.0 * grid.h

    def test_fourier_deterministic(self):
        """Test the same seed gives the same data and a new seed new data."""
        grid = Grid(2, 16)
        first = make_initial_data(InitialDataSpec("fourier_decay", gamma=0.5, seed=11), grid)
        again = make_initial_data(InitialDataSpec("fourier_decay", gamma=0.5, seed=11), grid)
        other = make_initial_data(InitialDataSpec("fourier_decay", gamma=0.5, seed=12), grid)
        np.testing.assert_array_equal(first, again)
        assert not np.allclose(first, other)
        assert np.max(np.abs(first)) == pytest.approx(1.0)

    def test_fourier_2d_is_tensor_product(self):
        """Test 2D Fourier data is an outer product of two series."""
        u0 = make_initial_data(InitialDataSpec("fourier_decay", gamma=0.25, seed=3), Grid(2, 16))
        assert np.linalg.matrix_rank(u0, tol=1e-10) == 1


class TestLinearForced:
    """Test the linear problem with polynomial forcing."""

    def test_constant_forcing_closed_form(self):
        """Test u' = -u + 1, u(0) = 0 has u(t) = 1 - e^{-t}."""
        problem = linear_forced_problem(diagonal_operator([-1.0]), [1.0], np.zeros(1))
        for t in (0.1, 1.0, 3.0):
            assert problem.exact(t)[0] == pytest.approx(1.0 - math.exp(-t), rel=1e-14)

    def test_linear_forcing_closed_form(self):
        """Test u' = -u + t, u(0) = 0 has u(t) = e^{-t} - 1 + t."""
        problem = linear_forced_problem(diagonal_operator([-1.0]), [0.0, 1.0], np.zeros(1))
        for t in (0.5, 1.0, 2.0):
            assert problem.exact(t)[0] == pytest.approx(math.exp(-t) - 1.0 + t, rel=1e-13)
        np.testing.assert_allclose(problem.nonlinearity(0.7, np.zeros(1)), [0.7])

    def test_exact_at_zero_is_a_copy(self):
        """Test exact(0) returns the initial state without aliasing it."""
        problem = linear_forced_problem(laplacian_1d_dirichlet(8), [1.0], InitialDataSpec("hat"))
        start = problem.exact(0.0)
        np.testing.assert_array_equal(start, problem.u0)
        assert start is not problem.u0

    def test_exact_solves_the_ode(self):
        """Test the exact solution satisfies u' = Au + g0 + t·g1 up to O(δ²)."""
        op = laplacian_1d_dirichlet(16, 0.05)
        g0 = np.linspace(0.0, 1.0, 15)
        problem = linear_forced_problem(op, [g0, 0.5], InitialDataSpec("pyramid"))
        t, delta = 0.3, 1e-4
        derivative = (problem.exact(t + delta) - problem.exact(t - delta)) / (2.0 * delta)
        rhs = apply_operator(op, problem.exact(t)) + g0 + 0.5 * t
        assert np.max(np.abs(derivative - rhs)) <= 1e-5

    def test_split_operator_accepted(self):
        """Test linear problems on the split operator use the full sum."""
        problem = linear_forced_problem(split_laplacian_2d(6, 0.1), [1.0], InitialDataSpec("pyramid"))
        assert problem.is_split
        assert problem.spectral is problem.operator.full
        assert problem.exact(0.1).shape == (5, 5)

    def test_unsupported_forcing(self):
        """Test quadratic forcing is rejected."""
        with pytest.raises(UnsupportedForcingError):
            linear_forced_problem(diagonal_operator([-1.0]), [1.0, 0.0, 1.0], np.zeros(1))

    def test_initial_state_errors(self):
        """Test mismatched arrays and families on grid-less operators."""
        with pytest.raises(ShapeError):
            linear_forced_problem(laplacian_1d_dirichlet(8), [1.0], np.zeros(8))
        with pytest.raises(ConfigurationError):
            linear_forced_problem(diagonal_operator([-1.0]), [1.0], InitialDataSpec("hat"))


class TestNonlinearProblems:
    """Test the Allen–Cahn, Burgers and heat problems."""

    def test_allen_cahn_zeros(self):
        """Test f vanishes at u = 0 and u = ±1."""
        problem = allen_cahn(laplacian_1d_dirichlet(4), np.zeros(3))
        np.testing.assert_array_equal(problem.nonlinearity(0.0, np.array([0.0, 1.0, -1.0])), [0.0, 0.0, 0.0])

    def test_allen_cahn_lipschitz(self):
        """Test |f(u) - f(v)| <= (1 + 3R²)|u - v| on the ball of radius R."""
        problem = allen_cahn(laplacian_1d_dirichlet(4), np.zeros(3))
        rng = np.random.default_rng(4)
        for radius in (0.5, 1.0, 2.0):
            u = rng.uniform(-radius, radius, 1000)
            v = rng.uniform(-radius, radius, 1000)
            lhs = np.abs(problem.nonlinearity(0.0, u) - problem.nonlinearity(0.0, v))
            assert np.all(lhs <= (1.0 + 3.0 * radius ** 2) * np.abs(u - v) + 1e-14)

    @pytest.mark.parametrize("tau", [0.1, 0.0125])
    def test_allen_cahn_bounded(self, tau):
        """Test exponential Euler keeps every step of pyramid data within 1.1 in the max norm."""
        problem = allen_cahn(split_laplacian_2d(32, 0.01), InitialDataSpec("pyramid"))
        peaks = []

        def observer(n, record):
            peaks.append(float(np.max(np.abs(record.u_n))))

        result = integrate(make_stepper("expeuler"), problem, tau, 1.0, observer=observer)
        peaks.append(float(np.max(np.abs(result.state))))
        assert len(peaks) == result.steps + 1
        assert max(peaks) <= 1.1

    def test_burgers_requires_split_2d(self):
        """Test Burgers rejects 1D operators."""
        with pytest.raises(ConfigurationError):
            burgers(laplacian_1d_dirichlet(16), InitialDataSpec("pyramid"))

    def test_burgers_nonlinearity(self):
        """Test f(0) = 0 and f(x) = -x away from the boundary."""
        op = split_laplacian_2d(16, 0.05)
        problem = burgers(op, InitialDataSpec("smooth_compatible"))
        np.testing.assert_array_equal(problem.nonlinearity(0.0, np.zeros(op.shape)), np.zeros(op.shape))
        x, _ = op.grid.mesh()
        f = problem.nonlinearity(0.0, x)
        np.testing.assert_allclose(f[1:-1, 1:-1], -x[1:-1, 1:-1], rtol=1e-12)

    def test_burgers_magnitude(self):
        """Test |f(u)| <= |u|·(|∂x u| + |∂y u|) pointwise for smooth data."""
        op = split_laplacian_2d(32, 0.05)
        problem = burgers(op, InitialDataSpec("smooth_compatible"))
        f = problem.nonlinearity(0.0, problem.u0)
        # |∂u| <= 0.9π for the smooth family
        assert np.max(np.abs(f)) <= 0.9 * 2.0 * 0.9 * math.pi

    def test_heat_exact(self):
        """Test the heat problem decays and starts at u0."""
        problem = heat(split_laplacian_2d(16, 0.1), InitialDataSpec("pyramid"))
        np.testing.assert_array_equal(problem.exact(0.0), problem.u0)
        norms = [np.max(np.abs(problem.exact(t))) for t in (0.0, 0.05, 0.1, 0.2)]
        assert all(a > b for a, b in zip(norms, norms[1:]))
        np.testing.assert_array_equal(problem.nonlinearity(0.0, problem.u0), np.zeros((15, 15)))
        assert problem.label == "heat"
