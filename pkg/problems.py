"""
Evolution problems u' = Au + f(t, u), u(0) = u0, on the discrete operators,
and the initial-data families used to probe convergence under low regularity.
"""

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from phi_core import phi_apply_spectral
from operators import Grid, SplitOperator, gradient_2d
from utils import ConfigurationError, ErklabError, ShapeError, logger

INITIAL_DATA_KINDS = ("hat", "pyramid", "fourier_decay", "smooth_compatible")
SMOOTH_AMPLITUDE = 0.9


class UnsupportedForcingError(ErklabError, ValueError):
    """Forcing polynomial of degree higher than one."""


@dataclass(frozen=True)
class InitialDataSpec:
    kind: str = "pyramid"
    gamma: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.kind not in INITIAL_DATA_KINDS:
            raise ConfigurationError(
                f"unknown initial data kind {self.kind!r}; expected one of {', '.join(INITIAL_DATA_KINDS)}")
        if not (0.0 <= self.gamma <= 1.0):
            raise ConfigurationError(f"regularity index gamma must lie in [0, 1], got {self.gamma}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, (int, np.integer)) or self.seed < 0:
            raise ConfigurationError(f"seed must be a nonnegative integer, got {self.seed!r}")


@dataclass(frozen=True, eq=False)
class Problem:
    """Semilinear evolution problem on a plain or split operator."""
    operator: object
    nonlinearity: Callable
    u0: np.ndarray
    exact: Optional[Callable] = None
    label: str = "problem"

    @property
    def grid(self) -> Optional[Grid]:
        return self.operator.grid

    @property
    def spectral(self):
        """The unsplit operator (the Kronecker sum for split problems)."""
        return self.operator.full if isinstance(self.operator, SplitOperator) else self.operator

    @property
    def is_split(self):
        return isinstance(self.operator, SplitOperator)


def _fourier_series(x, gamma, rng, modes):
    j = np.arange(1, modes + 1)
    xi = rng.uniform(-1.0, 1.0, size=modes)
    weights = xi * j ** -(2.0 * gamma + 1.0)
    return np.sin(np.pi * np.outer(x, j)) @ weights


def make_initial_data(spec: InitialDataSpec, grid: Grid):
    """
    Sample an initial state on the interior nodes of a grid.

    Every family vanishes on the boundary and has max norm at most 1.
    fourier_decay draws x- and y-coefficients from separate streams keyed by
    the seed, so refining the grid only appends modes to the same series.

    Args:
        spec (InitialDataSpec): family and parameters
        grid (Grid): target grid

    Returns:
        np.ndarray: state of shape grid.shape
    """
    mesh = grid.mesh()
    if spec.kind == "hat":
        u0 = np.ones(grid.shape)
        for x in mesh:
            u0 = u0 * (1.0 - 2.0 * np.abs(x - 0.5))
    elif spec.kind == "pyramid":
        dist = np.zeros(grid.shape)
        for x in mesh:
            dist = np.maximum(dist, np.abs(x - 0.5))
        u0 = 1.0 - 2.0 * dist
    elif spec.kind == "smooth_compatible":
        u0 = np.full(grid.shape, SMOOTH_AMPLITUDE)
        for x in mesh:
            u0 = u0 * np.sin(np.pi * x)
    else:
        x = grid.coordinates
        modes = grid.n_per_dim
        series = [_fourier_series(x, spec.gamma, np.random.default_rng([spec.seed, axis]), modes)
                  for axis in range(grid.dims)]
        u0 = series[0] if grid.dims == 1 else np.outer(series[0], series[1])
        peak = np.max(np.abs(u0))
        if peak > 0.0:
            u0 = u0 / peak
    logger.debug(f"Initial data {spec.kind} on {grid.dims}D grid N={grid.N}")
    return np.asarray(u0, dtype=float)


def _initial_state(op, u0):
    if isinstance(u0, InitialDataSpec):
        if op.grid is None:
            raise ConfigurationError("initial data families need an operator defined on a grid")
        return make_initial_data(u0, op.grid)
    u0 = np.asarray(u0, dtype=float)
    if u0.shape != op.shape:
        raise ShapeError(f"initial state shape {u0.shape} does not match operator shape {op.shape}")
    return u0


def linear_forced_problem(op, forcing: Sequence, u0):
    """
    u' = Au + g0 + t·g1 with the exact solution
    u(t) = e^{tA}u0 + t·φ1(tA)g0 + t²·φ2(tA)g1.

    Args:
        op: SpectralOperator or SplitOperator
        forcing: polynomial coefficients (g0,) or (g0, g1); scalars or states
        u0: initial state or InitialDataSpec

    Returns:
        Problem
    """
    if len(forcing) > 2:
        raise UnsupportedForcingError(f"forcing must have degree <= 1 in t, got {len(forcing)} coefficients")
    spectral = op.full if isinstance(op, SplitOperator) else op
    u0 = _initial_state(op, u0)
    coeffs = [np.broadcast_to(np.asarray(g, dtype=float), op.shape).copy() for g in forcing]
    coeffs += [np.zeros(op.shape)] * (2 - len(coeffs))
    g0, g1 = coeffs

    def nonlinearity(t, u):
        return g0 + t * g1

    def exact(t):
        if t == 0.0:
            return u0.copy()
        return (phi_apply_spectral(0, t, spectral, u0)
                + t * phi_apply_spectral(1, t, spectral, g0)
                + t * t * phi_apply_spectral(2, t, spectral, g1))

    return Problem(operator=op, nonlinearity=nonlinearity, u0=u0, exact=exact, label="linear_forced")


def allen_cahn(op, u0spec: Union[InitialDataSpec, np.ndarray]):
    """u' = ε²Δu + u - u³ (ε² is the operator's diffusivity)."""
    u0 = _initial_state(op, u0spec)

    def nonlinearity(t, u):
        return u - u ** 3

    return Problem(operator=op, nonlinearity=nonlinearity, u0=u0, label="allen_cahn")


def burgers(op, u0spec: Union[InitialDataSpec, np.ndarray]):
    """u' = νΔu - u·∂x u - u·∂y u with centered differences."""
    if not isinstance(op, SplitOperator) or op.grid is None or op.grid.dims != 2:
        raise ConfigurationError("burgers needs the split 2D Laplacian")
    u0 = _initial_state(op, u0spec)
    h = op.grid.h

    def nonlinearity(t, u):
        return -u * (gradient_2d(u, 'x', h) + gradient_2d(u, 'y', h))

    return Problem(operator=op, nonlinearity=nonlinearity, u0=u0, label="burgers")


def heat(op, u0spec: Union[InitialDataSpec, np.ndarray]):
    """u' = νΔu; exact(t) = e^{tA}u0."""
    spectral = op.full if isinstance(op, SplitOperator) else op
    u0 = _initial_state(op, u0spec)

    def nonlinearity(t, u):
        return np.zeros_like(u)

    def exact(t):
        if t == 0.0:
            return u0.copy()
        return phi_apply_spectral(0, t, spectral, u0)

    return Problem(operator=op, nonlinearity=nonlinearity, u0=u0, exact=exact, label="heat")
