"""
Discrete spatial operators on the unit interval / unit square with zero
Dirichlet boundary values.

The second-order finite-difference Laplacian is diagonalized by the
orthonormal sine transform (DST-I), so every operator here carries its
eigenvalues and a transform pair. Along each axis the transform is a dense
orthogonal matrix product for N <= 64 and scipy's fast DST above.
"""

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
import scipy.fft
import scipy.sparse

from phi_core import PhiCombo, phi_array
from utils import ConfigurationError, ShapeError, logger

N_MAX_1D = 4096
N_MAX_2D = 512
DENSE_TRANSFORM_MAX_N = 64


@dataclass(frozen=True)
class Grid:
    """Uniform grid of interior nodes on (0,1)^dims with N subintervals per dimension."""
    dims: int
    N: int

    def __post_init__(self):
        if self.dims not in (1, 2):
            raise ConfigurationError(f"grid dimension must be 1 or 2, got {self.dims}")
        if self.N < 2:
            raise ConfigurationError(f"grid needs N >= 2 subintervals, got {self.N}")

    @property
    def n_per_dim(self):
        return self.N - 1

    @property
    def h(self):
        return 1.0 / self.N

    @property
    def shape(self):
        return (self.n_per_dim,) * self.dims

    @property
    def size(self):
        return self.n_per_dim ** self.dims

    @property
    def coordinates(self):
        """Interior node coordinates x_i = i/N, i = 1..N-1."""
        return np.arange(1, self.N) / self.N

    def mesh(self):
        """Coordinate arrays shaped like a state (ij indexing, axis 0 is x)."""
        x = self.coordinates
        if self.dims == 1:
            return (x,)
        return tuple(np.meshgrid(x, x, indexing='ij'))


class SineTransform:
    """
    Orthonormal DST-I along a subset of axes.

    The transform matrix S_jm = sqrt(2/N) sin(π(j+1)(m+1)/N) is symmetric and
    orthogonal, so the backward map equals the forward map.
    """

    def __init__(self, n, axes):
        self.n = n
        self.axes = tuple(axes)
        self.N = n + 1
        self.matrix = None
        if self.N <= DENSE_TRANSFORM_MAX_N:
            idx = np.arange(1, self.N)
            self.matrix = np.sqrt(2.0 / self.N) * np.sin(np.pi * np.outer(idx, idx) / self.N)

    def forward(self, v):
        if self.matrix is None:
            return scipy.fft.dstn(v, type=1, axes=self.axes, norm='ortho')
        out = v
        for axis in self.axes:
            out = np.moveaxis(np.tensordot(self.matrix, out, axes=([1], [axis])), 0, axis)
        return out

    def backward(self, coeffs):
        return self.forward(coeffs)

    def __repr__(self):
        backend = "fft" if self.matrix is None else "dense"
        return f"SineTransform(n={self.n}, axes={self.axes}, backend={backend})"


class IdentityTransform:
    """Transform of an operator that is already diagonal in the nodal basis."""

    def forward(self, v):
        return v

    def backward(self, coeffs):
        return coeffs

    def __repr__(self):
        return "IdentityTransform()"


@dataclass(frozen=True, eq=False)
class SpectralOperator:
    """
    Linear operator given by nonpositive real eigenvalues and an orthogonal
    transform pair.

    `eigenvalues` broadcasts against the state shape: an operator acting only
    along x on a 2D grid has eigenvalues of shape (n, 1). Stencil operators
    also keep their diffusivity, mesh width and stencil axes so they can be
    applied nodally; diagonal operators have no stencil.
    """
    eigenvalues: np.ndarray
    transform: object
    shape: Tuple[int, ...]
    diffusivity: float = 1.0
    h: Optional[float] = None
    stencil_axes: Optional[Tuple[int, ...]] = None
    grid: Optional[Grid] = None
    label: str = "operator"
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if np.any(self.eigenvalues > 0.0):
            raise ConfigurationError(f"{self.label}: eigenvalues must be nonpositive")

    @property
    def dim(self):
        return int(np.prod(self.shape))

    def forward(self, v):
        return self.transform.forward(v)

    def backward(self, coeffs):
        return self.transform.backward(coeffs)

    def apply_multiplier(self, multiplier, v):
        """backward(multiplier ⊙ forward(v))"""
        return self.backward(multiplier * self.forward(v))

    def phi_multiplier(self, k, t):
        """Cached φ_k(t·λ) on the eigenvalue array."""
        key = ("phi", k, float(t))
        if key not in self._cache:
            self._cache[key] = phi_array(k, t * self.eigenvalues)
        return self._cache[key]

    def combo_multiplier(self, combo: PhiCombo, tau):
        """Cached Σ coeff·φ_k(θ·τ·λ) on the eigenvalue array."""
        key = ("combo", combo, float(tau))
        if key not in self._cache:
            self._cache[key] = np.broadcast_to(combo.evaluate(tau * self.eigenvalues),
                                               self.eigenvalues.shape).copy()
        return self._cache[key]

    def check_state(self, v):
        v = np.asarray(v, dtype=float)
        if v.shape != self.shape:
            raise ShapeError(f"{self.label}: state shape {v.shape} does not match {self.shape}")
        return v

    def to_dense(self):
        """Materialize the nodal matrix (C-order flattening of the state)."""
        if self.stencil_axes is None:
            return np.diag(np.broadcast_to(self.eigenvalues, self.shape).ravel().astype(float))
        n = self.shape[0]
        second_diff = scipy.sparse.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(n, n))
        eye = scipy.sparse.identity(n)
        if len(self.shape) == 1:
            matrix = second_diff
        else:
            matrix = scipy.sparse.csr_matrix((n * n, n * n))
            if 0 in self.stencil_axes:
                matrix = matrix + scipy.sparse.kron(second_diff, eye)
            if 1 in self.stencil_axes:
                matrix = matrix + scipy.sparse.kron(eye, second_diff)
        return (self.diffusivity / self.h ** 2) * matrix.toarray()


@dataclass(frozen=True, eq=False)
class SplitOperator:
    """Commuting pair A = A1 + A2 (A1 along x, A2 along y) with the full Kronecker sum."""
    a1: SpectralOperator
    a2: SpectralOperator
    full: SpectralOperator

    @property
    def shape(self):
        return self.full.shape

    @property
    def grid(self):
        return self.full.grid

    def apply_product(self, m1, m2, v):
        """Apply the factorized operator m1(A1)·m2(A2) given both spectral multipliers."""
        return self.a1.apply_multiplier(m1, self.a2.apply_multiplier(m2, v))


def laplacian_eigenvalues_1d(N, diffusivity):
    """λ_j = -(4ν/h²)·sin²(jπ/(2N)), j = 1..N-1"""
    h = 1.0 / N
    j = np.arange(1, N)
    return -(4.0 * diffusivity / h ** 2) * np.sin(j * np.pi / (2.0 * N)) ** 2


def laplacian_1d_dirichlet(N, diffusivity=1.0):
    """
    Three-point Dirichlet Laplacian (ν/h²)[1, -2, 1] on N subintervals of (0,1).

    Args:
        N (int): subinterval count, 2 <= N <= 4096
        diffusivity (float): ν > 0

    Returns:
        SpectralOperator
    """
    if not (2 <= N <= N_MAX_1D):
        raise ConfigurationError(f"1D grid needs 2 <= N <= {N_MAX_1D}, got {N}")
    if not diffusivity > 0.0:
        raise ConfigurationError(f"diffusivity must be positive, got {diffusivity}")
    grid = Grid(1, N)
    logger.debug(f"Building 1D Dirichlet Laplacian, N={N}, nu={diffusivity}")
    return SpectralOperator(
        eigenvalues=laplacian_eigenvalues_1d(N, diffusivity),
        transform=SineTransform(N - 1, axes=(0,)),
        shape=grid.shape,
        diffusivity=diffusivity,
        h=grid.h,
        stencil_axes=(0,),
        grid=grid,
        label=f"laplacian_1d(N={N})",
    )


def split_laplacian_2d(N, diffusivity=1.0):
    """
    2D Dirichlet Laplacian on the unit square split into its x and y parts.

    Args:
        N (int): subinterval count per dimension, 2 <= N <= 512
        diffusivity (float): ν > 0

    Returns:
        SplitOperator: a1 = ν∂xx, a2 = ν∂yy, full = a1 + a2
    """
    if not (2 <= N <= N_MAX_2D):
        raise ConfigurationError(f"2D grid needs 2 <= N <= {N_MAX_2D}, got {N}")
    if not diffusivity > 0.0:
        raise ConfigurationError(f"diffusivity must be positive, got {diffusivity}")
    grid = Grid(2, N)
    lam = laplacian_eigenvalues_1d(N, diffusivity)
    n = N - 1
    common = dict(shape=grid.shape, diffusivity=diffusivity, h=grid.h, grid=grid)
    a1 = SpectralOperator(eigenvalues=lam[:, None], transform=SineTransform(n, axes=(0,)),
                          stencil_axes=(0,), label=f"laplacian_x(N={N})", **common)
    a2 = SpectralOperator(eigenvalues=lam[None, :], transform=SineTransform(n, axes=(1,)),
                          stencil_axes=(1,), label=f"laplacian_y(N={N})", **common)
    full = SpectralOperator(eigenvalues=lam[:, None] + lam[None, :],
                            transform=SineTransform(n, axes=(0, 1)),
                            stencil_axes=(0, 1), label=f"laplacian_2d(N={N})", **common)
    logger.debug(f"Built split 2D Laplacian, N={N}, nu={diffusivity}")
    return SplitOperator(a1=a1, a2=a2, full=full)


def diagonal_operator(eigenvalues, label="diagonal"):
    """Operator diag(eigenvalues) in the nodal basis (identity transform)."""
    eigenvalues = np.atleast_1d(np.asarray(eigenvalues, dtype=float))
    return SpectralOperator(eigenvalues=eigenvalues, transform=IdentityTransform(),
                            shape=eigenvalues.shape, label=label)


def diagonal_split(eigenvalues_x, eigenvalues_y):
    """
    Split pair of diagonal operators on states of shape (len(x), len(y)):
    A1 scales along axis 0, A2 along axis 1, full has entries λ_i + μ_j.
    """
    lam = np.atleast_1d(np.asarray(eigenvalues_x, dtype=float))
    mu = np.atleast_1d(np.asarray(eigenvalues_y, dtype=float))
    shape = (lam.size, mu.size)
    ident = IdentityTransform()
    a1 = SpectralOperator(eigenvalues=lam[:, None], transform=ident, shape=shape, label="diagonal_x")
    a2 = SpectralOperator(eigenvalues=mu[None, :], transform=ident, shape=shape, label="diagonal_y")
    full = SpectralOperator(eigenvalues=lam[:, None] + mu[None, :], transform=ident,
                            shape=shape, label="diagonal_sum")
    return SplitOperator(a1=a1, a2=a2, full=full)


def _second_difference(v, axis):
    padded = np.pad(v, [(1, 1) if a == axis else (0, 0) for a in range(v.ndim)])
    upper = np.take(padded, np.arange(2, v.shape[axis] + 2), axis=axis)
    center = np.take(padded, np.arange(1, v.shape[axis] + 1), axis=axis)
    lower = np.take(padded, np.arange(0, v.shape[axis]), axis=axis)
    return upper - 2.0 * center + lower


def _centered_difference(v, axis, h):
    padded = np.pad(v, [(1, 1) if a == axis else (0, 0) for a in range(v.ndim)])
    upper = np.take(padded, np.arange(2, v.shape[axis] + 2), axis=axis)
    lower = np.take(padded, np.arange(0, v.shape[axis]), axis=axis)
    return (upper - lower) / (2.0 * h)


def apply_operator(op, v):
    """
    Nodal matvec: stencil application with zero Dirichlet ghost values
    (diagonal operators multiply by their eigenvalues).
    """
    v = op.check_state(v)
    if op.stencil_axes is None:
        return op.eigenvalues * v
    out = np.zeros_like(v)
    for axis in op.stencil_axes:
        out += _second_difference(v, axis)
    return (op.diffusivity / op.h ** 2) * out


def gradient_1d(v, h):
    """Centered difference (v_{i+1} - v_{i-1})/(2h) with zero boundary values."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise ShapeError(f"gradient_1d needs a 1D state, got shape {v.shape}")
    return _centered_difference(v, 0, h)


def gradient_2d(v, direction, h):
    """
    Centered difference along x (axis 0) or y (axis 1) of a 2D state with
    zero boundary values.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim != 2:
        raise ShapeError(f"gradient_2d needs a 2D state, got shape {v.shape}")
    axes = {'x': 0, 'y': 1}
    if direction not in axes:
        raise ConfigurationError(f"direction must be 'x' or 'y', got {direction!r}")
    return _centered_difference(v, axes[direction], h)
