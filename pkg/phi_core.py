"""
φ-function calculus for exponential integrators.

    φ_0(z) = e^z,   φ_k(z) = ∫_0^1 e^{(1-ξ)z} ξ^{k-1}/(k-1)! dξ,   φ_k(0) = 1/k!

Scalars and numpy arrays are evaluated with a truncated Taylor series near
the removable singularity and with the recurrence
φ_{k+1}(z) = (φ_k(z) - 1/k!)/z seeded by φ_1 = expm1(z)/z elsewhere.
Operators that are diagonalized by an orthogonal transform are handled
through their eigenvalues; dense matrices go through the block-augmented
matrix exponential and serve as the reference backend.
"""

import math
import warnings
from dataclasses import dataclass
from typing import Tuple

import numpy as np
import scipy.integrate
import scipy.linalg

from utils import ErklabError, ShapeError, logger

K_MAX = 8
TAYLOR_TERMS = 48
DENSE_SIZE_LIMIT = 512

_INV_FACTORIAL = np.array([1.0 / math.factorial(i) for i in range(K_MAX + TAYLOR_TERMS + 1)])


class PhiError(ErklabError, ValueError):
    """Invalid φ-function request."""


class UnsupportedOrderError(PhiError):
    pass


class PhiDomainError(PhiError):
    pass


class ReferenceScaleError(PhiError):
    pass


class OracleConvergenceError(ErklabError, RuntimeError):
    """The quadrature oracle did not reach the requested tolerance."""


def _check_order(k, minimum=0):
    if isinstance(k, bool) or not isinstance(k, (int, np.integer)):
        raise UnsupportedOrderError(f"order must be an integer, got {k!r}")
    if k < minimum:
        raise UnsupportedOrderError(f"order must be >= {minimum}, got {k}")
    if k > K_MAX:
        raise UnsupportedOrderError(f"order exceeds K_MAX ({K_MAX}): k={k}")


def _taylor_radius(k):
    return max(0.5, float(k))


def _phi_taylor(k, z):
    # Horner on sum_j z^j/(k+j)!
    acc = np.full_like(z, _INV_FACTORIAL[k + TAYLOR_TERMS])
    for j in range(TAYLOR_TERMS - 1, -1, -1):
        acc = acc * z + _INV_FACTORIAL[k + j]
    return acc


def _phi_recurrence(k, z):
    phi = np.expm1(z) / z
    for j in range(1, k):
        phi = (phi - _INV_FACTORIAL[j]) / z
    return phi


def phi_array(k, z):
    """
    Evaluate φ_k elementwise on an array of real arguments.

    Args:
        k (int): order, 0 <= k <= K_MAX
        z (array_like): finite real arguments

    Returns:
        np.ndarray: φ_k(z) with the shape of z
    """
    _check_order(k)
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise PhiDomainError("phi arguments must be finite")
    if k == 0:
        return np.exp(z)

    out = np.empty_like(z)
    small = np.abs(z) < _taylor_radius(k)
    if small.any():
        out[small] = _phi_taylor(k, z[small])
    large = ~small
    if large.any():
        out[large] = _phi_recurrence(k, z[large])
    return out


def phi_scalar(k, z):
    """Evaluate φ_k at a single finite real z."""
    _check_order(k)
    try:
        z = float(z)
    except (TypeError, ValueError):
        raise PhiDomainError(f"phi argument must be a real number, got {z!r}")
    if not math.isfinite(z):
        raise PhiDomainError(f"phi argument must be finite, got {z}")
    return float(phi_array(k, np.array([z]))[0])


def phi_quadrature_oracle(k, z, tol=1e-13, max_subdivisions=200):
    """
    Adaptive quadrature of the defining integral of φ_k (test oracle only).

    Args:
        k (int): order, 1 <= k <= K_MAX
        z (float): argument
        tol (float): absolute error target, >= 1e-14
        max_subdivisions (int): QUADPACK subinterval limit

    Returns:
        float: ∫_0^1 e^{(1-ξ)z} ξ^{k-1}/(k-1)! dξ
    """
    _check_order(k, minimum=1)
    if tol < 1e-14:
        raise PhiError(f"oracle tolerance must be >= 1e-14, got {tol}")
    z = float(z)
    scale = _INV_FACTORIAL[k - 1]

    def integrand(xi):
        return math.exp((1.0 - xi) * z) * xi ** (k - 1) * scale

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.integrate.IntegrationWarning)
        value, abserr, info = scipy.integrate.quad(
            integrand, 0.0, 1.0, epsabs=tol, epsrel=0.0,
            limit=max_subdivisions, full_output=1)[:3]
    # QUADPACK cannot certify below ~50 ulp of the integral's magnitude
    roundoff = 64.0 * np.finfo(float).eps * abs(value)
    if abserr > max(tol, roundoff):
        raise OracleConvergenceError(
            f"quadrature for phi_{k}({z}) stopped at error estimate {abserr:.3e} > {tol:.1e} "
            f"after {info['last']} subdivisions")
    return value


def phi_apply_spectral(k, t, op, v):
    """
    Apply φ_k(tA) to v for an operator diagonalized by an orthogonal transform.

    The state is forward-transformed, mode j is multiplied by φ_k(t·λ_j) and
    the result is transformed back.
    """
    v = np.asarray(v, dtype=float)
    if v.shape != op.shape:
        raise ShapeError(f"state shape {v.shape} does not match operator shape {op.shape}")
    return op.apply_multiplier(op.phi_multiplier(k, t), v)


def phi_dense(k, t, A):
    """
    Reference evaluation of φ_k(tA) for a dense square matrix.

    Uses exp of the block upper-triangular matrix with tA in the leading
    block and identities on the first superdiagonal, whose top-right block
    is φ_k(tA). The exponential is scipy's scaling-and-squaring Padé kernel.
    """
    _check_order(k)
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ShapeError(f"phi_dense needs a square matrix, got shape {A.shape}")
    n = A.shape[0]
    if n + k > DENSE_SIZE_LIMIT:
        raise ReferenceScaleError(
            f"dense reference backend limited to n + k <= {DENSE_SIZE_LIMIT}, got n={n}, k={k}")
    if k == 0:
        return scipy.linalg.expm(t * A)

    size = n * (k + 1)
    augmented = np.zeros((size, size))
    augmented[:n, :n] = t * A
    eye = np.eye(n)
    for j in range(k):
        augmented[j * n:(j + 1) * n, (j + 1) * n:(j + 2) * n] = eye
    logger.debug(f"phi_dense: k={k}, n={n}, augmented size {size}")
    return scipy.linalg.expm(augmented)[:n, k * n:(k + 1) * n]


@dataclass(frozen=True)
class PhiTerm:
    """One term coeff·φ_k(θ·z) of a tableau weight."""
    order: int
    arg_scale: float = 1.0
    coeff: float = 1.0

    def __post_init__(self):
        _check_order(self.order)
        if not (0.0 < self.arg_scale <= 1.0):
            raise PhiError(f"argument scale must lie in (0, 1], got {self.arg_scale}")
        if not math.isfinite(self.coeff):
            raise PhiError(f"coefficient must be finite, got {self.coeff}")

    def evaluate(self, z):
        return self.coeff * phi_array(self.order, self.arg_scale * np.asarray(z, dtype=float))


@dataclass(frozen=True)
class PhiCombo:
    """
    Formal linear combination Σ coeff·φ_k(θ·z).

    Instances are hashable, which lets operators cache the spectral
    multiplier of a combo for a given step size.
    """
    terms: Tuple[PhiTerm, ...] = ()

    @classmethod
    def single(cls, order, arg_scale=1.0, coeff=1.0):
        return cls((PhiTerm(order, arg_scale, coeff),))

    def __add__(self, other):
        return PhiCombo(self.terms + other.terms)

    def __sub__(self, other):
        return self + other.scaled(-1.0)

    def scaled(self, factor):
        return PhiCombo(tuple(PhiTerm(t.order, t.arg_scale, t.coeff * factor) for t in self.terms))

    def evaluate(self, z):
        z = np.asarray(z, dtype=float)
        total = np.zeros_like(z)
        for term in self.terms:
            total = total + term.evaluate(z)
        return total

    def __str__(self):
        if not self.terms:
            return "0"
        parts = [f"{t.coeff:+g}*phi{t.order}({t.arg_scale:g}z)" for t in self.terms]
        return " ".join(parts)


def combo_eval_scalar(combo, z):
    """Σ_terms coeff·φ_k(θ·z) at a single real z."""
    total = 0.0
    for term in combo.terms:
        total += term.coeff * phi_scalar(term.order, term.arg_scale * z)
    return total
