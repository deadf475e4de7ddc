"""
Error norms, convergence studies, order fitting and the split-defect experiment.
"""

import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
import scipy.integrate

from phi_core import K_MAX, phi_apply_spectral, phi_scalar
from operators import SplitOperator, gradient_1d, gradient_2d
from integrators import DivergenceError, integrate, make_stepper, step_count
from problems import InitialDataSpec, make_initial_data
from utils import ConfigurationError, ErklabError, ShapeError, logger

NORM_KINDS = ("max", "c1_discrete", "holder")
NOISE_FLOOR = 1e-13
MIN_REFINEMENT = 16
EXHAUSTIVE_HOLDER_MAX_N = 16


class InsufficientDataError(ErklabError, ValueError):
    """Fewer than three usable points for a rate fit."""


class NoiseFloorError(InsufficientDataError):
    """Too many errors sit at round-off level for a rate fit."""


@dataclass(frozen=True)
class NormKind:
    kind: str = "max"
    exponent: Optional[float] = None
    samples: int = 2000
    seed: int = 0

    def __post_init__(self):
        if self.kind not in NORM_KINDS:
            raise ConfigurationError(f"unknown norm {self.kind!r}; expected one of {', '.join(NORM_KINDS)}")
        if self.kind == "holder":
            if self.exponent is None or not (0.0 < self.exponent < 2.0):
                raise ConfigurationError(f"Hölder exponent must lie in (0, 2), got {self.exponent}")
            if self.samples < 100:
                raise ConfigurationError(f"Hölder sampling needs at least 100 pairs, got {self.samples}")

    @property
    def label(self):
        return {"max": "max", "c1_discrete": "c1", "holder": "holder"}[self.kind]


def _require_grid(grid, kind):
    if grid is None:
        raise ConfigurationError(f"the {kind} norm needs a grid (not available for diagonal operators)")


def _padded_nodes(v, grid):
    """State with its zero boundary ring and the matching node coordinates."""
    padded = np.pad(v, 1)
    axes = [np.arange(grid.N + 1) / grid.N] * grid.dims
    coords = np.stack([c.ravel() for c in np.meshgrid(*axes, indexing='ij')], axis=1)
    return padded, coords


def _holder_quotient(v, grid, exponent, samples, seed):
    padded, coords = _padded_nodes(v, grid)
    quotient = 0.0
    for axis in range(v.ndim):
        diffs = np.abs(np.diff(padded, axis=axis))
        quotient = max(quotient, float(np.max(diffs)) / grid.h ** exponent)

    rng = np.random.default_rng(seed)
    values = padded.ravel()
    i = rng.integers(0, values.size, size=samples)
    j = rng.integers(0, values.size, size=samples)
    dist = np.linalg.norm(coords[i] - coords[j], axis=1)
    keep = dist > 0.0
    if keep.any():
        sampled = np.abs(values[i[keep]] - values[j[keep]]) / dist[keep] ** exponent
        quotient = max(quotient, float(np.max(sampled)))
    return quotient


def norm(v, kind: NormKind, grid=None):
    """
    Discrete norm of a state.

    max is the nodal maximum; c1_discrete adds the maxima of the centered
    gradients; holder is sup |v(x)-v(y)|/|x-y|^e over all adjacent node pairs
    and a seeded random sample of pairs, with the zero boundary included.
    """
    v = np.asarray(v, dtype=float)
    if kind.kind == "max":
        return float(np.max(np.abs(v))) if v.size else 0.0

    _require_grid(grid, kind.kind)
    if v.shape != grid.shape:
        raise ShapeError(f"state shape {v.shape} does not match grid shape {grid.shape}")
    if kind.kind == "c1_discrete":
        total = float(np.max(np.abs(v)))
        if grid.dims == 1:
            return total + float(np.max(np.abs(gradient_1d(v, grid.h))))
        for direction in ('x', 'y'):
            total += float(np.max(np.abs(gradient_2d(v, direction, grid.h))))
        return total
    return _holder_quotient(v, grid, kind.exponent, kind.samples, kind.seed)


def holder_quotient_exhaustive(v, exponent, grid):
    """Hölder quotient over every pair of nodes, boundary included (N <= 16)."""
    if grid.N > EXHAUSTIVE_HOLDER_MAX_N:
        raise ConfigurationError(f"exhaustive Hölder quotient is limited to N <= {EXHAUSTIVE_HOLDER_MAX_N}")
    v = np.asarray(v, dtype=float)
    if v.shape != grid.shape:
        raise ShapeError(f"state shape {v.shape} does not match grid shape {grid.shape}")
    padded, coords = _padded_nodes(v, grid)
    values = padded.ravel()
    dist = np.linalg.norm(coords[:, None, :] - coords[None, :, :], axis=2)
    diffs = np.abs(values[:, None] - values[None, :])
    mask = dist > 0.0
    return float(np.max(diffs[mask] / dist[mask] ** exponent))


@dataclass
class OrderFit:
    order: float
    r2: float
    residual: float
    points_used: int
    flags: List[str] = field(default_factory=list)


def fit_order(taus, errors, noise_floor=NOISE_FLOOR):
    """
    Least-squares slope of log(error) against log(tau).

    Non-finite or missing errors (diverged runs) are dropped. Errors at or
    below the noise floor are dropped and flagged.

    Returns:
        OrderFit: slope p of error ≈ C·tau^p, R², RMS residual in log space
    """
    flags = []
    xs, ys = [], []
    floor_hits = 0
    for tau, err in zip(taus, errors):
        if err is None or not np.isfinite(err) or err < 0.0:
            if "excluded_divergent" not in flags:
                flags.append("excluded_divergent")
            continue
        if err <= noise_floor:
            floor_hits += 1
            continue
        xs.append(math.log(tau))
        ys.append(math.log(err))
    if floor_hits:
        flags.append("below_noise_floor")

    if len(xs) < 3:
        if floor_hits:
            raise NoiseFloorError(f"{floor_hits} errors at or below {noise_floor:.0e}; {len(xs)} usable points")
        raise InsufficientDataError(f"rate fit needs at least 3 usable points, got {len(xs)}")

    x = np.array(xs)
    y = np.array(ys)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_res = float(np.sum(resid ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0.0 else 1.0
    return OrderFit(order=float(slope), r2=r2, residual=math.sqrt(ss_res / len(x)),
                    points_used=len(x), flags=flags)


@dataclass(frozen=True)
class ReferenceSpec:
    kind: str = "fine_step"
    scheme: str = "erk2"
    refinement: int = 32

    def __post_init__(self):
        if self.kind not in ("exact", "fine_step"):
            raise ConfigurationError(f"reference kind must be 'exact' or 'fine_step', got {self.kind!r}")
        if self.kind == "fine_step" and self.refinement < MIN_REFINEMENT:
            raise ConfigurationError(f"reference refinement must be >= {MIN_REFINEMENT}, got {self.refinement}")


@dataclass
class ConvergenceReport:
    scheme: str
    T: float
    taus: List[float]
    norms: List[NormKind]
    errors: Dict[str, List[float]]
    fits: Dict[str, Optional[OrderFit]]
    reference: str
    tau_ref: Optional[float]
    wall_ms: List[float]
    diverged: List[bool]
    flags: List[str] = field(default_factory=list)

    @property
    def any_diverged(self):
        return any(self.diverged)

    def to_frame(self):
        """Error table: tau plus one error_<norm> column per norm."""
        data = {"tau": self.taus}
        for kind in self.norms:
            data[f"error_{kind.label}"] = self.errors[kind.label]
        return pd.DataFrame(data)

    def timing_frame(self):
        return pd.DataFrame({"tau": self.taus, "wall_ms": self.wall_ms})


def _check_taus(taus, T):
    if not taus:
        raise ConfigurationError("at least one step size is required")
    for a, b in zip(taus, taus[1:]):
        if not b < a:
            raise ConfigurationError(f"step sizes must be strictly decreasing, got {a} then {b}")
    for tau in taus:
        step_count(tau, T)


def _reference_state(problem, reference, taus, T, c2):
    if reference.kind == "exact":
        if problem.exact is None:
            raise ConfigurationError(f"{problem.label} has no exact solution; use a fine_step reference")
        return problem.exact(T), "exact", None
    tau_ref = min(taus) / reference.refinement
    logger.info(f"Computing {reference.scheme} reference with tau_ref={tau_ref:.3e}")
    stepper = make_stepper(reference.scheme, c2)
    result = integrate(stepper, problem, tau_ref, T)
    return result.state, f"fine_step({reference.scheme}, r={reference.refinement})", tau_ref


def run_convergence_study(problem, scheme, taus, T, norms, reference: ReferenceSpec,
                          threads=1, c2=0.5, noise_floor=NOISE_FLOOR):
    """
    Final-time errors of a scheme over a list of step sizes.

    Runs for different step sizes are independent and may execute on a
    thread pool; results are assembled in the order of `taus`. A run that
    diverges is kept in the report with NaN errors and left out of the fits.

    Args:
        problem (Problem): problem to integrate
        scheme (str): one of expeuler, erk2, split_euler, erk2l
        taus (list): strictly decreasing step sizes dividing T
        T (float): final time
        norms (list): NormKind entries to measure
        reference (ReferenceSpec): exact oracle or fine-step self reference
        threads (int): worker count
        c2 (float): second node of the two-stage schemes
        noise_floor (float): errors at or below this are left out of the fits

    Returns:
        ConvergenceReport
    """
    taus = [float(t) for t in taus]
    _check_taus(taus, T)
    if not norms:
        raise ConfigurationError("at least one norm is required")
    stepper = make_stepper(scheme, c2)
    ref_state, ref_label, tau_ref = _reference_state(problem, reference, taus, T, c2)

    def run_one(tau):
        start = time.perf_counter()
        try:
            state = integrate(stepper, problem, tau, T).state
        except DivergenceError as e:
            logger.warning(f"{scheme}: tau={tau:.3e} diverged: {e}")
            state = None
        elapsed = (time.perf_counter() - start) * 1000.0
        logger.info(f"{scheme}: tau={tau:.3e} finished in {elapsed:.1f} ms")
        return state, elapsed

    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as executor:
        outcomes = list(executor.map(run_one, taus))

    errors = {kind.label: [] for kind in norms}
    diverged = []
    wall_ms = []
    for state, elapsed in outcomes:
        wall_ms.append(elapsed)
        diverged.append(state is None)
        for kind in norms:
            value = math.nan if state is None else norm(state - ref_state, kind, problem.grid)
            errors[kind.label].append(value)

    flags = []
    if any(diverged):
        flags.append("diverged")
    fits = {}
    for kind in norms:
        if len(taus) == 1:
            fits[kind.label] = None
            continue
        try:
            fits[kind.label] = fit_order(taus, errors[kind.label], noise_floor)
        except NoiseFloorError as e:
            logger.info(f"{kind.label}: {e}")
            fits[kind.label] = None
            flags.append(f"below_noise_floor:{kind.label}")
        except InsufficientDataError as e:
            logger.info(f"{kind.label}: {e}")
            fits[kind.label] = None
            flags.append(f"insufficient_data:{kind.label}")

    return ConvergenceReport(scheme=scheme, T=T, taus=taus, norms=list(norms), errors=errors,
                             fits=fits, reference=ref_label, tau_ref=tau_ref, wall_ms=wall_ms,
                             diverged=diverged, flags=flags)


@dataclass
class DefectReport:
    k: int
    t_values: List[float]
    defect_norms: List[float]
    beta1: Optional[float]
    slope: Optional[float]
    r2: Optional[float]
    flags: List[str] = field(default_factory=list)

    def to_frame(self):
        return pd.DataFrame({
            "t": self.t_values,
            "defect_norm": self.defect_norms,
            "k": [self.k] * len(self.t_values),
            "beta1": [math.nan if self.beta1 is None else self.beta1] * len(self.t_values),
        })


def split_defect(op: SplitOperator, k, t, v):
    """(φ_k(t(A1+A2)) - k!·φ_k(tA1)φ_k(tA2))v"""
    unsplit = phi_apply_spectral(k, t, op.full, v)
    split = math.factorial(k) * op.apply_product(op.a1.phi_multiplier(k, t), op.a2.phi_multiplier(k, t), v)
    return unsplit - split


def split_defect_study(op: SplitOperator, k, v, t_values, beta1=None):
    """
    Relative max-norm of the split defect applied to v for each t.

    Args:
        op (SplitOperator): commuting pair with its Kronecker sum
        k (int): φ order, 1 <= k <= K_MAX
        v: state or InitialDataSpec sampled on op's grid
        t_values (list): times in (0, 1]
        beta1 (float): regularity label of v, carried into the report

    Returns:
        DefectReport: t values sorted descending, fitted slope in log t
    """
    if not isinstance(op, SplitOperator):
        raise ConfigurationError("split defect study needs a SplitOperator")
    if not (1 <= k <= K_MAX):
        raise ConfigurationError(f"defect order must satisfy 1 <= k <= {K_MAX}, got {k}")
    if isinstance(v, InitialDataSpec):
        if op.grid is None:
            raise ConfigurationError("initial data families need an operator defined on a grid")
        v = make_initial_data(v, op.grid)
    v = op.full.check_state(v)
    v_norm = float(np.max(np.abs(v)))
    if v_norm == 0.0:
        raise ConfigurationError("defect study needs a nonzero vector")
    t_values = sorted((float(t) for t in t_values), reverse=True)
    if not t_values or any(not (0.0 < t <= 1.0) for t in t_values):
        raise ConfigurationError(f"t values must lie in (0, 1], got {t_values}")

    defects = []
    for t in t_values:
        d = float(np.max(np.abs(split_defect(op, k, t, v)))) / v_norm
        logger.info(f"split defect k={k}, t={t:.3e}: {d:.6e}")
        defects.append(d)

    slope = r2 = None
    flags = []
    if len(t_values) > 1:
        try:
            fit = fit_order(t_values, defects)
            slope, r2 = fit.order, fit.r2
            flags.extend(fit.flags)
        except InsufficientDataError as e:
            logger.info(f"no slope fitted: {e}")
            flags.append("insufficient_data")
    return DefectReport(k=k, t_values=t_values, defect_norms=defects, beta1=beta1,
                        slope=slope, r2=r2, flags=flags)


def split_defect_quadrature(k, t, a1, a2, tol=1e-11):
    """
    Scalar split defect φ_k(t(a1+a2)) - k!φ_k(ta1)φ_k(ta2) from its
    triple-integral form (test oracle only):

        k/(k-1)! ∫0^1 ∫0^1 ∫_ξ^η (ξη)^{k-1} e^{(1-ξ)ta1} ta2 e^{(1-σ)ta2} dσ dη dξ
    """
    if not (1 <= k <= K_MAX):
        raise ConfigurationError(f"defect order must satisfy 1 <= k <= {K_MAX}, got {k}")
    x, y = t * a1, t * a2
    scale = k / math.factorial(k - 1)

    def integrand(sigma, eta, xi):
        return (xi * eta) ** (k - 1) * math.exp((1.0 - xi) * x) * y * math.exp((1.0 - sigma) * y)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.integrate.IntegrationWarning)
        value, _ = scipy.integrate.tplquad(
            integrand, 0.0, 1.0, lambda xi: 0.0, lambda xi: 1.0,
            lambda xi, eta: xi, lambda xi, eta: eta,
            epsabs=tol, epsrel=tol)
    return scale * value


def scalar_split_defect(k, t, a1, a2):
    """Closed-form scalar split defect through phi_scalar."""
    return phi_scalar(k, t * (a1 + a2)) - math.factorial(k) * phi_scalar(k, t * a1) * phi_scalar(k, t * a2)
