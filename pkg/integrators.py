"""
Explicit exponential Runge–Kutta tableaus and time steppers.

    U_ni    = e^{c_i τA} u_n + τ Σ_j a_ij(τA) F_nj
    F_ni    = f(t_n + c_i τ, U_ni)
    u_{n+1} = e^{τA} u_n + τ Σ_i b_i(τA) F_ni

Unsplit steppers apply every weight through the operator's sine transform.
Split steppers replace φ_k(τ(A1+A2)) by k!·φ_k(τA1)φ_k(τA2) and apply each
factor along its own axis.
"""

from dataclasses import dataclass, field
from functools import partial
from typing import Callable, List, Optional, Tuple

import numpy as np

from phi_core import PhiCombo, phi_array
from operators import SplitOperator
from utils import ConfigurationError, ErklabError, logger

PHI1 = PhiCombo.single(1)
PHI2 = PhiCombo.single(2)

SCHEME_NAMES = ("expeuler", "erk2", "split_euler", "erk2l")
SPLIT_SCHEMES = ("split_euler", "erk2l")


class DivergenceError(ErklabError, RuntimeError):
    """A step produced a non-finite state."""

    def __init__(self, message, t_n=None, step_index=None):
        super().__init__(message)
        self.t_n = t_n
        self.step_index = step_index

    def __str__(self):
        where = []
        if self.step_index is not None:
            where.append(f"step {self.step_index}")
        if self.t_n is not None:
            where.append(f"t_n={self.t_n:.6g}")
        base = super().__str__()
        return f"{base} ({', '.join(where)})" if where else base


@dataclass(frozen=True)
class ExpRkTableau:
    """Explicit exponential Runge–Kutta tableau with φ-combo weights."""
    label: str
    c: Tuple[float, ...]
    b: Tuple[PhiCombo, ...]
    a: Tuple[Tuple[PhiCombo, ...], ...]
    order: int

    def __post_init__(self):
        s = len(self.c)
        if s == 0 or self.c[0] != 0.0:
            raise ConfigurationError(f"{self.label}: first node must be c1 = 0")
        if len(self.b) != s:
            raise ConfigurationError(f"{self.label}: {len(self.b)} weights for {s} stages")
        if len(self.a) != s or any(len(row) != i for i, row in enumerate(self.a)):
            raise ConfigurationError(f"{self.label}: a must be strictly lower triangular")
        if any(not (0.0 <= ci <= 1.0) for ci in self.c):
            raise ConfigurationError(f"{self.label}: nodes must lie in [0, 1]")

    @property
    def stages(self):
        return len(self.c)


@dataclass(frozen=True)
class SplitProduct:
    """prefactor · x_factor(τA1) · y_factor(τA2)"""
    prefactor: float
    x_factor: PhiCombo
    y_factor: PhiCombo


@dataclass(frozen=True)
class SplitTableau:
    """Two-stage split tableau; every weight is a sum of factorized products."""
    label: str
    c2: float
    b1: Tuple[SplitProduct, ...]
    b2: Tuple[SplitProduct, ...]
    a21: Tuple[SplitProduct, ...]
    order: int = 2

    def __post_init__(self):
        (b2,) = self.b2
        (a21,) = self.a21
        if not np.isclose(b2.prefactor, 2.0 / self.c2) or b2.x_factor != PHI2 or b2.y_factor != PHI2:
            raise ConfigurationError(f"{self.label}: b2 must be (2/c2)·φ2(τA1)φ2(τA2)")
        if not np.isclose(a21.prefactor, self.c2):
            raise ConfigurationError(f"{self.label}: a21 prefactor must equal c2")

    @property
    def c(self):
        return (0.0, self.c2)


@dataclass
class StepRecord:
    t_n: float
    tau: float
    u_n: np.ndarray
    stages: List[np.ndarray] = field(default_factory=list)
    stage_values: List[np.ndarray] = field(default_factory=list)


def _check_c2(c2):
    if not (0.0 < c2 <= 1.0):
        raise ConfigurationError(f"c2 must lie in (0, 1], got {c2}")


def tableau_exponential_euler():
    """One stage, b1 = φ1."""
    return ExpRkTableau(label="expeuler", c=(0.0,), b=(PHI1,), a=((),), order=1)


def tableau_erk2(c2=0.5):
    """
    Second-order two-stage method:
    b1 = φ1 - φ2/c2, b2 = φ2/c2, a21 = c2·φ1(c2·z).
    """
    _check_c2(c2)
    b1 = PHI1 - PHI2.scaled(1.0 / c2)
    b2 = PHI2.scaled(1.0 / c2)
    a21 = PhiCombo.single(1, arg_scale=c2, coeff=c2)
    return ExpRkTableau(label=f"erk2(c2={c2:g})", c=(0.0, c2), b=(b1, b2),
                        a=((), (a21,)), order=2)


def tableau_erk2l(c2=0.5):
    """
    Split version of erk2 built from φ1(τA) ≈ φ1(τA1)φ1(τA2) and
    φ2(τA) ≈ 2φ2(τA1)φ2(τA2).
    """
    _check_c2(c2)
    phi1_c2 = PhiCombo.single(1, arg_scale=c2)
    return SplitTableau(
        label=f"erk2l(c2={c2:g})",
        c2=c2,
        b1=(SplitProduct(1.0, PHI1, PHI1), SplitProduct(-2.0 / c2, PHI2, PHI2)),
        b2=(SplitProduct(2.0 / c2, PHI2, PHI2),),
        a21=(SplitProduct(c2, phi1_c2, phi1_c2),),
    )


@dataclass
class OrderConditionReport:
    tableau: str
    order: int
    residuals: dict

    @property
    def max_residual(self):
        return max(self.residuals.values()) if self.residuals else 0.0

    def satisfied(self, tol=1e-12):
        return self.max_residual <= tol


def check_order_conditions(tableau, order, z_samples):
    """
    Residuals of the stiff order conditions up to the given order:
    Σ b_i(z) = φ1(z); for order 2 also Σ b_i(z)c_i = φ2(z) and
    Σ_j a_ij(z) = c_i φ1(c_i z) for every stage i >= 2.
    """
    if order not in (1, 2):
        raise ConfigurationError(f"order conditions are available for order 1 or 2, got {order}")
    z = np.asarray(z_samples, dtype=float)
    if z.size == 0:
        raise ConfigurationError("z_samples must not be empty")

    residuals = {}
    b_sum = sum(combo.evaluate(z) for combo in tableau.b)
    residuals["b_sum"] = float(np.max(np.abs(b_sum - phi_array(1, z))))
    if order == 2:
        b_c = sum(ci * combo.evaluate(z) for ci, combo in zip(tableau.c, tableau.b))
        residuals["b_c_sum"] = float(np.max(np.abs(b_c - phi_array(2, z))))
        for i in range(1, tableau.stages):
            ci = tableau.c[i]
            row = sum((combo.evaluate(z) for combo in tableau.a[i]), np.zeros_like(z))
            residuals[f"stage_{i + 1}"] = float(np.max(np.abs(row - ci * phi_array(1, ci * z))))
    return OrderConditionReport(tableau=tableau.label, order=order, residuals=residuals)


def _as_spectral(op):
    return op.full if isinstance(op, SplitOperator) else op


def _check_finite(state, t_n):
    if not np.all(np.isfinite(state)):
        raise DivergenceError("non-finite state produced", t_n=t_n)


def _evaluate(f, t, state):
    with np.errstate(over='ignore', invalid='ignore'):
        return np.asarray(f(t, state), dtype=float)


def step_eerk(tableau, op, f, t_n, tau, u_n, keep_record=False):
    """
    One step of an explicit exponential Runge–Kutta method.

    Weights are applied in the operator's spectral basis: u_n and every F_nj
    are transformed once, the combos become pointwise multipliers and each
    stage is transformed back once.

    Returns:
        tuple: (u_{n+1}, StepRecord or None)
    """
    if not tau > 0.0:
        raise ConfigurationError(f"step size must be positive, got {tau}")
    op = _as_spectral(op)
    u_n = op.check_state(u_n)
    record = StepRecord(t_n=t_n, tau=tau, u_n=u_n) if keep_record else None

    u_hat = op.forward(u_n)
    stages = [u_n]
    values = [_evaluate(f, t_n, u_n)]
    _check_finite(values[0], t_n)
    values_hat = [op.forward(values[0])]
    for i in range(1, tableau.stages):
        ci = tableau.c[i]
        stage_hat = op.phi_multiplier(0, ci * tau) * u_hat
        for j, combo in enumerate(tableau.a[i]):
            stage_hat = stage_hat + tau * op.combo_multiplier(combo, tau) * values_hat[j]
        stage = op.backward(stage_hat)
        _check_finite(stage, t_n)
        value = _evaluate(f, t_n + ci * tau, stage)
        _check_finite(value, t_n)
        stages.append(stage)
        values.append(value)
        values_hat.append(op.forward(value))

    new_hat = op.phi_multiplier(0, tau) * u_hat
    for combo, value_hat in zip(tableau.b, values_hat):
        new_hat = new_hat + tau * op.combo_multiplier(combo, tau) * value_hat
    u_next = op.backward(new_hat)
    _check_finite(u_next, t_n)

    if record is not None:
        record.stages = stages
        record.stage_values = values
    return u_next, record


def _split_operator(op):
    if not isinstance(op, SplitOperator):
        raise ConfigurationError("split steppers need a SplitOperator (2D split-capable problem)")
    return op


def _apply_split_weight(op, weight, tau, v):
    out = np.zeros_like(v)
    for product in weight:
        m1 = op.a1.combo_multiplier(product.x_factor, tau)
        m2 = op.a2.combo_multiplier(product.y_factor, tau)
        out = out + product.prefactor * op.apply_product(m1, m2, v)
    return out


def _split_semigroup(op, t, v):
    return op.apply_product(op.a1.phi_multiplier(0, t), op.a2.phi_multiplier(0, t), v)


def step_split_euler(op, f, t_n, tau, u_n, keep_record=False):
    """u_{n+1} = e^{τA1}e^{τA2}u_n + τ·φ1(τA1)φ1(τA2) f(t_n, u_n)"""
    if not tau > 0.0:
        raise ConfigurationError(f"step size must be positive, got {tau}")
    op = _split_operator(op)
    u_n = op.full.check_state(u_n)
    value = _evaluate(f, t_n, u_n)
    _check_finite(value, t_n)
    forcing = op.apply_product(op.a1.phi_multiplier(1, tau), op.a2.phi_multiplier(1, tau), value)
    u_next = _split_semigroup(op, tau, u_n) + tau * forcing
    _check_finite(u_next, t_n)
    record = None
    if keep_record:
        record = StepRecord(t_n=t_n, tau=tau, u_n=u_n, stages=[u_n], stage_values=[value])
    return u_next, record


def step_erk2l(tab, op, f, t_n, tau, u_n, keep_record=False):
    """One step of the split second-order method with factorized weights."""
    if not tau > 0.0:
        raise ConfigurationError(f"step size must be positive, got {tau}")
    op = _split_operator(op)
    u_n = op.full.check_state(u_n)
    c2 = tab.c2

    value1 = _evaluate(f, t_n, u_n)
    _check_finite(value1, t_n)
    stage2 = _split_semigroup(op, c2 * tau, u_n) + tau * _apply_split_weight(op, tab.a21, tau, value1)
    _check_finite(stage2, t_n)
    value2 = _evaluate(f, t_n + c2 * tau, stage2)
    _check_finite(value2, t_n)

    u_next = (_split_semigroup(op, tau, u_n)
              + tau * _apply_split_weight(op, tab.b1, tau, value1)
              + tau * _apply_split_weight(op, tab.b2, tau, value2))
    _check_finite(u_next, t_n)
    record = None
    if keep_record:
        record = StepRecord(t_n=t_n, tau=tau, u_n=u_n, stages=[u_n, stage2],
                            stage_values=[value1, value2])
    return u_next, record


def make_stepper(name, c2=0.5):
    """
    Step function for a scheme name, with the signature
    stepper(op, f, t_n, tau, u_n, keep_record=False) -> (state, record).
    """
    if name == "expeuler":
        return partial(step_eerk, tableau_exponential_euler())
    if name == "erk2":
        return partial(step_eerk, tableau_erk2(c2))
    if name == "split_euler":
        return step_split_euler
    if name == "erk2l":
        return partial(step_erk2l, tableau_erk2l(c2))
    raise ConfigurationError(f"unknown scheme {name!r}; expected one of {', '.join(SCHEME_NAMES)}")


@dataclass
class IntegrationResult:
    state: np.ndarray
    steps: int


def step_count(tau, T):
    """Number of uniform steps of size tau covering [0, T]; T must be a multiple of tau."""
    if not tau > 0.0 or not T > 0.0:
        raise ConfigurationError(f"tau and T must be positive, got tau={tau}, T={T}")
    n = int(round(T / tau))
    if n < 1 or abs(n * tau - T) > 1e-9 * T:
        raise ConfigurationError(f"T={T} is not an integer multiple of tau={tau}")
    return n


def integrate(stepper: Callable, problem, tau, T, observer: Optional[Callable] = None):
    """
    Advance problem.u0 from 0 to T with n = T/τ uniform steps, t_n = nτ.

    The observer, if given, is called with (step_index, StepRecord) after
    every step.
    """
    n_steps = step_count(tau, T)
    u = np.array(problem.u0, dtype=float, copy=True)
    keep = observer is not None
    for n in range(n_steps):
        t_n = n * tau
        try:
            u, record = stepper(problem.operator, problem.nonlinearity, t_n, tau, u, keep_record=keep)
        except DivergenceError as exc:
            exc.step_index = n
            exc.t_n = t_n
            logger.warning(f"{problem.label}: divergence at step {n} (t_n={t_n:.6g}, tau={tau:.3e})")
            raise
        if keep:
            observer(n, record)
    return IntegrationResult(state=u, steps=n_steps)
