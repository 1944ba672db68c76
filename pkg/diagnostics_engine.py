"""
Diagnostics Engine
Functionals of shell states and trajectories: energy balance, flux, sup/Sobolev
norms, Onsager integrals, strong/weak distances and decay-law fits.
"""
import logging
from typing import Callable, Optional, Sequence

import numpy as np
import polars as pl
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.integrate import cumulative_simpson
from scipy.stats import linregress

from dyadic_engine import (
    CASCADE_EXPONENT,
    ONSAGER_EXPONENT,
    GalerkinSpec,
    ModelParams,
    ShellState,
    VariableKind,
    c_to_a,
    shell_powers,
)
from errors import DiagnosticsError, FitError, InputValidationError, RangeError
from integrator_engine import Trajectory

logger = logging.getLogger(__name__)

QUAD_REL_TOL = 1e-8
MAX_SUBDIVISIONS = 64
DEFAULT_FIT_WINDOW = (1.0, 50.0)
WEAK_DISTANCE_BASE = 2.0


class DiagnosticsRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    t: float
    energy: float = Field(..., ge=0.0)
    sup_theta_norm: float = Field(..., ge=0.0)
    sobolev: dict[str, float] = {}     # "H_<s>" -> norm
    flux: dict[str, float] = {}        # "flux_<J>" -> Pi_J

    @model_validator(mode="after")
    def _finite(self) -> "DiagnosticsRecord":
        entries = [self.t, self.energy, self.sup_theta_norm, *self.sobolev.values(), *self.flux.values()]
        if not np.all(np.isfinite(entries)):
            raise ValueError("diagnostics entries must be finite")
        return self


class FitResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    slope: float
    intercept: float
    r_squared: float = Field(..., ge=0.0, le=1.0)
    t_a: float
    t_b: float
    n_points: int

    @model_validator(mode="after")
    def _window(self) -> "FitResult":
        if not self.t_a < self.t_b:
            raise ValueError("fit window needs t_a < t_b")
        return self


class OnsagerProfile(BaseModel):
    model_config = ConfigDict(frozen=True)

    shells: list[int]
    integrals: list[float]
    log2_decay_rate: Optional[float] = None    # slope of log2|integral| against j

    @field_validator("integrals")
    @classmethod
    def _finite(cls, v: list[float]) -> list[float]:
        if not np.all(np.isfinite(v)):
            raise ValueError("Onsager integrals must be finite")
        return v


# --- State functionals ---

def _as_a_variables(state: ShellState, params: Optional[ModelParams] = None) -> np.ndarray:
    if state.variable_kind == VariableKind.A:
        return state.coeffs
    if state.variable_kind == VariableKind.C and params is not None:
        return c_to_a(state, params).coeffs
    raise InputValidationError(f"diagnostics need a-variables, got {state.variable_kind.value}")


def sup_theta_norm(state: ShellState, theta: float, lambda_base: float = 2.0) -> float:
    """max_{1<=j<=N} lambda_j^theta |a_j|"""
    a = _as_a_variables(state)
    weights = shell_powers(lambda_base, state.truncation, theta)
    return float(np.max(weights[1:] * np.abs(a[1:])))


def sobolev_norm(state: ShellState, s: float, lambda_base: float = 2.0) -> float:
    """(sum_j lambda_j^{2s} a_j^2)^{1/2}"""
    a = _as_a_variables(state)
    weights = shell_powers(lambda_base, state.truncation, s)
    return float(np.linalg.norm(weights * a))


def flux(state: ShellState, shell: int, lambda_base: float = 2.0) -> float:
    """Pi_J = lambda_J^{5/2} a_J^2 a_{J+1}"""
    a = _as_a_variables(state)
    if not 1 <= shell < state.truncation:
        raise RangeError(f"flux shell J={shell} outside 1..{state.truncation - 1}")
    return float(lambda_base ** (CASCADE_EXPONENT * shell) * a[shell] ** 2 * a[shell + 1])


def distances(x: ShellState, y: ShellState, lambda_base: float = WEAK_DISTANCE_BASE) -> tuple[float, float]:
    """
    Strong and weak distances (d_S, d_W).

    d_W = sum_j lambda^{-j^2} |x_j - y_j| / (1 + |x_j - y_j|); the shorter state
    is zero-padded.
    """
    n = max(x.coeffs.size, y.coeffs.size)
    diff = np.zeros(n)
    diff[: x.coeffs.size] += x.coeffs
    diff[: y.coeffs.size] -= y.coeffs
    diff = np.abs(diff)
    j = np.arange(n, dtype=float)
    d_strong = float(np.linalg.norm(diff))
    d_weak = float(np.sum(lambda_base ** (-(j ** 2)) * diff / (1.0 + diff)))
    return d_strong, d_weak


# --- Trajectory quadrature ---

def _refined_grid(times: np.ndarray, m: int) -> np.ndarray:
    h = np.diff(times)
    inner = times[:-1, None] + h[:, None] * (np.arange(m) / m)[None, :]
    return np.concatenate([inner.ravel(), times[-1:]])


def cumulative_integral(trajectory: Trajectory, integrand: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> np.ndarray:
    """
    int_{t_0}^{t_i} integrand(t, a(t)) dt at every stored sample time t_i.

    Composite Simpson on the dense output with m sub-intervals per step; m is
    doubled until successive results agree to QUAD_REL_TOL (relative to the
    largest magnitude), capped at MAX_SUBDIVISIONS.
    """
    times = trajectory.times
    if times.size < 2:
        return np.zeros(times.size)

    previous = None
    m = 2
    while True:
        fine = _refined_grid(times, m)
        values = np.asarray(integrand(fine, trajectory.sample(fine)), dtype=float)
        current = cumulative_simpson(values, x=fine, initial=0.0)[::m]
        if previous is not None:
            scale = max(float(np.max(np.abs(current))), np.finfo(float).tiny)
            change = float(np.max(np.abs(current - previous)))
            if change <= QUAD_REL_TOL * scale:
                return current
            if m >= MAX_SUBDIVISIONS:
                logger.warning(f"Trajectory quadrature stopped at m={m} with relative change {change / scale:.2e}")
                return current
        previous = current
        m *= 2


def energy_series(trajectory: Trajectory) -> np.ndarray:
    return np.sum(trajectory.values ** 2, axis=1)


def energy_balance_residual(trajectory: Trajectory, shell: int) -> float:
    """
    max_t | 1/2 sum_{j<=J} a_j^2(t) - 1/2 sum_{j<=J} a_j^2(0) + int_0^t Pi_J |

    The telescoping identity holds for J strictly below the truncation (below the
    damped shell for Galerkin runs).
    """
    if len(trajectory) < 2:
        raise DiagnosticsError(f"energy balance needs at least 2 samples, got {len(trajectory)}")
    if not 1 <= shell < trajectory.truncation:
        raise RangeError(f"energy balance shell J={shell} outside 1..{trajectory.truncation - 1}")

    k_shell = trajectory.params.lambda_base ** (CASCADE_EXPONENT * shell)

    def pi_j(t, a):
        return k_shell * a[:, shell] ** 2 * a[:, shell + 1]

    partial = 0.5 * np.sum(trajectory.values[:, : shell + 1] ** 2, axis=1)
    residual = partial - partial[0] + cumulative_integral(trajectory, pi_j)
    return float(np.max(np.abs(residual)))


def galerkin_drain(trajectory: Trajectory, spec: GalerkinSpec) -> np.ndarray:
    """int_0^t 2 lambda^{5/2-2theta} lambda_n^{5/2-theta} a_n^2 at every sample time."""
    if trajectory.truncation != spec.order:
        raise InputValidationError(f"trajectory truncation {trajectory.truncation} != Galerkin order {spec.order}")
    rate = 2.0 * spec.damping(trajectory.params.lambda_base)
    n = spec.order
    return cumulative_integral(trajectory, lambda t, a: rate * a[:, n] ** 2)


def galerkin_energy_defect(trajectory: Trajectory, spec: GalerkinSpec) -> float:
    """max_t |E(0) - E(t) - drain(t)| / E(0); 0 for zero data."""
    e = energy_series(trajectory)
    if e[0] == 0.0:
        return 0.0
    drain = galerkin_drain(trajectory, spec)
    return float(np.max(np.abs(e[0] - e - drain)) / e[0])


def onsager_integral(trajectory: Trajectory, shell: int) -> float:
    """int over the span of (lambda_j^{5/6} a_j)^3"""
    if not 1 <= shell <= trajectory.truncation:
        raise RangeError(f"Onsager shell j={shell} outside 1..{trajectory.truncation}")
    weight = trajectory.params.lambda_base ** (ONSAGER_EXPONENT * shell)
    series = cumulative_integral(trajectory, lambda t, a: (weight * a[:, shell]) ** 3)
    return float(series[-1])


def onsager_profile(trajectory: Trajectory, shells: Optional[Sequence[int]] = None) -> OnsagerProfile:
    shells = list(shells) if shells is not None else list(range(1, trajectory.truncation + 1))
    integrals = [onsager_integral(trajectory, j) for j in shells]

    rate = None
    positive = [(j, v) for j, v in zip(shells, integrals) if v > 0.0]
    if len(positive) >= 2:
        js, vs = zip(*positive)
        rate = float(linregress(np.asarray(js, dtype=float), np.log2(vs)).slope)
    return OnsagerProfile(shells=shells, integrals=integrals, log2_decay_rate=rate)


def weak_modulus(trajectory: Trajectory, lambda_base: float = WEAK_DISTANCE_BASE) -> float:
    """max_i d_W(a(t_i), a(t_{i+1})) / (t_{i+1} - t_i)"""
    if len(trajectory) < 2:
        return 0.0
    diff = np.abs(np.diff(trajectory.values, axis=0))
    j = np.arange(trajectory.values.shape[1], dtype=float)
    d_weak = np.sum(lambda_base ** (-(j ** 2)) * diff / (1.0 + diff), axis=1)
    return float(np.max(d_weak / np.diff(trajectory.times)))


# --- Decay fit ---

def decay_fit(
    trajectory: Trajectory,
    theta: float,
    window: tuple[float, float] = DEFAULT_FIT_WINDOW,
    n_points: int = 64,
) -> FitResult:
    """
    Least-squares fit of log(sup_theta_norm) against log(t) on a geometric grid
    over the window.
    """
    if trajectory.variable_kind != VariableKind.A:
        raise InputValidationError("decay fit needs an a-variable trajectory")
    t_a, t_b = float(window[0]), float(window[1])
    t_start, t_end = trajectory.t_span
    if not (0.0 < t_a < t_b and t_start <= t_a and t_b <= t_end):
        raise RangeError(f"fit window [{t_a}, {t_b}] not inside ({max(t_start, 0.0)}, {t_end}]")
    if n_points < 2:
        raise FitError("decay fit needs at least 2 points")

    ts = np.geomspace(t_a, t_b, n_points)
    a = trajectory.sample(ts)
    weights = shell_powers(trajectory.params.lambda_base, trajectory.truncation, theta)
    norms = np.max(weights[None, 1:] * np.abs(a[:, 1:]), axis=1)

    if np.any(norms <= 0.0):
        bad = float(ts[np.argmax(norms <= 0.0)])
        raise FitError(f"sup-norm vanishes at t={bad:.6g}; log-log fit undefined")

    x, y = np.log(ts), np.log(norms)
    fit = linregress(x, y)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum((y - (fit.intercept + fit.slope * x)) ** 2))
    r_squared = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return FitResult(
        slope=float(fit.slope),
        intercept=float(fit.intercept),
        r_squared=float(np.clip(r_squared, 0.0, 1.0)),
        t_a=t_a,
        t_b=t_b,
        n_points=n_points,
    )


# --- Tabulation ---

def diagnostics_rows(
    trajectory: Trajectory,
    params: Optional[ModelParams] = None,
    sobolev_exponents: Sequence[float] = (),
    flux_shells: Sequence[int] = (),
) -> list[DiagnosticsRecord]:
    """One DiagnosticsRecord per stored sample."""
    params = params or trajectory.params
    lam = params.lambda_base
    records = []
    for t, state in trajectory.samples:
        a_state = state if state.variable_kind == VariableKind.A else state.with_coeffs(_as_a_variables(state, params), VariableKind.A)
        records.append(
            DiagnosticsRecord(
                t=t,
                energy=float(np.dot(a_state.coeffs, a_state.coeffs)),
                sup_theta_norm=sup_theta_norm(a_state, params.theta, lam),
                sobolev={f"H_{s:g}": sobolev_norm(a_state, s, lam) for s in sobolev_exponents},
                flux={f"flux_{j}": flux(a_state, j, lam) for j in flux_shells},
            )
        )
    return records


def records_frame(records: Sequence[DiagnosticsRecord]) -> pl.DataFrame:
    """Column order: t, E, sup_theta, H_s..., flux_J..."""
    rows = [
        {"t": r.t, "E": r.energy, "sup_theta": r.sup_theta_norm, **r.sobolev, **r.flux}
        for r in records
    ]
    if not rows:
        return pl.DataFrame(schema={"t": pl.Float64, "E": pl.Float64, "sup_theta": pl.Float64})
    return pl.DataFrame(rows)
