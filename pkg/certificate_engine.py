"""
Certificate Engine
Closed-form Gronwall bounds for the first shell to reach 1 in the b-variables,
and a numerical verdict that the envelope beta(t) stays below 1.

Conventions: t0 is normalized to 0 (every bound depends on t - t0 only),
a = lambda^{5/2-theta}, gamma = lambda^{5/2-3 theta}.

    B(delta)  = P(k) - exp(-a gamma (k - delta)) P(delta),
    P(x)      = x^2/gamma - 2x/(a gamma^2) + 2/(a^2 gamma^3)
    b_hat(t)  = exp(-r1 t)(1 - 1/(k gamma)) + 1/(k gamma),      r1 = k gamma / a
    b_tilde(t)= exp(-r2 t)(B - k^2/gamma) + k^2/gamma,          r2 = a gamma
    beta(t)   = k exp(c (E(t) - 1) - k^2 t)
                + int_0^t exp(c (E(t) - E(s)) - k^2 (t - s)) b_hat(s)^2 ds,
                c = (B - k^2/gamma) / a,  E(t) = exp(-r2 t)
"""
import logging
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, computed_field, model_validator
from scipy.integrate import quad
from scipy.optimize import bisect

from dyadic_engine import (
    CASCADE_EXPONENT,
    RhsKind,
    RhsSelector,
    ModelParams,
    ShellState,
    VariableKind,
    __version__,
    build_model,
)
from errors import BudgetExhaustedError, DomainError, QuadratureError
from integrator_engine import IntegratorConfig, IntegratorEngine, Trajectory

logger = logging.getLogger(__name__)

DELTA_XTOL = 1e-10
QUAD_LIMIT = 200
COMPARISON_TOL = 1e-6


class CertificateParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    k: float = Field(0.96, gt=0.0, lt=1.0, description="Threshold constant b_n(t0) = k")
    theta: float = Field(0.6, gt=0.0, le=5.0 / 6.0)
    lambda_base: float = Field(2.0, gt=1.0)
    B_target: float = Field(0.447, description="Requested lower bound for b_{n+1}(t0)")
    delta: Optional[float] = Field(None, gt=0.0, description="Initial-data bound; searched when omitted")
    t0: float = 0.0
    margin: float = Field(0.01, gt=0.0, lt=1.0)
    T_check: float = Field(20.0, gt=0.0)
    quad_tol: float = Field(1e-10, gt=0.0)
    grid_points: int = Field(2048, ge=3)
    grid_start: float = Field(1e-3, gt=0.0)
    fallback_slack: float = Field(1e-3, ge=0.0)

    @model_validator(mode="after")
    def _check(self) -> "CertificateParams":
        if self.delta is not None and not self.delta < self.k:
            raise ValueError("need 0 < delta < k")
        if not self.grid_start < self.T_check:
            raise ValueError("need grid_start < T_check")
        return self

    @property
    def model(self) -> ModelParams:
        return ModelParams(lambda_base=self.lambda_base, theta=self.theta)


class EnvelopeBounds(BaseModel):
    """Everything needed to evaluate b_hat, b_tilde, beta and the beta' bound."""
    model_config = ConfigDict(frozen=True)

    k: float = Field(0.96, gt=0.0, lt=1.0)
    theta: float = Field(0.6, gt=0.0, le=5.0 / 6.0)
    lambda_base: float = Field(2.0, gt=1.0)
    B: float
    t0: float = 0.0

    @computed_field
    @property
    def gamma(self) -> float:
        return self.lambda_base ** (CASCADE_EXPONENT - 3.0 * self.theta)

    @property
    def a(self) -> float:
        return self.lambda_base ** (CASCADE_EXPONENT - self.theta)

    @property
    def inv_k_gamma(self) -> float:
        return 1.0 / (self.k * self.gamma)

    @property
    def r1(self) -> float:
        return self.k * self.gamma / self.a

    @property
    def r2(self) -> float:
        return self.a * self.gamma

    @property
    def b_tilde_limit(self) -> float:
        return self.k ** 2 / self.gamma

    @property
    def exponent_scale(self) -> float:
        return (self.B - self.b_tilde_limit) / self.a

    @property
    def beta_limit(self) -> float:
        """Large-time limit (1/(k gamma))^2 / k^2."""
        return self.inv_k_gamma ** 2 / self.k ** 2

    @classmethod
    def from_params(cls, params: CertificateParams, B: float) -> "EnvelopeBounds":
        return cls(k=params.k, theta=params.theta, lambda_base=params.lambda_base, B=B, t0=params.t0)


class DeltaSearch(BaseModel):
    model_config = ConfigDict(frozen=True)

    B_target: float
    B_limit: float
    feasible: bool
    delta_star: float
    B_at_delta_star: float


class AdversarialResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    trajectory: Trajectory = Field(..., exclude=True)
    sup_bn: float
    window_end: float                  # last sample time with b_n >= k
    bn_dominated_by_beta: bool
    upper_neighbour_above_b_tilde: bool
    lower_neighbour_below_b_hat: bool
    max_beta_excess: float


class CertificateReport(BaseModel):
    version: str = __version__
    params: CertificateParams
    delta_star: float
    B_at_delta_star: float
    B_limit: float
    B_limit_quadrature: float
    B_target_requested: float
    B_target_used: float
    feasible: bool
    beta_limit: float
    beta_times: list[float]
    beta_values: list[float]
    sup_beta: float
    sup_beta_time: float
    beta_at_T_check: float
    tail_bound: float
    grid_max_increment: float
    quadrature_resolutions: list[float]
    verdict: bool
    failing_conditions: list[str] = []


# --- Initial layer and B(delta) ---

def _require_delta(delta: float, k: float) -> None:
    if not 0.0 <= delta < k:
        raise DomainError(f"delta={delta} outside [0, k={k})")


def step1_lower_bound(t: float, k: float, delta: float, t0: float = 0.0) -> float:
    """b_n(t) >= k - t0 + t on [t0 - k + delta, t0]."""
    _require_delta(delta, k)
    if not t0 - k + delta <= t <= t0:
        raise DomainError(f"t={t} outside [{t0 - k + delta}, {t0}]")
    return k - t0 + t


def B_of_delta(delta: float, k: float = 0.96, theta: float = 0.6, lambda_base: float = 2.0) -> float:
    _require_delta(delta, k)
    a = lambda_base ** (CASCADE_EXPONENT - theta)
    gamma = lambda_base ** (CASCADE_EXPONENT - 3.0 * theta)

    def bracket(x: float) -> float:
        return x ** 2 / gamma - 2.0 * x / (a * gamma ** 2) + 2.0 / (a ** 2 * gamma ** 3)

    return float(bracket(k) - np.exp(-a * gamma * (k - delta)) * bracket(delta))


def B_limit(k: float = 0.96, theta: float = 0.6, lambda_base: float = 2.0) -> float:
    """sup_delta B(delta) = B(0)."""
    return B_of_delta(0.0, k, theta, lambda_base)


def B_quadrature(delta: float, k: float = 0.96, theta: float = 0.6, lambda_base: float = 2.0,
                 quad_tol: float = 1e-12) -> float:
    """int_{-k+delta}^0 exp(a gamma s) a (k + s)^2 ds, the integral B(delta) closes."""
    _require_delta(delta, k)
    a = lambda_base ** (CASCADE_EXPONENT - theta)
    gamma = lambda_base ** (CASCADE_EXPONENT - 3.0 * theta)
    return _quad(lambda s: np.exp(a * gamma * s) * a * (k + s) ** 2, -k + delta, 0.0, quad_tol)


def find_delta(k: float = 0.96, theta: float = 0.6, B_target: float = 0.447,
               lambda_base: float = 2.0) -> DeltaSearch:
    """
    Largest delta (to DELTA_XTOL) with B(delta) >= B_target. B is decreasing in
    delta, from B_limit at 0 down to 0 at k. An unattainable target returns
    feasible=False with delta_star = 0 and the supremum B_limit.
    """
    limit = B_limit(k, theta, lambda_base)
    if B_target > limit:
        logger.warning(f"B target {B_target} exceeds the attainable supremum B_limit={limit:.6f}")
        return DeltaSearch(B_target=B_target, B_limit=limit, feasible=False, delta_star=0.0, B_at_delta_star=limit)

    # B is defined on [0, k) only; just below k it is ~0
    upper = float(np.nextafter(k, 0.0))
    if B_target <= 0.0:
        delta = k - DELTA_XTOL
    elif B_of_delta(upper, k, theta, lambda_base) >= B_target:
        delta = upper
    else:
        delta = bisect(lambda d: B_of_delta(d, k, theta, lambda_base) - B_target, 0.0, upper, xtol=DELTA_XTOL)
        while delta > 0.0 and B_of_delta(delta, k, theta, lambda_base) < B_target:
            delta = max(delta - DELTA_XTOL, 0.0)
    return DeltaSearch(
        B_target=B_target,
        B_limit=limit,
        feasible=True,
        delta_star=float(delta),
        B_at_delta_star=B_of_delta(delta, k, theta, lambda_base),
    )


# --- Envelopes and beta ---

def _elapsed(t: float, bounds: EnvelopeBounds) -> float:
    if t < bounds.t0:
        raise DomainError(f"t={t} precedes t0={bounds.t0}")
    return t - bounds.t0


def _b_hat(tau, bounds: EnvelopeBounds):
    ikg = bounds.inv_k_gamma
    return np.exp(-bounds.r1 * tau) * (1.0 - ikg) + ikg


def envelope_bounds(t: float, bounds: EnvelopeBounds) -> tuple[float, float]:
    """(b_hat_{n-1}(t), b_tilde_{n+1}(t))"""
    tau = _elapsed(t, bounds)
    limit = bounds.b_tilde_limit
    b_tilde = np.exp(-bounds.r2 * tau) * (bounds.B - limit) + limit
    return float(_b_hat(tau, bounds)), float(b_tilde)


def _quad(func, lo: float, hi: float, quad_tol: float) -> float:
    result = quad(func, lo, hi, epsabs=quad_tol, epsrel=0.0, limit=QUAD_LIMIT, full_output=1)
    value, error = float(result[0]), float(result[1])
    if len(result) > 3 or error > quad_tol:
        raise QuadratureError(f"quadrature over [{lo}, {hi}] did not reach tolerance {quad_tol}", value, error)
    return value


def beta_eval(t: float, bounds: EnvelopeBounds, quad_tol: float = 1e-10) -> float:
    tau = _elapsed(t, bounds)
    k, c, r2 = bounds.k, bounds.exponent_scale, bounds.r2
    e_tau = np.exp(-r2 * tau)
    head = k * np.exp(c * (e_tau - 1.0) - k ** 2 * tau)
    if tau == 0.0:
        return float(head)

    def integrand(s: float) -> float:
        return np.exp(c * (e_tau - np.exp(-r2 * s)) - k ** 2 * (tau - s)) * _b_hat(s, bounds) ** 2

    return float(head + _quad(integrand, 0.0, tau, quad_tol))


def beta_prime_terms(bounds: EnvelopeBounds) -> list[tuple[float, float]]:
    """(coefficient, rate) pairs of the five-term exponential bound on beta'."""
    ikg = bounds.inv_k_gamma
    drain = 1.0 - bounds.B * bounds.gamma / bounds.k ** 2
    return [
        ((1.0 - ikg) ** 2, 2.0 * bounds.r1),
        (2.0 * ikg * (1.0 - ikg), bounds.r1),
        (ikg ** 2, bounds.k ** 2),
        (ikg ** 2 * drain, bounds.r2),
        (-(ikg ** 2) * drain, bounds.r2 + bounds.k ** 2),
    ]


def beta_prime_bound(t: float, bounds: EnvelopeBounds, positive_only: bool = False) -> float:
    """Upper bound on d beta/dt; valid while B <= k^2/gamma."""
    tau = _elapsed(t, bounds)
    return float(sum(
        coef * np.exp(-rate * tau)
        for coef, rate in beta_prime_terms(bounds)
        if coef > 0.0 or not positive_only
    ))


def beta_prime_tail(T: float, bounds: EnvelopeBounds) -> float:
    """int_T^inf of the positive terms of the beta' bound."""
    tau = _elapsed(T, bounds)
    return float(sum(
        coef / rate * np.exp(-rate * tau)
        for coef, rate in beta_prime_terms(bounds)
        if coef > 0.0
    ))


def check_grid(params: CertificateParams) -> np.ndarray:
    t0 = params.t0
    return np.concatenate([[t0], t0 + np.geomspace(params.grid_start, params.T_check, params.grid_points - 1)])


def resolve_target(params: CertificateParams) -> tuple[DeltaSearch, float]:
    """delta* and the B actually used, falling back below B_limit for unattainable targets."""
    if params.delta is not None:
        B = B_of_delta(params.delta, params.k, params.theta, params.lambda_base)
        search = DeltaSearch(
            B_target=B, B_limit=B_limit(params.k, params.theta, params.lambda_base),
            feasible=True, delta_star=params.delta, B_at_delta_star=B,
        )
        return search, B

    search = find_delta(params.k, params.theta, params.B_target, params.lambda_base)
    if search.feasible:
        return search, params.B_target
    fallback = search.B_limit - params.fallback_slack
    logger.warning(
        f"B target {params.B_target} infeasible (B_limit={search.B_limit:.6f}); "
        f"re-running with B_target={fallback:.6f}"
    )
    return find_delta(params.k, params.theta, fallback, params.lambda_base), fallback


def verify_certificate(params: CertificateParams) -> CertificateReport:
    """
    Verdict is true iff sup beta <= 1 - margin on the grid, the beta' bound times
    the local spacing stays below margin/2, and beta(T_check) + tail < 1.
    """
    search, B_used = resolve_target(params)
    bounds = EnvelopeBounds.from_params(params, B_used)
    failing = []

    if params.margin >= 1.0 - params.k:
        failing.append("margin_exceeds_gap")
    if B_used > bounds.b_tilde_limit:
        failing.append("beta_prime_bound_invalid")

    grid = check_grid(params)
    beta = np.array([beta_eval(t, bounds, params.quad_tol) for t in grid])
    sup_beta = float(np.max(beta))
    if sup_beta > 1.0 - params.margin:
        failing.append("sup_beta_above_threshold")

    increments = np.array([beta_prime_bound(t, bounds, positive_only=True) for t in grid[:-1]]) * np.diff(grid)
    grid_max_increment = float(np.max(increments))
    if grid_max_increment >= params.margin / 2.0:
        failing.append("grid_too_coarse")

    tail = beta_prime_tail(params.t0 + params.T_check, bounds)
    if not beta[-1] + tail < 1.0:
        failing.append("tail_not_below_one")

    verdict = not failing
    logger.info(
        f"Certificate k={params.k} theta={params.theta}: B_used={B_used:.6f}, delta*={search.delta_star:.6g}, "
        f"sup beta={sup_beta:.6f}, tail={tail:.3e}, verdict={verdict}"
    )
    return CertificateReport(
        params=params,
        delta_star=search.delta_star,
        B_at_delta_star=search.B_at_delta_star,
        B_limit=search.B_limit,
        B_limit_quadrature=B_quadrature(0.0, params.k, params.theta, params.lambda_base),
        B_target_requested=params.B_target,
        B_target_used=B_used,
        feasible=params.delta is not None or params.B_target <= search.B_limit,
        beta_limit=bounds.beta_limit,
        beta_times=grid.tolist(),
        beta_values=beta.tolist(),
        sup_beta=sup_beta,
        sup_beta_time=float(grid[int(np.argmax(beta))]),
        beta_at_T_check=float(beta[-1]),
        tail_bound=tail,
        grid_max_increment=grid_max_increment,
        quadrature_resolutions=[params.quad_tol],
        verdict=verdict,
        failing_conditions=failing,
    )


# --- Adversarial surrogate ---

def adversarial_simulation(
    params: CertificateParams,
    initial: Optional[tuple[float, float, float]] = None,
    config: Optional[IntegratorConfig] = None,
) -> AdversarialResult:
    """
    Integrate the frozen-boundary surrogate (b_{n-1}, b_n, b_{n+1}) from the worst
    case (1, k, B) and compare with the envelopes while b_n >= k.
    """
    _, B_used = resolve_target(params)
    bounds = EnvelopeBounds.from_params(params, B_used)
    start = initial if initial is not None else (1.0, params.k, B_used)
    state = ShellState.build([0.0, *start], VariableKind.B, params.t0)
    rhs = build_model(RhsSelector, kind=RhsKind.B_SURROGATE, params=params.model)
    config = config or IntegratorConfig(rel_tol=1e-10, abs_tol=1e-12, dt_init=1e-4, dt_max=0.05)

    trajectory = IntegratorEngine.integrate(rhs, state, (params.t0, params.t0 + params.T_check), config)
    if trajectory.status == "budget_exhausted":
        raise BudgetExhaustedError("adversarial surrogate ran out of steps", t=trajectory.status_t, partial=trajectory)
    b_lower, b_n, b_upper = trajectory.values[:, 1], trajectory.values[:, 2], trajectory.values[:, 3]

    below = np.flatnonzero(b_n < params.k - COMPARISON_TOL)
    stop = int(below[0]) if below.size else b_n.size
    window = slice(0, max(stop, 1))
    times = trajectory.times[window]

    beta = np.array([beta_eval(t, bounds, params.quad_tol) for t in times])
    envelopes = np.array([envelope_bounds(t, bounds) for t in times])
    excess = b_n[window] - beta

    result = AdversarialResult(
        trajectory=trajectory,
        sup_bn=float(np.max(b_n)),
        window_end=float(times[-1]),
        bn_dominated_by_beta=bool(np.all(excess <= COMPARISON_TOL)),
        upper_neighbour_above_b_tilde=bool(np.all(b_upper[window] >= envelopes[:, 1] - COMPARISON_TOL)),
        lower_neighbour_below_b_hat=bool(np.all(b_lower[window] <= envelopes[:, 0] + COMPARISON_TOL)),
        max_beta_excess=float(np.max(excess)),
    )
    logger.info(
        f"Adversarial surrogate: sup b_n={result.sup_bn:.6f}, comparison window [t0, {result.window_end:.4g}], "
        f"dominated={result.bn_dominated_by_beta}"
    )
    return result
