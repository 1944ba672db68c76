"""
Dyadic Shell Model Engine
Inviscid dyadic model of the Euler equations in a-, c- and b-variables, its
modified Galerkin truncation with flux, variable transforms and the scaling map.

    da_j/dt = lambda_{j-1}^{5/2} a_{j-1}^2 - lambda_j^{5/2} a_j a_{j+1},   a_0 = 0

Every right-hand side in this module has the same nearest-neighbour shape

    dx_j/dt = source_j + inflow_j x_{j-1}^2 - drain_j x_j x_{j+1} - damping_j x_j

so a single vectorized evaluator (and Jacobian) serves all forms; the forms only
differ in their `ShellCoefficients` table.
"""
import logging
from enum import Enum
from functools import lru_cache
from typing import Literal, Optional, Type, TypeVar, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, computed_field, field_validator, model_validator
from pydantic import ValidationError as PydanticValidationError

from errors import ConfigurationError, InputValidationError

__version__ = "1.0.0"

logger = logging.getLogger(__name__)

CASCADE_EXPONENT = 2.5
ONSAGER_EXPONENT = 5.0 / 6.0

M = TypeVar("M", bound=BaseModel)


def build_model(model_cls: Type[M], **values) -> M:
    """Instantiate a parameter model, reporting constraint violations as ConfigurationError."""
    try:
        return model_cls(**values)
    except PydanticValidationError as e:
        err = e.errors()[0]
        field = ".".join(str(p) for p in err["loc"]) or model_cls.__name__
        raise ConfigurationError(f"{model_cls.__name__}.{field}: {err['msg']}") from e


class VariableKind(str, Enum):
    A = "a"
    C = "c"
    B = "b"


class RhsKind(str, Enum):
    DYADIC = "dyadic"              # plain truncation, a_{N+1} = 0
    GALERKIN = "galerkin"          # modified Galerkin approximation with flux
    C_FORM = "c"                   # change of variables c_j
    B_FORM = "b"                   # time-rescaled c_j around a pivot shell
    B_SURROGATE = "b-surrogate"    # 3-shell b-system with frozen b_{n-2} = b_{n+2}


# --- Domain types ---

class ModelParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    lambda_base: float = Field(2.0, gt=1.0, description="Wavenumber ratio lambda (lambda_j = lambda^j)")
    cascade_exponent: float = Field(CASCADE_EXPONENT, description="Fixed at 5/2")
    theta: float = Field(0.6, gt=0.0, le=5.0 / 6.0, description="Regularity exponent")

    @field_validator("cascade_exponent")
    @classmethod
    def _fixed_exponent(cls, v: float) -> float:
        if v != CASCADE_EXPONENT:
            raise ValueError("cascade_exponent is fixed at 5/2")
        return v

    @computed_field
    @property
    def gamma(self) -> float:
        return self.lambda_base ** (CASCADE_EXPONENT - 3.0 * self.theta)

    def lam(self, power: float) -> float:
        """lambda^power (unsubscripted lambda = lambda_1)."""
        return self.lambda_base ** power


class GalerkinSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    order: int = Field(..., ge=1, description="Last active shell n")
    damping_theta: float = Field(0.6, gt=0.0)

    def damping(self, lambda_base: float) -> float:
        """lambda^{5/2 - 2 theta} lambda_n^{5/2 - theta}"""
        th = self.damping_theta
        return lambda_base ** (CASCADE_EXPONENT - 2.0 * th) * lambda_base ** (self.order * (CASCADE_EXPONENT - th))


class ScalingMap(BaseModel):
    model_config = ConfigDict(frozen=True)

    eta: float = Field(..., gt=0.0)


class ShellState(BaseModel):
    """Finite coefficient sequence x_0..x_N at time t. Immutable."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    time: float = 0.0
    coeffs: np.ndarray
    variable_kind: VariableKind = VariableKind.A

    @field_validator("coeffs", mode="before")
    @classmethod
    def _as_array(cls, v):
        arr = np.array(v, dtype=float)
        if arr.ndim != 1 or arr.size < 2:
            raise ValueError("coeffs must be a 1-D sequence with at least shells 0 and 1")
        if not np.all(np.isfinite(arr)):
            bad = int(np.flatnonzero(~np.isfinite(arr))[0])
            raise ValueError(f"non-finite coefficient at shell {bad}")
        if arr[0] != 0.0:
            raise ValueError("coeffs[0] must be 0")
        arr.setflags(write=False)
        return arr

    @field_validator("time")
    @classmethod
    def _finite_time(cls, v: float) -> float:
        if not np.isfinite(v):
            raise ValueError("time must be finite")
        return v

    @property
    def truncation(self) -> int:
        return self.coeffs.size - 1

    @classmethod
    def build(cls, coeffs, variable_kind: VariableKind = VariableKind.A, time: float = 0.0) -> "ShellState":
        """Construct, converting validation failures into InputValidationError."""
        try:
            return cls(time=time, coeffs=coeffs, variable_kind=variable_kind)
        except PydanticValidationError as e:
            raise InputValidationError(e.errors()[0]["msg"]) from e

    @classmethod
    def zeros(cls, truncation: int, variable_kind: VariableKind = VariableKind.A, time: float = 0.0) -> "ShellState":
        return cls.build(np.zeros(truncation + 1), variable_kind, time)

    def with_coeffs(self, coeffs, variable_kind: Optional[VariableKind] = None, time: Optional[float] = None) -> "ShellState":
        return ShellState.build(
            coeffs,
            variable_kind if variable_kind is not None else self.variable_kind,
            self.time if time is None else time,
        )


class ShellCoefficients(BaseModel):
    """Coefficient table of one right-hand side at a fixed truncation N."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    inflow: np.ndarray      # multiplies x_{j-1}^2
    drain: np.ndarray       # multiplies x_j x_{j+1}
    damping: np.ndarray     # multiplies x_j (linear)
    source: np.ndarray      # constant forcing
    right_boundary: float = 0.0   # value of x_{N+1}

    @property
    def truncation(self) -> int:
        return self.inflow.size - 1


class RhsSelector(BaseModel):
    """Which right-hand side to integrate and with which parameters."""
    model_config = ConfigDict(frozen=True)

    kind: RhsKind = RhsKind.GALERKIN
    params: ModelParams = ModelParams()
    galerkin: Optional[GalerkinSpec] = None
    pivot: Optional[int] = Field(None, ge=1)
    b_rate_convention: Literal["proof", "printed"] = "proof"

    @model_validator(mode="after")
    def _check(self) -> "RhsSelector":
        if self.kind == RhsKind.GALERKIN and self.galerkin is None:
            raise ValueError("galerkin right-hand side needs a GalerkinSpec")
        if self.kind == RhsKind.B_FORM and self.pivot is None:
            raise ValueError("b-form right-hand side needs a pivot shell")
        return self

    @property
    def variable_kind(self) -> VariableKind:
        if self.kind in (RhsKind.DYADIC, RhsKind.GALERKIN):
            return VariableKind.A
        if self.kind == RhsKind.C_FORM:
            return VariableKind.C
        return VariableKind.B

    def coefficients(self, truncation: int) -> ShellCoefficients:
        p = self.params
        if self.kind == RhsKind.DYADIC:
            return dyadic_coefficients(p.lambda_base, truncation)
        if self.kind == RhsKind.GALERKIN:
            if truncation != self.galerkin.order:
                raise ConfigurationError(
                    f"state truncation {truncation} does not match Galerkin order {self.galerkin.order}"
                )
            return galerkin_coefficients(p.lambda_base, self.galerkin.order, self.galerkin.damping_theta)
        if self.kind == RhsKind.C_FORM:
            return c_coefficients(p.lambda_base, p.theta, truncation)
        if self.kind == RhsKind.B_FORM:
            if not 1 <= self.pivot <= truncation:
                raise ConfigurationError(f"pivot {self.pivot} outside 1..{truncation}")
            return b_coefficients(p.lambda_base, p.theta, truncation, self.pivot, self.b_rate_convention)
        return b_surrogate_coefficients(p.lambda_base, p.theta)


# --- Coefficient tables (cached per (lambda, N, ...)) ---

def _frozen(*arrays: np.ndarray) -> None:
    for a in arrays:
        a.setflags(write=False)


def shell_powers(lambda_base: float, truncation: int, power: float) -> np.ndarray:
    """lambda_j^power for j = 0..N."""
    return lambda_base ** (power * np.arange(truncation + 1, dtype=float))


@lru_cache(maxsize=256)
def dyadic_coefficients(lambda_base: float, truncation: int) -> ShellCoefficients:
    k = shell_powers(lambda_base, truncation, CASCADE_EXPONENT)
    inflow = np.zeros(truncation + 1)
    inflow[1:] = k[:-1]
    drain = k.copy()
    drain[0] = 0.0
    damping = np.zeros(truncation + 1)
    source = np.zeros(truncation + 1)
    _frozen(inflow, drain, damping, source)
    return ShellCoefficients(inflow=inflow, drain=drain, damping=damping, source=source)


@lru_cache(maxsize=256)
def galerkin_coefficients(lambda_base: float, order: int, damping_theta: float) -> ShellCoefficients:
    base = dyadic_coefficients(lambda_base, order)
    drain = base.drain.copy()
    drain[order] = 0.0
    damping = np.zeros(order + 1)
    damping[order] = GalerkinSpec(order=order, damping_theta=damping_theta).damping(lambda_base)
    _frozen(drain, damping)
    return ShellCoefficients(inflow=base.inflow, drain=drain, damping=damping, source=base.source)


def _rate_form(rates: np.ndarray, gamma: float, source: Optional[np.ndarray] = None,
               right_boundary: float = 0.0) -> ShellCoefficients:
    inflow = rates.copy()
    inflow[0] = 0.0
    drain = gamma * inflow
    damping = np.zeros_like(inflow)
    source = np.zeros_like(inflow) if source is None else source
    _frozen(inflow, drain, damping, source)
    return ShellCoefficients(inflow=inflow, drain=drain, damping=damping, source=source,
                             right_boundary=right_boundary)


@lru_cache(maxsize=256)
def c_coefficients(lambda_base: float, theta: float, truncation: int) -> ShellCoefficients:
    gamma = lambda_base ** (CASCADE_EXPONENT - 3.0 * theta)
    return _rate_form(shell_powers(lambda_base, truncation, CASCADE_EXPONENT - theta), gamma)


def b_rates(lambda_base: float, theta: float, truncation: int, pivot: int,
            convention: Literal["proof", "printed"] = "proof") -> np.ndarray:
    """
    Rate factor of shell j in the b-system around pivot n.

    "proof":   lambda_{j-n}^{5/2 - theta}   (shell n has unit rate)
    "printed": lambda_{n-j}^{theta - 5/2}   (the index order of the displayed equation)

    On a geometric ladder both evaluate to lambda^{(j-n)(5/2-theta)}.
    """
    j = np.arange(truncation + 1, dtype=float)
    if convention == "proof":
        return lambda_base ** ((j - pivot) * (CASCADE_EXPONENT - theta))
    return lambda_base ** ((pivot - j) * (theta - CASCADE_EXPONENT))


@lru_cache(maxsize=256)
def b_coefficients(lambda_base: float, theta: float, truncation: int, pivot: int,
                   convention: str = "proof") -> ShellCoefficients:
    gamma = lambda_base ** (CASCADE_EXPONENT - 3.0 * theta)
    return _rate_form(b_rates(lambda_base, theta, truncation, pivot, convention), gamma)


@lru_cache(maxsize=32)
def b_surrogate_coefficients(lambda_base: float, theta: float) -> ShellCoefficients:
    """
    Shells (b_{n-1}, b_n, b_{n+1}) stored at indices 1..3 with b_{n-2} = b_{n+2} = 1
    frozen: the left boundary enters as a constant source, the right one as x_{N+1}.
    """
    gamma = lambda_base ** (CASCADE_EXPONENT - 3.0 * theta)
    rates = np.array([0.0, *b_rates(lambda_base, theta, 2, 1)[0:3]])
    source = np.zeros(4)
    source[1] = rates[1] * 1.0 ** 2
    return _rate_form(rates, gamma, source=source, right_boundary=1.0)


# --- Vectorized evaluators ---

def shell_rhs(x: np.ndarray, table: ShellCoefficients) -> np.ndarray:
    nxt = np.empty_like(x)
    nxt[:-1] = x[1:]
    nxt[-1] = table.right_boundary
    d = table.source.copy()
    d[1:] += table.inflow[1:] * x[:-1] ** 2
    d -= table.drain * x * nxt
    d -= table.damping * x
    d[0] = 0.0
    return d


def shell_jacobian(x: np.ndarray, table: ShellCoefficients) -> np.ndarray:
    n = x.size
    nxt = np.empty_like(x)
    nxt[:-1] = x[1:]
    nxt[-1] = table.right_boundary
    jac = np.zeros((n, n))
    idx = np.arange(1, n)
    jac[idx, idx - 1] = 2.0 * table.inflow[1:] * x[:-1]
    jac[idx, idx] = -table.drain[1:] * nxt[1:] - table.damping[1:]
    jac[idx[:-1], idx[:-1] + 1] = -table.drain[1:-1] * x[1:-1]
    return jac


def jacobian(state: ShellState, rhs: RhsSelector) -> np.ndarray:
    """Analytic (tridiagonal) Jacobian of the selected right-hand side at `state`."""
    _require_kind(state, rhs.variable_kind)
    return shell_jacobian(state.coeffs, rhs.coefficients(state.truncation))


def _require_kind(state: ShellState, kind: VariableKind) -> None:
    if state.variable_kind != kind:
        raise InputValidationError(f"expected {kind.value}-variables, got {state.variable_kind.value}")


# --- Operations ---

def rhs_dyadic(state: ShellState, params: ModelParams) -> np.ndarray:
    _require_kind(state, VariableKind.A)
    return shell_rhs(state.coeffs, dyadic_coefficients(params.lambda_base, state.truncation))


def rhs_galerkin_flux(state: ShellState, params: ModelParams, spec: GalerkinSpec) -> np.ndarray:
    _require_kind(state, VariableKind.A)
    if spec.order < 1:
        raise ConfigurationError("Galerkin order must be >= 1")
    if state.truncation != spec.order:
        raise ConfigurationError(f"state truncation {state.truncation} != Galerkin order {spec.order}")
    table = galerkin_coefficients(params.lambda_base, spec.order, spec.damping_theta)
    return shell_rhs(state.coeffs, table)


def rhs_c(state: ShellState, params: ModelParams) -> np.ndarray:
    _require_kind(state, VariableKind.C)
    return shell_rhs(state.coeffs, c_coefficients(params.lambda_base, params.theta, state.truncation))


def rhs_b(state: ShellState, params: ModelParams, pivot: int,
          convention: Literal["proof", "printed"] = "proof") -> np.ndarray:
    _require_kind(state, VariableKind.B)
    if not 1 <= pivot <= state.truncation:
        raise ConfigurationError(f"pivot {pivot} outside 1..{state.truncation}")
    table = b_coefficients(params.lambda_base, params.theta, state.truncation, pivot, convention)
    return shell_rhs(state.coeffs, table)


def c_prefactors(params: ModelParams, truncation: int) -> np.ndarray:
    """lambda^{2 theta - 5/2} lambda_j^theta"""
    return params.lam(2.0 * params.theta - CASCADE_EXPONENT) * shell_powers(params.lambda_base, truncation, params.theta)


def a_to_c(state: ShellState, params: ModelParams) -> ShellState:
    _require_kind(state, VariableKind.A)
    return state.with_coeffs(state.coeffs * c_prefactors(params, state.truncation), VariableKind.C)


def c_to_a(state: ShellState, params: ModelParams) -> ShellState:
    _require_kind(state, VariableKind.C)
    return state.with_coeffs(state.coeffs / c_prefactors(params, state.truncation), VariableKind.A)


def a_to_b(state: ShellState, params: ModelParams, eta: float = 1.0) -> ShellState:
    """Regularity variables b_j = lambda_j^theta * eta * a_j."""
    _require_kind(state, VariableKind.A)
    weights = shell_powers(params.lambda_base, state.truncation, params.theta)
    return state.with_coeffs(eta * weights * state.coeffs, VariableKind.B)


def rescale(state: ShellState, scaling: Union[ScalingMap, float]) -> ShellState:
    """a~(t) = eta a(eta t): amplitudes times eta, time coordinate t / eta."""
    if not isinstance(scaling, ScalingMap):
        scaling = build_model(ScalingMap, eta=scaling)
    return state.with_coeffs(scaling.eta * state.coeffs, time=state.time / scaling.eta)


def energy(state: ShellState) -> float:
    return float(np.dot(state.coeffs, state.coeffs))


def drain_identity(state: ShellState, params: ModelParams, spec: GalerkinSpec) -> float:
    """sum_j a_j d_j for the Galerkin-with-flux system: -damping * a_n^2."""
    return -spec.damping(params.lambda_base) * float(state.coeffs[spec.order]) ** 2
