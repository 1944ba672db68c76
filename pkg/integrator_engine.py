"""
Integrator Engine
Step-by-step driver around the scipy ODE steppers with positivity control,
dense output and threshold-crossing detection.

The default stepper ("auto") is Radau for Galerkin runs at N >= 10, where the
damping rate lambda_n^{5/2-theta} makes explicit stepping impractical, and RK45
(Dormand-Prince 5(4), quartic dense output) otherwise. Radau/BDF/LSODA receive
the analytic tridiagonal Jacobian.
"""
import logging
from enum import Enum
from typing import Any, Callable, Literal, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.integrate import BDF, DOP853, LSODA, RK45, OdeSolution, Radau
from scipy.interpolate import make_interp_spline
from scipy.optimize import bisect

from dyadic_engine import ModelParams, RhsKind, RhsSelector, ShellState, VariableKind, shell_jacobian, shell_rhs
from errors import InputValidationError, RangeError, StiffnessError

logger = logging.getLogger(__name__)

EVENT_TIME_TOL = 1e-10
EXPLICIT_DT_MIN = 1e-14
IMPLICIT_DT_MIN = 1e-30
STIFF_TRUNCATION = 10


class PositivityMode(str, Enum):
    OFF = "off"
    REJECT_STEP = "reject_step"
    CLAMP = "clamp"


class SolverMethod(str, Enum):
    AUTO = "auto"
    RK45 = "RK45"
    DOP853 = "DOP853"
    RADAU = "Radau"
    BDF = "BDF"
    LSODA = "LSODA"


_SOLVERS = {
    SolverMethod.RK45: RK45,
    SolverMethod.DOP853: DOP853,
    SolverMethod.RADAU: Radau,
    SolverMethod.BDF: BDF,
    SolverMethod.LSODA: LSODA,
}
_IMPLICIT = {SolverMethod.RADAU, SolverMethod.BDF, SolverMethod.LSODA}


class IntegratorConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    rel_tol: float = Field(1e-8, gt=0)
    abs_tol: float = Field(1e-12, gt=0)
    dt_init: float = Field(1e-4, gt=0)
    dt_min: Optional[float] = Field(None, gt=0, description="Step floor; 1e-14 explicit, 1e-30 implicit when unset")
    dt_max: float = Field(0.5, gt=0)
    max_steps: int = Field(500_000, ge=1)
    positivity_mode: PositivityMode = PositivityMode.REJECT_STEP
    method: SolverMethod = SolverMethod.AUTO

    @model_validator(mode="after")
    def _ordered_steps(self) -> "IntegratorConfig":
        if not self.dt_init <= self.dt_max:
            raise ValueError("need dt_init <= dt_max")
        if self.dt_min is not None and not self.dt_min <= self.dt_init:
            raise ValueError("need dt_min <= dt_init")
        return self

    def resolve_method(self, rhs: RhsSelector, truncation: int) -> SolverMethod:
        if self.method != SolverMethod.AUTO:
            return self.method
        if rhs.kind == RhsKind.GALERKIN and truncation >= STIFF_TRUNCATION:
            return SolverMethod.RADAU
        return SolverMethod.RK45

    def step_floor(self, method: SolverMethod) -> float:
        if self.dt_min is not None:
            return self.dt_min
        return IMPLICIT_DT_MIN if method in _IMPLICIT else EXPLICIT_DT_MIN


class CrossingEvent(BaseModel):
    model_config = ConfigDict(frozen=True)

    shell: int
    threshold: float
    time: float
    direction: Literal["up", "down", "touch"]
    bracket: tuple[float, float]


class StepStats(BaseModel):
    accepted: int = 0
    rejected: int = 0           # positivity rejections (halved steps)
    clamped: int = 0            # steps whose end state was clamped to >= 0
    restarts: int = 0


class DenseSegment(BaseModel):
    """Continuous extension of the solution over one accepted step."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    t_start: float
    t_end: float
    interpolant: Callable[[Any], np.ndarray]

    def __call__(self, t) -> np.ndarray:
        return np.asarray(self.interpolant(t))


class Trajectory(BaseModel):
    """Time-ordered record of accepted steps. Immutable after integration."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    times: np.ndarray
    values: np.ndarray                     # shape (samples, N + 1)
    variable_kind: VariableKind = VariableKind.A
    rhs: RhsSelector = RhsSelector(kind=RhsKind.DYADIC)
    events: list[CrossingEvent] = []
    step_stats: StepStats = StepStats()
    status: Literal["completed", "budget_exhausted", "failed"] = "completed"
    status_t: Optional[float] = None
    dense: Optional[Any] = Field(None, exclude=True, repr=False)

    @property
    def params(self) -> ModelParams:
        return self.rhs.params

    @property
    def truncation(self) -> int:
        return self.values.shape[1] - 1

    @property
    def t_span(self) -> tuple[float, float]:
        return float(self.times[0]), float(self.times[-1])

    def __len__(self) -> int:
        return self.times.size

    @property
    def samples(self) -> list[tuple[float, ShellState]]:
        return [(float(t), self.state_at_index(i)) for i, t in enumerate(self.times)]

    def state_at_index(self, i: int) -> ShellState:
        return ShellState.build(self.values[i], self.variable_kind, float(self.times[i]))

    def evaluate(self, ts) -> np.ndarray:
        """Dense evaluation at an array of times, shape (len(ts), N + 1)."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        if self.dense is None:
            return np.repeat(self.values[:1], ts.size, axis=0)
        out = np.asarray(self.dense(ts))
        if isinstance(self.dense, OdeSolution):
            out = out.T
        return out.reshape(ts.size, -1)

    def sample(self, ts) -> np.ndarray:
        """Like evaluate, but stored states are returned verbatim at node times."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        out = self.evaluate(ts).copy()
        idx = np.searchsorted(self.times, ts).clip(max=self.times.size - 1)
        at_node = self.times[idx] == ts
        out[at_node] = self.values[idx[at_node]]
        out[:, 0] = 0.0
        return out

    @classmethod
    def from_samples(cls, times, values, variable_kind: VariableKind = VariableKind.A,
                     params: Optional[ModelParams] = None) -> "Trajectory":
        """Trajectory with piecewise-linear dense output through given samples."""
        times = np.asarray(times, dtype=float)
        values = np.atleast_2d(np.asarray(values, dtype=float))
        if times.ndim != 1 or values.shape[0] != times.size:
            raise InputValidationError("times and values disagree in length")
        if times.size > 1 and np.any(np.diff(times) <= 0):
            raise InputValidationError("sample times must be strictly increasing")
        if np.any(values[:, 0] != 0.0) or not np.all(np.isfinite(values)):
            raise InputValidationError("samples must be finite with shell 0 equal to 0")
        dense = make_interp_spline(times, values, k=1, axis=0) if times.size > 1 else None
        rhs = RhsSelector(kind=RhsKind.DYADIC, params=params or ModelParams())
        return cls(times=times, values=values, variable_kind=variable_kind, rhs=rhs, dense=dense)


class IntegratorEngine:
    @staticmethod
    def integrate(
        rhs: RhsSelector,
        initial: ShellState,
        t_span: tuple[float, float],
        config: IntegratorConfig = IntegratorConfig(),
        watch: Sequence[tuple[int, float]] = (),
    ) -> Trajectory:
        """
        Integrate the selected right-hand side from `initial` over `t_span`.

        With positivity_mode != off and nonnegative initial data every stored
        state is entrywise >= 0: reject_step halves the step when an entry would
        fall below -abs_tol and clamps smaller negatives to 0; clamp always
        clamps. Exhausting max_steps returns a partial trajectory with
        status "budget_exhausted".
        """
        if initial.variable_kind != rhs.variable_kind:
            raise InputValidationError(
                f"{rhs.kind.value} right-hand side expects {rhs.variable_kind.value}-variables"
            )
        t0, t1 = float(t_span[0]), float(t_span[1])
        if not t1 > t0:
            raise RangeError(f"empty time span [{t0}, {t1}]")
        for j, _ in watch:
            if not 0 <= j <= initial.truncation:
                raise RangeError(f"watched shell {j} outside 0..{initial.truncation}")

        table = rhs.coefficients(initial.truncation)
        if table.truncation != initial.truncation:
            raise InputValidationError(
                f"{rhs.kind.value} right-hand side needs truncation {table.truncation}"
            )

        def fun(t, y):
            return shell_rhs(y, table)

        def jac(t, y):
            return shell_jacobian(y, table)

        y_start = np.array(initial.coeffs, dtype=float)
        enforce = config.positivity_mode != PositivityMode.OFF and bool(np.all(y_start >= 0))

        method = config.resolve_method(rhs, initial.truncation)
        dt_min = config.step_floor(method)

        def start(t: float, y: np.ndarray, h: float):
            kwargs = dict(
                first_step=min(h, t1 - t),
                max_step=config.dt_max,
                rtol=config.rel_tol,
                atol=config.abs_tol,
            )
            if method in _IMPLICIT:
                kwargs["jac"] = jac
            return _SOLVERS[method](fun, t, y, t1, **kwargs)

        times = [t0]
        values = [y_start.copy()]
        segments: list[Any] = []
        events: list[CrossingEvent] = []
        stats = StepStats()
        status = "completed"
        status_t = None

        def assemble(status: str, status_t: Optional[float]) -> Trajectory:
            times_arr = np.asarray(times)
            return Trajectory(
                times=times_arr,
                values=np.vstack(values),
                variable_kind=initial.variable_kind,
                rhs=rhs,
                events=list(events),
                step_stats=stats.model_copy(),
                status=status,
                status_t=status_t,
                dense=OdeSolution(times_arr, list(segments)) if segments else None,
            )

        solver = start(t0, y_start, config.dt_init)
        while solver.status == "running":
            if stats.accepted >= config.max_steps:
                status, status_t = "budget_exhausted", float(solver.t)
                logger.warning(f"Step budget of {config.max_steps} exhausted at t={solver.t:.6g}")
                break

            t_old, y_old = float(solver.t), np.array(solver.y)
            message = solver.step()
            if solver.status == "failed":
                shell = IntegratorEngine.limiting_shell(y_old, table)
                raise StiffnessError(f"stepper failed: {message}", shell=shell, t=t_old,
                                     partial=assemble("failed", t_old))

            t_new = float(solver.t)
            h = t_new - t_old
            y_new = np.array(solver.y)
            restart_from = None

            if enforce and y_new.min() < 0.0:
                deep = y_new.min() < -config.abs_tol
                if deep and config.positivity_mode == PositivityMode.REJECT_STEP:
                    stats.rejected += 1
                    h_retry = 0.5 * h
                    if h_retry < dt_min:
                        shell = int(np.argmin(y_new))
                        raise StiffnessError("positivity rejection drove dt below dt_min", shell=shell, t=t_old,
                                             partial=assemble("failed", t_old))
                    logger.debug(f"Negative entry {y_new.min():.3e} at shell {int(np.argmin(y_new))}; retry h={h_retry:.3e}")
                    solver = start(t_old, y_old, h_retry)
                    stats.restarts += 1
                    continue
                y_new = np.maximum(y_new, 0.0)
                stats.clamped += 1
                restart_from = y_new

            if h < dt_min and t_new < t1:
                shell = IntegratorEngine.limiting_shell(y_old, table)
                raise StiffnessError(f"step size {h:.3e} below dt_min={dt_min:.3e}", shell=shell, t=t_old,
                                     partial=assemble("failed", t_old))

            dense = solver.dense_output()
            segment = DenseSegment(t_start=t_old, t_end=t_new, interpolant=dense)
            for j, threshold in watch:
                event = IntegratorEngine.detect_crossing(segment, j, threshold, endpoints=(y_old[j], y_new[j]))
                if event is not None:
                    events.append(event)

            stats.accepted += 1
            times.append(t_new)
            values.append(y_new)
            segments.append(dense)

            if restart_from is not None and t_new < t1:
                solver = start(t_new, restart_from, max(solver.step_size or h, dt_min))
                stats.restarts += 1

        logger.debug(
            f"{rhs.kind.value} N={initial.truncation} ({method.value}): {stats.accepted} steps, "
            f"{stats.rejected} positivity rejections, {len(events)} events"
        )
        return assemble(status, status_t)

    @staticmethod
    def limiting_shell(y: np.ndarray, table) -> int:
        """Shell with the largest row sum of |Jacobian| (fastest local rate)."""
        rates = np.abs(shell_jacobian(y, table)).sum(axis=1)
        return int(np.argmax(rates))

    @staticmethod
    def detect_crossing(
        segment: DenseSegment,
        j: int,
        threshold: float,
        endpoints: Optional[tuple[float, float]] = None,
    ) -> Optional[CrossingEvent]:
        """Bisection-refined time where x_j crosses `threshold` inside the segment."""
        def offset(t: float) -> float:
            return float(np.asarray(segment(t)).ravel()[j]) - threshold

        if endpoints is None:
            fa, fb = offset(segment.t_start), offset(segment.t_end)
        else:
            fa, fb = endpoints[0] - threshold, endpoints[1] - threshold

        bracket = (segment.t_start, segment.t_end)
        if fb == 0.0 and fa != 0.0:
            return CrossingEvent(shell=j, threshold=threshold, time=segment.t_end, direction="touch", bracket=bracket)
        if fa * fb >= 0.0:
            return None

        t_cross = bisect(offset, segment.t_start, segment.t_end, xtol=EVENT_TIME_TOL)
        t_cross = min(max(t_cross, segment.t_start), segment.t_end)
        return CrossingEvent(
            shell=j,
            threshold=threshold,
            time=float(t_cross),
            direction="up" if fa < 0.0 else "down",
            bracket=bracket,
        )

    @staticmethod
    def dense_sample(trajectory: Trajectory, t: float) -> ShellState:
        """State at time t: exact at stored nodes, dense interpolant in between."""
        t_start, t_end = trajectory.t_span
        if not t_start <= t <= t_end:
            raise RangeError(f"t={t} outside trajectory span [{t_start}, {t_end}]")
        coeffs = trajectory.sample([t])[0]
        return ShellState.build(coeffs, trajectory.variable_kind, float(t))
