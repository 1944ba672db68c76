import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Iterable, Optional, Sequence, TypeVar

import polars as pl
from pydantic import BaseModel, ConfigDict, Field

from diagnostics_engine import DiagnosticsRecord
from dyadic_engine import GalerkinSpec, RhsKind, RhsSelector, ShellState, build_model
from errors import BudgetExhaustedError
from initial_conditions import generate
from integrator_engine import IntegratorEngine, Trajectory
from run_config import RunConfig, thread_count

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


class ScenarioResult(BaseModel):
    """
    What a scenario hands back to run_scenario for persistence. Auxiliary runs
    must complete (see integrate), so only the main trajectory can be partial.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True)

    trajectory: Optional[Trajectory] = None
    rows: list[DiagnosticsRecord] = []
    summary: dict[str, Any] = Field(default_factory=dict)
    tables: dict[str, pl.DataFrame] = Field(default_factory=dict)
    documents: dict[str, BaseModel] = Field(default_factory=dict)

    @property
    def status(self) -> str:
        if self.trajectory is not None and self.trajectory.status == "budget_exhausted":
            return "budget_exhausted"
        return "completed"


def model_rhs(config: RunConfig, truncation: Optional[int] = None) -> RhsSelector:
    n = truncation or config.run.truncation
    if config.run.rhs == "galerkin":
        spec = build_model(GalerkinSpec, order=n, damping_theta=config.galerkin.damping_theta)
        return build_model(RhsSelector, kind=RhsKind.GALERKIN, params=config.model, galerkin=spec)
    return build_model(RhsSelector, kind=RhsKind.DYADIC, params=config.model)


def galerkin_rhs(config: RunConfig, order: int) -> RhsSelector:
    spec = build_model(GalerkinSpec, order=order, damping_theta=config.galerkin.damping_theta)
    return build_model(RhsSelector, kind=RhsKind.GALERKIN, params=config.model, galerkin=spec)


def initial_state(config: RunConfig, truncation: Optional[int] = None) -> ShellState:
    n = truncation or config.run.truncation
    return generate(config.ic, config.model, n, config.run.seed, config.run.t_start)


def integrate(
    config: RunConfig,
    state: ShellState,
    rhs: Optional[RhsSelector] = None,
    t_span: Optional[tuple[float, float]] = None,
    watch: Sequence[tuple[int, float]] = (),
    complete: bool = True,
) -> Trajectory:
    """
    Integrate under the configured stepper. With complete=True an exhausted
    step budget raises BudgetExhaustedError carrying the partial trajectory;
    otherwise the partial run is returned with status "budget_exhausted".
    """
    rhs = rhs or model_rhs(config, state.truncation)
    span = t_span or (state.time, state.time + config.run.t_end - config.run.t_start)
    trajectory = IntegratorEngine.integrate(rhs, state, span, config.integrator, watch)
    if trajectory.status == "budget_exhausted":
        message = f"{rhs.kind.value} N={state.truncation} ran out of steps before t={span[1]:.6g}"
        if complete:
            raise BudgetExhaustedError(message, t=trajectory.status_t, partial=trajectory)
        logger.warning(f"{message}; keeping the partial run")
    return trajectory


def run_parallel(func: Callable[[T], R], items: Iterable[T]) -> list[R]:
    """Map over independent runs, at most DYADIC_THREADS at a time; results keep input order."""
    items = list(items)
    workers = min(thread_count(), max(len(items), 1))
    if workers == 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(func, items))


def trajectory_summary(trajectory: Trajectory) -> dict[str, Any]:
    return {
        "t_final": float(trajectory.times[-1]),
        "samples": len(trajectory),
        "accepted_steps": trajectory.step_stats.accepted,
        "positivity_rejections": trajectory.step_stats.rejected,
        "events": len(trajectory.events),
        "integration_status": trajectory.status,
        "status_t": trajectory.status_t,
    }
