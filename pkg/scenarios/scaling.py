"""
Scaling invariance: if a(t) solves the system, so does eta a(eta t). For each
eta the base data is integrated over [0, eta T] and the rescaled data over
[0, T]; the report is max_{j,t} |a~_j(t) - eta a_j(eta t)| on a uniform grid.
"""
import numpy as np
import polars as pl

from diagnostics_engine import diagnostics_rows
from dyadic_engine import rescale
from run_config import RunConfig
from scenarios.common import ScenarioResult, initial_state, integrate, run_parallel, trajectory_summary


def scaling_deviation(config: RunConfig, eta: float) -> float:
    state = initial_state(config)
    base = state.with_coeffs(state.coeffs, time=0.0)
    horizon = config.run.t_end - config.run.t_start
    scaled = rescale(base, eta)
    original = integrate(config, base, t_span=(0.0, eta * horizon))
    transformed = integrate(config, scaled, t_span=(0.0, horizon))

    grid = np.linspace(0.0, horizon, config.scenario.scaling.grid_points)
    lhs = transformed.sample(grid)
    rhs = eta * original.sample(eta * grid)
    return float(np.max(np.abs(lhs - rhs)))


def run(config: RunConfig) -> ScenarioResult:
    etas = list(config.scenario.scaling.etas)
    deviations = run_parallel(lambda eta: scaling_deviation(config, eta), etas)

    trajectory = integrate(config, initial_state(config))
    table = pl.DataFrame({"eta": etas, "max_deviation": deviations})
    summary = {
        **trajectory_summary(trajectory),
        "etas": etas,
        "max_deviation": deviations,
        "worst_deviation": float(max(deviations)),
    }
    return ScenarioResult(
        trajectory=trajectory,
        rows=diagnostics_rows(trajectory, config.model),
        summary=summary,
        tables={"scaling.csv": table},
    )
