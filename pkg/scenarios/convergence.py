"""
Galerkin convergence ladder: for consecutive orders (n, n') the two modified
Galerkin systems are integrated from the same data and compared at probe times
in the strong and weak distances.
"""
import logging
from typing import Optional, Sequence

import numpy as np
import polars as pl

from diagnostics_engine import diagnostics_rows, distances, weak_modulus
from errors import ConfigurationError
from integrator_engine import IntegratorEngine, Trajectory
from run_config import RunConfig
from scenarios.common import ScenarioResult, galerkin_rhs, initial_state, integrate, run_parallel, trajectory_summary

logger = logging.getLogger(__name__)


def _ladder(config: RunConfig, orders: Sequence[int]) -> list[Trajectory]:
    if not orders:
        raise ConfigurationError("convergence study needs at least one order")
    if any(n < 2 for n in orders) or any(b <= a for a, b in zip(orders, orders[1:])):
        raise ConfigurationError(f"orders must be increasing and >= 2, got {list(orders)}")
    return run_parallel(lambda n: integrate(config, initial_state(config, n), rhs=galerkin_rhs(config, n)), orders)


def convergence_study(
    config: RunConfig,
    orders: Sequence[int],
    probe_times: Optional[Sequence[float]] = None,
    trajectories: Optional[list[Trajectory]] = None,
) -> pl.DataFrame:
    """Table with columns n, n_next, t, d_W, d_S (one row per pair and probe time)."""
    orders = list(orders)
    probes = list(probe_times if probe_times is not None else config.scenario.galerkin_convergence.probe_times)
    runs = trajectories if trajectories is not None else _ladder(config, orders)

    rows = []
    for (n, coarse), (n_next, fine) in zip(zip(orders, runs), zip(orders[1:], runs[1:])):
        for t in probes:
            t_abs = config.run.t_start + t
            d_strong, d_weak = distances(IntegratorEngine.dense_sample(coarse, t_abs), IntegratorEngine.dense_sample(fine, t_abs))
            rows.append({"n": n, "n_next": n_next, "t": t, "d_W": d_weak, "d_S": d_strong})
    schema = {"n": pl.Int64, "n_next": pl.Int64, "t": pl.Float64, "d_W": pl.Float64, "d_S": pl.Float64}
    return pl.DataFrame(rows, schema=schema)


def run(config: RunConfig) -> ScenarioResult:
    options = config.scenario.galerkin_convergence
    orders = list(options.orders)
    runs = _ladder(config, orders)
    table = convergence_study(config, orders, options.probe_times, trajectories=runs)

    first_probe = table.filter(pl.col("t") == options.probe_times[0])["d_W"].to_list() if table.height else []
    decreasing = bool(np.all(np.diff(first_probe) <= 0.0)) if len(first_probe) > 1 else True
    logger.info(f"Galerkin ladder {orders}: d_W at t={options.probe_times[0]} -> {first_probe}")

    finest = runs[-1]
    summary = {
        **trajectory_summary(finest),
        "orders": orders,
        "d_W": first_probe,
        "d_W_decreasing": decreasing,
        "weak_modulus": [weak_modulus(r) for r in runs],
    }
    return ScenarioResult(
        trajectory=finest,
        rows=diagnostics_rows(finest, config.model),
        summary=summary,
        tables={"convergence.csv": table},
    )
