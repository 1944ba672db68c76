"""Plain run of the configured system with the standard diagnostics table."""
import numpy as np

from diagnostics_engine import diagnostics_rows, energy_series
from run_config import RunConfig
from scenarios.common import ScenarioResult, initial_state, integrate, trajectory_summary


def run(config: RunConfig) -> ScenarioResult:
    options = config.scenario.simulate
    state = initial_state(config)
    trajectory = integrate(config, state, complete=False)

    flux_shells = [j for j in options.flux_shells if 1 <= j < state.truncation]
    rows = diagnostics_rows(trajectory, config.model, options.sobolev, flux_shells)
    energy = energy_series(trajectory)
    summary = {
        **trajectory_summary(trajectory),
        "initial_energy": float(energy[0]),
        "final_energy": float(energy[-1]),
        "max_sup_theta": float(max(r.sup_theta_norm for r in rows)),
        "final_sup_theta": rows[-1].sup_theta_norm,
        "min_entry": float(np.min(trajectory.values)),
    }
    return ScenarioResult(trajectory=trajectory, rows=rows, summary=summary)
