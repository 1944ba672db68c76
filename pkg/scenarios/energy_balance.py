"""Flux telescoping residual per shell and, for Galerkin runs, the energy-drain defect."""
from diagnostics_engine import diagnostics_rows, energy_balance_residual, energy_series, galerkin_energy_defect
from run_config import RunConfig
from scenarios.common import ScenarioResult, initial_state, integrate, trajectory_summary


def run(config: RunConfig) -> ScenarioResult:
    trajectory = integrate(config, initial_state(config))
    n = trajectory.truncation
    shells = list(config.scenario.energy_balance.shells) or list(range(1, n))
    residuals = {f"J={j}": energy_balance_residual(trajectory, j) for j in shells} if len(trajectory) > 1 else {}

    energy = energy_series(trajectory)
    summary = {
        **trajectory_summary(trajectory),
        "initial_energy": float(energy[0]),
        "final_energy": float(energy[-1]),
        "residuals": residuals,
        "max_residual": max(residuals.values(), default=0.0),
    }
    if trajectory.rhs.galerkin is not None:
        summary["galerkin_energy_defect"] = galerkin_energy_defect(trajectory, trajectory.rhs.galerkin)

    flux_shells = [j for j in shells if 1 <= j < n]
    return ScenarioResult(
        trajectory=trajectory,
        rows=diagnostics_rows(trajectory, config.model, flux_shells=flux_shells),
        summary=summary,
    )
