"""Power-law decay of the sup-norm, fitted on a log-log grid."""
from diagnostics_engine import decay_fit, diagnostics_rows
from run_config import RunConfig
from scenarios.common import ScenarioResult, initial_state, integrate, trajectory_summary


def run(config: RunConfig) -> ScenarioResult:
    options = config.scenario.decay
    trajectory = integrate(config, initial_state(config))
    window = (options.fit_window[0], options.fit_window[-1])
    fit = decay_fit(trajectory, config.model.theta, window, options.n_points)
    summary = {
        **trajectory_summary(trajectory),
        "slope": fit.slope,
        "intercept": fit.intercept,
        "r_squared": fit.r_squared,
        "fit_window": [fit.t_a, fit.t_b],
    }
    return ScenarioResult(
        trajectory=trajectory,
        rows=diagnostics_rows(trajectory, config.model),
        summary=summary,
        documents={"fit.json": fit},
    )
