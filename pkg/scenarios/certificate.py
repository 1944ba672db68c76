"""Certificate verdict for beta(t) < 1, plus the adversarial three-shell surrogate."""
import polars as pl

from certificate_engine import adversarial_simulation, verify_certificate
from run_config import RunConfig
from scenarios.common import ScenarioResult, trajectory_summary


def run(config: RunConfig) -> ScenarioResult:
    report = verify_certificate(config.certificate)
    summary = {
        "verdict": report.verdict,
        "failing_conditions": report.failing_conditions,
        "B_limit": report.B_limit,
        "B_limit_quadrature": report.B_limit_quadrature,
        "B_target_requested": report.B_target_requested,
        "B_target_used": report.B_target_used,
        "feasible": report.feasible,
        "delta_star": report.delta_star,
        "sup_beta": report.sup_beta,
        "sup_beta_time": report.sup_beta_time,
        "beta_at_T_check": report.beta_at_T_check,
        "tail_bound": report.tail_bound,
    }
    tables = {"beta.csv": pl.DataFrame({"t": report.beta_times, "beta": report.beta_values})}

    trajectory = None
    if config.scenario.certificate.adversarial:
        adversarial = adversarial_simulation(config.certificate)
        trajectory = adversarial.trajectory
        summary.update({
            **trajectory_summary(trajectory),
            "adversarial_sup_bn": adversarial.sup_bn,
            "adversarial_window_end": adversarial.window_end,
            "adversarial_dominated": adversarial.bn_dominated_by_beta,
            "adversarial_b_tilde_ok": adversarial.upper_neighbour_above_b_tilde,
            "adversarial_b_hat_ok": adversarial.lower_neighbour_below_b_hat,
        })
    return ScenarioResult(
        trajectory=trajectory,
        summary=summary,
        tables=tables,
        documents={"certificate.json": report},
    )
