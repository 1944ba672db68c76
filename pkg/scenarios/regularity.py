"""
Uniform sup-norm bound: positive data with sup_j lambda_j^theta a_j(0) = M keeps
sup_j lambda_j^theta a_j(t) below M / delta*, delta* taken from the certificate.
Optionally also runs delta-ball(delta*) data through the Galerkin-with-flux
system and maps the samples to c-variables, where every c_j must stay below 1.
"""
import logging

import numpy as np

from certificate_engine import resolve_target
from diagnostics_engine import diagnostics_rows, sup_theta_norm
from dyadic_engine import c_prefactors
from initial_conditions import ICFamily, generate
from run_config import RunConfig
from scenarios.common import ScenarioResult, galerkin_rhs, initial_state, integrate, trajectory_summary

logger = logging.getLogger(__name__)


def delta_ball_run(config: RunConfig, delta_star: float) -> dict:
    """sup_{t,j} c_j(t) and upward crossings of c_j = 1 for delta-ball(delta*) data."""
    n = config.run.truncation
    ball = config.ic.model_copy(update={"family": ICFamily.DELTA_BALL, "delta": delta_star})
    a0 = generate(ball, config.model, n, config.run.seed, config.run.t_start)
    prefactors = c_prefactors(config.model, n)
    # c_j = 1 <=> a_j = 1 / prefactor_j
    watch = [(j, float(1.0 / prefactors[j])) for j in range(1, n + 1)]
    run = integrate(config, a0, rhs=galerkin_rhs(config, n), watch=watch)
    sup_c = float(np.max(run.values[:, 1:] * prefactors[1:]))
    logger.info(f"delta-ball({delta_star:.6g}) run: sup c_j = {sup_c:.6f}")
    return {
        "delta_ball_sup_c": sup_c,
        "delta_ball_below_one": bool(sup_c < 1.0),
        "delta_ball_upward_crossings": sum(e.direction == "up" for e in run.events),
    }


def run(config: RunConfig) -> ScenarioResult:
    search, B_used = resolve_target(config.certificate)
    delta_star = search.delta_star
    theta, lam = config.model.theta, config.model.lambda_base

    state = initial_state(config)
    M = sup_theta_norm(state, theta, lam)
    trajectory = integrate(config, state)
    rows = diagnostics_rows(trajectory, config.model)
    sup_norm = max(r.sup_theta_norm for r in rows)

    summary = {
        **trajectory_summary(trajectory),
        "delta_star": delta_star,
        "B_target_used": B_used,
        "M": M,
        "sup_theta_norm": sup_norm,
    }
    if M > 0.0 and delta_star > 0.0:
        bound = M / delta_star
        eta = delta_star / M
        summary.update({
            "bound": bound,
            "ratio": sup_norm / bound,
            "eta": eta,
            "sup_b": eta * sup_norm,
            "bound_holds": bool(sup_norm < bound),
        })

    if config.scenario.regularity.delta_ball and delta_star > 0.0:
        summary.update(delta_ball_run(config, delta_star))

    return ScenarioResult(trajectory=trajectory, rows=rows, summary=summary)
