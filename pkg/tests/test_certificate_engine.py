"""
Test suite for the closed-form Gronwall bounds, the beta envelope and the
certificate verdict
"""
import numpy as np
import pytest
from scipy.integrate import quad

from certificate_engine import (
    CertificateParams,
    EnvelopeBounds,
    B_limit,
    B_of_delta,
    B_quadrature,
    adversarial_simulation,
    beta_eval,
    beta_prime_bound,
    beta_prime_tail,
    beta_prime_terms,
    check_grid,
    envelope_bounds,
    find_delta,
    resolve_target,
    step1_lower_bound,
    verify_certificate,
)
from errors import BudgetExhaustedError, DomainError
from integrator_engine import IntegratorConfig


@pytest.fixture
def bounds():
    """Default constants with the fallback B actually used for k = 0.96."""
    _, B = resolve_target(CertificateParams())
    return EnvelopeBounds.from_params(CertificateParams(), B)


def test_B_of_delta_matches_quadrature(rng):
    for _ in range(100):
        k = rng.uniform(0.5, 0.99)
        theta = rng.uniform(0.5, 0.8)
        delta = rng.uniform(0.0, k)
        expected = B_quadrature(delta, k, theta, quad_tol=1e-11)
        assert B_of_delta(delta, k, theta) == pytest.approx(expected, abs=1e-8)


def test_B_limit_value_and_continuity():
    limit = B_limit()
    assert limit == pytest.approx(0.4058, abs=1e-3)
    assert limit < 0.447
    assert abs(B_of_delta(1e-8) - limit) < 1e-6
    assert B_of_delta(0.96 - 1e-12) == pytest.approx(0.0, abs=1e-9)


def test_B_of_delta_is_decreasing():
    values = [B_of_delta(d) for d in np.linspace(0.0, 0.95, 40)]
    assert np.all(np.diff(values) < 0.0)


def test_find_delta_feasible_target():
    search = find_delta(B_target=0.3)
    assert search.feasible
    assert 0.0 < search.delta_star < 0.96
    assert B_of_delta(search.delta_star) >= 0.3
    assert B_of_delta(search.delta_star + 3e-10) < 0.3


def test_find_delta_tiny_target_stays_inside_domain():
    search = find_delta(B_target=1e-300)
    assert search.feasible
    assert 0.0 < search.delta_star < 0.96
    assert search.B_at_delta_star >= 0.0


def test_find_delta_other_constants():
    search = find_delta(k=0.8, theta=0.7, B_target=0.1)
    assert search.feasible
    assert B_of_delta(search.delta_star, 0.8, 0.7) >= 0.1


def test_find_delta_edge_targets():
    trivial = find_delta(B_target=0.0)
    assert trivial.delta_star == pytest.approx(0.96, abs=1e-9)

    default = find_delta()
    assert not default.feasible
    assert default.delta_star == 0.0
    assert default.B_at_delta_star == default.B_limit

    assert not find_delta(B_target=B_limit() + 0.1).feasible


def test_resolve_target_fallback():
    search, B = resolve_target(CertificateParams())
    assert B == pytest.approx(B_limit() - 1e-3)
    assert search.feasible
    assert B_of_delta(search.delta_star) >= B

    search, B = resolve_target(CertificateParams(delta=0.5))
    assert search.delta_star == 0.5
    assert B == B_of_delta(0.5)


def test_step1_lower_bound():
    assert step1_lower_bound(0.0, 0.96, 0.2) == 0.96
    assert step1_lower_bound(0.0 - 0.96 + 0.2, 0.96, 0.2) == pytest.approx(0.2)
    with pytest.raises(DomainError):
        step1_lower_bound(0.1, 0.96, 0.2)
    with pytest.raises(DomainError):
        step1_lower_bound(-0.9, 0.96, 0.2)


def test_domain_errors(bounds):
    with pytest.raises(DomainError):
        B_of_delta(0.96)
    with pytest.raises(DomainError):
        B_of_delta(-0.1)
    with pytest.raises(DomainError):
        B_quadrature(1.0)
    with pytest.raises(DomainError):
        envelope_bounds(-1.0, bounds)
    with pytest.raises(DomainError):
        beta_eval(-1e-3, bounds)


def test_envelopes_start_and_limits(bounds):
    b_hat, b_tilde = envelope_bounds(0.0, bounds)
    assert b_hat == pytest.approx(1.0, abs=1e-15)
    assert b_tilde == pytest.approx(bounds.B, abs=1e-15)

    b_hat, b_tilde = envelope_bounds(100.0, bounds)
    assert b_hat == pytest.approx(0.6412, abs=1e-4)
    assert b_tilde == pytest.approx(0.5673, abs=1e-4)
    assert bounds.inv_k_gamma == pytest.approx(b_hat, abs=1e-12)


def test_beta_starts_at_k(bounds):
    assert beta_eval(0.0, bounds) == 0.96


def test_beta_resolutions_agree(bounds):
    for t in (0.5, 3.0, 12.0):
        assert beta_eval(t, bounds, quad_tol=1e-8) == pytest.approx(beta_eval(t, bounds, quad_tol=1e-11), abs=1e-7)


def test_beta_tends_to_limit(bounds):
    assert bounds.beta_limit == pytest.approx(0.6412 ** 2 / 0.96 ** 2, abs=1e-3)
    assert beta_eval(50.0, bounds, quad_tol=1e-9) == pytest.approx(bounds.beta_limit, abs=1e-6)


def test_beta_prime_bound_dominates_difference_quotient(bounds, rng):
    h = 1e-4
    for t in [0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0, *rng.uniform(0.01, 15.0, size=20)]:
        slope = (beta_eval(t + h, bounds, 1e-11) - beta_eval(t - h, bounds, 1e-11)) / (2 * h)
        assert slope <= beta_prime_bound(t, bounds) + 1e-6


def test_beta_prime_bound_at_start(bounds):
    assert beta_prime_bound(0.0, bounds) == pytest.approx(1.0, abs=1e-12)
    assert beta_prime_bound(0.0, bounds, positive_only=True) >= beta_prime_bound(0.0, bounds)


def test_tail_matches_quadrature_and_decreases(bounds):
    positive = [(c, r) for c, r in beta_prime_terms(bounds) if c > 0.0]

    def integrand(s):
        return sum(c * np.exp(-r * s) for c, r in positive)

    for T in (5.0, 20.0):
        expected, _ = quad(integrand, T, T + 200.0, epsabs=1e-14, epsrel=1e-12)
        assert beta_prime_tail(T, bounds) == pytest.approx(expected, rel=1e-6)
    tails = [beta_prime_tail(T, bounds) for T in (1.0, 5.0, 10.0, 20.0)]
    assert np.all(np.diff(tails) < 0.0)


def test_check_grid():
    grid = check_grid(CertificateParams(grid_points=16))
    assert grid.size == 16
    assert grid[0] == 0.0
    assert grid[1] == pytest.approx(1e-3)
    assert grid[-1] == pytest.approx(20.0)
    assert np.all(np.diff(grid) > 0.0)


def test_params_validation():
    with pytest.raises(ValueError):
        CertificateParams(delta=0.97)
    with pytest.raises(ValueError):
        CertificateParams(margin=1.0)
    with pytest.raises(ValueError):
        CertificateParams(grid_start=30.0)


def test_coarse_grid_fails_certificate():
    report = verify_certificate(CertificateParams(grid_points=256))
    assert not report.verdict
    assert "grid_too_coarse" in report.failing_conditions
    assert not report.feasible
    assert report.B_target_requested == 0.447
    assert report.B_target_used == pytest.approx(report.B_limit - 1e-3)
    assert report.B_limit_quadrature == pytest.approx(report.B_limit, abs=1e-8)
    assert len(report.beta_times) == len(report.beta_values) == 256
    assert report.beta_values[0] == 0.96


def test_margin_exceeding_gap_fails_certificate():
    report = verify_certificate(CertificateParams(margin=0.05, grid_points=64))
    assert not report.verdict
    assert "margin_exceeds_gap" in report.failing_conditions


def test_explicit_delta_is_feasible():
    report = verify_certificate(CertificateParams(delta=0.5, grid_points=64))
    assert report.feasible
    assert report.delta_star == 0.5
    assert report.B_target_used == pytest.approx(B_of_delta(0.5))


def test_adversarial_surrogate_respects_envelopes():
    result = adversarial_simulation(CertificateParams(T_check=5.0))
    assert result.bn_dominated_by_beta
    assert result.upper_neighbour_above_b_tilde
    assert result.lower_neighbour_below_b_hat
    assert result.window_end >= 0.0
    assert result.trajectory.status == "completed"
    assert "trajectory" not in result.model_dump()


def test_adversarial_zero_data():
    result = adversarial_simulation(CertificateParams(T_check=1.0), initial=(0.0, 0.0, 0.0))
    assert result.window_end == 0.0
    assert result.bn_dominated_by_beta


def test_default_certificate_completes_with_fallback_target():
    report = verify_certificate(CertificateParams(T_check=2.0, grid_points=64))
    assert 0.0 < report.delta_star < 0.96
    assert report.B_at_delta_star >= report.B_target_used


@pytest.mark.slow
def test_default_verdict_stable_across_quadrature_resolutions():
    """
    Full default grid. beta overshoots 1 shortly after t0 (peak ~1.0097 near
    t ~ 0.36), so the verdict is false at both resolutions.
    """
    coarse = verify_certificate(CertificateParams(quad_tol=1e-8))
    fine = verify_certificate(CertificateParams(quad_tol=1e-10))
    assert coarse.verdict == fine.verdict
    assert not fine.verdict
    assert "sup_beta_above_threshold" in fine.failing_conditions
    assert "grid_too_coarse" not in fine.failing_conditions
    assert fine.sup_beta == pytest.approx(1.0097, abs=1e-3)
    assert 0.2 < fine.sup_beta_time < 0.5
    assert fine.beta_times[int(np.argmax(fine.beta_values))] == fine.sup_beta_time
    np.testing.assert_allclose(coarse.beta_values, fine.beta_values, atol=1e-7)


def test_adversarial_budget_exhaustion_raises():
    config = IntegratorConfig(max_steps=2)
    with pytest.raises(BudgetExhaustedError) as info:
        adversarial_simulation(CertificateParams(T_check=5.0), config=config)
    assert len(info.value.partial) == 3
