"""
Test suite for the step-by-step integrator, dense output and crossing detection
"""
import unittest

import numpy as np
import pytest

from dyadic_engine import (
    GalerkinSpec,
    ModelParams,
    RhsKind,
    RhsSelector,
    ShellState,
    VariableKind,
    a_to_c,
    c_to_a,
    energy,
)
from errors import InputValidationError, RangeError, StiffnessError
from integrator_engine import (
    DenseSegment,
    IntegratorConfig,
    IntegratorEngine,
    PositivityMode,
    SolverMethod,
    Trajectory,
)


def dyadic(params):
    return RhsSelector(kind=RhsKind.DYADIC, params=params)


def energies(traj: Trajectory) -> np.ndarray:
    return np.sum(traj.values ** 2, axis=1)


def test_zero_data_stays_zero(params):
    traj = IntegratorEngine.integrate(dyadic(params), ShellState.zeros(4), (0.0, 1.0), watch=[(1, 0.5)])
    assert traj.status == "completed"
    assert traj.t_span == (0.0, 1.0)
    assert np.all(traj.values == 0.0)
    assert traj.events == []


def test_plain_truncation_conserves_energy(params, tight_config):
    traj = IntegratorEngine.integrate(dyadic(params), ShellState.build([0, 1, 0, 0]), (0.0, 1.0), tight_config)
    e = energies(traj)
    assert np.max(np.abs(e - 1.0)) < 1e-9
    assert traj.values[-1, 1] < 1.0


def test_c_first_shell_is_nonincreasing(params, geometric_state, tight_config):
    rhs = RhsSelector(kind=RhsKind.C_FORM, params=params)
    traj = IntegratorEngine.integrate(rhs, a_to_c(geometric_state, params), (0.0, 0.5), tight_config)
    assert traj.variable_kind == VariableKind.C
    assert np.all(np.diff(traj.values[:, 1]) <= 1e-12)


def test_c_form_integration_maps_onto_a_form(params, geometric_state, tight_config):
    """Integrating in c-variables and mapping back agrees with the a-form run."""
    a_run = IntegratorEngine.integrate(dyadic(params), geometric_state, (0.0, 0.2), tight_config)
    c_rhs = RhsSelector(kind=RhsKind.C_FORM, params=params)
    c_run = IntegratorEngine.integrate(c_rhs, a_to_c(geometric_state, params), (0.0, 0.2), tight_config)
    back = c_to_a(c_run.state_at_index(len(c_run) - 1), params)
    np.testing.assert_allclose(back.coeffs, a_run.values[-1], rtol=1e-8, atol=1e-10)


@pytest.mark.parametrize("mode", [PositivityMode.REJECT_STEP, PositivityMode.CLAMP])
def test_positivity_is_preserved(params, geometric_state, mode):
    config = IntegratorConfig(positivity_mode=mode)
    traj = IntegratorEngine.integrate(dyadic(params), geometric_state, (0.0, 1.0), config)
    assert traj.values.min() >= 0.0
    assert np.all(traj.values[:, 0] == 0.0)


def test_budget_exhaustion_returns_partial_trajectory(params, geometric_state):
    config = IntegratorConfig(max_steps=3)
    traj = IntegratorEngine.integrate(dyadic(params), geometric_state, (0.0, 10.0), config)
    assert traj.status == "budget_exhausted"
    assert len(traj) == 4
    assert traj.status_t == pytest.approx(traj.times[-1])
    assert traj.step_stats.accepted == 3


def test_galerkin_energy_is_nonincreasing(galerkin_rhs, geometric_state, tight_config):
    traj = IntegratorEngine.integrate(galerkin_rhs(5), geometric_state, (0.0, 0.5), tight_config)
    assert traj.status == "completed"
    assert np.all(np.diff(energies(traj)) <= 1e-12)


def test_implicit_method_runs(galerkin_rhs, geometric_state):
    config = IntegratorConfig(method=SolverMethod.RADAU, rel_tol=1e-9, abs_tol=1e-12)
    traj = IntegratorEngine.integrate(galerkin_rhs(5), geometric_state, (0.0, 0.5), config)
    assert traj.status == "completed"
    assert traj.t_span[1] == pytest.approx(0.5)
    assert energies(traj)[-1] < energy(geometric_state)


def test_stiffness_error_names_shell(params):
    """Steps far below dt_min are needed at this amplitude."""
    config = IntegratorConfig(dt_min=1e-3, dt_init=1e-3)
    state = ShellState.build([0.0] + [10.0] * 5)
    with pytest.raises(StiffnessError) as info:
        IntegratorEngine.integrate(dyadic(params), state, (0.0, 1.0), config)
    assert 0 <= info.value.shell <= 5
    assert info.value.partial is not None
    assert info.value.partial.status == "failed"


def test_integrate_rejects_bad_input(params, geometric_state):
    with pytest.raises(InputValidationError):
        IntegratorEngine.integrate(dyadic(params), ShellState.zeros(3, VariableKind.C), (0.0, 1.0))
    with pytest.raises(RangeError):
        IntegratorEngine.integrate(dyadic(params), geometric_state, (1.0, 1.0))
    with pytest.raises(RangeError):
        IntegratorEngine.integrate(dyadic(params), geometric_state, (0.0, 1.0), watch=[(9, 0.1)])


def test_crossing_detection_linear_segment():
    traj = Trajectory.from_samples([0.0, 1.0], [[0.0, 0.9], [0.0, 1.1]])
    segment = DenseSegment(t_start=0.0, t_end=1.0, interpolant=traj.dense)
    event = IntegratorEngine.detect_crossing(segment, 1, 1.0)
    assert event is not None
    assert event.direction == "up"
    assert event.time == pytest.approx(0.5, abs=1e-9)

    flat = Trajectory.from_samples([0.0, 1.0], [[0.0, 0.9], [0.0, 0.9]])
    segment = DenseSegment(t_start=0.0, t_end=1.0, interpolant=flat.dense)
    assert IntegratorEngine.detect_crossing(segment, 1, 1.0) is None


def test_crossing_touch_at_segment_end():
    traj = Trajectory.from_samples([0.0, 1.0], [[0.0, 0.9], [0.0, 1.0]])
    segment = DenseSegment(t_start=0.0, t_end=1.0, interpolant=traj.dense)
    event = IntegratorEngine.detect_crossing(segment, 1, 1.0, endpoints=(0.9, 1.0))
    assert event.direction == "touch"
    assert event.time == 1.0


def test_dense_sample_exact_at_nodes(params, geometric_state):
    traj = IntegratorEngine.integrate(dyadic(params), geometric_state, (0.0, 0.5))
    for i in (0, len(traj) // 2, len(traj) - 1):
        state = IntegratorEngine.dense_sample(traj, float(traj.times[i]))
        np.testing.assert_array_equal(state.coeffs, traj.values[i])
    mid = 0.5 * (traj.times[0] + traj.times[1])
    between = IntegratorEngine.dense_sample(traj, mid)
    assert between.time == mid
    with pytest.raises(RangeError):
        IntegratorEngine.dense_sample(traj, 0.6)


def test_reruns_are_bit_identical(params, geometric_state):
    first = IntegratorEngine.integrate(dyadic(params), geometric_state, (0.0, 0.5))
    second = IntegratorEngine.integrate(dyadic(params), geometric_state, (0.0, 0.5))
    np.testing.assert_array_equal(first.times, second.times)
    np.testing.assert_array_equal(first.values, second.values)


def test_end_state_converges_with_tolerance(params, geometric_state):
    def end_state(rel_tol, abs_tol=1e-14):
        config = IntegratorConfig(rel_tol=rel_tol, abs_tol=abs_tol, dt_max=0.05)
        return IntegratorEngine.integrate(dyadic(params), geometric_state, (0.0, 0.5), config).values[-1]

    reference = end_state(1e-12)
    scale = np.max(np.abs(reference))
    for rel_tol in (1e-6, 1e-8):
        assert np.max(np.abs(end_state(rel_tol) - reference)) <= 1e3 * rel_tol * scale


def test_dense_output_between_nodes_matches_tighter_run(params, geometric_state):
    loose = IntegratorEngine.integrate(dyadic(params), geometric_state, (0.0, 0.5), IntegratorConfig(rel_tol=1e-8))
    tight = IntegratorEngine.integrate(
        dyadic(params), geometric_state, (0.0, 0.5), IntegratorConfig(rel_tol=1e-9, abs_tol=1e-13)
    )
    midpoints = 0.5 * (loose.times[:-1] + loose.times[1:])
    for t in midpoints[:: max(1, midpoints.size // 25)]:
        error = IntegratorEngine.dense_sample(loose, t).coeffs - IntegratorEngine.dense_sample(tight, t).coeffs
        assert np.max(np.abs(error)) <= 1e-6


def test_from_samples_validation():
    with pytest.raises(InputValidationError):
        Trajectory.from_samples([0.0, 0.0], [[0.0, 1.0], [0.0, 1.0]])
    with pytest.raises(InputValidationError):
        Trajectory.from_samples([0.0, 1.0], [[1.0, 1.0], [0.0, 1.0]])


class TestIntegratorConfig(unittest.TestCase):
    def test_defaults(self):
        config = IntegratorConfig()
        self.assertEqual(config.rel_tol, 1e-8)
        self.assertEqual(config.abs_tol, 1e-12)
        self.assertEqual(config.positivity_mode, PositivityMode.REJECT_STEP)

    def test_step_ordering(self):
        with self.assertRaises(ValueError):
            IntegratorConfig(dt_min=1e-2, dt_init=1e-4)
        with self.assertRaises(ValueError):
            IntegratorConfig(dt_init=1.0, dt_max=0.5)

    def test_auto_method_selection(self):
        config = IntegratorConfig()
        params = ModelParams()

        def galerkin(n):
            return RhsSelector(kind=RhsKind.GALERKIN, params=params, galerkin=GalerkinSpec(order=n))

        self.assertEqual(config.method, SolverMethod.AUTO)
        self.assertEqual(config.resolve_method(galerkin(12), 12), SolverMethod.RADAU)
        self.assertEqual(config.resolve_method(galerkin(5), 5), SolverMethod.RK45)
        self.assertEqual(config.resolve_method(dyadic(params), 12), SolverMethod.RK45)
        explicit = IntegratorConfig(method=SolverMethod.BDF)
        self.assertEqual(explicit.resolve_method(galerkin(5), 5), SolverMethod.BDF)

    def test_step_floor_depends_on_stepper(self):
        config = IntegratorConfig()
        self.assertIsNone(config.dt_min)
        self.assertEqual(config.step_floor(SolverMethod.RK45), 1e-14)
        self.assertEqual(config.step_floor(SolverMethod.RADAU), 1e-30)
        self.assertEqual(IntegratorConfig(dt_min=1e-8).step_floor(SolverMethod.RADAU), 1e-8)

    def test_positive_tolerances(self):
        with self.assertRaises(ValueError):
            IntegratorConfig(rel_tol=0.0)


if __name__ == "__main__":
    unittest.main()
