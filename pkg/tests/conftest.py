import os
import sys

import numpy as np
import pytest

# Add parent directory to path so the flat engine modules import
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from dyadic_engine import GalerkinSpec, ModelParams, RhsKind, RhsSelector, ShellState
from integrator_engine import IntegratorConfig
from run_config import parse_config


@pytest.fixture
def params():
    """lambda = 2, theta = 3/5"""
    return ModelParams()


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def geometric_state():
    """a_j = 2^{-j}, N = 5"""
    return ShellState.build([0.0] + [2.0 ** -j for j in range(1, 6)])


@pytest.fixture
def tight_config():
    return IntegratorConfig(rel_tol=1e-10, abs_tol=1e-13, dt_init=1e-4, dt_max=0.05)


@pytest.fixture
def galerkin_rhs(params):
    def build(order: int, theta: float = 0.6) -> RhsSelector:
        return RhsSelector(kind=RhsKind.GALERKIN, params=params, galerkin=GalerkinSpec(order=order, damping_theta=theta))
    return build


@pytest.fixture
def small_run_config(tmp_path):
    """Parse a config for a small, fast run; extra lines are appended verbatim."""
    def build(scenario: str, *lines: str):
        text = "\n".join([
            f"scenario = {scenario}",
            "truncation = 5",
            "t_end = 0.5",
            f"outputs = {tmp_path / scenario}",
            *lines,
        ])
        return parse_config(text)
    return build
