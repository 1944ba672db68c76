"""
Initial-condition families for shell runs.

Random families draw from SplitMix64 so that a seed reproduces the same data
in any language:

    state += 0x9E3779B97F4A7C15
    z = (state ^ (state >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    out = z ^ (z >> 31)                     (all arithmetic mod 2^64)

and uniform floats are (out >> 11) * 2^-53, i.e. in [0, 1).
"""
from enum import Enum
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from dyadic_engine import CASCADE_EXPONENT, ModelParams, ShellState, VariableKind, shell_powers
from errors import ConfigurationError

MASK64 = (1 << 64) - 1


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def uniform(self, size: int) -> np.ndarray:
        return np.array([(self.next_u64() >> 11) * 2.0 ** -53 for _ in range(size)])


class ICFamily(str, Enum):
    GEOMETRIC = "geometric"
    SINGLE = "single"
    RANDOM = "random"
    DELTA_BALL = "delta-ball"


class InitialConditionSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    family: ICFamily = ICFamily.GEOMETRIC
    amplitude: float = Field(1.0, ge=0.0, description="A for geometric and single")
    decay: float = Field(1.0, description="s in lambda^{-s j}")
    shell: int = Field(1, ge=1, description="j0 for single")
    delta: Optional[float] = Field(None, gt=0.0, lt=1.0, description="c_j(0) <= delta for delta-ball")
    profile: Literal["random", "extremal"] = "random"    # delta-ball: v_j uniform or v_j = 1

    @model_validator(mode="after")
    def _summable(self) -> "InitialConditionSpec":
        if self.family in (ICFamily.GEOMETRIC, ICFamily.RANDOM) and not self.decay > 0.0:
            raise ValueError(f"{self.family.value} data needs decay s > 0")
        return self


def generate(spec: InitialConditionSpec, params: ModelParams, truncation: int, seed: int = 0,
             time: float = 0.0) -> ShellState:
    """a-variable initial state with a_0 = 0 and every entry >= 0."""
    if truncation < 1:
        raise ConfigurationError("truncation must be >= 1")
    lam = params.lambda_base
    a = np.zeros(truncation + 1)

    if spec.family == ICFamily.GEOMETRIC:
        a[1:] = spec.amplitude * shell_powers(lam, truncation, -spec.decay)[1:]
    elif spec.family == ICFamily.SINGLE:
        if spec.shell > truncation:
            raise ConfigurationError(f"single-mode shell {spec.shell} beyond truncation {truncation}")
        a[spec.shell] = spec.amplitude
    elif spec.family == ICFamily.RANDOM:
        a[1:] = SplitMix64(seed).uniform(truncation) * shell_powers(lam, truncation, -spec.decay)[1:]
    else:
        if spec.delta is None:
            raise ConfigurationError("delta-ball data needs delta")
        v = np.ones(truncation) if spec.profile == "extremal" else SplitMix64(seed).uniform(truncation)
        scale = spec.delta * params.lam(CASCADE_EXPONENT - 2.0 * params.theta)
        a[1:] = scale * shell_powers(lam, truncation, -params.theta)[1:] * v

    return ShellState.build(a, VariableKind.A, time)
