"""
Run configuration: a flat sectioned `key = value` text format.

    # comment
    scenario = decay            # keys before any header: [run], then [model], ...
    [model]
    theta = 0.6
    [scenario.decay]
    fit_window = 1, 50

Every section maps onto a pydantic model; unknown keys and constraint
violations raise ConfigParseError naming the line and key.
"""
import hashlib
import json
import os
from enum import Enum
from pathlib import Path
from typing import Annotated, Any, Literal, Optional, Sequence

from pydantic import BaseModel, BeforeValidator, ConfigDict, Field, model_validator
from pydantic import ValidationError as PydanticValidationError

from certificate_engine import CertificateParams
from dyadic_engine import GalerkinSpec, ModelParams
from errors import ConfigParseError, ConfigurationError
from initial_conditions import InitialConditionSpec
from integrator_engine import IntegratorConfig


def split_list(value: Any) -> Any:
    if isinstance(value, str):
        return [item.strip() for item in value.split(",") if item.strip()]
    return value


FloatList = Annotated[list[float], BeforeValidator(split_list)]
IntList = Annotated[list[int], BeforeValidator(split_list)]


class Scenario(str, Enum):
    SIMULATE = "simulate"
    REGULARITY = "regularity"
    DECAY = "decay"
    SCALING = "scaling"
    ENERGY_BALANCE = "energy-balance"
    ONSAGER = "onsager"
    GALERKIN_CONVERGENCE = "galerkin-convergence"
    CERTIFICATE = "certificate"


class RunSection(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    scenario: Scenario = Scenario.SIMULATE
    rhs: Literal["dyadic", "galerkin"] = "galerkin"
    truncation: int = Field(12, ge=1, description="N; 12 for horizons beyond t = 1, up to 20 for t <= 0.1")
    t_start: float = 0.0
    t_end: float = 1.0
    outputs: str = "runs"
    seed: int = Field(0, ge=0, le=(1 << 64) - 1)

    @model_validator(mode="after")
    def _span(self) -> "RunSection":
        if not self.t_end > self.t_start:
            raise ValueError("t_span must be nonempty (t_end > t_start)")
        return self

    @property
    def t_span(self) -> tuple[float, float]:
        return self.t_start, self.t_end


# --- Per-scenario options ([scenario.<name>] sections) ---

class _Options(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class SimulateOptions(_Options):
    sobolev: FloatList = [1.0]
    flux_shells: IntList = []


class RegularityOptions(_Options):
    delta_ball: bool = True     # also run delta-ball(delta*) data, Galerkin-with-flux, checked in c


class DecayOptions(_Options):
    fit_window: FloatList = [1.0, 50.0]
    n_points: int = Field(64, ge=2)


class ScalingOptions(_Options):
    etas: FloatList = [0.5, 2.0]
    grid_points: int = Field(41, ge=2)


class EnergyBalanceOptions(_Options):
    shells: IntList = []        # empty: every J in 1..N-1


class OnsagerOptions(_Options):
    shells: IntList = []
    dissipation_orders: IntList = [8, 10, 12]


class ConvergenceOptions(_Options):
    orders: IntList = [8, 10, 12]
    probe_times: FloatList = [1.0]


class CertificateOptions(_Options):
    adversarial: bool = True


class ScenarioOptions(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    simulate: SimulateOptions = SimulateOptions()
    regularity: RegularityOptions = RegularityOptions()
    decay: DecayOptions = DecayOptions()
    scaling: ScalingOptions = ScalingOptions()
    energy_balance: EnergyBalanceOptions = EnergyBalanceOptions()
    onsager: OnsagerOptions = OnsagerOptions()
    galerkin_convergence: ConvergenceOptions = ConvergenceOptions()
    certificate: CertificateOptions = CertificateOptions()


class RunConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    run: RunSection = RunSection()
    model: ModelParams = ModelParams()
    galerkin: GalerkinSpec = GalerkinSpec(order=12)
    ic: InitialConditionSpec = InitialConditionSpec()
    integrator: IntegratorConfig = IntegratorConfig()
    certificate: CertificateParams = CertificateParams()
    scenario: ScenarioOptions = ScenarioOptions()

    @model_validator(mode="after")
    def _orders(self) -> "RunConfig":
        if self.run.rhs == "galerkin" and self.galerkin.order != self.run.truncation:
            raise ValueError(f"galerkin order {self.galerkin.order} != truncation {self.run.truncation}")
        return self

    @property
    def scenario_name(self) -> Scenario:
        return self.run.scenario

    def digest(self) -> str:
        payload = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


_SECTIONS: dict[str, type[BaseModel]] = {
    "run": RunSection,
    "model": ModelParams,
    "galerkin": GalerkinSpec,
    "ic": InitialConditionSpec,
    "integrator": IntegratorConfig,
    "certificate": CertificateParams,
    **{f"scenario.{s.value}": ScenarioOptions.model_fields[s.value.replace("-", "_")].annotation for s in Scenario},
}


_TOP_LEVEL_ORDER = ("run", "model", "galerkin", "ic", "integrator", "certificate")


def _section_field(section: str) -> tuple[str, Optional[str]]:
    if section.startswith("scenario."):
        return "scenario", section.split(".", 1)[1].replace("-", "_")
    return section, None


def _parse_value(raw: str) -> Optional[str]:
    value = raw.strip()
    if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
        return value[1:-1]
    return None if value.lower() in ("", "none", "null") else value


def _collect(text: str) -> tuple[dict[str, dict[str, Any]], dict[tuple[str, str], int]]:
    sections: dict[str, dict[str, Any]] = {}
    lines: dict[tuple[str, str], int] = {}
    current = None
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigParseError(f"malformed section header {line!r}", line=number)
            current = line[1:-1].strip()
            if current not in _SECTIONS:
                raise ConfigParseError(f"unknown section [{current}]", line=number)
            continue
        if "=" not in line:
            raise ConfigParseError(f"expected 'key = value', got {line!r}", line=number)
        key, value = (part.strip() for part in line.split("=", 1))
        _store(sections, lines, current or _top_level_section(key), key, _parse_value(value), number)
    return sections, lines


def _top_level_section(key: str) -> str:
    for section in _TOP_LEVEL_ORDER:
        if key in _SECTIONS[section].model_fields:
            return section
    return "run"


def _store(sections, lines, section: str, key: str, value: Optional[str], number: int) -> None:
    model_cls = _SECTIONS[section]
    if key not in model_cls.model_fields:
        raise ConfigParseError(f"unknown key in [{section}]", line=number, key=key)
    if (section, key) in lines and number > 0:
        raise ConfigParseError("duplicate key", line=number, key=key)
    sections.setdefault(section, {})[key] = value
    lines[(section, key)] = number


def _apply_overrides(sections, lines, overrides: Sequence[str]) -> None:
    for item in overrides:
        if "=" not in item:
            raise ConfigParseError(f"override {item!r} is not section.key=value", line=0)
        path, value = (part.strip() for part in item.split("=", 1))
        section, _, key = path.rpartition(".")
        section = section or _top_level_section(key)
        if section not in _SECTIONS:
            raise ConfigParseError(f"unknown section [{section}]", line=0, key=path)
        _store(sections, lines, section, key, _parse_value(value), 0)


def _build(sections: dict[str, dict[str, Any]], lines: dict[tuple[str, str], int]) -> RunConfig:
    payload: dict[str, Any] = {}
    for section, values in sections.items():
        values = {k: v for k, v in values.items() if v is not None}
        top, sub = _section_field(section)
        if sub is None:
            payload[top] = values
        else:
            payload.setdefault(top, {})[sub] = values

    run = payload.get("run", {})
    galerkin = payload.setdefault("galerkin", {})
    if "order" not in galerkin:
        galerkin["order"] = run.get("truncation", RunSection.model_fields["truncation"].default)

    try:
        return RunConfig(**payload)
    except PydanticValidationError as e:
        err = e.errors()[0]
        loc = [str(p) for p in err["loc"]]
        if not loc:
            section, key = "galerkin", "order"
        else:
            section, rest = loc[0], loc[1:]
            if section == "scenario" and rest:
                section, rest = f"scenario.{rest[0].replace('_', '-')}", rest[1:]
            key = rest[0] if rest else ("t_end" if section == "run" else None)
        line = lines.get((section, key)) if key else None
        raise ConfigParseError(err["msg"], line=line, key=f"{section}.{key}" if key else section) from e


def parse_config(text: str, overrides: Sequence[str] = ()) -> RunConfig:
    sections, lines = _collect(text)
    _apply_overrides(sections, lines, overrides)
    return _build(sections, lines)


def load_config(path: Optional[str], overrides: Sequence[str] = ()) -> RunConfig:
    if path is None:
        return parse_config("", overrides)
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise ConfigurationError(f"cannot read config {path}: {e}") from e
    return parse_config(text, overrides)


def thread_count() -> int:
    """Cap on concurrent independent integrations (DYADIC_THREADS, default 1)."""
    try:
        return max(1, int(os.getenv("DYADIC_THREADS", "1")))
    except ValueError:
        raise ConfigurationError("DYADIC_THREADS must be a positive integer")
