"""Scenario presets and file I/O for the command-line tools."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path

from .cost import CostWeights
from .sir import EpidemicParams, EpidemicState

SCHEMA_VERSION = 1

_FIELDS = ("beta", "gamma", "u_max", "i_M", "lambda1", "lambda2",
           "s0", "i0", "horizon", "step")


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Scenario:
    name: str
    beta: float
    gamma: float
    u_max: float
    i_M: float
    lambda1: float
    lambda2: float
    s0: float
    i0: float
    horizon: float
    step: float

    def __post_init__(self):
        self.params  # construct once to validate
        self.weights
        if self.horizon <= 0.0:
            raise ScenarioError("horizon must be positive")
        if self.step <= 0.0:
            raise ScenarioError("step must be positive")

    @property
    def params(self) -> EpidemicParams:
        return EpidemicParams(self.beta, self.gamma, self.u_max, self.i_M)

    @property
    def weights(self) -> CostWeights:
        return CostWeights(self.lambda1, self.lambda2)

    @property
    def state0(self) -> EpidemicState:
        return EpidemicState(self.s0, self.i0)

    def override(self, **kwargs) -> "Scenario":
        return replace(self, **kwargs)


# Covid-19 in Italy: the March 2020 wave and the autumn 2021 Delta wave.
PRESETS = {
    "italy-2020": Scenario(name="italy-2020", beta=0.2142, gamma=0.0714,
                           u_max=0.135, i_M=0.0031, lambda1=1.0, lambda2=5.0,
                           s0=0.94, i0=0.001, horizon=500.0, step=0.01),
    "delta-2021": Scenario(name="delta-2021", beta=0.5, gamma=0.0714,
                           u_max=0.315, i_M=0.021, lambda1=1.0, lambda2=30.0,
                           s0=0.5, i0=0.001, horizon=600.0, step=0.01),
}


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}")
    if not isinstance(raw, dict):
        raise ScenarioError(f"{path}: expected a JSON object")
    version = raw.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ScenarioError(f"{path}: schema_version must be {SCHEMA_VERSION}, "
                            f"got {version!r}")
    missing = [f for f in _FIELDS if f not in raw]
    if missing:
        raise ScenarioError(f"{path}: missing fields: {', '.join(missing)}")
    values = {}
    for f in _FIELDS:
        v = raw[f]
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            raise ScenarioError(f"{path}: field '{f}' must be a number, got {v!r}")
        values[f] = float(v)
    name = raw.get("name", path.stem)
    if not isinstance(name, str):
        raise ScenarioError(f"{path}: field 'name' must be a string")
    try:
        return Scenario(name=name, **values)
    except (ScenarioError, ValueError) as exc:
        raise ScenarioError(f"{path}: {exc}")


def save_scenario(scenario: Scenario, path: str | Path) -> None:
    payload = {"schema_version": SCHEMA_VERSION}
    payload.update(asdict(scenario))
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def resolve_scenario(source: str) -> Scenario:
    """Preset name or path to a scenario file."""
    if source in PRESETS:
        return PRESETS[source]
    if Path(source).exists():
        return load_scenario(source)
    known = ", ".join(sorted(PRESETS))
    raise ScenarioError(f"unknown scenario '{source}' (presets: {known}; "
                        f"or pass a scenario file path)")
