"""Pipeline configuration: nested dataclasses loaded from YAML/JSON plus flat overrides."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import typing
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .degrade import DegradeConfig
from .errors import ConfigInvalidError
from .evalreport import CylinderSpec
from .llmclient import LlmEndpointConfig
from .reconstruct import KalmanConfig
from .simkernel import AIRPORTS, MissionGenConfig, SimConfig

METHODS = ("linear", "kalman", "kalman_rts", "llm")


@dataclass(frozen=True)
class SimulateSection:
    n_flights: int = 50
    routes: tuple[tuple[str, str], ...] = (("KLAF", "KVPZ"), ("KVPZ", "KLAF"))
    max_attempts: int = 10
    mission: MissionGenConfig = MissionGenConfig()
    sim: SimConfig = SimConfig()

    def __post_init__(self) -> None:
        if self.n_flights < 1 or self.max_attempts < 1:
            raise ValueError("n_flights and max_attempts must be >= 1")
        object.__setattr__(self, "routes", tuple(tuple(r) for r in self.routes))
        for r in self.routes:
            if len(r) != 2 or any(a not in AIRPORTS for a in r):
                raise ValueError(f"route {r} must name two known airports {sorted(AIRPORTS)}")


@dataclass(frozen=True)
class DatasetSection:
    window_s: int = 60
    stride_s: int = 60
    step_s: int = 5
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)

    def __post_init__(self) -> None:
        object.__setattr__(self, "ratios", tuple(float(x) for x in self.ratios))
        if len(self.ratios) != 3 or abs(sum(self.ratios) - 1) > 1e-9:
            raise ValueError("ratios must be three numbers summing to 1")
        if min(self.window_s, self.stride_s, self.step_s) <= 0 or self.window_s % self.step_s:
            raise ValueError("window/stride/step must be positive and window a multiple of step")


@dataclass(frozen=True)
class KalmanSection:
    """Process-noise and model knobs; measurement noise follows the degrade section."""

    accel_psd_h: float = KalmanConfig.accel_psd_h
    accel_psd_v: float = KalmanConfig.accel_psd_v
    turn_psd: float = KalmanConfig.turn_psd
    model: str = "cv"
    use_velocity: bool = True

    def build(self, degrade: DegradeConfig, smoother: bool) -> KalmanConfig:
        return KalmanConfig.from_degrade(
            degrade, accel_psd_h=self.accel_psd_h, accel_psd_v=self.accel_psd_v, turn_psd=self.turn_psd,
            model=self.model, use_velocity=self.use_velocity, smoother=smoother,
        )


@dataclass(frozen=True)
class LlmSection:
    # "mock:oracle", "mock:echo" or "http"
    endpoint: str = "mock:oracle"
    token_budget: int = 2048
    max_in_flight: int = 4
    client: LlmEndpointConfig = LlmEndpointConfig()

    def __post_init__(self) -> None:
        if self.endpoint not in ("mock:oracle", "mock:echo", "http"):
            raise ValueError(f"unknown llm endpoint {self.endpoint!r}")
        if self.token_budget <= 0 or self.max_in_flight <= 0:
            raise ValueError("token_budget and max_in_flight must be > 0")


@dataclass(frozen=True)
class ReconstructSection:
    split: str = "test"
    methods: tuple[str, ...] = METHODS

    def __post_init__(self) -> None:
        object.__setattr__(self, "methods", tuple(self.methods))
        if self.split not in ("train", "val", "test"):
            raise ValueError(f"unknown split {self.split!r}")
        bad = [m for m in self.methods if m not in METHODS]
        if bad or not self.methods:
            raise ValueError(f"unknown methods {bad}; choose from {METHODS}")


@dataclass(frozen=True)
class PlotSection:
    method: str = "kalman_rts"
    max_figures: int = 4

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"unknown plot method {self.method!r}")


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 42
    output_dir: str = "out"
    jobs: int = 1
    simulate: SimulateSection = SimulateSection()
    degrade: DegradeConfig = DegradeConfig()
    dataset: DatasetSection = DatasetSection()
    kalman: KalmanSection = KalmanSection()
    llm: LlmSection = LlmSection()
    reconstruct: ReconstructSection = ReconstructSection()
    evaluate: CylinderSpec = CylinderSpec()
    plot: PlotSection = PlotSection()

    def __post_init__(self) -> None:
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")

    def to_dict(self) -> dict:
        d = _to_plain(self)
        d["llm"]["client"].pop("auth_token", None)
        return d

    def run_dict(self) -> dict:
        """Settings that determine outputs; where and how fast they run is left out."""
        d = self.to_dict()
        del d["output_dir"], d["jobs"]
        return d

    def section_hash(self, *names: str) -> str:
        d = self.to_dict()
        part = {n: d[n] for n in names}
        return hashlib.sha256(json.dumps(part, sort_keys=True).encode()).hexdigest()[:16]

    def derive_seed(self, stage: str, *index: int) -> int:
        """Stable per-stage, per-item seed derived from the global seed."""
        code = int.from_bytes(hashlib.sha256(stage.encode()).digest()[:4], "little")
        ss = np.random.SeedSequence([self.seed, code, *index])
        return int(ss.generate_state(1, dtype=np.uint32)[0])


def _to_plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [_to_plain(x) for x in obj]
    if hasattr(obj, "value") and not isinstance(obj, (int, float, str)):
        return obj.value
    return obj


def _build(cls, data: Any, path: str = ""):
    where = path.rstrip(".") or "config"
    if not isinstance(data, dict):
        raise ConfigInvalidError(f"{where}: expected a mapping, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls) if f.init}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigInvalidError(f"{where}: unknown keys {unknown}")
    kwargs = {}
    for name, value in data.items():
        hint = hints[name]
        if dataclasses.is_dataclass(hint):
            kwargs[name] = _build(hint, value, f"{path}{name}.")
        elif name == "forced_gaps":
            kwargs[name] = tuple(tuple(g) for g in value)
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigInvalidError(f"{where}: {exc}") from exc


def _deep_merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = v
    return out


def parse_override(text: str) -> tuple[list[str], Any]:
    """``section.key=value`` (leading dashes optional) -> (path, parsed value)."""
    body = text.lstrip("-")
    if "=" not in body:
        raise ConfigInvalidError(f"override {text!r} is not of the form --section.key=value")
    key, raw = body.split("=", 1)
    try:
        value = yaml.safe_load(raw) if raw else ""
    except yaml.YAMLError as exc:
        raise ConfigInvalidError(f"override {text!r}: {exc}") from exc
    return key.split("."), value


def load_config(path: str | Path | None = None, overrides: list[str] | tuple[str, ...] = ()) -> PipelineConfig:
    """Defaults, then the YAML/JSON file, then ``section.key=value`` overrides.

    Raises:
        ConfigInvalidError: unreadable file, unknown keys or invalid values.
    """
    data: dict = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
            data = yaml.safe_load(text) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigInvalidError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigInvalidError(f"config {path} must be a mapping")
    for ov in overrides:
        keys, value = parse_override(ov)
        node = data
        for k in keys[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ConfigInvalidError(f"override {ov!r} descends into a non-section")
        node[keys[-1]] = value
    return _build(PipelineConfig, data)


def default_config_dict() -> dict:
    return PipelineConfig().to_dict()
