"""Configuration files for simulation scenarios.

Two on-disk forms are accepted:

- a line-oriented ``key = value`` format with ``[section]`` headers,
  ``#`` comments, comma-separated lists, and semicolon-separated matrix rows
  (see the shipped presets for the full key set);
- a JSON object with the same section names as keys.

Angles in configuration files are always degrees; they are converted to
radians on load. Sensor sections are numbered ``[sensor.1]``, ``[sensor.2]``
and so on.
"""

from __future__ import annotations

import json
import math
from importlib import resources

import numpy as np

from .errors import ConfigError
from .models import bearing_sensor, range_az_el_sensor
from .scenarios import (
    KNOT_MPS,
    EkfTracker,
    ImmTracker,
    NcvTruth,
    ScenarioConfig,
    SineTruth,
)

__all__ = ["parse_config_text", "load_config", "load_preset", "build_scenario",
           "PRESET_NAMES"]

PRESET_NAMES = ("scenario1", "scenario2", "scenario2_q05")


def _parse_scalar(token: str):
    token = token.strip()
    low = token.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    try:
        return int(token)
    except ValueError:
        pass
    try:
        return float(token)
    except ValueError:
        pass
    return token


def _parse_value(raw: str):
    raw = raw.strip()
    if ";" in raw:
        return [[_parse_scalar(t) for t in row.split(",")] for row in raw.split(";")]
    if "," in raw:
        return [_parse_scalar(t) for t in raw.split(",")]
    return _parse_scalar(raw)


def parse_config_text(text: str) -> dict:
    """Parse the key=value format into a dict of sections."""
    sections: dict = {}
    current = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            current = stripped[1:-1].strip()
            if not current:
                raise ConfigError(f"line {lineno}: empty section name")
            sections.setdefault(current, {})
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        if current is None:
            raise ConfigError(f"line {lineno}: key outside any [section]")
        key, _, raw = stripped.partition("=")
        sections[current][key.strip()] = _parse_value(raw)
    return sections


class _Section:
    """Typed access to one section with required/default key handling."""

    def __init__(self, name: str, data: dict):
        self.name = name
        self.data = dict(data)

    def get(self, key, default=None, required=False):
        if key in self.data:
            return self.data.pop(key)
        if required:
            raise ConfigError(f"[{self.name}] is missing required key {key!r}")
        return default

    def finish(self):
        if self.data:
            extra = ", ".join(sorted(self.data))
            raise ConfigError(f"[{self.name}] has unknown keys: {extra}")


def _as_array(value, length=None):
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if length is not None and arr.size == 1:
        arr = np.full(length, float(arr[0]))
    if length is not None and arr.size != length:
        raise ConfigError(f"expected {length} values, got {arr.size}")
    return arr


def _build_truth(sec: _Section):
    kind = sec.get("kind", required=True)
    if kind == "ncv3d":
        truth = NcvTruth(
            q=_as_array(sec.get("q", required=True), 3),
            initial_position=_as_array(sec.get("initial_position_m", [0.0, 0.0, 2000.0]), 3),
            initial_velocity=_as_array(sec.get("initial_velocity_mps", [100.0, 100.0, 0.0]), 3),
        )
    elif kind == "sine2d":
        speed = sec.get("speed_mps")
        if speed is None:
            speed = float(sec.get("speed_knots", required=True)) * KNOT_MPS
        truth = SineTruth(
            start=_as_array(sec.get("start_m", [150.0, 150.0]), 2),
            speed_mps=float(speed),
            amplitude_m=float(sec.get("amplitude_m", 200.0)),
            wavelength_m=float(sec.get("wavelength_m", 1500.0)),
            rotation_rad=math.radians(float(sec.get("rotation_deg", 45.0))),
        )
    else:
        raise ConfigError(f"unknown truth kind {kind!r}")
    sec.finish()
    return truth


def _build_tracker(sec: _Section, spatial_dims: int):
    kind = sec.get("kind", required=True)
    if kind == "ekf":
        tracker = EkfTracker(
            q=_as_array(sec.get("q", required=True), spatial_dims),
            init_pos_std=float(sec.get("init_pos_std_m", 100.0)),
            init_vel_std=float(sec.get("init_vel_std_mps", 10.0)),
        )
    elif kind == "imm":
        tracker = ImmTracker(
            q_ncv=float(sec.get("q_ncv", required=True)),
            q_nca=float(sec.get("q_nca", required=True)),
            transition=np.asarray(sec.get("transition", required=True), dtype=float),
            pad_var=float(sec.get("pad_var", 1.0)),
            init_pos_std=float(sec.get("init_pos_std_m", 100.0)),
            init_vel_std=float(sec.get("init_vel_std_mps", 10.0)),
            init_acc_std=float(sec.get("init_acc_std_mps2", 1.0)),
        )
    else:
        raise ConfigError(f"unknown tracker kind {kind!r}")
    sec.finish()
    return tracker


def _build_sensor(sec: _Section):
    kind = sec.get("kind", required=True)
    if kind == "range_az_el":
        sigma_az = math.radians(float(sec.get("sigma_az_deg", required=True)))
        sigma_el = sec.get("sigma_el_deg")
        sensor = range_az_el_sensor(
            _as_array(sec.get("position_m", required=True), 3),
            float(sec.get("sigma_range_m", required=True)),
            sigma_az,
            math.radians(float(sigma_el)) if sigma_el is not None else sigma_az,
        )
    elif kind == "bearing":
        sensor = bearing_sensor(
            _as_array(sec.get("position_m", required=True), 2),
            math.radians(float(sec.get("sigma_bearing_deg", required=True))),
        )
    else:
        raise ConfigError(f"unknown sensor kind {kind!r}")
    sec.finish()
    return sensor


def _strategy_list(value) -> tuple[str, ...]:
    if isinstance(value, str):
        return (value,)
    return tuple(str(v).strip() for v in value)


def build_scenario(sections: dict) -> ScenarioConfig:
    """Build a :class:`ScenarioConfig` from parsed sections."""
    for key, value in sections.items():
        if not isinstance(value, dict):
            raise ConfigError(f"section [{key}] must map keys to values")
    sections = {str(k): dict(v) for k, v in sections.items()}
    try:
        scen = _Section("scenario", sections.pop("scenario"))
        truth_sec = _Section("truth", sections.pop("truth"))
        tracker_sec = _Section("tracker", sections.pop("tracker"))
        fusion_sec = _Section("fusion", sections.pop("fusion"))
        mc_sec = _Section("monte_carlo", sections.pop("monte_carlo"))
    except KeyError as exc:
        raise ConfigError(f"missing required section [{exc.args[0]}]") from None

    sensor_keys = sorted((k for k in sections if k.startswith("sensor.")),
                         key=lambda k: int(k.split(".", 1)[1]))
    sensors = tuple(_build_sensor(_Section(k, sections.pop(k))) for k in sensor_keys)
    if sections:
        raise ConfigError(f"unknown sections: {', '.join(sorted(sections))}")
    if not sensors:
        raise ConfigError("at least one [sensor.N] section required")

    truth = _build_truth(truth_sec)
    tracker = _build_tracker(tracker_sec, sensors[0].spatial_dims)
    config = ScenarioConfig(
        name=str(scen.get("name", "scenario")),
        duration_s=float(scen.get("duration_s", required=True)),
        dt_s=float(scen.get("dt_s", required=True)),
        truth=truth,
        sensors=sensors,
        tracker=tracker,
        strategies=_strategy_list(fusion_sec.get("strategies", required=True)),
        runs=int(mc_sec.get("runs", required=True)),
        seed=int(mc_sec.get("seed", 0)),
        fusion_every=int(scen.get("fusion_every", 2)),
        feedback=bool(scen.get("feedback", False)),
        omega=float(fusion_sec.get("omega", 0.5)),
        prune_to=int(fusion_sec.get("prune_to", 2)),
        track_loss_m=float(scen.get("track_loss_m", 500.0)),
        nees_sided=int(scen.get("nees_sided", 2)),
        nees_marginal=str(scen.get("nees_marginal", "full")),
    )
    for sec in (scen, fusion_sec, mc_sec):
        sec.finish()
    return config


def _looks_like_json(text: str) -> bool:
    for ch in text:
        if not ch.isspace():
            return ch == "{"
    return False


def load_config(path, **overrides) -> ScenarioConfig:
    """Load a scenario configuration file (key=value or JSON)."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    return loads_config(text, **overrides)


def loads_config(text: str, **overrides) -> ScenarioConfig:
    """Parse configuration text (key=value or JSON) into a scenario."""
    if _looks_like_json(text):
        try:
            sections = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON config: {exc}") from exc
        if not isinstance(sections, dict):
            raise ConfigError("JSON config must be an object of sections")
    else:
        sections = parse_config_text(text)
    config = build_scenario(sections)
    return _apply_overrides(config, overrides)


def _apply_overrides(config: ScenarioConfig, overrides: dict) -> ScenarioConfig:
    from dataclasses import replace

    clean = {k: v for k, v in overrides.items() if v is not None}
    if "strategies" in clean:
        clean["strategies"] = _strategy_list(clean["strategies"])
    return replace(config, **clean) if clean else config


def load_preset(name: str, **overrides) -> ScenarioConfig:
    """Load one of the shipped scenario presets by name."""
    if name not in PRESET_NAMES:
        raise ConfigError(f"unknown preset {name!r}; choose from {PRESET_NAMES}")
    text = resources.files("trackfuse.presets").joinpath(f"{name}.cfg").read_text()
    return loads_config(text, **overrides)
