"""Run configuration: YAML files merged over the shipped defaults, strictly validated."""

from __future__ import annotations

import copy
import errno
import hashlib
import json
import math
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from . import plant as pl
from .controllers import AltitudeGains, ManeuverProfile
from .flight import ControllerConfig, SimSetup
from .ilc import IlcConfig, lifted_length
from .loopshape import derive_gains

PRESETS = ("default", "cobra80", "cobra70", "cobra50")


class ConfigError(ValueError):
    """Invalid configuration; ``key`` is the dotted path of the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class _Loader(yaml.SafeLoader):
    """SafeLoader that also reads ``1e-8`` as a float (YAML 1.1 insists on a dot)."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"^[-+]?(?:[0-9][0-9_]*\.[0-9_]*(?:[eE][-+]?[0-9]+)?|\.[0-9_]+(?:[eE][-+]?[0-9]+)?"
               r"|[0-9][0-9_]*[eE][-+]?[0-9]+|\.(?:inf|Inf|INF)|[-+]\.(?:inf|Inf|INF)|\.(?:nan|NaN|NAN))$"),
    list("-+0123456789."))


def _yaml(text: str):
    return yaml.load(text, Loader=_Loader)


def _read_shipped(name: str) -> str:
    return resources.files("cobra_ilc").joinpath("configs", f"{name}.yaml").read_text()


def defaults() -> dict:
    return _yaml(_read_shipped("default"))


def preset_path(name: str) -> Path:
    if name not in PRESETS:
        raise ConfigError("preset", f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return Path(str(resources.files("cobra_ilc").joinpath("configs", f"{name}.yaml")))


_LIST_SCHEMAS = {
    ("disturbance", "bias_pulses"): {"start", "duration", "vector"},
    ("disturbance", "wind_pulses"): {"start", "duration", "vector"},
}


def _merge(base: dict, override: dict, path: tuple[str, ...] = ()) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = path + (str(key),)
        if key not in base:
            raise ConfigError(".".join(where), "unknown key")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(".".join(where), "expected a section (mapping)")
            out[key] = _merge(base[key], value, where)
        else:
            if where in _LIST_SCHEMAS:
                _check_list(where, value)
            out[key] = copy.deepcopy(value)
    return out


def _check_list(where: tuple[str, ...], value: Any) -> None:
    name = ".".join(where)
    if not isinstance(value, list):
        raise ConfigError(name, "expected a list")
    allowed = _LIST_SCHEMAS[where]
    for i, item in enumerate(value):
        if not isinstance(item, dict):
            raise ConfigError(f"{name}[{i}]", "expected a mapping")
        for k in item:
            if k not in allowed:
                raise ConfigError(f"{name}[{i}].{k}", "unknown key")
        missing = allowed - set(item)
        if missing:
            raise ConfigError(f"{name}[{i}]", f"missing {', '.join(sorted(missing))}")
        vec = item["vector"]
        if not (isinstance(vec, list) and len(vec) == 3):
            raise ConfigError(f"{name}[{i}].vector", "expected three numbers")


def load_dict(path: str | Path) -> dict:
    """Read a YAML file and merge it over the defaults. Raises FileNotFoundError or ConfigError."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(errno.ENOENT, "config file not found", str(path))
    try:
        raw = _yaml(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(str(path), f"not valid YAML: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(str(path), "top level must be a mapping")
    return _merge(defaults(), raw)


def canonical_json(cfg: dict) -> str:
    return json.dumps(cfg, sort_keys=True, separators=(",", ":"), allow_nan=False)


def digest(cfg: dict) -> str:
    """sha256 of the canonical JSON form of a fully merged config."""
    return hashlib.sha256(canonical_json(cfg).encode()).hexdigest()


@dataclass(frozen=True)
class RunConfig:
    raw: dict
    setup: SimSetup
    ilc: IlcConfig
    iterations: int
    seed: int
    out: str

    @property
    def echo(self) -> dict:
        """The merged config minus ``run.out``: where results go does not change them."""
        cfg = copy.deepcopy(self.raw)
        cfg["run"].pop("out", None)
        return cfg

    @property
    def digest(self) -> str:
        return digest(self.echo)

    @property
    def gains(self) -> AltitudeGains:
        return self.setup.controller.gains


def _number(cfg: dict, section: str, key: str, positive: bool = False, nonneg: bool = False,
            allow_none: bool = False):
    value = cfg[section][key]
    name = f"{section}.{key}"
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(name, f"expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError(name, "must be finite")
    if positive and value <= 0:
        raise ConfigError(name, "must be > 0")
    if nonneg and value < 0:
        raise ConfigError(name, "must be >= 0")
    return value


def _flag(cfg: dict, section: str, key: str) -> bool:
    value = cfg[section][key]
    if not isinstance(value, bool):
        raise ConfigError(f"{section}.{key}", f"expected true/false, got {value!r}")
    return value


def _integer(cfg: dict, section: str, key: str, minimum: int, allow_none: bool = False):
    value = cfg[section][key]
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(f"{section}.{key}", f"expected an integer >= {minimum}, got {value!r}")
    return value


def _pulses(items: list) -> tuple[pl.Pulse, ...]:
    return tuple(pl.Pulse(float(p["start"]), float(p["duration"]),
                          tuple(float(v) for v in p["vector"])) for p in items)


def build(cfg: dict) -> RunConfig:
    """Turn a merged config dict into typed objects, validating every value."""
    num = lambda s, k, **kw: _number(cfg, s, k, **kw)  # noqa: E731
    p = cfg["plant"]
    try:
        plant_cfg = pl.PlantConfig(
            mass=num("plant", "mass", positive=True), g=num("plant", "g", positive=True),
            aero=_flag(cfg, "plant", "aero"), axial_aero=_flag(cfg, "plant", "axial_aero"),
            rho=num("plant", "rho", nonneg=True), wing_area=num("plant", "wing_area", nonneg=True),
            cd0=num("plant", "cd0", nonneg=True), k_va=num("plant", "k_va", nonneg=True),
            crosswind_washout=num("plant", "crosswind_washout", nonneg=True),
            inner_loop=str(p["inner_loop"]),
            accel_bandwidth_hz=num("plant", "accel_bandwidth_hz", positive=True),
            tau_att=num("plant", "tau_att", nonneg=True), dt_sim=num("plant", "dt_sim", positive=True),
            std_alt=num("plant", "std_alt", nonneg=True), std_vel=num("plant", "std_vel", nonneg=True),
            std_lat=num("plant", "std_lat", nonneg=True), std_accel=num("plant", "std_accel", nonneg=True),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        key = str(exc).split(" ")[0]
        raise ConfigError(key if key.startswith("plant.") else "plant", str(exc)) from exc

    k_p = num("controller", "k_p", positive=True, allow_none=True)
    k_v = num("controller", "k_v", positive=True, allow_none=True)
    if (k_p is None) != (k_v is None):
        raise ConfigError("controller.k_p" if k_p is None else "controller.k_v",
                          "k_p and k_v must be given together")
    if k_p is None:
        pm = num("controller", "phase_margin_deg")
        if not 0 < pm < 90:
            raise ConfigError("controller.phase_margin_deg", "must be in (0, 90)")
        gains = derive_gains(num("controller", "bandwidth_hz", positive=True), pm)
    else:
        gains = AltitudeGains(k_p, k_v)
    theta_max = num("controller", "theta_max_deg", positive=True)
    if theta_max >= 90:
        raise ConfigError("controller.theta_max_deg", "must be < 90")
    controller = ControllerConfig(
        gains=gains, k_l=num("controller", "k_l", positive=True),
        rate_hz=num("controller", "rate_hz", positive=True), theta_max=math.radians(theta_max),
        min_axp=num("controller", "min_axp", positive=True),
        a_l_max_g=num("controller", "a_l_max_g", positive=True))

    try:
        profile = ManeuverProfile(
            theta_level=math.radians(num("maneuver", "theta_level_deg")),
            head_up=math.radians(num("maneuver", "head_up_deg")),
            lead_in=num("maneuver", "lead_in", nonneg=True), ramp_up=num("maneuver", "ramp_up", nonneg=True),
            hold=num("maneuver", "hold", nonneg=True), ramp_down=num("maneuver", "ramp_down", nonneg=True),
            settle=num("maneuver", "settle", nonneg=True),
            p_zd=num("maneuver", "p_zd"), p_yd=num("maneuver", "p_yd"))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc).split(" ")[0], str(exc)) from exc

    seed = _integer(cfg, "run", "seed", 0)
    d = cfg["disturbance"]
    for key in ("bias_pulses", "wind_pulses"):
        _check_list(("disturbance", key), d[key])
    disturbance = pl.DisturbanceProfile(
        seed=seed, bias_pulses=_pulses(d["bias_pulses"]),
        stochastic_std=num("disturbance", "stochastic_std", nonneg=True),
        wind_pulses=_pulses(d["wind_pulses"]),
        crosswind_speed=num("disturbance", "crosswind_speed"),
        crosswind_time=num("disturbance", "crosswind_time", nonneg=True))

    setup = SimSetup(plant_cfg, controller, profile, disturbance, noise_seed=seed)
    try:
        setup.substeps
    except ValueError as exc:
        raise ConfigError("plant.dt_sim", str(exc)) from exc

    dt = num("ilc", "dt", positive=True)
    ticks = dt * controller.rate_hz
    if round(ticks) < 1 or abs(ticks - round(ticks)) > 1e-9:
        # off-grid samples and hold edges jitter by a tick, and F^-1 amplifies that
        raise ConfigError("ilc.dt", "must be a whole multiple of the control period 1/controller.rate_hz")
    n = _integer(cfg, "ilc", "n", 2, allow_none=True)
    if n is None:
        n = max(lifted_length(setup, dt), 2) if profile.duration > 0 else 2
    norm = cfg["ilc"]["norm"]
    if norm not in ("squared", "unsquared"):
        raise ConfigError("ilc.norm", "must be 'squared' or 'unsquared'")
    c_max = num("ilc", "c_max", allow_none=True)
    r = num("ilc", "r", positive=True)
    ilc_cfg = IlcConfig(
        n=n, dt=dt, alpha=num("ilc", "alpha", nonneg=True),
        c_max=math.inf if c_max is None else c_max, q=num("ilc", "q", nonneg=True), r=r,
        p0=num("ilc", "p0", nonneg=True), norm=norm, tol=num("ilc", "tol", positive=True),
        max_iter=_integer(cfg, "ilc", "max_iter", 1))
    iterations = _integer(cfg, "ilc", "iterations", 1)
    out = cfg["run"]["out"]
    if not isinstance(out, str) or not out:
        raise ConfigError("run.out", "expected a directory path")
    return RunConfig(cfg, setup, ilc_cfg, iterations, seed, out)


def load(path: str | Path, overrides: dict | None = None) -> RunConfig:
    """Load, merge ``overrides`` (same nested shape), validate."""
    cfg = load_dict(path)
    if overrides:
        cfg = _merge(cfg, overrides)
    return build(cfg)
