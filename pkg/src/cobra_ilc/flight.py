"""Closed-loop maneuver runner: plant + controller at a fixed control rate."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import plant as pl
from .controllers import AltitudeGains, LateralGain, ManeuverProfile, PositionController, pitch_profile

TRAJECTORY_COLUMNS = ("t", "px", "py", "pz", "vx", "vy", "vz", "theta", "eta",
                      "ax_cmd", "ax_act", "xi_p", "xi_l", "u_ilc")


class EmptyTrajectoryError(ValueError):
    """The maneuver has zero duration, so there is nothing to fly."""


@dataclass(frozen=True)
class ControllerConfig:
    gains: AltitudeGains
    k_l: float = 2.27
    rate_hz: float = 250.0
    theta_max: float = math.radians(87.0)
    min_axp: float = 0.1
    a_l_max_g: float = 0.5

    def __post_init__(self):
        if self.gains.k_p <= 0 or self.gains.k_v <= 0:
            raise ValueError("controller gains k_p and k_v must be > 0")
        if self.k_l <= 0:
            raise ValueError("controller.k_l must be > 0")
        if self.rate_hz <= 0:
            raise ValueError("controller.rate_hz must be > 0")


@dataclass(frozen=True)
class SimSetup:
    plant: pl.PlantConfig
    controller: ControllerConfig
    profile: ManeuverProfile
    disturbance: pl.DisturbanceProfile = field(default_factory=pl.DisturbanceProfile)
    noise_seed: int = 0
    speed_guess: float = 15.0
    altitude_offset: float = 0.0  # initial p_z - p_zd, m
    lateral_offset: float = 0.0   # initial p_y - p_yd, m

    @property
    def substeps(self) -> int:
        n = self.plant.dt_sim * self.controller.rate_hz
        sub = round(1.0 / n)
        if sub < 1 or abs(sub * n - 1.0) > 1e-9:
            raise ValueError("control period must be an integer multiple of plant.dt_sim")
        return sub


@dataclass
class Trajectory:
    """Per-tick log. ``xi_p``/``xi_l`` are what the controller saw (measured);
    the ``*_true`` arrays are the noise-free errors."""

    data: dict[str, np.ndarray]
    xi_p_true: np.ndarray
    xi_l_true: np.ndarray
    rate_hz: float
    clamp_count: int
    singular_count: int

    def __len__(self) -> int:
        return len(self.data["t"])

    @property
    def t(self) -> np.ndarray:
        return self.data["t"]

    def as_matrix(self) -> np.ndarray:
        return np.column_stack([self.data[c] for c in TRAJECTORY_COLUMNS])


def zoh_input(u: np.ndarray | None, dt: float):
    """Zero-order-hold signal from lifted samples: ``u[k]`` on ``[k dt, (k+1) dt)``."""
    if u is None or len(u) == 0:
        return lambda t: 0.0
    u = np.asarray(u, dtype=float)
    n = len(u)

    def value(t: float) -> float:
        k = math.floor(t / dt + 1e-9)
        return float(u[k]) if 0 <= k < n else 0.0

    return value


def initial_condition(setup: SimSetup) -> pl.FlightState:
    prof = setup.profile
    speed, thrust = pl.trim_level(setup.plant, prof.theta_level, setup.speed_guess)
    st = pl.initial_state(setup.plant, prof.theta_level, prof.p_zd + setup.altitude_offset, speed,
                          thrust, wind_y=setup.disturbance.wind(0.0)[1])
    st.x[1] = prof.p_yd + setup.lateral_offset
    return st


def run_flight(setup: SimSetup, u_ilc: np.ndarray | None = None, ilc_dt: float = 0.1,
               iteration: int = 0) -> Trajectory:
    """Fly one maneuver. ``iteration`` decorrelates the non-repetitive noise across ILC runs."""
    prof = setup.profile
    if prof.duration <= 0:
        raise EmptyTrajectoryError("maneuver duration is zero: empty trajectory")
    rate = setup.controller.rate_hz
    n_ticks = int(round(prof.duration * rate))
    if n_ticks < 1:
        raise EmptyTrajectoryError("maneuver shorter than one control period: empty trajectory")
    sub = setup.substeps
    cfg = setup.plant
    par = cfg.params()
    dist_rng = np.random.default_rng([setup.disturbance.seed, iteration, 1])
    noise_rng = np.random.default_rng([setup.noise_seed, iteration, 2])
    stream = pl.DisturbanceStream(setup.disturbance, dist_rng)
    u_of_t = zoh_input(u_ilc, ilc_dt)

    ctl = setup.controller
    controller = PositionController(
        gains=ctl.gains, lateral=LateralGain(ctl.k_l), profile=prof, g=cfg.g,
        a_l_max=ctl.a_l_max_g * cfg.g, theta_max=ctl.theta_max, min_axp=ctl.min_axp)

    state = initial_condition(setup)
    cmd = np.array([state.x[8], prof.theta_level, 0.0])
    rows = np.empty((n_ticks + 1, len(TRAJECTORY_COLUMNS)))
    xi_p_true = np.empty(n_ticks + 1)
    xi_l_true = np.empty(n_ticks + 1)
    dt_ctl = 1.0 / rate

    for k in range(n_ticks + 1):
        t = k * dt_ctl
        state.t = t
        if cfg.tau_att <= 0.0:
            # an ideal attitude loop already sits on the scheduled pitch at the tick
            state.x[6] = pitch_profile(t, prof)
        d = stream.sample(t)
        wind = setup.disturbance.wind(t)
        acc = pl.true_specific_accel(state, cmd, d, cfg, wind, par)
        meas = pl.measure(state, acc, cfg, noise_rng)
        u = u_of_t(t)
        out, err = controller.tick(t, meas.pz, meas.vz, meas.py, meas.accel,
                                   state.theta, state.eta, u)
        cmd = np.array([out.a_xd, out.theta_d, out.eta_d])
        x = state.x
        ax_act = cmd[0] if cfg.inner_loop == "ideal" else x[8]
        rows[k] = (t, x[0], x[1], x[2], x[3], x[4], x[5], x[6], x[7],
                   out.a_xd, ax_act, err.xi_p, err.xi_l, u)
        xi_p_true[k] = x[2] - prof.p_zd
        xi_l_true[k] = prof.p_yd - x[1]
        if k < n_ticks:
            state = pl.step(state, cmd, d, cfg, wind, cfg.dt_sim, sub, par)

    data = {c: rows[:, i].copy() for i, c in enumerate(TRAJECTORY_COLUMNS)}
    return Trajectory(data, xi_p_true, xi_l_true, rate, controller.clamp_count,
                      controller.singular_count)
