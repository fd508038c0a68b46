"""Position control laws for the Cobra maneuver.

Altitude: model-inverting feedforward plus PD feedback, divided by cos(theta)
to get the altitude-plane thrust command. Lateral: proportional law whose
output tilts the thrust vector through eta. Both are composed into a single
body-x acceleration and desired (theta, eta).

Sign conventions (NED): ``xi_p = p_z - p_zd`` is positive when the vehicle is
*below* the desired altitude, so the PD term adds thrust.
``xi_l = p_yd - p_y`` is desired minus actual lateral position.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .dynamics import G_DEFAULT, compose_commands


class SingularityError(ValueError):
    """Pitch too close to +-90 deg to divide by cos(theta)."""


class AltitudeGains(NamedTuple):
    k_p: float
    k_v: float


class LateralGain(NamedTuple):
    k_l: float


class TrackingErrors(NamedTuple):
    xi_p: float
    xi_v: float
    xi_l: float


class Commands(NamedTuple):
    a_xd: float
    theta_d: float
    eta_d: float
    a_xpd: float
    a_ld: float
    clamped: bool
    singular: bool


@dataclass(frozen=True)
class ManeuverProfile:
    """Piecewise-linear pitch schedule at constant altitude along the x axis.

    ``theta_level`` is the signed level-flight pitch; a head-up moves theta
    toward zero by ``head_up`` (so ``theta_level=-82 deg, head_up=80 deg``
    peaks at -2 deg, i.e. nearly vertical).
    """

    theta_level: float = math.radians(-82.0)
    head_up: float = math.radians(80.0)
    lead_in: float = 2.0
    ramp_up: float = 4.0
    hold: float = 1.0
    ramp_down: float = 4.0
    settle: float = 3.0
    p_zd: float = -30.0
    p_yd: float = 0.0

    def __post_init__(self):
        if not (0.0 < abs(self.theta_level) < math.pi / 2):
            raise ValueError("maneuver.theta_level must satisfy 0 < |theta_level| < 90 deg")
        if not (0.0 < self.head_up <= abs(self.theta_level)):
            raise ValueError("maneuver.head_up must satisfy 0 < head_up <= |theta_level|")
        for name in ("lead_in", "ramp_up", "hold", "ramp_down", "settle"):
            if getattr(self, name) < 0:
                raise ValueError(f"maneuver.{name} must be >= 0")

    @property
    def duration(self) -> float:
        return self.lead_in + self.ramp_up + self.hold + self.ramp_down + self.settle

    @property
    def direction(self) -> float:
        return -math.copysign(1.0, self.theta_level)

    @property
    def theta_peak(self) -> float:
        return self.theta_level + self.direction * self.head_up


def pitch_profile(t, profile: ManeuverProfile):
    """Desired pitch at time ``t`` (scalar or array)."""
    p = profile
    knots_t = np.cumsum([0.0, p.lead_in, p.ramp_up, p.hold, p.ramp_down])
    knots_v = [p.theta_level, p.theta_level, p.theta_peak, p.theta_peak, p.theta_level]
    # np.interp needs strictly usable breakpoints; zero-length ramps collapse to steps
    out = np.interp(t, knots_t, knots_v)
    return float(out) if np.ndim(out) == 0 else out


def altitude_feedforward(pzdd_des: float, theta: float, eta: float, ay: float, az: float,
                         g: float = G_DEFAULT) -> float:
    """Thrust (times cos theta) that makes the vertical model track ``pzdd_des``."""
    return -pzdd_des + g - az * math.sin(theta) + ay * math.cos(theta) * math.sin(eta)


def altitude_feedback(errors: TrackingErrors, gains: AltitudeGains) -> float:
    return gains.k_p * errors.xi_p + gains.k_v * errors.xi_v


def altitude_command(a_ff: float, a_fb: float, u_ilc: float, theta: float,
                     theta_max: float = math.radians(87.0)) -> float:
    if abs(theta) >= theta_max:
        raise SingularityError(
            f"|theta|={math.degrees(abs(theta)):.2f} deg >= guard {math.degrees(theta_max):.2f} deg")
    return (a_ff + a_fb + u_ilc) / math.cos(theta)


def lateral_command(xi_l: float, gain: LateralGain, a_max: float = 0.5 * G_DEFAULT) -> float:
    return float(np.clip(gain.k_l * xi_l, -a_max, a_max))


@dataclass
class PositionController:
    """Stateful wrapper that chains the laws for one control tick.

    Owns the only controller state: the last valid altitude command (reused
    when the singularity guard trips) and counters of flagged ticks.
    """

    gains: AltitudeGains
    lateral: LateralGain
    profile: ManeuverProfile
    g: float = G_DEFAULT
    a_l_max: float = 0.5 * G_DEFAULT
    theta_max: float = math.radians(87.0)
    min_axp: float = 0.1
    clamp_count: int = 0
    singular_count: int = 0
    _last_axpd: float | None = None

    def errors(self, pz: float, vz: float, py: float) -> TrackingErrors:
        # constant-altitude maneuver: pdot_zd = pddot_zd = 0
        return TrackingErrors(xi_p=pz - self.profile.p_zd, xi_v=vz - 0.0, xi_l=self.profile.p_yd - py)

    def tick(self, t: float, pz: float, vz: float, py: float, accel: np.ndarray,
             theta: float, eta: float, u_ilc: float = 0.0) -> tuple[Commands, TrackingErrors]:
        err = self.errors(pz, vz, py)
        a_ld = lateral_command(err.xi_l, self.lateral, self.a_l_max)
        a_ff = altitude_feedforward(0.0, theta, eta, float(accel[1]), float(accel[2]), self.g)
        a_fb = altitude_feedback(err, self.gains)
        singular = False
        try:
            a_xpd = altitude_command(a_ff, a_fb, u_ilc, theta, self.theta_max)
            self._last_axpd = a_xpd
        except SingularityError:
            singular = True
            self.singular_count += 1
            a_xpd = self._last_axpd if self._last_axpd is not None else self.g
        cmd = compose_commands(a_xpd, a_ld, self.min_axp)
        if cmd.clamped:
            self.clamp_count += 1
        theta_d = pitch_profile(t, self.profile)
        return Commands(cmd.a_xd, theta_d, cmd.eta_d, a_xpd, a_ld, cmd.clamped, singular), err


def control_tick(t: float, pz: float, vz: float, py: float, accel, theta: float, eta: float,
                 profile: ManeuverProfile, gains: AltitudeGains, lateral: LateralGain,
                 u_ilc: Callable[[float], float] | float = 0.0, g: float = G_DEFAULT) -> Commands:
    """Stateless single tick; raises :class:`SingularityError` at the guard."""
    u = u_ilc(t) if callable(u_ilc) else u_ilc
    err = TrackingErrors(pz - profile.p_zd, vz, profile.p_yd - py)
    a_ld = lateral_command(err.xi_l, lateral, 0.5 * g)
    a_ff = altitude_feedforward(0.0, theta, eta, float(accel[1]), float(accel[2]), g)
    a_xpd = altitude_command(a_ff, altitude_feedback(err, gains), u, theta)
    cmd = compose_commands(a_xpd, a_ld)
    return Commands(cmd.a_xd, pitch_profile(t, profile), cmd.eta_d, a_xpd, a_ld, cmd.clamped, False)
