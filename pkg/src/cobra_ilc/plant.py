"""Truth-model simulator of the tail-sitter's translational flight.

The plant is deliberately richer than the controller's model: thrust goes
through an inner acceleration loop G(s), attitude follows a first-order lag,
a flat-plate aerodynamic model acts on the air-relative velocity, and an
unsensed acceleration bias plus sensor noise are layered on top. All integration
is fixed-step RK4 so a run is a pure function of (config, profile, seed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.optimize import fsolve

from . import _kernels as K
from .dynamics import G_DEFAULT, SpecificAcceleration, rotation_matrix

INNER_LOOPS = {
    "ideal": K.LOOP_IDEAL,
    "first_order": K.LOOP_FIRST_ORDER,
    "butterworth2": K.LOOP_BUTTERWORTH2,
}


class SimulationFault(RuntimeError):
    """Raised when the integrated state stops being finite."""

    def __init__(self, t: float, message: str = "non-finite plant state"):
        super().__init__(f"{message} at t={t:.6f} s")
        self.t = t


@dataclass(frozen=True)
class PlantConfig:
    mass: float = 1.8
    g: float = G_DEFAULT
    aero: bool = True
    rho: float = 1.225
    wing_area: float = 0.2
    cd0: float = 0.5
    k_va: float = 1.0
    crosswind_washout: float = 1.0
    inner_loop: str = "butterworth2"
    axial_aero: bool = True
    accel_bandwidth_hz: float = 7.2
    tau_att: float = 0.15
    dt_sim: float = 0.001
    std_alt: float = 0.05
    std_vel: float = 0.05
    std_lat: float = 0.05
    std_accel: float = 0.05

    def __post_init__(self):
        if self.mass <= 0:
            raise ValueError("plant.mass must be > 0")
        if self.dt_sim <= 0:
            raise ValueError("plant.dt_sim must be > 0")
        if self.accel_bandwidth_hz <= 0:
            raise ValueError("plant.accel_bandwidth_hz must be > 0")
        if self.k_va < 0:
            raise ValueError("plant.k_va must be >= 0")
        if self.tau_att < 0:
            raise ValueError("plant.tau_att must be >= 0")
        if self.crosswind_washout < 0:
            raise ValueError("plant.crosswind_washout must be >= 0")
        if self.inner_loop not in INNER_LOOPS:
            raise ValueError(f"plant.inner_loop must be one of {sorted(INNER_LOOPS)}")
        for name in ("std_alt", "std_vel", "std_lat", "std_accel", "cd0", "rho", "wing_area"):
            if getattr(self, name) < 0:
                raise ValueError(f"plant.{name} must be >= 0")

    @property
    def aero_scale(self) -> float:
        """``rho S / (2 m)``: dynamic pressure to specific force, per unit coefficient."""
        return 0.5 * self.rho * self.wing_area / self.mass

    @property
    def omega_n(self) -> float:
        return 2.0 * math.pi * self.accel_bandwidth_hz

    def params(self) -> np.ndarray:
        p = np.zeros(K.NPAR)
        p[K.P_G] = self.g
        p[K.P_AERO] = 1.0 if self.aero else 0.0
        p[K.P_SCALE] = self.aero_scale
        p[K.P_CD0] = self.cd0
        p[K.P_KVA] = self.k_va
        p[K.P_LOOP] = INNER_LOOPS[self.inner_loop]
        p[K.P_WN] = self.omega_n
        p[K.P_ZETA] = 1.0 / math.sqrt(2.0)
        p[K.P_TAU_ATT] = self.tau_att
        p[K.P_WASHOUT] = self.crosswind_washout
        p[K.P_AXIAL] = 1.0 if self.axial_aero else 0.0
        return p


@dataclass(frozen=True)
class Pulse:
    """Raised-cosine pulse of a 3-vector (inertial axes)."""

    start: float
    duration: float
    vector: tuple[float, float, float]

    def value(self, t: float) -> np.ndarray:
        if self.duration <= 0 or not (self.start <= t <= self.start + self.duration):
            return np.zeros(3)
        shape = 0.5 * (1.0 - math.cos(2.0 * math.pi * (t - self.start) / self.duration))
        return shape * np.asarray(self.vector, dtype=float)


@dataclass(frozen=True)
class DisturbanceProfile:
    """What the environment does to the vehicle, identical on every trial except the seeded part.

    ``bias_pulses`` form the repetitive acceleration bias (m/s^2, inertial):
    it moves the vehicle but is not sensed by the accelerometer, so the
    feedforward cannot cancel it. ``stochastic_std`` adds white bias drawn
    from ``seed``. ``wind_pulses`` and the crosswind step are air-mass
    velocities (m/s) acting through the aerodynamics.
    """

    seed: int = 0
    bias_pulses: tuple[Pulse, ...] = ()
    stochastic_std: float = 0.0
    wind_pulses: tuple[Pulse, ...] = ()
    crosswind_speed: float = 0.0
    crosswind_time: float = 0.0

    def repetitive(self, t: float) -> np.ndarray:
        d = np.zeros(3)
        for p in self.bias_pulses:
            d += p.value(t)
        return d

    def wind(self, t: float) -> np.ndarray:
        w = np.zeros(3)
        for p in self.wind_pulses:
            w += p.value(t)
        if self.crosswind_speed != 0.0 and t >= self.crosswind_time:
            w[1] += self.crosswind_speed
        return w


class DisturbanceStream:
    """Per-tick disturbance sampler; the stochastic part is drawn from its own seeded stream."""

    def __init__(self, profile: DisturbanceProfile, rng: np.random.Generator):
        self.profile = profile
        self._rng = rng

    def sample(self, t: float) -> np.ndarray:
        d = self.profile.repetitive(t)
        if self.profile.stochastic_std > 0:
            d = d + self._rng.normal(0.0, self.profile.stochastic_std, 3)
        return d


@dataclass
class FlightState:
    """Full truth state; controllers only ever see it through :func:`measure`."""

    t: float
    x: np.ndarray = field(repr=False)

    @property
    def position(self) -> np.ndarray:
        return self.x[0:3]

    @property
    def velocity(self) -> np.ndarray:
        return self.x[3:6]

    @property
    def theta(self) -> float:
        return float(self.x[6])

    @property
    def eta(self) -> float:
        return float(self.x[7])

    @property
    def actual_ax(self) -> float:
        return float(self.x[8])

    def copy(self) -> "FlightState":
        return FlightState(self.t, self.x.copy())


class Measurement(NamedTuple):
    pz: float
    vz: float
    py: float
    vy: float
    accel: np.ndarray  # body-frame specific acceleration


def _rk4_linear(a: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
    """RK4 one-step maps for ``x' = A x + b u`` with u held: ``x+ = Phi x + Gam b u``."""
    n = a.shape[0]
    eye = np.eye(n)
    a2 = a @ a
    a3 = a2 @ a
    phi = eye + h * a + h**2 / 2 * a2 + h**3 / 6 * a3 + h**4 / 24 * (a3 @ a)
    gam = h * eye + h**2 / 2 * a + h**3 / 6 * a2 + h**4 / 24 * a3
    return phi, gam


def _filter_matrices(cfg: PlantConfig):
    wn = cfg.omega_n
    if cfg.inner_loop == "butterworth2":
        zeta = 1.0 / math.sqrt(2.0)
        a = np.array([[0.0, 1.0], [-wn * wn, -2.0 * zeta * wn]])
        b = np.array([0.0, wn * wn])
    elif cfg.inner_loop == "first_order":
        a = np.array([[-wn, 0.0], [0.0, 0.0]])
        b = np.array([wn, 0.0])
    else:
        return None
    return a, b


def inner_loop_accel(a_xd: float, filt: np.ndarray, cfg: PlantConfig, dt: float | None = None):
    """Advance the inner acceleration loop by ``dt`` with ``a_xd`` held.

    ``filt`` is ``(a_x, a_x')``. Uses the same RK4 realization as the full
    plant, so the filter evolves identically standalone or embedded.
    Returns ``(actual a_x after the step, new filter state)``.
    """
    dt = cfg.dt_sim if dt is None else dt
    mats = _filter_matrices(cfg)
    if mats is None:
        return float(a_xd), np.array([a_xd, 0.0])
    a, b = mats
    phi, gam = _rk4_linear(a, dt)
    new = phi @ np.asarray(filt, dtype=float) + gam @ b * a_xd
    return float(new[0]), new


def attitude_lag(commanded: Sequence[float], actual: Sequence[float], dt: float, tau: float) -> np.ndarray:
    """First-order lag per angle with time constant ``tau`` (exact tracking when 0)."""
    commanded = np.asarray(commanded, dtype=float)
    if tau <= 0:
        return commanded.copy()
    phi, _ = _rk4_linear(np.array([[-1.0 / tau]]), dt)
    keep = phi[0, 0]
    return keep * np.asarray(actual, dtype=float) + (1.0 - keep) * commanded


def angle_of_attack(velocity_rel: np.ndarray, theta: float, eta: float) -> tuple[float, float, float, float]:
    """``(alpha, u, v, w)``: angle of attack and the body-axis air-relative velocity."""
    r = rotation_matrix(theta, eta)
    vb = r.T @ np.asarray(velocity_rel, dtype=float)
    return math.atan2(vb[2], vb[0]), float(vb[0]), float(vb[1]), float(vb[2])


def flat_plate_coefficients(alpha: float, cd0: float) -> tuple[float, float]:
    return 2.0 * math.sin(alpha) * math.cos(alpha), cd0 + 2.0 * math.sin(alpha) ** 2


def aero_specific_acceleration(velocity, theta: float, eta: float, cfg: PlantConfig,
                               wind=(0.0, 0.0, 0.0), lateral_wind: float | None = None) -> SpecificAcceleration:
    """Aerodynamic specific force in body axes, written with lift and drag coefficients.

    In the body x-z plane, flat-plate lift acts normal to the relative wind
    and drag opposes it, with dynamic pressure from the full airspeed.
    Sideslip adds skin friction ``-k cd0 |v| v_y`` plus the linear damping
    ``-k_va (v_y - w_y)``. ``lateral_wind`` overrides ``w_y`` everywhere
    (the plant passes the washed-out wind).
    """
    wind = np.asarray(wind, dtype=float).copy()
    if lateral_wind is not None:
        wind[1] = lateral_wind
    v_rel = np.asarray(velocity, dtype=float) - wind
    ay = -cfg.k_va * (float(velocity[1]) - float(wind[1]))
    if not cfg.aero:
        return SpecificAcceleration(0.0, ay, 0.0)
    alpha, u, v, w = angle_of_attack(v_rel, theta, eta)
    speed = math.sqrt(u * u + v * v + w * w)
    in_plane = math.hypot(u, w)
    if speed == 0.0:
        return SpecificAcceleration(0.0, ay, 0.0)
    ay -= cfg.aero_scale * cfg.cd0 * speed * v
    if in_plane == 0.0:
        return SpecificAcceleration(0.0, ay, 0.0)
    cl, cd = flat_plate_coefficients(alpha, cfg.cd0)
    q = cfg.aero_scale * speed * in_plane
    # unit vectors in body (x, z): drag along -v_rel, lift rotated +90 deg toward -z
    drag_dir = (-u / in_plane, -w / in_plane)
    lift_dir = (w / in_plane, -u / in_plane)
    ax = q * (cl * lift_dir[0] + cd * drag_dir[0])
    az = q * (cl * lift_dir[1] + cd * drag_dir[1])
    return SpecificAcceleration(ax, ay, az)


def initial_state(cfg: PlantConfig, theta: float, altitude_pz: float, speed: float,
                  thrust: float, wind_y: float = 0.0) -> FlightState:
    x = np.zeros(K.NX)
    x[2] = altitude_pz
    x[3] = speed
    x[6] = theta
    x[8] = thrust
    x[10] = wind_y
    return FlightState(0.0, x)


def trim_level(cfg: PlantConfig, theta: float, speed_guess: float = 15.0,
               speed_no_aero: float = 15.0) -> tuple[float, float]:
    """Steady wings-level flight at pitch ``theta``: returns ``(speed, thrust)``.

    Without aerodynamics only the vertical balance can be met; the given
    ``speed_no_aero`` is used and thrust cancels gravity.
    """
    ct = math.cos(theta)
    if not cfg.aero:
        return speed_no_aero, cfg.g / ct

    par = cfg.params()
    zero3 = np.zeros(3)

    def residual(z):
        speed, thrust = z
        st = initial_state(cfg, theta, 0.0, speed, thrust)
        dx = np.empty(K.NX)
        K.plant_rhs(st.x, np.array([thrust, theta, 0.0]), par, zero3, zero3, dx)
        return [dx[3], dx[5]]

    sol, info, ier, msg = fsolve(residual, [speed_guess, cfg.g], full_output=True)
    if ier != 1 or sol[0] <= 0:
        raise ValueError(f"no level-flight trim at theta={math.degrees(theta):.1f} deg: {msg}")
    return float(sol[0]), float(sol[1])


def _check(state: FlightState) -> FlightState:
    if not np.all(np.isfinite(state.x)):
        raise SimulationFault(state.t)
    return state


def step(state: FlightState, commands: Sequence[float], disturbance: np.ndarray, cfg: PlantConfig,
         wind: np.ndarray | None = None, dt: float | None = None, n_steps: int = 1,
         params: np.ndarray | None = None) -> FlightState:
    """Advance the truth plant ``n_steps`` RK4 steps of ``dt`` with commands held.

    ``commands`` is ``(a_xd, theta_d, eta_d)``; ``disturbance`` is the
    unsensed inertial acceleration bias; ``wind`` the inertial wind velocity.
    """
    dt = cfg.dt_sim if dt is None else dt
    par = cfg.params() if params is None else params
    w = np.zeros(3) if wind is None else np.asarray(wind, dtype=float)
    cmd = np.asarray(commands, dtype=float)
    x = K.rk4_advance(state.x, cmd, par, np.asarray(disturbance, dtype=float), w, n_steps, dt)
    return _check(FlightState(state.t + n_steps * dt, x))


def true_specific_accel(state: FlightState, commands: Sequence[float], disturbance: np.ndarray,
                        cfg: PlantConfig, wind: np.ndarray | None = None,
                        params: np.ndarray | None = None) -> np.ndarray:
    par = cfg.params() if params is None else params
    w = np.zeros(3) if wind is None else np.asarray(wind, dtype=float)
    out = np.empty(3)
    K.body_specific_accel(state.x, np.asarray(commands, dtype=float), par,
                          np.asarray(disturbance, dtype=float), w, out)
    return out


def measure(state: FlightState, accel_true: np.ndarray, cfg: PlantConfig,
            rng: np.random.Generator) -> Measurement:
    """Truth plus seeded Gaussian noise; exactly the truth when the stds are zero."""

    def noisy(value, std, size=None):
        if std <= 0:
            return value
        return value + rng.normal(0.0, std, size)

    return Measurement(
        pz=float(noisy(state.x[2], cfg.std_alt)),
        vz=float(noisy(state.x[5], cfg.std_vel)),
        py=float(noisy(state.x[1], cfg.std_lat)),
        vy=float(noisy(state.x[4], cfg.std_vel)),
        accel=np.asarray(noisy(np.asarray(accel_true, dtype=float), cfg.std_accel, 3), dtype=float),
    )
