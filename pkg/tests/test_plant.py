import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import signal
from scipy.integrate import solve_ivp

from cobra_ilc import _kernels as K
from cobra_ilc import plant as pl
from cobra_ilc.flight import run_flight

from conftest import GAINS, ideal_plant, make_setup, short_profile

G = 9.81


def _filter_response(cfg, command, dt=1e-4):
    """Drive the standalone inner loop with a sampled command, one value per step."""
    filt = np.zeros(2)
    out = np.empty(len(command))
    for k, c in enumerate(command):
        out[k], filt = pl.inner_loop_accel(c, filt, cfg, dt)
    return out


# inner acceleration loop

@pytest.mark.parametrize("kind", ["butterworth2", "first_order", "ideal"])
def test_inner_loop_unity_dc_gain(kind):
    cfg = pl.PlantConfig(inner_loop=kind)
    y = _filter_response(cfg, np.full(20_000, 3.7), dt=1e-4)
    assert y[-1] == pytest.approx(3.7, abs=1e-6)


def _rise_time(t, y, final):
    return t[np.argmax(y >= 0.9 * final)] - t[np.argmax(y >= 0.1 * final)]


def test_inner_loop_rise_time_matches_analytic_step():
    cfg = pl.PlantConfig()
    dt = 1e-4
    t = dt * np.arange(1, 3001)
    y = _filter_response(cfg, np.ones(len(t)), dt)
    wn = 2 * math.pi * 7.2
    _, y_ref = signal.step(signal.TransferFunction([wn * wn], [1.0, math.sqrt(2) * wn, wn * wn]),
                           T=np.concatenate([[0.0], t]))
    y_ref = y_ref[1:]
    rise = _rise_time(t, y, 1.0)
    assert rise == pytest.approx(_rise_time(t, y_ref, 1.0), abs=2 * dt)
    assert 0.05 * 0.7 <= rise <= 0.05 * 1.3
    np.testing.assert_allclose(y, y_ref, atol=1e-6)


@pytest.mark.parametrize("kind, expected_deg", [
    ("butterworth2", -math.degrees(math.atan2(math.sqrt(2) * 0.24 / 7.2, 1 - (0.24 / 7.2) ** 2))),
    ("first_order", -math.degrees(math.atan(0.24 / 7.2))),
])
def test_inner_loop_phase_at_outer_crossover(kind, expected_deg):
    cfg = pl.PlantConfig(inner_loop=kind)
    dt = 1e-3
    w = 2 * math.pi * 0.24
    t = dt * np.arange(int(20 / dt))
    # command held on [t_k, t_k + dt): evaluate the input mid-step to cancel the hold delay
    y = _filter_response(cfg, np.sin(w * (t + 0.5 * dt)), dt)
    t_out = t + dt
    keep = t_out > 10.0
    basis = np.column_stack([np.sin(w * t_out[keep]), np.cos(w * t_out[keep])])
    (a, b), *_ = np.linalg.lstsq(basis, y[keep], rcond=None)
    phase_deg = math.degrees(math.atan2(b, a))
    assert phase_deg == pytest.approx(expected_deg, abs=0.05)
    assert -phase_deg <= 3.0


# attitude lag

def test_attitude_lag_zero_tau_is_exact():
    out = pl.attitude_lag([0.3, -0.2], [1.0, 1.0], 0.004, 0.0)
    np.testing.assert_array_equal(out, [0.3, -0.2])


def test_attitude_lag_step_reaches_63_percent_at_tau():
    dt, tau = 1e-3, 0.15
    actual = np.zeros(2)
    for _ in range(int(round(tau / dt))):
        actual = pl.attitude_lag([1.0, -1.0], actual, dt, tau)
    assert actual[0] == pytest.approx(1 - math.exp(-1), rel=0.01)
    assert actual[1] == pytest.approx(-(1 - math.exp(-1)), rel=0.01)


def test_attitude_lag_ramp_steady_state_lag():
    dt, tau, slope = 1e-3, 0.15, 0.4
    actual = np.zeros(1)
    t = 0.0
    for _ in range(3000):
        # command held over the step, sampled mid-step
        actual = pl.attitude_lag([slope * (t + 0.5 * dt)], actual, dt, tau)
        t += dt
    assert slope * t - actual[0] == pytest.approx(slope * tau, rel=1e-3)


# aerodynamics

def test_zero_airspeed_gives_zero_aero():
    a = pl.aero_specific_acceleration([0.0, 0.0, 0.0], -1.0, 0.2, pl.PlantConfig())
    assert tuple(a) == (0.0, 0.0, 0.0)


def test_flat_plate_coefficients_at_zero_alpha():
    assert pl.flat_plate_coefficients(0.0, 0.4) == (0.0, 0.4)


def test_lateral_velocity_is_damped():
    cfg = pl.PlantConfig(cd0=0.0, k_va=1.3)
    a = pl.aero_specific_acceleration([0.0, 2.0, 0.0], 0.0, 0.0, cfg)
    assert a.ay == pytest.approx(-1.3 * 2.0, abs=1e-12)
    assert (a.ax, a.az) == pytest.approx((0.0, 0.0), abs=1e-12)


def test_lateral_skin_friction_adds_to_damping():
    cfg = pl.PlantConfig(cd0=0.5, k_va=1.3)
    a = pl.aero_specific_acceleration([0.0, 2.0, 0.0], 0.0, 0.0, cfg)
    assert a.ay == pytest.approx(-1.3 * 2.0 - cfg.aero_scale * 0.5 * 2.0 * 2.0, abs=1e-12)


def test_level_flight_lift_opposes_gravity():
    # level pitch -82 deg, flying +x: belly faces the flow, pressure force points up (-z inertial)
    cfg = pl.PlantConfig()
    theta = math.radians(-82.0)
    a = pl.aero_specific_acceleration([15.0, 0.0, 0.0], theta, 0.0, cfg)
    r = pl.rotation_matrix(theta, 0.0)
    assert (r @ np.asarray(a))[2] < 0.0


finite = st.floats(-30.0, 30.0, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(finite, finite, finite, st.floats(-1.5, 1.5), st.floats(-1.2, 1.2), finite, finite, finite)
def test_kernel_matches_lift_drag_form(vx, vy, vz, theta, eta, wx, wy, wz):
    cfg = pl.PlantConfig(crosswind_washout=1.0)
    par = cfg.params()
    x = np.zeros(K.NX)
    x[3:6] = (vx, vy, vz)
    x[6], x[7] = theta, eta
    x[10] = 0.25 * wy  # washout filter state
    out = np.empty(3)
    K.body_specific_accel(x, np.array([0.0, theta, eta]), par, np.zeros(3), np.array([wx, wy, wz]), out)
    ref = pl.aero_specific_acceleration([vx, vy, vz], theta, eta, cfg, (wx, wy, wz), lateral_wind=0.75 * wy)
    np.testing.assert_allclose(out, ref, rtol=1e-10, atol=1e-10)


# integration

def test_hover_is_an_equilibrium():
    cfg = pl.PlantConfig(aero=False, tau_att=0.15)
    state = pl.initial_state(cfg, 0.0, -10.0, 0.0, G)
    end = pl.step(state, (G, 0.0, 0.0), np.zeros(3), cfg, n_steps=1000)
    np.testing.assert_allclose(end.position, [0.0, 0.0, -10.0], atol=1e-9)
    assert end.t == pytest.approx(1.0)


def test_free_fall():
    cfg = pl.PlantConfig(aero=False, inner_loop="ideal", k_va=0.0)
    state = pl.initial_state(cfg, 0.0, 0.0, 0.0, 0.0)
    end = pl.step(state, (0.0, 0.0, 0.0), np.zeros(3), cfg, n_steps=1000)
    assert end.position[2] == pytest.approx(0.5 * G * 1.0**2, abs=1e-9)
    assert end.velocity[2] == pytest.approx(G, abs=1e-9)


def test_level_trim_holds():
    cfg = pl.PlantConfig()
    theta = math.radians(-82.0)
    speed, thrust = pl.trim_level(cfg, theta)
    assert speed > 0 and thrust > 0
    state = pl.initial_state(cfg, theta, -30.0, speed, thrust)
    end = pl.step(state, (thrust, theta, 0.0), np.zeros(3), cfg, n_steps=1000)
    assert abs(end.velocity[2]) < 1e-8
    assert end.velocity[0] == pytest.approx(speed, abs=1e-8)


def test_rk4_fourth_order_convergence():
    cfg = pl.PlantConfig()
    theta = math.radians(-70.0)
    state = pl.initial_state(cfg, theta, -30.0, 12.0, 4.0)
    state.x[4] = 1.0
    cmd = (9.0, math.radians(-40.0), 0.3)
    wind = np.array([-1.0, 2.0, 0.5])

    def final(h):
        return pl.step(state, cmd, np.array([0.0, 0.0, 0.3]), cfg, wind, h, int(round(1.0 / h))).x[:6]

    x1, x2, x3 = final(0.004), final(0.002), final(0.001)
    ratio = np.linalg.norm(x1 - x2) / np.linalg.norm(x2 - x3)
    assert 12.0 < ratio < 20.0


def test_non_finite_state_raises_fault_with_time():
    cfg = pl.PlantConfig()
    state = pl.initial_state(cfg, -1.0, -30.0, 15.0, 2.0)
    state.t = 0.5
    state.x[5] = np.nan
    with pytest.raises(pl.SimulationFault) as exc:
        pl.step(state, (2.0, -1.0, 0.0), np.zeros(3), cfg)
    assert exc.value.t == pytest.approx(0.501)


# measurement and disturbance

def test_noise_free_measurement_is_truth():
    cfg = ideal_plant()
    state = pl.initial_state(cfg, -1.0, -30.0, 15.0, 2.0)
    state.x[1], state.x[4] = 0.4, -0.2
    m = pl.measure(state, np.array([1.0, 2.0, 3.0]), cfg, np.random.default_rng(0))
    assert (m.pz, m.vz, m.py, m.vy) == (-30.0, 0.0, 0.4, -0.2)
    np.testing.assert_array_equal(m.accel, [1.0, 2.0, 3.0])


def test_altitude_noise_std():
    cfg = pl.PlantConfig(std_alt=0.1)
    state = pl.initial_state(cfg, -1.0, 0.0, 15.0, 2.0)
    rng = np.random.default_rng(123)
    z = np.array([pl.measure(state, np.zeros(3), cfg, rng).pz for _ in range(10_000)])
    assert 0.095 <= z.std(ddof=1) <= 0.105


def test_measurement_noise_is_seeded():
    cfg = pl.PlantConfig()
    state = pl.initial_state(cfg, -1.0, 0.0, 15.0, 2.0)

    def draws(seed):
        rng = np.random.default_rng(seed)
        return [pl.measure(state, np.zeros(3), cfg, rng).pz for _ in range(50)]

    assert draws(4) == draws(4)
    assert draws(4) != draws(5)


def test_disturbance_stream_is_seeded():
    prof = pl.DisturbanceProfile(seed=3, bias_pulses=(pl.Pulse(0.0, 1.0, (0, 0, 1)),), stochastic_std=0.1)

    def seq():
        stream = pl.DisturbanceStream(prof, np.random.default_rng([prof.seed, 0, 1]))
        return np.array([stream.sample(0.01 * k) for k in range(100)])

    np.testing.assert_array_equal(seq(), seq())


def test_pulse_shape():
    p = pl.Pulse(2.0, 4.0, (0.0, 0.0, 0.8))
    np.testing.assert_allclose(p.value(4.0), [0, 0, 0.8])
    np.testing.assert_allclose(p.value(2.0), 0.0, atol=1e-15)
    np.testing.assert_array_equal(p.value(7.0), 0.0)


def test_crosswind_step():
    prof = pl.DisturbanceProfile(crosswind_speed=2.0, crosswind_time=1.5)
    assert prof.wind(1.49)[1] == 0.0
    assert prof.wind(1.5)[1] == 2.0


def test_plant_config_rejects_bad_values():
    for bad in (dict(mass=0.0), dict(dt_sim=0.0), dict(accel_bandwidth_hz=-1.0), dict(inner_loop="pid")):
        with pytest.raises(ValueError):
            pl.PlantConfig(**bad)


# closed loop against the nominal error model

def _nominal_oracle(t, xi0, dz=None):
    """xi'' = -k_p xi - k_v xi' + d_z(t), integrated independently."""
    def rhs(tt, s):
        d = 0.0 if dz is None else dz(tt)
        return [s[1], -GAINS.k_p * s[0] - GAINS.k_v * s[1] + d]

    sol = solve_ivp(rhs, (t[0], t[-1]), [xi0, 0.0], t_eval=t, rtol=1e-10, atol=1e-12, max_step=0.01)
    return sol.y[0]


def test_nominal_closed_loop_matches_error_model_from_offset():
    setup = make_setup(plant=ideal_plant(), profile=short_profile(settle=6.0), altitude_offset=1.0)
    traj = run_flight(setup)
    ref = _nominal_oracle(traj.t, 1.0)
    err = np.sqrt(np.mean((traj.xi_p_true - ref) ** 2))
    assert err <= 0.02 * np.sqrt(np.mean(ref**2))


def test_nominal_closed_loop_matches_error_model_with_bias():
    pulse = pl.Pulse(1.0, 2.0, (0.0, 0.0, 0.8))
    setup = make_setup(plant=ideal_plant(), profile=short_profile(settle=6.0),
                       disturbance=pl.DisturbanceProfile(bias_pulses=(pulse,)))
    traj = run_flight(setup)
    ref = _nominal_oracle(traj.t, 0.0, lambda tt: pulse.value(tt)[2])
    err = np.sqrt(np.mean((traj.xi_p_true - ref) ** 2))
    assert err <= 0.02 * np.sqrt(np.mean(ref**2))


def test_flight_is_bit_deterministic():
    setup = make_setup(profile=short_profile())
    a, b = run_flight(setup), run_flight(setup)
    for col in a.data:
        np.testing.assert_array_equal(a.data[col], b.data[col])
    np.testing.assert_array_equal(a.xi_p_true, b.xi_p_true)


def test_flight_seed_changes_noise_only():
    setup = make_setup(profile=short_profile())
    other = dataclasses.replace(setup, noise_seed=9)
    a, b = run_flight(setup), run_flight(other)
    assert not np.array_equal(a.data["xi_p"], b.data["xi_p"])
    assert np.max(np.abs(a.xi_p_true - b.xi_p_true)) < 0.5
