"""Frames, the two-angle attitude parameterization and the acceleration model.

Conventions: inertial frame is NED, body frame is x = nose, y = right wing,
z = belly. The attitude is ``R = R0 @ Ry(theta) @ Rz(eta)`` where ``R0`` puts
the nose straight up with the belly facing the flight path (+x inertial).
All angles are radians.

Every function accepts scalars or numpy arrays (broadcast elementwise).
"""

from typing import NamedTuple

import numpy as np

G_DEFAULT = 9.81

R0 = np.array([[0.0, 0.0, 1.0],
               [0.0, 1.0, 0.0],
               [-1.0, 0.0, 0.0]])


class AttitudeAngles(NamedTuple):
    theta: float
    eta: float


class SpecificAcceleration(NamedTuple):
    ax: float
    ay: float
    az: float


class InertialKinematics(NamedTuple):
    position: np.ndarray
    velocity: np.ndarray


class VirtualControls(NamedTuple):
    a_xp: float
    a_l: float


class BodyXCommand(NamedTuple):
    a_xd: float
    eta_d: float
    clamped: bool


def rot_y(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_matrix(theta, eta):
    """Body-to-inertial rotation ``R0 Ry(theta) Rz(eta)`` (scalar angles).

    Written out::

        [[-s_t c_e,  s_t s_e,  c_t],
         [     s_e,      c_e,    0],
         [-c_t c_e,  c_t s_e, -s_t]]
    """
    ct, st = np.cos(theta), np.sin(theta)
    ce, se = np.cos(eta), np.sin(eta)
    return np.array([[-st * ce, st * se, ct],
                     [se, ce, 0.0],
                     [-ct * ce, ct * se, -st]])


def inertial_acceleration(ax, ay, az, theta, eta, g=G_DEFAULT):
    """Lateral and vertical inertial acceleration from body specific acceleration.

    Returns ``(py_ddot, pz_ddot)``; the inertial x row is not part of the
    reduced model.
    """
    ct, st = np.cos(theta), np.sin(theta)
    ce, se = np.cos(eta), np.sin(eta)
    py_ddot = ax * se + ay * ce
    pz_ddot = g - ax * ct * ce + ay * ct * se - az * st
    return py_ddot, pz_ddot


def decompose_body_x(ax, eta):
    """Split body-x acceleration into altitude-plane and lateral components."""
    return VirtualControls(a_xp=ax * np.cos(eta), a_l=ax * np.sin(eta))


def compose_commands(a_xpd, a_ld, min_axp=0.1):
    """Combine the two virtual controls into a body-x command and ``eta_d``.

    A non-positive (or tiny) ``a_xpd`` would put ``eta_d`` outside
    (-pi/2, pi/2); it is clamped to ``min_axp`` and the result is flagged.
    """
    clamped = a_xpd < min_axp
    if clamped:
        a_xpd = min_axp
    a_xd = float(np.hypot(a_xpd, a_ld))
    eta_d = float(np.arctan(a_ld / a_xpd))
    return BodyXCommand(a_xd, eta_d, bool(clamped))
