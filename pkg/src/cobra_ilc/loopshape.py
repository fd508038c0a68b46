"""Frequency-domain analysis: transfer functions, Bode data and stability margins."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .controllers import AltitudeGains

OMEGA_BAND = (1e-3, 1e3)
_GRID_POINTS = 4000
_REL_TOL = 1e-9


class PoleOnAxisError(ZeroDivisionError):
    pass


@dataclass(frozen=True)
class TransferFunction:
    """``num(s)/den(s) * exp(-s delay)``; coefficients in ascending powers of s."""

    num: tuple[float, ...]
    den: tuple[float, ...]
    delay: float = 0.0

    def __post_init__(self):
        num = tuple(float(c) for c in self.num)
        den = tuple(float(c) for c in self.den)
        if not all(math.isfinite(c) for c in num + den):
            raise ValueError("transfer function coefficients must be finite")
        if not any(c != 0.0 for c in den):
            raise ValueError("denominator is identically zero")
        if self.delay < 0:
            raise ValueError("delay must be >= 0")
        object.__setattr__(self, "num", _trim(num))
        object.__setattr__(self, "den", _trim(den))

    def with_delay(self, delay: float) -> "TransferFunction":
        return TransferFunction(self.num, self.den, self.delay + delay)

    def __mul__(self, other: "TransferFunction") -> "TransferFunction":
        return TransferFunction(tuple(np.polynomial.polynomial.polymul(self.num, other.num)),
                                tuple(np.polynomial.polynomial.polymul(self.den, other.den)),
                                self.delay + other.delay)


def _trim(c: tuple[float, ...]) -> tuple[float, ...]:
    c = list(c)
    while len(c) > 1 and c[-1] == 0.0:
        c.pop()
    return tuple(c) if c else (0.0,)


def altitude_loop(gains: AltitudeGains, delay: float = 0.0) -> TransferFunction:
    """Nominal outer loop ``(k_p + k_v s)/s^2``."""
    return TransferFunction((gains.k_p, gains.k_v), (0.0, 0.0, 1.0), delay)


def freq_response(tf: TransferFunction, omega):
    """Complex ``H(j omega)``; scalar or array ``omega`` (rad/s, > 0)."""
    w = np.asarray(omega, dtype=float)
    if np.any(w <= 0):
        raise ValueError("omega must be > 0")
    s = 1j * w
    num = np.polynomial.polynomial.polyval(s, tf.num)
    den = np.polynomial.polynomial.polyval(s, tf.den)
    if np.any(np.abs(den) < 1e-300):
        raise PoleOnAxisError("denominator vanishes on the imaginary axis")
    h = num / den * np.exp(-1j * w * tf.delay)
    return complex(h) if h.ndim == 0 else h


def _root_phase(roots: np.ndarray, w: np.ndarray) -> np.ndarray:
    # angle(jw - r), continuous in w: LHP/axis roots keep the principal branch,
    # RHP roots are taken in [0, 2pi) so they do not jump when w passes Im(r)
    total = np.zeros_like(w)
    for r in roots:
        ang = np.angle(1j * w - r)
        if r.real > 0:
            ang = np.mod(ang, 2 * np.pi)
        total = total + ang
    return total


def phase(tf: TransferFunction, omega) -> np.ndarray:
    """Continuous (unwrapped) phase in radians, built from the roots."""
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    zeros = np.polynomial.polynomial.polyroots(tf.num) if len(tf.num) > 1 else np.array([])
    poles = np.polynomial.polynomial.polyroots(tf.den) if len(tf.den) > 1 else np.array([])
    gain = tf.num[-1] / tf.den[-1]
    ph = np.angle(gain) + _root_phase(zeros, w) - _root_phase(poles, w) - w * tf.delay
    return ph if np.ndim(omega) else float(ph[0])


def magnitude(tf: TransferFunction, omega):
    return np.abs(freq_response(tf, omega))


@dataclass(frozen=True)
class MarginReport:
    crossover_hz: float | None
    phase_margin_deg: float
    delay_margin_s: float
    gain_margin_db: float
    phase_crossover_hz: float | None = None

    def as_dict(self) -> dict:
        return {
            "crossover_hz": self.crossover_hz,
            "phase_margin_deg": self.phase_margin_deg,
            "delay_margin_s": self.delay_margin_s,
            "gain_margin_db": self.gain_margin_db,
            "phase_crossover_hz": self.phase_crossover_hz,
        }


def _bisect(fun, lo: float, hi: float, rel_tol: float = _REL_TOL) -> float:
    f_lo = fun(lo)
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        f_mid = fun(mid)
        if (f_mid > 0) == (f_lo > 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
        if hi / lo - 1.0 <= rel_tol:
            break
    return math.sqrt(lo * hi)


def _grid(band=OMEGA_BAND, n=_GRID_POINTS) -> np.ndarray:
    return np.logspace(math.log10(band[0]), math.log10(band[1]), n)


def gain_crossovers(tf: TransferFunction, band=OMEGA_BAND) -> list[float]:
    w = _grid(band)
    lm = np.log(magnitude(tf, w))
    out = []
    for i in np.flatnonzero(np.sign(lm[:-1]) != np.sign(lm[1:])):
        out.append(_bisect(lambda x: math.log(abs(freq_response(tf, x))), w[i], w[i + 1]))
    return out


def phase_crossovers(tf: TransferFunction, band=OMEGA_BAND) -> list[float]:
    w = _grid(band)

    def wrapped(x):
        p = np.asarray(phase(tf, x)) + np.pi
        return (p + np.pi) % (2 * np.pi) - np.pi

    v = wrapped(w)
    out = []
    for i in np.flatnonzero(np.sign(v[:-1]) != np.sign(v[1:])):
        if abs(v[i] - v[i + 1]) < np.pi:  # a genuine crossing, not a branch jump
            out.append(_bisect(lambda x: float(wrapped(x)), w[i], w[i + 1]))
    return out


def margins(tf: TransferFunction, band=OMEGA_BAND) -> MarginReport:
    """Gain-crossover frequency, phase/delay margins and gain margin.

    With several gain crossovers the one with the smallest phase margin is
    reported. No crossover in ``band`` gives an empty crossover and infinite
    margins.
    """
    pcs = phase_crossovers(tf, band)
    gm = math.inf
    pc_hz = None
    for w in pcs:
        g = -20.0 * math.log10(abs(freq_response(tf, w)))
        if g < gm:
            gm, pc_hz = g, w / (2 * math.pi)
    crossings = gain_crossovers(tf, band)
    if not crossings:
        return MarginReport(None, math.inf, math.inf, gm, pc_hz)
    best = None
    for w in crossings:
        pm = math.degrees(phase(tf, w)) + 180.0
        pm = (pm + 180.0) % 360.0 - 180.0
        if best is None or pm < best[1]:
            best = (w, pm)
    w, pm = best
    dm = math.radians(pm) / w if pm > 0 else 0.0
    return MarginReport(w / (2 * math.pi), pm, dm, gm, pc_hz)


def derive_gains(bandwidth_hz: float, phase_margin_deg: float) -> AltitudeGains:
    """PD gains putting the crossover of ``(k_p + k_v s)/s^2`` at the target with the target margin."""
    if not (0.0 < phase_margin_deg < 90.0):
        raise ValueError("phase margin must be in (0, 90) degrees")
    if bandwidth_hz <= 0:
        raise ValueError("bandwidth must be > 0")
    wc = 2.0 * math.pi * bandwidth_hz
    pm = math.radians(phase_margin_deg)
    return AltitudeGains(k_p=wc * wc * math.cos(pm), k_v=wc * math.sin(pm))


def inner_loop_tf(kind: str, bandwidth_hz: float) -> TransferFunction:
    """Unity-DC-gain model of the inner acceleration loop."""
    wn = 2.0 * math.pi * bandwidth_hz
    if kind == "butterworth2":
        return TransferFunction((wn * wn,), (wn * wn, math.sqrt(2.0) * wn, 1.0))
    if kind == "first_order":
        return TransferFunction((wn,), (wn, 1.0))
    if kind == "ideal":
        return TransferFunction((1.0,), (1.0,))
    raise ValueError(f"unknown inner loop model {kind!r}")


def bandwidth_3db(tf: TransferFunction, band=OMEGA_BAND) -> float | None:
    """Lowest frequency (Hz) where |G| drops 3 dB below its DC gain."""
    dc = abs(np.polynomial.polynomial.polyval(0.0, tf.num) / np.polynomial.polynomial.polyval(0.0, tf.den))
    target = dc / math.sqrt(2.0)
    w = _grid((band[0], band[1] * 10))
    v = magnitude(tf, w) - target
    idx = np.flatnonzero((v[:-1] > 0) & (v[1:] <= 0))
    if idx.size == 0:
        return None
    i = idx[0]
    return _bisect(lambda x: abs(freq_response(tf, x)) - target, w[i], w[i + 1]) / (2 * math.pi)


@dataclass(frozen=True)
class InnerLoopReport:
    bandwidth_hz: float | None
    phase_at_outer_deg: float
    outer_crossover_hz: float
    lag_ok: bool
    loop_margins: MarginReport | None

    def as_dict(self) -> dict:
        return {
            "bandwidth_hz": self.bandwidth_hz,
            "phase_at_outer_crossover_deg": self.phase_at_outer_deg,
            "outer_crossover_hz": self.outer_crossover_hz,
            "lag_within_3deg": self.lag_ok,
            "loop_margins": None if self.loop_margins is None else self.loop_margins.as_dict(),
        }


def inner_loop_report(g: TransferFunction, outer_crossover_hz: float = 0.24,
                      max_lag_deg: float = 3.0) -> InnerLoopReport:
    """Bandwidth of ``G`` and its phase at the outer crossover.

    The loop margins are those of ``L = G/(1 - G)``, the open loop that
    closes to ``G`` under unity feedback; none for the ideal ``G = 1``.
    """
    ph = math.degrees(phase(g, 2.0 * math.pi * outer_crossover_hz))
    loop = None
    one_minus = np.polynomial.polynomial.polysub(g.den, g.num)
    if np.any(np.abs(one_minus) > 0) and g.delay == 0.0:
        loop = margins(TransferFunction(g.num, tuple(one_minus)))
    return InnerLoopReport(bandwidth_3db(g), ph, outer_crossover_hz, -ph <= max_lag_deg, loop)


def bode_table(tf: TransferFunction, f_min: float = 1e-3, f_max: float = 1e2,
               n: int = 400) -> np.ndarray:
    """Rows of ``(freq_hz, mag_db, phase_deg)`` on a log grid."""
    f = np.logspace(math.log10(f_min), math.log10(f_max), n)
    w = 2.0 * math.pi * f
    mag = 20.0 * np.log10(magnitude(tf, w))
    ph = np.degrees(phase(tf, w))
    return np.column_stack([f, mag, ph])


def slope_db_per_decade(tf: TransferFunction, omega: float, ratio: float = 1.01) -> float:
    m1 = 20 * math.log10(abs(freq_response(tf, omega)))
    m2 = 20 * math.log10(abs(freq_response(tf, omega * ratio)))
    return (m2 - m1) / math.log10(ratio)

