"""Lifted-domain iterative learning control for the altitude channel.

One maneuver is one trial. The nominal closed altitude loop (PD on a double
integrator, inner loops ignored) is discretized with forward Euler and
stacked over the trial into a strictly lower-triangular map ``F`` from the
learning input to the sampled altitude error::

    Y = F U + d

Between trials an iteration-domain Kalman filter estimates the repetitive
part ``d`` and a bound-constrained least-squares problem picks the next
input. With ``xi_p = p_z - p_zd`` the learning input enters the error
dynamics with a minus sign, hence ``B = [0, -1]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _kernels as K
from .controllers import AltitudeGains
from .flight import SimSetup, Trajectory, run_flight


class IncompleteIterationError(ValueError):
    """The trajectory log does not reach the end of the lifted window."""


class SolverError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (final KKT residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class LiftedModel:
    a_d: np.ndarray
    b_d: np.ndarray
    c_d: np.ndarray
    dt: float
    n: int
    f: np.ndarray = field(repr=False)


def build_lifted(gains: AltitudeGains, dt: float, n: int) -> LiftedModel:
    if dt <= 0:
        raise ValueError("lifted dt must be > 0")
    if n < 2:
        raise ValueError("lifted N must be >= 2")
    a = np.array([[0.0, 1.0], [-gains.k_p, -gains.k_v]])
    b = np.array([0.0, -1.0])
    a_d = np.eye(2) + a * dt
    b_d = b * dt
    c_d = np.array([1.0, 0.0])
    f = K.lifted_matrix(a_d, b_d, c_d, n)
    return LiftedModel(a_d, b_d, c_d, dt, n, f)


def simulate_lifted(model: LiftedModel, u: np.ndarray, x0=(0.0, 0.0)) -> np.ndarray:
    """Step the discrete model; output ``k`` is read after applying ``u[k]``."""
    x = np.asarray(x0, dtype=float)
    y = np.empty(model.n)
    for k in range(model.n):
        x = model.a_d @ x + model.b_d * u[k]
        y[k] = model.c_d @ x
    return y


def sample_times(dt: float, n: int) -> np.ndarray:
    """Lifted output instants: sample ``k`` is taken one period after input ``k`` starts."""
    return (np.arange(n) + 1) * dt


def record_iteration(traj: Trajectory, dt: float, n: int, column: str = "xi_p") -> np.ndarray:
    """Nearest-tick samples of the logged altitude error on the lifted grid."""
    t = traj.t
    ts = sample_times(dt, n)
    period = 1.0 / traj.rate_hz
    if len(t) == 0 or ts[-1] > t[-1] + 0.5 * period:
        end = t[-1] if len(t) else 0.0
        raise IncompleteIterationError(
            f"log ends at t={end:.3f} s but the lifted window needs t={ts[-1]:.3f} s")
    idx = np.clip(np.rint((ts - t[0]) / period).astype(int), 0, len(t) - 1)
    values = traj.data[column] if column in traj.data else getattr(traj, column)
    return np.asarray(values, dtype=float)[idx]


@dataclass(frozen=True)
class IlcConfig:
    n: int
    dt: float = 0.1
    alpha: float = 1e-3
    c_max: np.ndarray | float = np.inf
    q: float = 1e-4
    r: float = 1e-2
    p0: float = 1.0
    norm: str = "squared"
    tol: float = 1e-8
    max_iter: int = 100_000

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("ilc.alpha must be >= 0")
        if self.r <= 0:
            raise ValueError("ilc.r must be > 0")
        if self.q < 0:
            raise ValueError("ilc.q must be >= 0")
        if self.p0 < 0:
            raise ValueError("ilc.p0 must be >= 0")
        if self.norm not in ("squared", "unsquared"):
            raise ValueError("ilc.norm must be 'squared' or 'unsquared'")

    def upper(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.c_max, dtype=float), (self.n,)).copy()


@dataclass
class IlcState:
    d_hat: np.ndarray
    p: np.ndarray
    u: np.ndarray
    iteration: int = 0

    @classmethod
    def initial(cls, cfg: IlcConfig) -> "IlcState":
        n = cfg.n
        return cls(np.zeros(n), cfg.p0 * np.eye(n), np.zeros(n), 0)


def kalman_update(state: IlcState, y: np.ndarray, u: np.ndarray, model: LiftedModel,
                  cfg: IlcConfig) -> IlcState:
    """One iteration-domain Kalman step on the disturbance estimate."""
    nu = y - model.f @ u - state.d_hat
    n = model.n
    p_prior = state.p + cfg.q * np.eye(n)
    s = p_prior + cfg.r * np.eye(n)
    try:
        # K = P- S^-1; both symmetric so solve S K^T = P-
        gain = np.linalg.solve(s, p_prior).T
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"innovation covariance is singular: {exc}") from exc
    d_hat = state.d_hat + gain @ nu
    p = (np.eye(n) - gain) @ p_prior
    p = 0.5 * (p + p.T)
    return IlcState(d_hat, p, state.u.copy(), state.iteration)


def objective(model: LiftedModel, u: np.ndarray, d_hat: np.ndarray, alpha: float,
              y_des: np.ndarray | None = None) -> float:
    r = model.f @ u + d_hat - (0.0 if y_des is None else y_des)
    return float(r @ r + alpha * (u @ u))


def kkt_residual(h: np.ndarray, f: np.ndarray, upper: np.ndarray, u: np.ndarray) -> float:
    """Natural residual ``max|u - min(u - grad, upper)|`` of the gradient ``h u + f``."""
    grad = h @ u + f
    return float(np.max(np.abs(u - np.minimum(u - grad, upper)))) if len(u) else 0.0


def _power_lmax(h: np.ndarray, iters: int = 1000, rtol: float = 1e-12) -> float:
    v = np.ones(h.shape[0]) / math.sqrt(h.shape[0])
    lam = 0.0
    for _ in range(iters):
        w = h @ v
        nw = float(np.linalg.norm(w))
        if nw == 0.0:
            return 0.0
        v = w / nw
        if abs(nw - lam) <= rtol * nw:
            lam = nw
            break
        lam = nw
    return lam


def _polish(h: np.ndarray, f: np.ndarray, upper: np.ndarray, u: np.ndarray,
            factor: tuple[np.ndarray, np.ndarray] | None = None) -> np.ndarray:
    """Solve exactly on the active set suggested by ``u``; free variables by least squares.

    With ``factor = (A, b)`` (``H = A'A``, ``f = A'b``) the free block is solved
    on ``A`` itself, which squares the attainable accuracy when H is badly
    conditioned.
    """
    grad = h @ u + f
    finite = np.isfinite(upper)
    slack = 1e-10 * np.maximum(1.0, np.abs(np.where(finite, upper, 0.0)))
    active = finite & (u >= np.where(finite, upper, 0.0) - slack) & (grad <= 0.0)
    free = ~active
    out = np.where(active, upper, 0.0)
    if free.any():
        if factor is not None:
            a, b = factor
            rhs = -b - (a[:, active] @ upper[active] if active.any() else 0.0)
            out[free] = np.linalg.lstsq(a[:, free], rhs, rcond=None)[0]
        else:
            rhs = -f[free]
            if active.any():
                rhs = rhs - h[np.ix_(free, active)] @ upper[active]
            out[free] = np.linalg.lstsq(h[np.ix_(free, free)], rhs, rcond=None)[0]
    return out


def solve_box_qp(h: np.ndarray, f: np.ndarray, upper: np.ndarray, x0: np.ndarray | None = None,
                 tol: float = 1e-8, max_iter: int = 100_000,
                 factor: tuple[np.ndarray, np.ndarray] | None = None) -> tuple[np.ndarray, int, float]:
    """Minimize ``1/2 u'Hu + f'u`` subject to ``u <= upper``.

    Accelerated projected gradient (step 1/L, adaptive restart) with an
    active-set polish after every block of iterations: once the projected
    gradient has identified the binding set, the polish lands on the exact
    optimum, which the first-order method alone reaches only slowly when H is
    ill-conditioned. ``factor = (A, b)`` with ``H = A'A`` and ``f = A'b`` lets
    the direct solves work on ``A``. Returns ``(u, iterations, kkt_residual)``;
    the residual is measured on ``H u + f``.
    """
    n = len(f)
    upper = np.asarray(upper, dtype=float)
    finite_upper = np.where(np.isfinite(upper), upper, np.inf)
    scale = max(1.0, float(np.max(np.abs(f))) if n else 1.0)

    # warm start from the clipped unconstrained minimizer
    if x0 is not None:
        u0 = np.asarray(x0, dtype=float)
    elif factor is not None:
        u0 = np.linalg.lstsq(factor[0], -factor[1], rcond=None)[0]
    else:
        u0 = np.linalg.lstsq(h, -f, rcond=None)[0]
    best = np.minimum(u0, finite_upper)
    cand = _polish(h, f, finite_upper, best, factor)
    if np.all(cand <= finite_upper):
        best = cand
    res = kkt_residual(h, f, finite_upper, best)
    if res <= tol * scale:
        return best, 0, res

    lmax = _power_lmax(h) * 1.01
    if lmax == 0.0:
        return best, 0, res
    step = 1.0 / lmax
    total = 0
    block = 500
    while total < max_iter:
        it_cap = min(block, max_iter - total)
        x, it, _ = K.pgd_nesterov(h, f, finite_upper, best, step, it_cap, tol * scale, 50)
        total += it
        cand = _polish(h, f, finite_upper, x, factor)
        cand_res = kkt_residual(h, f, finite_upper, cand) if np.all(cand <= finite_upper) else np.inf
        x_res = kkt_residual(h, f, finite_upper, x)
        if cand_res < x_res:
            best, res = cand, cand_res
        else:
            best, res = x, x_res
        if res <= tol * scale:
            return best, total, res
    raise SolverError(f"QP did not converge in {max_iter} iterations", res)


def update_input(model: LiftedModel, d_hat: np.ndarray, cfg: IlcConfig,
                 y_des: np.ndarray | None = None, u_prev: np.ndarray | None = None) -> np.ndarray:
    """Next trial's input: ``argmin ||F U + d - Y_des||^2 + alpha ||U||^2, U <= c_max``."""
    if not np.all(np.isfinite(d_hat)):
        raise ValueError("d_hat must be finite")
    target = d_hat - (0.0 if y_des is None else y_des)
    upper = cfg.upper()
    if cfg.norm == "unsquared":
        return _update_input_socp(model, target, cfg.alpha, upper)
    f_mat = model.f
    h = f_mat.T @ f_mat + cfg.alpha * np.eye(model.n)
    g = f_mat.T @ target
    a = np.vstack([f_mat, math.sqrt(cfg.alpha) * np.eye(model.n)])
    b = np.concatenate([target, np.zeros(model.n)])
    u, _, _ = solve_box_qp(h, g, upper, tol=cfg.tol, max_iter=cfg.max_iter, factor=(a, b))
    return u


def _update_input_socp(model: LiftedModel, target: np.ndarray, alpha: float,
                       upper: np.ndarray) -> np.ndarray:
    try:
        import cvxpy as cp
    except ImportError as exc:  # pragma: no cover - exercised only without the extra
        raise ImportError("the unsquared-norm objective needs cvxpy (pip install 'cobra-ilc[socp]')") from exc
    u = cp.Variable(model.n)
    cons = []
    finite = np.isfinite(upper)
    if finite.any():
        cons.append(u[np.flatnonzero(finite)] <= upper[finite])
    prob = cp.Problem(cp.Minimize(cp.norm(model.f @ u + target, 2) + alpha * cp.norm(u, 2)), cons)
    prob.solve()
    if u.value is None:
        raise SolverError(f"SOCP solver status {prob.status}", float("nan"))
    return np.asarray(u.value, dtype=float)


@dataclass
class IterationRecord:
    iteration: int
    y: np.ndarray
    u: np.ndarray
    d_hat: np.ndarray
    rms: float
    max_abs: float
    rms_true: float
    lateral_max: float
    trajectory: Trajectory | None = None


def rms(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.sqrt(np.mean(x * x))) if x.size else 0.0


def lifted_length(setup: SimSetup, dt: float) -> int:
    return int(math.floor(setup.profile.duration / dt + 1e-9))


def run_campaign(setup: SimSetup, cfg: IlcConfig, n_iterations: int,
                 keep_trajectories: bool = False,
                 on_iteration: Callable[[IterationRecord], None] | None = None) -> list[IterationRecord]:
    """Fly ``n_iterations`` trials; trial 0 uses ``U = 0``."""
    if n_iterations < 1:
        raise ValueError("n_iterations must be >= 1")
    model = build_lifted(setup.controller.gains, cfg.dt, cfg.n)
    state = IlcState.initial(cfg)
    records: list[IterationRecord] = []
    for i in range(n_iterations):
        traj = run_flight(setup, state.u, cfg.dt, iteration=i)
        y = record_iteration(traj, cfg.dt, cfg.n)
        y_true = record_iteration(traj, cfg.dt, cfg.n, "xi_p_true")
        rec = IterationRecord(i, y, state.u.copy(), state.d_hat.copy(), rms(y),
                              float(np.max(np.abs(y))), rms(y_true),
                              float(np.max(np.abs(traj.xi_l_true))),
                              traj if keep_trajectories else None)
        records.append(rec)
        if on_iteration is not None:
            on_iteration(rec)
        if i + 1 < n_iterations:
            state = kalman_update(state, y, state.u, model, cfg)
            state.u = update_input(model, state.d_hat, cfg)
            state.iteration = i + 1
    return records


def convergence_iteration(rms_values: list[float], rel_tol: float = 0.1) -> int | None:
    """First iteration after which rms stays within ``rel_tol`` of the final plateau."""
    if not rms_values:
        return None
    plateau = rms_values[-1]
    for i in range(len(rms_values)):
        if all(v <= plateau * (1 + rel_tol) + 1e-12 for v in rms_values[i:]):
            return i
    return len(rms_values) - 1
