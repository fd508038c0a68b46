"""Inner loops that dominate runtime.

Each kernel is plain Python over numpy arrays and ``math`` scalars so the same
source runs under numba (``maybe_njit``) or as the numpy fallback. The
``*_numpy`` variants are vectorized equivalents used by the fallback path
where vectorization pays off, and by tests/benchmarks to cross-check.

Plant state layout (length ``NX``)::

    0-2  position (NED, m)       3-5  velocity (m/s)
    6    theta (rad)             7    eta (rad)
    8    inner-loop output a_x   9    its derivative
    10   low-passed lateral wind (for the crosswind washout)

Plant parameter vector layout is given by the ``P_*`` indices below.
"""

import math

import numpy as np

from ._accel import NUMBA_AVAILABLE, maybe_njit

NX = 11

P_G = 0
P_AERO = 1
P_SCALE = 2
P_CD0 = 3
P_KVA = 4
P_LOOP = 5
P_WN = 6
P_ZETA = 7
P_TAU_ATT = 8
P_WASHOUT = 9
P_AXIAL = 10
NPAR = 11

LOOP_IDEAL = 0
LOOP_FIRST_ORDER = 1
LOOP_BUTTERWORTH2 = 2


@maybe_njit
def body_specific_accel(x, cmd, par, dist, wind, out):
    """Sensed specific acceleration in body axes.

    Body x is the inner-loop output. When ``par[P_AXIAL]`` is 0 the loop
    closes on the accelerometer, so axial aero is absorbed into the thrust;
    when 1 the loop only sets thrust and axial aero adds on top. Flat-plate
    pressure acts along body z, skin friction opposes the air-relative
    velocity, and body y also carries the lateral damping. The lateral wind
    seen by the airframe is washed out (the vehicle weathervanes into a
    steady wind). ``dist`` is not sensed and does not appear here.
    """
    th = x[6]
    et = x[7]
    ct = math.cos(th)
    st = math.sin(th)
    ce = math.cos(et)
    se = math.sin(et)

    if int(par[P_LOOP]) == LOOP_IDEAL:
        ax = cmd[0]
    else:
        ax = x[8]
    if par[P_WASHOUT] > 0.0:
        w_lat = wind[1] - x[10]
    else:
        w_lat = wind[1]
    ay = -par[P_KVA] * (x[4] - w_lat)
    az = 0.0
    if par[P_AERO] > 0.5:
        vx = x[3] - wind[0]
        vy = x[4] - w_lat
        vz = x[5] - wind[2]
        # body axes are the columns of R
        u = -st * ce * vx + se * vy - ct * ce * vz
        v = st * se * vx + ce * vy + ct * se * vz
        w = ct * vx - st * vz
        speed = math.sqrt(u * u + v * v + w * w)
        k = par[P_SCALE]
        cd0 = par[P_CD0]
        az = -k * speed * w * (2.0 + cd0)
        ay += -k * cd0 * speed * v
        if par[P_AXIAL] > 0.5:
            ax += -k * cd0 * speed * u
    out[0] = ax
    out[1] = ay
    out[2] = az


@maybe_njit
def plant_rhs(x, cmd, par, dist, wind, dx):
    a = np.empty(3)
    body_specific_accel(x, cmd, par, dist, wind, a)
    th = x[6]
    et = x[7]
    ct = math.cos(th)
    st = math.sin(th)
    ce = math.cos(et)
    se = math.sin(et)
    dx[0] = x[3]
    dx[1] = x[4]
    dx[2] = x[5]
    dx[3] = -st * ce * a[0] + st * se * a[1] + ct * a[2] + dist[0]
    dx[4] = se * a[0] + ce * a[1] + dist[1]
    dx[5] = par[P_G] - ct * ce * a[0] + ct * se * a[1] - st * a[2] + dist[2]

    tau = par[P_TAU_ATT]
    if tau > 0.0:
        dx[6] = (cmd[1] - th) / tau
        dx[7] = (cmd[2] - et) / tau
    else:
        dx[6] = 0.0
        dx[7] = 0.0

    loop = int(par[P_LOOP])
    wn = par[P_WN]
    if loop == LOOP_FIRST_ORDER:
        dx[8] = wn * (cmd[0] - x[8])
        dx[9] = 0.0
    elif loop == LOOP_BUTTERWORTH2:
        dx[8] = x[9]
        dx[9] = wn * wn * (cmd[0] - x[8]) - 2.0 * par[P_ZETA] * wn * x[9]
    else:
        dx[8] = 0.0
        dx[9] = 0.0

    if par[P_WASHOUT] > 0.0:
        dx[10] = (wind[1] - x[10]) / par[P_WASHOUT]
    else:
        dx[10] = 0.0


@maybe_njit
def rk4_advance(x, cmd, par, dist, wind, n_steps, dt):
    """Advance the plant ``n_steps`` fixed RK4 steps with commands held constant."""
    s = x.copy()
    if par[P_TAU_ATT] <= 0.0:
        s[6] = cmd[1]
        s[7] = cmd[2]
    if int(par[P_LOOP]) == LOOP_IDEAL:
        s[8] = cmd[0]
        s[9] = 0.0
    n = s.shape[0]
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    tmp = np.empty(n)
    for _ in range(n_steps):
        plant_rhs(s, cmd, par, dist, wind, k1)
        for i in range(n):
            tmp[i] = s[i] + 0.5 * dt * k1[i]
        plant_rhs(tmp, cmd, par, dist, wind, k2)
        for i in range(n):
            tmp[i] = s[i] + 0.5 * dt * k2[i]
        plant_rhs(tmp, cmd, par, dist, wind, k3)
        for i in range(n):
            tmp[i] = s[i] + dt * k3[i]
        plant_rhs(tmp, cmd, par, dist, wind, k4)
        for i in range(n):
            s[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    return s


@maybe_njit
def _markov_parameters(ad, bd, cd, n):
    h = np.zeros(n)
    v0 = bd[0]
    v1 = bd[1]
    for m in range(n):
        h[m] = cd[0] * v0 + cd[1] * v1
        w0 = ad[0, 0] * v0 + ad[0, 1] * v1
        w1 = ad[1, 0] * v0 + ad[1, 1] * v1
        v0 = w0
        v1 = w1
    return h


@maybe_njit
def lifted_matrix_loops(ad, bd, cd, n):
    """Strictly lower-triangular Toeplitz map with ``F[i, j] = C A^(i-j) B``."""
    h = _markov_parameters(ad, bd, cd, n)
    f = np.zeros((n, n))
    for i in range(1, n):
        for j in range(i):
            f[i, j] = h[i - j]
    return f


def lifted_matrix_numpy(ad, bd, cd, n):
    h = np.empty(n)
    v = np.asarray(bd, dtype=float).copy()
    for m in range(n):
        h[m] = cd @ v
        v = ad @ v
    i, j = np.indices((n, n))
    lag = i - j
    return np.where(lag > 0, h[np.clip(lag, 0, n - 1)], 0.0)


@maybe_njit
def pgd_nesterov_loops(h, f, upper, x0, step, max_iter, tol, check_every):
    """Accelerated projected gradient for ``min 1/2 x'Hx + f'x  s.t. x <= upper``.

    Uses gradient-based adaptive restart. Stops when the natural residual
    ``max|x - min(x - (Hx+f), upper)|`` drops below ``tol``. Returns
    ``(x, iterations, residual)``.
    """
    n = x0.shape[0]
    x = np.minimum(x0, upper)
    y = x.copy()
    x_new = np.empty(n)
    g = np.empty(n)
    t = 1.0
    res = np.inf
    it = 0
    while it < max_iter:
        for i in range(n):
            acc = f[i]
            for j in range(n):
                acc += h[i, j] * y[j]
            g[i] = acc
        restart = 0.0
        for i in range(n):
            v = y[i] - step * g[i]
            if v > upper[i]:
                v = upper[i]
            x_new[i] = v
            restart += (y[i] - v) * (v - x[i])
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        if restart > 0.0:
            t_new = 1.0
            for i in range(n):
                y[i] = x_new[i]
        else:
            beta = (t - 1.0) / t_new
            for i in range(n):
                y[i] = x_new[i] + beta * (x_new[i] - x[i])
        for i in range(n):
            x[i] = x_new[i]
        t = t_new
        it += 1
        if it % check_every == 0 or it == max_iter:
            res = 0.0
            for i in range(n):
                acc = f[i]
                for j in range(n):
                    acc += h[i, j] * x[j]
                p = x[i] - acc
                if p > upper[i]:
                    p = upper[i]
                r = abs(x[i] - p)
                if r > res:
                    res = r
            if res <= tol:
                break
    return x, it, res


def pgd_nesterov_numpy(h, f, upper, x0, step, max_iter, tol, check_every):
    x = np.minimum(np.asarray(x0, dtype=float), upper)
    y = x.copy()
    t = 1.0
    res = np.inf
    it = 0
    while it < max_iter:
        g = h @ y + f
        x_new = np.minimum(y - step * g, upper)
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        if float((y - x_new) @ (x_new - x)) > 0.0:
            t_new = 1.0
            y = x_new.copy()
        else:
            y = x_new + ((t - 1.0) / t_new) * (x_new - x)
        x = x_new
        t = t_new
        it += 1
        if it % check_every == 0 or it == max_iter:
            res = float(np.max(np.abs(x - np.minimum(x - (h @ x + f), upper))))
            if res <= tol:
                break
    return x, it, res


if NUMBA_AVAILABLE:
    lifted_matrix = lifted_matrix_loops
    pgd_nesterov = pgd_nesterov_loops
else:
    lifted_matrix = lifted_matrix_numpy
    pgd_nesterov = pgd_nesterov_numpy
