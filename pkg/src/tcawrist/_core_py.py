"""Pure-Python twin of the compiled kernel in ``_core.pyx``.

Both modules expose the same functions over a flat parameter vector (see
``dynamics.WristModel.pack``) and a state ``x = [theta, phi, theta_dot,
phi_dot, T1, T2, T3]``. Keep the arithmetic in the same order in both files
so the backends agree to rounding.
"""

import math

import numpy as np

BACKEND = "python"

N_PARAMS = 36
P_R, P_H, P_L2, P_D0, P_M, P_MLINK, P_IX, P_IY, P_IZ, P_G, P_DTH, P_DPH = range(12)
P_TCA = 12
TCA_STRIDE = 8
K_, B_, C_, CTH_, LAM_, TAMB_, L0_, OFF_ = range(8)

FD_STEP = 1e-6
TWO_PI_3 = 2.0 * math.pi / 3.0
_LINK_OFF = (0.0, TWO_PI_3, 2.0 * TWO_PI_3)
_TCA_OFF = (0.0, -TWO_PI_3, TWO_PI_3)


def _mass(th, ph, p):
    r = p[P_R]
    h = p[P_H]
    l2 = p[P_L2]
    d0 = p[P_D0]
    s2 = math.sin(0.5 * th)
    c2 = math.cos(0.5 * th)
    t2 = s2 / c2
    cth = math.cos(th)
    Mp = p[P_M]
    m00 = 0.25 * Mp * (h * h + r * r)
    m01 = 0.0
    m11 = 0.25 * Mp * (r * r * (1.0 + cth * cth) + 4.0 * h * h * s2 * s2)
    wq = 0.25 * p[P_MLINK] * l2 * l2
    wx = p[P_IX]
    wy = wq + p[P_IY]
    wz = wq + p[P_IZ]
    for i in range(3):
        phi_i = ph + _LINK_OFF[i]
        cp = math.cos(phi_i)
        sp = math.sin(phi_i)
        u = -cp * t2
        den = 1.0 + u * u
        w = math.sqrt(den)
        do_th = -0.5 * cp / (c2 * c2) / den
        do_ph = sp * t2 / den
        de = math.atan(sp * t2 / w)
        de_th = 0.5 * sp / w
        de_ph = cp * t2 / w
        sa = math.sin(d0 - de)
        ca = math.cos(d0 - de)
        kx = wx * sa * sa + wy * ca * ca
        m00 += kx * do_th * do_th + wz * de_th * de_th
        m01 += kx * do_th * do_ph + wz * de_th * de_ph
        m11 += kx * do_ph * do_ph + wz * de_ph * de_ph
    return m00, m01, m11


def _gravity(th, ph, p):
    l2 = p[P_L2]
    d0 = p[P_D0]
    t2 = math.tan(0.5 * th)
    g = p[P_G]
    g0 = -0.5 * p[P_M] * g * p[P_H] * math.sin(0.5 * th)
    g1 = 0.0
    wl = 0.5 * l2 * p[P_MLINK] * g
    for i in range(3):
        phi_i = ph + _LINK_OFF[i]
        cp = math.cos(phi_i)
        sp = math.sin(phi_i)
        w = math.sqrt(1.0 + cp * cp * t2 * t2)
        de = math.atan(sp * t2 / w)
        de_th = 0.5 * sp / w
        de_ph = cp * t2 / w
        sa = math.sin(d0 - de)
        g0 += wl * sa * de_th
        g1 += wl * sa * de_ph
    return g0, g1


def _genforce(th, ph, thd, phd, T, p):
    r = p[P_R]
    h = p[P_H]
    s2 = math.sin(0.5 * th)
    c2 = math.cos(0.5 * th)
    q0 = 0.0
    q1 = 0.0
    for i in range(3):
        base = P_TCA + TCA_STRIDE * i
        sa = math.sin(ph + _TCA_OFF[i])
        ca = math.cos(ph + _TCA_OFF[i])
        L = h - 2.0 * r * sa * s2
        j0 = -r * sa * c2
        j1 = -2.0 * r * ca * s2
        Ld = j0 * thd + j1 * phd
        F = (p[base + K_] * (L - p[base + OFF_] - p[base + L0_])
             + p[base + B_] * Ld
             + p[base + C_] * (T[i] - p[base + TAMB_]))
        q0 -= F * j0
        q1 -= F * j1
    return q0, q1


def _coriolis(th, ph, thd, phd, p):
    e = FD_STEP
    a = _mass(th + e, ph, p)
    b = _mass(th - e, ph, p)
    c = _mass(th, ph + e, p)
    d = _mass(th, ph - e, p)
    inv = 0.5 / e
    # dM/dtheta and dM/dphi as (m00, m01, m11)
    t00 = (a[0] - b[0]) * inv
    t01 = (a[1] - b[1]) * inv
    t11 = (a[2] - b[2]) * inv
    f00 = (c[0] - d[0]) * inv
    f01 = (c[1] - d[1]) * inv
    f11 = (c[2] - d[2]) * inv
    # C_k = sum_ij (d_i M_kj - 0.5 d_k M_ij) qd_i qd_j
    quad_t = t00 * thd * thd + 2.0 * t01 * thd * phd + t11 * phd * phd
    quad_f = f00 * thd * thd + 2.0 * f01 * thd * phd + f11 * phd * phd
    c0 = (t00 * thd + f00 * phd) * thd + (t01 * thd + f01 * phd) * phd - 0.5 * quad_t
    c1 = (t01 * thd + f01 * phd) * thd + (t11 * thd + f11 * phd) * phd - 0.5 * quad_f
    return c0, c1


def _deriv(x, u, p, out):
    th = x[0]
    ph = x[1]
    thd = x[2]
    phd = x[3]
    T = (x[4], x[5], x[6])
    m00, m01, m11 = _mass(th, ph, p)
    c0, c1 = _coriolis(th, ph, thd, phd, p)
    g0, g1 = _gravity(th, ph, p)
    q0, q1 = _genforce(th, ph, thd, phd, T, p)
    r0 = q0 - c0 - p[P_DTH] * thd - g0
    r1 = q1 - c1 - p[P_DPH] * phd - g1
    det = m00 * m11 - m01 * m01
    if not det > 0.0:
        nan = float("nan")
        out[0] = nan
        out[1] = nan
        out[2] = nan
        out[3] = nan
    else:
        out[0] = thd
        out[1] = phd
        out[2] = (m11 * r0 - m01 * r1) / det
        out[3] = (m00 * r1 - m01 * r0) / det
    for i in range(3):
        base = P_TCA + TCA_STRIDE * i
        out[4 + i] = (u[i] - p[base + LAM_] * (T[i] - p[base + TAMB_])) / p[base + CTH_]


def _as_list(a):
    return [float(v) for v in a]


def state_derivative(x, u, p):
    """dx/dt for state ``x`` under electrical powers ``u``."""
    out = [0.0] * 7
    _deriv(_as_list(x), _as_list(u), _as_list(p), out)
    return np.array(out)


def mass_matrix(th, ph, p):
    m00, m01, m11 = _mass(float(th), float(ph), _as_list(p))
    return np.array([[m00, m01], [m01, m11]])


def eom_terms(x, p):
    """``(M, coriolis, gravity, generalized force)`` at state ``x``."""
    x = _as_list(x)
    p = _as_list(p)
    m00, m01, m11 = _mass(x[0], x[1], p)
    c = _coriolis(x[0], x[1], x[2], x[3], p)
    g = _gravity(x[0], x[1], p)
    q = _genforce(x[0], x[1], x[2], x[3], x[4:7], p)
    return np.array([[m00, m01], [m01, m11]]), np.array(c), np.array(g), np.array(q)


def _rk4(x, u, dt, p):
    k1 = [0.0] * 7
    k2 = [0.0] * 7
    k3 = [0.0] * 7
    k4 = [0.0] * 7
    xt = [0.0] * 7
    _deriv(x, u, p, k1)
    for j in range(7):
        xt[j] = x[j] + 0.5 * dt * k1[j]
    _deriv(xt, u, p, k2)
    for j in range(7):
        xt[j] = x[j] + 0.5 * dt * k2[j]
    _deriv(xt, u, p, k3)
    for j in range(7):
        xt[j] = x[j] + dt * k3[j]
    _deriv(xt, u, p, k4)
    for j in range(7):
        x[j] = x[j] + dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])


def _fold(x):
    """Keep theta >= 0 and phi in (-pi, pi]."""
    if x[0] < 0.0:
        x[0] = -x[0]
        x[1] = x[1] + math.pi
        x[2] = -x[2]
    if x[1] > math.pi or x[1] <= -math.pi:
        x[1] = x[1] - 2.0 * math.pi * math.ceil((x[1] - math.pi) / (2.0 * math.pi))


def rk4_integrate(x, u, dt, nsteps, p):
    """Advance ``x`` by ``nsteps`` RK4 steps under constant ``u``.

    The state is folded back to ``theta >= 0`` with wrapped ``phi`` after
    every step.

    Returns ``(x_new, failed_step)`` where ``failed_step`` is -1 on success
    or the index of the first step that produced a non-finite state; in that
    case ``x_new`` is the last finite state.
    """
    xs = _as_list(x)
    us = _as_list(u)
    ps = _as_list(p)
    for n in range(int(nsteps)):
        prev = list(xs)
        _rk4(xs, us, float(dt), ps)
        for v in xs:
            if not math.isfinite(v):
                return np.array(prev), n
        _fold(xs)
    return np.array(xs), -1


def _lu_solve_inplace(A, n, rhs_cols):
    """Solve A X = R by Gaussian elimination with partial pivoting.

    ``A`` is an n*n row-major list (destroyed), ``rhs_cols`` a list of
    n*m row-major right-hand sides (overwritten with the solution).
    """
    m = len(rhs_cols) // n
    for k in range(n):
        piv = k
        best = abs(A[k * n + k])
        for i in range(k + 1, n):
            v = abs(A[i * n + k])
            if v > best:
                best = v
                piv = i
        if best == 0.0:
            return False
        if piv != k:
            for j in range(n):
                A[k * n + j], A[piv * n + j] = A[piv * n + j], A[k * n + j]
            for j in range(m):
                rhs_cols[k * m + j], rhs_cols[piv * m + j] = rhs_cols[piv * m + j], rhs_cols[k * m + j]
        akk = A[k * n + k]
        for i in range(k + 1, n):
            f = A[i * n + k] / akk
            if f != 0.0:
                for j in range(k, n):
                    A[i * n + j] -= f * A[k * n + j]
                for j in range(m):
                    rhs_cols[i * m + j] -= f * rhs_cols[k * m + j]
    for k in range(n - 1, -1, -1):
        akk = A[k * n + k]
        for j in range(m):
            s = rhs_cols[k * m + j]
            for i in range(k + 1, n):
                s -= A[k * n + i] * rhs_cols[i * m + j]
            rhs_cols[k * m + j] = s / akk
    return True


def _jacobian(x, u, p, f0):
    """Forward-difference Jacobian of the continuous dynamics (7x7, row-major)."""
    J = [0.0] * 49
    xt = list(x)
    ft = [0.0] * 7
    for j in range(7):
        hstep = 1e-7 * max(1.0, abs(x[j]))
        xt[j] = x[j] + hstep
        _deriv(xt, u, p, ft)
        xt[j] = x[j]
        for i in range(2, 4):
            J[i * 7 + j] = (ft[i] - f0[i]) / hstep
    J[0 * 7 + 2] = 1.0
    J[1 * 7 + 3] = 1.0
    for i in range(3):
        base = P_TCA + TCA_STRIDE * i
        J[(4 + i) * 7 + 4 + i] = -p[base + LAM_] / p[base + CTH_]
    return J


def predictor(x, u, dt, p, implicit, want_jac):
    """One step of the controller's prediction model.

    ``implicit=False``: forward Euler, ``x + dt f``.
    ``implicit=True``: linearly implicit Euler, ``x + dt (I - dt J)^-1 f``.
    Returns ``(F, A, B)``; ``A`` (7x7) and ``B`` (7x3) are the step
    sensitivities with the Jacobian frozen, or ``None`` when not requested.
    """
    xs = _as_list(x)
    us = _as_list(u)
    ps = _as_list(p)
    dt = float(dt)
    f0 = [0.0] * 7
    _deriv(xs, us, ps, f0)
    if not implicit:
        F = np.array([xs[i] + dt * f0[i] for i in range(7)])
        if not want_jac:
            return F, None, None
        J = _jacobian(xs, us, ps, f0)
        A = np.eye(7) + dt * np.array(J).reshape(7, 7)
        B = np.zeros((7, 3))
        for i in range(3):
            B[4 + i, i] = dt / ps[P_TCA + TCA_STRIDE * i + CTH_]
        return F, A, B
    J = _jacobian(xs, us, ps, f0)
    W = [-dt * v for v in J]
    for i in range(7):
        W[i * 7 + i] += 1.0
    # right-hand sides: f (1 col), identity (7 cols) when sensitivities wanted
    m = 8 if want_jac else 1
    R = [0.0] * (7 * m)
    for i in range(7):
        R[i * m] = f0[i]
        if want_jac:
            R[i * m + 1 + i] = 1.0
    if not _lu_solve_inplace(W, 7, R):
        nan = np.full(7, np.nan)
        return nan, None, None
    F = np.array([xs[i] + dt * R[i * m] for i in range(7)])
    if not want_jac:
        return F, None, None
    Winv = np.array([[R[i * m + 1 + j] for j in range(7)] for i in range(7)])
    B = np.zeros((7, 3))
    for i in range(3):
        B[:, i] = dt * Winv[:, 4 + i] / ps[P_TCA + TCA_STRIDE * i + CTH_]
    return F, Winv, B
