# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled dynamics kernel.

Same functions and parameter layout as ``_core_py.py``; see that module
for the conventions. Arithmetic order matches so the two backends agree to
rounding.
"""

import numpy as np

from libc.math cimport atan, ceil, cos, fabs, isfinite, sin, sqrt, tan, M_PI, NAN

BACKEND = "cython"

N_PARAMS = 36
DEF P_R = 0
DEF P_H = 1
DEF P_L2 = 2
DEF P_D0 = 3
DEF P_M = 4
DEF P_MLINK = 5
DEF P_IX = 6
DEF P_IY = 7
DEF P_IZ = 8
DEF P_G = 9
DEF P_DTH = 10
DEF P_DPH = 11
DEF P_TCA = 12
DEF TCA_STRIDE = 8
DEF K_ = 0
DEF B_ = 1
DEF C_ = 2
DEF CTH_ = 3
DEF LAM_ = 4
DEF TAMB_ = 5
DEF L0_ = 6
DEF OFF_ = 7

FD_STEP = 1e-6
cdef double _FD = 1e-6
cdef double TWO_PI_3 = 2.0943951023931953
cdef double[3] _LINK_OFF
cdef double[3] _TCA_OFF
_LINK_OFF[0] = 0.0
_LINK_OFF[1] = 2.0943951023931953
_LINK_OFF[2] = 2.0 * 2.0943951023931953
_TCA_OFF[0] = 0.0
_TCA_OFF[1] = -2.0943951023931953
_TCA_OFF[2] = 2.0943951023931953


cdef inline void _mass(double th, double ph, const double* p, double* M) noexcept nogil:
    cdef double r = p[P_R]
    cdef double h = p[P_H]
    cdef double l2 = p[P_L2]
    cdef double d0 = p[P_D0]
    cdef double s2 = sin(0.5 * th)
    cdef double c2 = cos(0.5 * th)
    cdef double t2 = s2 / c2
    cdef double cth = cos(th)
    cdef double Mp = p[P_M]
    cdef double m00 = 0.25 * Mp * (h * h + r * r)
    cdef double m01 = 0.0
    cdef double m11 = 0.25 * Mp * (r * r * (1.0 + cth * cth) + 4.0 * h * h * s2 * s2)
    cdef double wq = 0.25 * p[P_MLINK] * l2 * l2
    cdef double wx = p[P_IX]
    cdef double wy = wq + p[P_IY]
    cdef double wz = wq + p[P_IZ]
    cdef double phi_i, cp, sp, u, den, w, do_th, do_ph, de_th, de_ph, de, sa, ca, kx
    cdef int i
    for i in range(3):
        phi_i = ph + _LINK_OFF[i]
        cp = cos(phi_i)
        sp = sin(phi_i)
        u = -cp * t2
        den = 1.0 + u * u
        w = sqrt(den)
        do_th = -0.5 * cp / (c2 * c2) / den
        do_ph = sp * t2 / den
        de = atan(sp * t2 / w)
        de_th = 0.5 * sp / w
        de_ph = cp * t2 / w
        sa = sin(d0 - de)
        ca = cos(d0 - de)
        kx = wx * sa * sa + wy * ca * ca
        m00 += kx * do_th * do_th + wz * de_th * de_th
        m01 += kx * do_th * do_ph + wz * de_th * de_ph
        m11 += kx * do_ph * do_ph + wz * de_ph * de_ph
    M[0] = m00
    M[1] = m01
    M[2] = m11


cdef inline void _gravity(double th, double ph, const double* p, double* G) noexcept nogil:
    cdef double l2 = p[P_L2]
    cdef double d0 = p[P_D0]
    cdef double t2 = tan(0.5 * th)
    cdef double g = p[P_G]
    cdef double g0 = -0.5 * p[P_M] * g * p[P_H] * sin(0.5 * th)
    cdef double g1 = 0.0
    cdef double wl = 0.5 * l2 * p[P_MLINK] * g
    cdef double phi_i, cp, sp, w, de_th, de_ph, de, sa
    cdef int i
    for i in range(3):
        phi_i = ph + _LINK_OFF[i]
        cp = cos(phi_i)
        sp = sin(phi_i)
        w = sqrt(1.0 + cp * cp * t2 * t2)
        de = atan(sp * t2 / w)
        de_th = 0.5 * sp / w
        de_ph = cp * t2 / w
        sa = sin(d0 - de)
        g0 += wl * sa * de_th
        g1 += wl * sa * de_ph
    G[0] = g0
    G[1] = g1


cdef inline void _genforce(double th, double ph, double thd, double phd, const double* T,
                           const double* p, double* Q) noexcept nogil:
    cdef double r = p[P_R]
    cdef double h = p[P_H]
    cdef double s2 = sin(0.5 * th)
    cdef double c2 = cos(0.5 * th)
    cdef double q0 = 0.0
    cdef double q1 = 0.0
    cdef double sa, ca, L, j0, j1, Ld, F
    cdef int i, base
    for i in range(3):
        base = P_TCA + TCA_STRIDE * i
        sa = sin(ph + _TCA_OFF[i])
        ca = cos(ph + _TCA_OFF[i])
        L = h - 2.0 * r * sa * s2
        j0 = -r * sa * c2
        j1 = -2.0 * r * ca * s2
        Ld = j0 * thd + j1 * phd
        F = (p[base + K_] * (L - p[base + OFF_] - p[base + L0_])
             + p[base + B_] * Ld
             + p[base + C_] * (T[i] - p[base + TAMB_]))
        q0 -= F * j0
        q1 -= F * j1
    Q[0] = q0
    Q[1] = q1


cdef inline void _coriolis(double th, double ph, double thd, double phd, const double* p,
                           double* C) noexcept nogil:
    cdef double e = _FD
    cdef double a[3]
    cdef double b[3]
    cdef double c[3]
    cdef double d[3]
    _mass(th + e, ph, p, a)
    _mass(th - e, ph, p, b)
    _mass(th, ph + e, p, c)
    _mass(th, ph - e, p, d)
    cdef double inv = 0.5 / e
    cdef double t00 = (a[0] - b[0]) * inv
    cdef double t01 = (a[1] - b[1]) * inv
    cdef double t11 = (a[2] - b[2]) * inv
    cdef double f00 = (c[0] - d[0]) * inv
    cdef double f01 = (c[1] - d[1]) * inv
    cdef double f11 = (c[2] - d[2]) * inv
    cdef double quad_t = t00 * thd * thd + 2.0 * t01 * thd * phd + t11 * phd * phd
    cdef double quad_f = f00 * thd * thd + 2.0 * f01 * thd * phd + f11 * phd * phd
    C[0] = (t00 * thd + f00 * phd) * thd + (t01 * thd + f01 * phd) * phd - 0.5 * quad_t
    C[1] = (t01 * thd + f01 * phd) * thd + (t11 * thd + f11 * phd) * phd - 0.5 * quad_f


cdef void _deriv(const double* x, const double* u, const double* p, double* out) noexcept nogil:
    cdef double th = x[0]
    cdef double ph = x[1]
    cdef double thd = x[2]
    cdef double phd = x[3]
    cdef double M[3]
    cdef double C[2]
    cdef double G[2]
    cdef double Q[2]
    _mass(th, ph, p, M)
    _coriolis(th, ph, thd, phd, p, C)
    _gravity(th, ph, p, G)
    _genforce(th, ph, thd, phd, x + 4, p, Q)
    cdef double r0 = Q[0] - C[0] - p[P_DTH] * thd - G[0]
    cdef double r1 = Q[1] - C[1] - p[P_DPH] * phd - G[1]
    cdef double det = M[0] * M[2] - M[1] * M[1]
    cdef int i, base
    if not det > 0.0:
        out[0] = NAN
        out[1] = NAN
        out[2] = NAN
        out[3] = NAN
    else:
        out[0] = thd
        out[1] = phd
        out[2] = (M[2] * r0 - M[1] * r1) / det
        out[3] = (M[0] * r1 - M[1] * r0) / det
    for i in range(3):
        base = P_TCA + TCA_STRIDE * i
        out[4 + i] = (u[i] - p[base + LAM_] * (x[4 + i] - p[base + TAMB_])) / p[base + CTH_]


cdef inline void _fold(double* x) noexcept nogil:
    if x[0] < 0.0:
        x[0] = -x[0]
        x[1] = x[1] + M_PI
        x[2] = -x[2]
    if x[1] > M_PI or x[1] <= -M_PI:
        x[1] = x[1] - 2.0 * M_PI * ceil((x[1] - M_PI) / (2.0 * M_PI))


cdef void _rk4(double* x, const double* u, double dt, const double* p) noexcept nogil:
    cdef double k1[7]
    cdef double k2[7]
    cdef double k3[7]
    cdef double k4[7]
    cdef double xt[7]
    cdef int j
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


cdef const double[::1] _vec(object a, Py_ssize_t n):
    cdef const double[::1] v = np.ascontiguousarray(a, dtype=np.float64).reshape(-1)
    if v.shape[0] != n:
        raise ValueError(f"expected length {n}, got {v.shape[0]}")
    return v


def state_derivative(x, u, p):
    """dx/dt for state ``x`` under electrical powers ``u``."""
    cdef const double[::1] xv = _vec(x, 7)
    cdef const double[::1] uv = _vec(u, 3)
    cdef const double[::1] pv = _vec(p, N_PARAMS)
    out = np.empty(7)
    cdef double[::1] ov = out
    _deriv(&xv[0], &uv[0], &pv[0], &ov[0])
    return out


def mass_matrix(double th, double ph, p):
    cdef const double[::1] pv = _vec(p, N_PARAMS)
    cdef double M[3]
    _mass(th, ph, &pv[0], M)
    return np.array([[M[0], M[1]], [M[1], M[2]]])


def eom_terms(x, p):
    """``(M, coriolis, gravity, generalized force)`` at state ``x``."""
    cdef const double[::1] xv = _vec(x, 7)
    cdef const double[::1] pv = _vec(p, N_PARAMS)
    cdef double M[3]
    cdef double C[2]
    cdef double G[2]
    cdef double Q[2]
    _mass(xv[0], xv[1], &pv[0], M)
    _coriolis(xv[0], xv[1], xv[2], xv[3], &pv[0], C)
    _gravity(xv[0], xv[1], &pv[0], G)
    _genforce(xv[0], xv[1], xv[2], xv[3], &xv[4], &pv[0], Q)
    return (np.array([[M[0], M[1]], [M[1], M[2]]]), np.array([C[0], C[1]]),
            np.array([G[0], G[1]]), np.array([Q[0], Q[1]]))


def rk4_integrate(x, u, double dt, long nsteps, p):
    """Advance ``x`` by ``nsteps`` RK4 steps under constant ``u``.

    Returns ``(x_new, failed_step)``; see the pure-Python twin.
    """
    out = np.array(x, dtype=np.float64).reshape(-1).copy()
    if out.shape[0] != 7:
        raise ValueError("state must have length 7")
    cdef double[::1] xv = out
    cdef const double[::1] uv = _vec(u, 3)
    cdef const double[::1] pv = _vec(p, N_PARAMS)
    cdef double prev[7]
    cdef long n
    cdef int j
    cdef bint ok
    cdef long failed = -1
    with nogil:
        for n in range(nsteps):
            for j in range(7):
                prev[j] = xv[j]
            _rk4(&xv[0], &uv[0], dt, &pv[0])
            ok = True
            for j in range(7):
                if not isfinite(xv[j]):
                    ok = False
            if not ok:
                for j in range(7):
                    xv[j] = prev[j]
                failed = n
                break
            _fold(&xv[0])
    return out, failed


cdef bint _lu_solve(double* A, int n, double* R, int m) noexcept nogil:
    cdef int k, i, j, piv
    cdef double best, v, f, akk, s, tmp
    for k in range(n):
        piv = k
        best = fabs(A[k * n + k])
        for i in range(k + 1, n):
            v = fabs(A[i * n + k])
            if v > best:
                best = v
                piv = i
        if best == 0.0:
            return False
        if piv != k:
            for j in range(n):
                tmp = A[k * n + j]
                A[k * n + j] = A[piv * n + j]
                A[piv * n + j] = tmp
            for j in range(m):
                tmp = R[k * m + j]
                R[k * m + j] = R[piv * m + j]
                R[piv * m + j] = tmp
        akk = A[k * n + k]
        for i in range(k + 1, n):
            f = A[i * n + k] / akk
            if f != 0.0:
                for j in range(k, n):
                    A[i * n + j] -= f * A[k * n + j]
                for j in range(m):
                    R[i * m + j] -= f * R[k * m + j]
    for k in range(n - 1, -1, -1):
        akk = A[k * n + k]
        for j in range(m):
            s = R[k * m + j]
            for i in range(k + 1, n):
                s -= A[k * n + i] * R[i * m + j]
            R[k * m + j] = s / akk
    return True


cdef void _jacobian(const double* x, const double* u, const double* p, const double* f0,
                    double* J) noexcept nogil:
    cdef double xt[7]
    cdef double ft[7]
    cdef double hstep
    cdef int i, j, base
    for j in range(49):
        J[j] = 0.0
    for j in range(7):
        xt[j] = x[j]
    for j in range(7):
        hstep = 1e-7 * max(1.0, fabs(x[j]))
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


def predictor(x, u, double dt, p, bint implicit, bint want_jac):
    """One step of the controller's prediction model; see the pure-Python twin."""
    cdef const double[::1] xv = _vec(x, 7)
    cdef const double[::1] uv = _vec(u, 3)
    cdef const double[::1] pv = _vec(p, N_PARAMS)
    cdef double f0[7]
    cdef double J[49]
    cdef double W[49]
    cdef double R[56]
    cdef int i, j, m
    _deriv(&xv[0], &uv[0], &pv[0], f0)
    F = np.empty(7)
    cdef double[::1] Fv = F
    if not implicit:
        for i in range(7):
            Fv[i] = xv[i] + dt * f0[i]
        if not want_jac:
            return F, None, None
        _jacobian(&xv[0], &uv[0], &pv[0], f0, J)
        A = np.eye(7)
        for i in range(7):
            for j in range(7):
                A[i, j] += dt * J[i * 7 + j]
        B = np.zeros((7, 3))
        for i in range(3):
            B[4 + i, i] = dt / pv[P_TCA + TCA_STRIDE * i + CTH_]
        return F, A, B
    _jacobian(&xv[0], &uv[0], &pv[0], f0, J)
    for i in range(49):
        W[i] = -dt * J[i]
    for i in range(7):
        W[i * 7 + i] += 1.0
    m = 8 if want_jac else 1
    for i in range(7 * m):
        R[i] = 0.0
    for i in range(7):
        R[i * m] = f0[i]
        if want_jac:
            R[i * m + 1 + i] = 1.0
    if not _lu_solve(W, 7, R, m):
        return np.full(7, np.nan), None, None
    for i in range(7):
        Fv[i] = xv[i] + dt * R[i * m]
    if not want_jac:
        return F, None, None
    Winv = np.empty((7, 7))
    cdef double[:, ::1] Wv = Winv
    for i in range(7):
        for j in range(7):
            Wv[i, j] = R[i * m + 1 + j]
    B = np.zeros((7, 3))
    for i in range(3):
        for j in range(7):
            B[j, i] = dt * Wv[j, 4 + i] / pv[P_TCA + TCA_STRIDE * i + CTH_]
    return F, Winv, B
