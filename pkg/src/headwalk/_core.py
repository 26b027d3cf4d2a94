"""Compiled kernels for the planar point-mass walker and the cart upper body.

Everything in here works on flat float64 arrays so that numba can compile it;
the typed, documented surface lives in :mod:`headwalk.dynamics`.

Conventions
-----------
All absolute angles share one sense: a segment with angle ``a`` points along
``u(a) = (sin a, cos a)`` from its lower end to its upper end, so positive
angles lean forward (+x). A leg of angle ``a`` therefore has its toe at
``hip - l * u(a)``.

Floating coordinates (7): hip x, hip y, stance-leg angle, swing-leg angle,
torso, neck and head angles. Reduced coordinates depend on the mode:

* stance: (phi, l, psi, alpha[, gamma, beta]) with the stance toe pinned
* flight: (x, y, phi, psi, alpha[, gamma, beta])
* cart:   (alpha[, gamma, beta]) with the hip following a prescribed p(t)

For the rigid-neck model the torso, neck and head share the single coordinate
alpha.
"""
import math

import numpy as np
from numba import njit

# body array layout
B_LH, B_LN, B_LT, B_LP0, B_LL, B_MH, B_MN, B_MT, B_ML, B_G = range(10)
# gains array layout
(K_TOE_P, K_TOE_D, K_VREF, K_HIP_P, K_THR, K_HIP_D,
 K_T_P, K_T_D, K_N_P, K_N_D, K_H_P, K_H_D) = range(12)
# integrator config layout
C_DT, C_DTI, C_WIN, C_CLR, C_TMAX = range(5)

IX, IY, IAS, IAW, IAL, IGA, IBE = range(7)
NF = 7
NP = 5  # point masses: stance leg, swing leg, torso, neck, head

STANCE, FLIGHT, CART = 0, 1, 2
MODEL_A, MODEL_B = 0, 1

# advance() status codes
ST_IMPACT, ST_FALL, ST_DIVERGED, ST_STALL, ST_SINGULAR, ST_RETURNED, ST_OK = range(7)

# recorded trace columns
R_T, R_PHASE, R_E, R_P = 0, 1, 2, 3
R_XI = 4  # 12 section-state columns follow
R_PSI, R_PSID = 16, 17  # absolute swing-leg angle and rate
R_GRF = 18  # vertical ground reaction on the stance toe
NREC = 19

PHASE_SWING, PHASE_IMPACT, PHASE_TAKEOFF = 0, 1, 2


@njit(cache=True)
def n_upper(model):
    return 3 if model == MODEL_B else 1


@njit(cache=True)
def n_reduced(mode, model):
    if mode == STANCE:
        return 3 + n_upper(model)
    if mode == FLIGHT:
        return 4 + n_upper(model)
    return n_upper(model)


@njit(cache=True)
def _upper_offset(mode):
    if mode == STANCE:
        return 3
    if mode == FLIGHT:
        return 4
    return 0


@njit(cache=True)
def expand(mode, model, qm, qmd, base, qf, qfd, S, sdq):
    """Map reduced coordinates to floating ones.

    ``base`` is the pinned toe (x, y) in stance mode and (p, pdot, pddot) in
    cart mode. Fills qf, qfd, the Jacobian S (7 x n) and the velocity-product
    term sdq such that qf_ddot = S qm_ddot + sdq.
    """
    n = qm.shape[0]
    for i in range(NF):
        qf[i] = 0.0
        qfd[i] = 0.0
        sdq[i] = 0.0
        for j in range(n):
            S[i, j] = 0.0
    if mode == STANCE:
        phi = qm[0]
        l = qm[1]
        pd = qmd[0]
        ld = qmd[1]
        s = math.sin(phi)
        c = math.cos(phi)
        qf[IX] = base[0] + l * s
        qf[IY] = base[1] + l * c
        S[IX, 0] = l * c
        S[IX, 1] = s
        S[IY, 0] = -l * s
        S[IY, 1] = c
        sdq[IX] = 2.0 * ld * pd * c - l * pd * pd * s
        sdq[IY] = -2.0 * ld * pd * s - l * pd * pd * c
        qf[IAS] = phi
        S[IAS, 0] = 1.0
        qf[IAW] = qm[2]
        S[IAW, 2] = 1.0
    elif mode == FLIGHT:
        qf[IX] = qm[0]
        S[IX, 0] = 1.0
        qf[IY] = qm[1]
        S[IY, 1] = 1.0
        qf[IAS] = qm[2]
        S[IAS, 2] = 1.0
        qf[IAW] = qm[3]
        S[IAW, 3] = 1.0
    else:
        qf[IX] = base[0]
        qfd[IX] = base[1]
        sdq[IX] = base[2]
    k = _upper_offset(mode)
    if model == MODEL_B:
        for j in range(3):
            qf[IAL + j] = qm[k + j]
            S[IAL + j, k + j] = 1.0
    else:
        for j in range(3):
            qf[IAL + j] = qm[k]
            S[IAL + j, k] = 1.0
    for i in range(NF):
        acc = qfd[i]
        for j in range(n):
            acc += S[i, j] * qmd[j]
        qfd[i] = acc


@njit(cache=True)
def _add_term(k, a, c, qf, qfd, px, py, Jx, Jy, bx, by):
    s = math.sin(qf[a])
    co = math.cos(qf[a])
    w = qfd[a]
    px[k] += c * s
    py[k] += c * co
    Jx[k, a] += c * co
    Jy[k, a] -= c * s
    bx[k] -= c * s * w * w
    by[k] -= c * co * w * w


@njit(cache=True)
def points(body, qf, qfd, px, py, Jx, Jy, bx, by):
    """Positions, Jacobians and velocity-product accelerations of the masses."""
    lh = body[B_LH]
    ln = body[B_LN]
    lt = body[B_LT]
    ll = body[B_LL]
    for k in range(NP):
        px[k] = qf[IX]
        py[k] = qf[IY]
        bx[k] = 0.0
        by[k] = 0.0
        for a in range(NF):
            Jx[k, a] = 0.0
            Jy[k, a] = 0.0
        Jx[k, IX] = 1.0
        Jy[k, IY] = 1.0
    _add_term(0, IAS, -ll, qf, qfd, px, py, Jx, Jy, bx, by)
    _add_term(1, IAW, -ll, qf, qfd, px, py, Jx, Jy, bx, by)
    _add_term(2, IAL, 0.5 * lt, qf, qfd, px, py, Jx, Jy, bx, by)
    _add_term(3, IAL, lt, qf, qfd, px, py, Jx, Jy, bx, by)
    _add_term(3, IGA, 0.5 * ln, qf, qfd, px, py, Jx, Jy, bx, by)
    _add_term(4, IAL, lt, qf, qfd, px, py, Jx, Jy, bx, by)
    _add_term(4, IGA, ln, qf, qfd, px, py, Jx, Jy, bx, by)
    _add_term(4, IBE, lh, qf, qfd, px, py, Jx, Jy, bx, by)


@njit(cache=True)
def masses(mode, body, out):
    legs = 0.0 if mode == CART else body[B_ML]
    out[0] = legs
    out[1] = legs
    out[2] = body[B_MT]
    out[3] = body[B_MN]
    out[4] = body[B_MH]


@njit(cache=True, inline='always')
def toe_force(l, ld, body, gains):
    f = -gains[K_TOE_P] * (l - body[B_LP0]) - gains[K_TOE_D] * ld
    return f if f > 0.0 else 0.0


@njit(cache=True, inline='always')
def pd(angle, rate, kp, kd, ref):
    return -kp * (angle - ref) - kd * rate


@njit(cache=True)
def evaluate(mode, model, qm, qmd, base, body, gains, ext, M, rhs, act, mom):
    """Assemble M qdd = rhs for the requested mode.

    act receives (toe force, hip, trunk, neck, head torques); mom receives the
    mass-weighted horizontal/vertical Jacobian rows and their velocity terms
    so that sum(m a_x) = mom[0, :n] . qdd + mom[0, n] (same for row 1).
    ``ext`` is an extra generalized force in reduced coordinates.
    """
    _evaluate(mode, model, qm, qmd, base, body, gains, ext, M, rhs, act, mom,
              np.empty(WS_EVAL))


# scratch layout shared by the allocation-free kernels below
WS_EVAL = 192
WS_ACCEL = WS_EVAL + 49 + 7 + 5 + 16 + 49 + 7
WS_RK4 = WS_ACCEL + 9 * 7


@njit(cache=True)
def _evaluate(mode, model, qm, qmd, base, body, gains, ext, M, rhs, act, mom, ws):
    n = qm.shape[0]
    qf = ws[0:7]
    qfd = ws[7:14]
    sdq = ws[14:21]
    px = ws[21:26]
    py = ws[26:31]
    bx = ws[31:36]
    by = ws[36:41]
    m = ws[41:46]
    jrx = ws[46:46 + n]
    jry = ws[53:53 + n]
    Qf = ws[60:67]
    S = ws[67:67 + NF * n].reshape((NF, n))
    Jx = ws[116:151].reshape((NP, NF))
    Jy = ws[151:186].reshape((NP, NF))
    expand(mode, model, qm, qmd, base, qf, qfd, S, sdq)
    points(body, qf, qfd, px, py, Jx, Jy, bx, by)
    masses(mode, body, m)
    g = body[B_G]

    for i in range(n):
        rhs[i] = ext[i]
        for j in range(n):
            M[i, j] = 0.0
    for j in range(n + 1):
        mom[0, j] = 0.0
        mom[1, j] = 0.0
    for k in range(NP):
        mk = m[k]
        if mk == 0.0:
            continue
        brx = bx[k]
        bry = by[k]
        for a in range(NF):
            brx += Jx[k, a] * sdq[a]
            bry += Jy[k, a] * sdq[a]
        for j in range(n):
            sx = 0.0
            sy = 0.0
            for a in range(NF):
                sx += Jx[k, a] * S[a, j]
                sy += Jy[k, a] * S[a, j]
            jrx[j] = sx
            jry[j] = sy
        for i in range(n):
            mom[0, i] += mk * jrx[i]
            mom[1, i] += mk * jry[i]
            rhs[i] -= mk * (jrx[i] * brx + jry[i] * bry) + mk * g * jry[i]
            for j in range(i, n):
                M[i, j] += mk * (jrx[i] * jrx[j] + jry[i] * jry[j])
        mom[0, n] += mk * brx
        mom[1, n] += mk * bry
    for i in range(n):
        for j in range(i):
            M[i, j] = M[j, i]

    # actuation, as generalized forces in floating coordinates
    for a in range(NF):
        Qf[a] = 0.0
    tau_hip = 0.0
    if mode != CART:
        th = qf[IAS] - qf[IAW]
        thd = qfd[IAS] - qfd[IAW]
        tau_hip = pd(th, thd, gains[K_HIP_P], gains[K_HIP_D], gains[K_THR])
        Qf[IAS] += tau_hip
        Qf[IAW] -= tau_hip
    tau_t = pd(qf[IAL], qfd[IAL], gains[K_T_P], gains[K_T_D], 0.0)
    Qf[IAL] += tau_t
    Qf[IAS] -= tau_t
    tau_n = 0.0
    tau_h = 0.0
    if model == MODEL_B:
        tau_n = pd(qf[IGA], qfd[IGA], gains[K_N_P], gains[K_N_D], 0.0)
        tau_h = pd(qf[IBE], qfd[IBE], gains[K_H_P], gains[K_H_D], 0.0)
        Qf[IGA] += tau_n
        Qf[IAL] -= tau_n
        Qf[IBE] += tau_h
        Qf[IGA] -= tau_h
    for i in range(n):
        acc = 0.0
        for a in range(NF):
            acc += S[a, i] * Qf[a]
        rhs[i] += acc
    f = 0.0
    if mode == STANCE:
        f = toe_force(qm[1], qmd[1], body, gains)
        rhs[1] += f
    act[0] = f
    act[1] = tau_hip
    act[2] = tau_t
    act[3] = tau_n
    act[4] = tau_h


@njit(cache=True)
def chol_solve(M, b, out):
    """Solve the SPD system M x = b; returns False if M is not positive definite."""
    n = b.shape[0]
    return _chol(M, b, out, np.empty((n, n)), np.empty(n))


@njit(cache=True, inline='always')
def _chol(M, b, out, L, y):
    n = b.shape[0]
    for i in range(n):
        for j in range(i + 1):
            s = M[i, j]
            for k in range(j):
                s -= L[i, k] * L[j, k]
            if i == j:
                if s <= 0.0:
                    return False
                L[i, i] = math.sqrt(s)
            else:
                L[i, j] = s / L[j, j]
    for i in range(n):
        s = b[i]
        for k in range(i):
            s -= L[i, k] * y[k]
        y[i] = s / L[i, i]
    for i in range(n - 1, -1, -1):
        s = y[i]
        for k in range(i + 1, n):
            s -= L[k, i] * out[k]
        out[i] = s / L[i, i]
    return True


@njit(cache=True)
def accel(mode, model, qm, qmd, base, body, gains, ext, qdd):
    return _accel(mode, model, qm, qmd, base, body, gains, ext, qdd, np.empty(WS_ACCEL))


@njit(cache=True)
def _accel(mode, model, qm, qmd, base, body, gains, ext, qdd, ws):
    n = qm.shape[0]
    o = WS_EVAL
    M = ws[o:o + n * n].reshape((n, n))
    o += 49
    rhs = ws[o:o + n]
    o += 7
    act = ws[o:o + 5]
    o += 5
    mom = ws[o:o + 2 * (n + 1)].reshape((2, n + 1))
    o += 16
    L = ws[o:o + n * n].reshape((n, n))
    o += 49
    y = ws[o:o + n]
    _evaluate(mode, model, qm, qmd, base, body, gains, ext, M, rhs, act, mom, ws)
    return _chol(M, rhs, qdd, L, y)


@njit(cache=True)
def rk4(mode, model, q, qd, base, body, gains, ext, dt):
    """One classical Runge-Kutta step, in place. Returns False on a singular mass matrix."""
    return _rk4(mode, model, q, qd, base, body, gains, ext, dt, np.empty(WS_RK4))


@njit(cache=True)
def _rk4(mode, model, q, qd, base, body, gains, ext, dt, ws):
    n = q.shape[0]
    o = WS_ACCEL
    a1 = ws[o:o + n]
    a2 = ws[o + 7:o + 7 + n]
    a3 = ws[o + 14:o + 14 + n]
    a4 = ws[o + 21:o + 21 + n]
    qt = ws[o + 28:o + 28 + n]
    ws[o + 35:o + 35 + n]
    v2 = ws[o + 42:o + 42 + n]
    v3 = ws[o + 49:o + 49 + n]
    v4 = ws[o + 56:o + 56 + n]
    ok = _accel(mode, model, q, qd, base, body, gains, ext, a1, ws)
    for i in range(n):
        qt[i] = q[i] + 0.5 * dt * qd[i]
        v2[i] = qd[i] + 0.5 * dt * a1[i]
    ok &= _accel(mode, model, qt, v2, base, body, gains, ext, a2, ws)
    for i in range(n):
        qt[i] = q[i] + 0.5 * dt * v2[i]
        v3[i] = qd[i] + 0.5 * dt * a2[i]
    ok &= _accel(mode, model, qt, v3, base, body, gains, ext, a3, ws)
    for i in range(n):
        qt[i] = q[i] + dt * v3[i]
        v4[i] = qd[i] + dt * a3[i]
    ok &= _accel(mode, model, qt, v4, base, body, gains, ext, a4, ws)
    for i in range(n):
        q[i] += dt / 6.0 * (qd[i] + 2.0 * v2[i] + 2.0 * v3[i] + v4[i])
        qd[i] += dt / 6.0 * (a1[i] + 2.0 * a2[i] + 2.0 * a3[i] + a4[i])
    return ok


# ---------------------------------------------------------------------------
# specialised stance kernel (the hot loop of every walking simulation); it
# builds the reduced Jacobians directly and must agree with evaluate()


@njit(cache=True, inline='always')
def _term(col, c, sn, cs, rate, jx, jy, b):
    jx[col] += c * cs
    jy[col] -= c * sn
    b[0] -= c * rate * rate * sn
    b[1] -= c * rate * rate * cs


@njit(cache=True, inline='always')
def _stance_mass(k, model, q, qd, body, trig, jx, jy, b):
    """Reduced Jacobian rows and velocity-product acceleration of mass k."""
    n = q.shape[0]
    for j in range(n):
        jx[j] = 0.0
        jy[j] = 0.0
    b[0] = 0.0
    b[1] = 0.0
    ca = 3
    cg = 4 if model == MODEL_B else 3
    cb = 5 if model == MODEL_B else 3
    sp, cp, sw, cw, sa, cA, sg, cg_, sb, cb_ = (trig[0], trig[1], trig[2], trig[3], trig[4],
                                                trig[5], trig[6], trig[7], trig[8], trig[9])
    l = q[1]
    ld = qd[1]
    w = qd[0]
    # hip (or stance-leg mass) term along the stance leg
    c = l - body[B_LL] if k == 0 else l
    jx[0] += c * cp
    jy[0] -= c * sp
    jx[1] += sp
    jy[1] += cp
    b[0] += 2.0 * ld * w * cp - c * w * w * sp
    b[1] += -2.0 * ld * w * sp - c * w * w * cp
    if k == 1:
        _term(2, -body[B_LL], sw, cw, qd[2], jx, jy, b)
    elif k == 2:
        _term(ca, 0.5 * body[B_LT], sa, cA, qd[ca], jx, jy, b)
    elif k == 3:
        _term(ca, body[B_LT], sa, cA, qd[ca], jx, jy, b)
        _term(cg, 0.5 * body[B_LN], sg, cg_, qd[cg], jx, jy, b)
    elif k == 4:
        _term(ca, body[B_LT], sa, cA, qd[ca], jx, jy, b)
        _term(cg, body[B_LN], sg, cg_, qd[cg], jx, jy, b)
        _term(cb, body[B_LH], sb, cb_, qd[cb], jx, jy, b)


@njit(cache=True, inline='always')
def _stance_eval(model, q, qd, body, gains, M, rhs, ws):
    n = q.shape[0]
    trig = ws[0:10]
    jx = ws[10:10 + n]
    jy = ws[17:17 + n]
    b = ws[24:26]
    trig[0] = math.sin(q[0])
    trig[1] = math.cos(q[0])
    trig[2] = math.sin(q[2])
    trig[3] = math.cos(q[2])
    trig[4] = math.sin(q[3])
    trig[5] = math.cos(q[3])
    if model == MODEL_B:
        trig[6] = math.sin(q[4])
        trig[7] = math.cos(q[4])
        trig[8] = math.sin(q[5])
        trig[9] = math.cos(q[5])
    else:
        for i in range(4):
            trig[6 + i] = trig[4 + (i % 2)]
    g = body[B_G]
    for i in range(n):
        rhs[i] = 0.0
        for j in range(n):
            M[i, j] = 0.0
    for k in range(NP):
        if k == 0 or k == 1:
            mk = body[B_ML]
        elif k == 2:
            mk = body[B_MT]
        elif k == 3:
            mk = body[B_MN]
        else:
            mk = body[B_MH]
        if mk == 0.0:
            continue
        _stance_mass(k, model, q, qd, body, trig, jx, jy, b)
        for i in range(n):
            xi = jx[i]
            yi = jy[i]
            if xi == 0.0 and yi == 0.0:
                continue
            rhs[i] -= mk * (xi * b[0] + yi * b[1] + g * yi)
            for j in range(i, n):
                M[i, j] += mk * (xi * jx[j] + yi * jy[j])
    for i in range(n):
        for j in range(i):
            M[i, j] = M[j, i]
    tau_hip = pd(q[0] - q[2], qd[0] - qd[2], gains[K_HIP_P], gains[K_HIP_D], gains[K_THR])
    rhs[0] += tau_hip
    rhs[2] -= tau_hip
    tau_t = pd(q[3], qd[3], gains[K_T_P], gains[K_T_D], 0.0)
    rhs[3] += tau_t
    rhs[0] -= tau_t
    if model == MODEL_B:
        tau_n = pd(q[4], qd[4], gains[K_N_P], gains[K_N_D], 0.0)
        tau_h = pd(q[5], qd[5], gains[K_H_P], gains[K_H_D], 0.0)
        rhs[4] += tau_n
        rhs[3] -= tau_n
        rhs[5] += tau_h
        rhs[4] -= tau_h
    rhs[1] += toe_force(q[1], qd[1], body, gains)


WS_STANCE = 26 + 49 + 7 + 49 + 7 + 9 * 7


@njit(cache=True, inline='always')
def _stance_accel(model, q, qd, body, gains, qdd, ws):
    n = q.shape[0]
    M = ws[26:26 + n * n].reshape((n, n))
    rhs = ws[75:75 + n]
    L = ws[82:82 + n * n].reshape((n, n))
    y = ws[131:131 + n]
    _stance_eval(model, q, qd, body, gains, M, rhs, ws)
    return _chol(M, rhs, qdd, L, y)


@njit(cache=True)
def stance_accel(model, q, qd, body, gains):
    """Stance accelerations from the specialised kernel (for cross-checks)."""
    out = np.empty(q.shape[0])
    ok = _stance_accel(model, q, qd, body, gains, out, np.empty(WS_STANCE))
    return out, ok


@njit(cache=True)
def _stance_rk4(model, q, qd, body, gains, dt, ws):
    n = q.shape[0]
    o = 138
    a1 = ws[o:o + n]
    a2 = ws[o + 7:o + 7 + n]
    a3 = ws[o + 14:o + 14 + n]
    a4 = ws[o + 21:o + 21 + n]
    qt = ws[o + 28:o + 28 + n]
    v2 = ws[o + 35:o + 35 + n]
    v3 = ws[o + 42:o + 42 + n]
    v4 = ws[o + 49:o + 49 + n]
    ok = _stance_accel(model, q, qd, body, gains, a1, ws)
    for i in range(n):
        qt[i] = q[i] + 0.5 * dt * qd[i]
        v2[i] = qd[i] + 0.5 * dt * a1[i]
    ok &= _stance_accel(model, qt, v2, body, gains, a2, ws)
    for i in range(n):
        qt[i] = q[i] + 0.5 * dt * v2[i]
        v3[i] = qd[i] + 0.5 * dt * a2[i]
    ok &= _stance_accel(model, qt, v3, body, gains, a3, ws)
    for i in range(n):
        qt[i] = q[i] + dt * v3[i]
        v4[i] = qd[i] + dt * a3[i]
    ok &= _stance_accel(model, qt, v4, body, gains, a4, ws)
    for i in range(n):
        q[i] += dt / 6.0 * (qd[i] + 2.0 * v2[i] + 2.0 * v3[i] + v4[i])
        qd[i] += dt / 6.0 * (a1[i] + 2.0 * a2[i] + 2.0 * a3[i] + a4[i])
    return ok


@njit(cache=True)
def energy(mode, model, qm, qmd, base, body):
    """Kinetic plus gravitational potential energy (spring and controller potentials excluded)."""
    n = qm.shape[0]
    qf = np.empty(NF)
    qfd = np.empty(NF)
    S = np.empty((NF, n))
    sdq = np.empty(NF)
    expand(mode, model, qm, qmd, base, qf, qfd, S, sdq)
    px = np.empty(NP)
    py = np.empty(NP)
    Jx = np.empty((NP, NF))
    Jy = np.empty((NP, NF))
    bx = np.empty(NP)
    by = np.empty(NP)
    points(body, qf, qfd, px, py, Jx, Jy, bx, by)
    m = np.empty(NP)
    masses(mode, body, m)
    e = 0.0
    for k in range(NP):
        vx = 0.0
        vy = 0.0
        for a in range(NF):
            vx += Jx[k, a] * qfd[a]
            vy += Jy[k, a] * qfd[a]
        e += 0.5 * m[k] * (vx * vx + vy * vy) + m[k] * body[B_G] * py[k]
    return e


@njit(cache=True)
def nc_power(model, q, qd, body, gains):
    """Summed power of toe force and joint torques in stance mode."""
    n = q.shape[0]
    M = np.empty((n, n))
    rhs = np.empty(n)
    act = np.empty(5)
    mom = np.empty((2, n + 1))
    base = np.zeros(2)
    evaluate(STANCE, model, q, qd, base, body, gains, np.zeros(n), M, rhs, act, mom)
    p = act[0] * qd[1] + act[1] * (qd[0] - qd[2]) + act[2] * (qd[3] - qd[0])
    if model == MODEL_B:
        p += act[3] * (qd[4] - qd[3]) + act[4] * (qd[5] - qd[4])
    return p


# ---------------------------------------------------------------------------
# walker geometry helpers (stance mode)


@njit(cache=True, inline='always')
def ground_height(px, py, toe, eta):
    """Signed distance of a point above the ground line through the stance toe."""
    return -(px - toe[0]) * math.sin(eta) + (py - toe[1]) * math.cos(eta)


@njit(cache=True, inline='always')
def swing_toe(q, qd, toe, body):
    """Swing toe position and velocity (x, y, vx, vy)."""
    l0 = body[B_LP0]
    phi = q[0]
    l = q[1]
    psi = q[2]
    hx = toe[0] + l * math.sin(phi)
    hy = toe[1] + l * math.cos(phi)
    hvx = qd[1] * math.sin(phi) + l * qd[0] * math.cos(phi)
    hvy = qd[1] * math.cos(phi) - l * qd[0] * math.sin(phi)
    x = hx - l0 * math.sin(psi)
    y = hy - l0 * math.cos(psi)
    vx = hvx - l0 * qd[2] * math.cos(psi)
    vy = hvy + l0 * qd[2] * math.sin(psi)
    return x, y, vx, vy


@njit(cache=True, inline='always')
def swing_clearance(q, qd, toe, eta, body):
    x, y, vx, vy = swing_toe(q, qd, toe, body)
    h = ground_height(x, y, toe, eta)
    hd = -vx * math.sin(eta) + vy * math.cos(eta)
    return h, hd


@njit(cache=True)
def section_state(model, q, qd, eta, body, out):
    out[0] = q[0] - q[2]
    out[1] = qd[0] - qd[2]
    out[2] = qd[0]
    out[3] = eta
    out[4] = q[3]
    out[5] = qd[3]
    if model == MODEL_B:
        out[6] = q[4]
        out[7] = qd[4]
        out[8] = q[5]
        out[9] = qd[5]
    else:
        out[6] = q[3]
        out[7] = qd[3]
        out[8] = q[3]
        out[9] = qd[3]
    out[10] = q[1] - body[B_LP0]
    out[11] = qd[1]


@njit(cache=True)
def from_section(model, xi, body, q, qd):
    """Rebuild stance coordinates from a pre-impact section state.

    The stance toe sits at the origin and the swing toe is placed on the
    ground line of slope xi[3] through it. Returns False if no consistent
    stance angle exists.
    """
    l0 = body[B_LP0]
    th = xi[0]
    eta = xi[3]
    l = l0 + xi[10]
    phi = 0.5 * th
    ok = False
    for _ in range(60):
        psi = phi - th
        x = l * math.sin(phi) - l0 * math.sin(psi)
        y = l * math.cos(phi) - l0 * math.cos(psi)
        r = -x * math.sin(eta) + y * math.cos(eta)
        dx = l * math.cos(phi) - l0 * math.cos(psi)
        dy = -l * math.sin(phi) + l0 * math.sin(psi)
        dr = -dx * math.sin(eta) + dy * math.cos(eta)
        if dr == 0.0:
            break
        step = r / dr
        phi -= step
        if abs(step) < 1e-14:
            ok = True
            break
    q[0] = phi
    q[1] = l
    q[2] = phi - th
    qd[0] = xi[2]
    qd[1] = xi[11]
    qd[2] = xi[2] - xi[1]
    q[3] = xi[4]
    qd[3] = xi[5]
    if model == MODEL_B:
        q[4] = xi[6]
        qd[4] = xi[7]
        q[5] = xi[8]
        qd[5] = xi[9]
    return ok and abs(phi) < 1.5


@njit(cache=True, inline='always')
def stance_fallen(model, q, qd, toe, eta, body):
    """Contact of the floor with a non-support limb, or a collapsed hip."""
    l = q[1]
    hx = toe[0] + l * math.sin(q[0])
    hy = toe[1] + l * math.cos(q[0])
    if ground_height(hx, hy, toe, eta) < 0.5 * body[B_LP0]:
        return True
    ga = q[4] if model == MODEL_B else q[3]
    be = q[5] if model == MODEL_B else q[3]
    nx = hx + body[B_LT] * math.sin(q[3])
    ny = hy + body[B_LT] * math.cos(q[3])
    if ground_height(nx, ny, toe, eta) <= 0.0:
        return True
    tx = nx + body[B_LN] * math.sin(ga) + body[B_LH] * math.sin(be)
    ty = ny + body[B_LN] * math.cos(ga) + body[B_LH] * math.cos(be)
    return ground_height(tx, ty, toe, eta) <= 0.0


@njit(cache=True, inline='always')
def diverged(q, qd, body):
    for i in range(q.shape[0]):
        if not (abs(q[i]) < 1e6 and abs(qd[i]) < 1e6):
            return True
    return abs(q[1] - body[B_LP0]) >= 0.5 * body[B_LP0]


@njit(cache=True)
def record_row(model, q, qd, toe, eta, body, gains, t, phase, row):
    base = toe
    row[R_T] = t
    row[R_PHASE] = phase
    row[R_E] = energy(STANCE, model, q, qd, base, body)
    row[R_P] = nc_power(model, q, qd, body, gains)
    xi = np.empty(12)
    section_state(model, q, qd, eta, body, xi)
    for i in range(12):
        row[R_XI + i] = xi[i]
    row[R_PSI] = q[2]
    row[R_PSID] = qd[2]
    n = q.shape[0]
    M = np.empty((n, n))
    rhs = np.empty(n)
    act = np.empty(5)
    mom = np.empty((2, n + 1))
    evaluate(STANCE, model, q, qd, base, body, gains, np.zeros(n), M, rhs, act, mom)
    a = np.empty(n)
    chol_solve(M, rhs, a)
    fy = mom[1, n]
    for i in range(n):
        fy += mom[1, i] * a[i]
    row[R_GRF] = fy + body[B_G] * (2.0 * body[B_ML] + body[B_MT] + body[B_MN] + body[B_MH])


@njit(cache=True, inline='always')
def choose_dt(q, qd, toe, eta, body, cfg, since_impact):
    if since_impact < cfg[C_WIN]:
        return cfg[C_DTI]
    return cfg[C_DT]


@njit(cache=True)
def advance(model, body, gains, cfg, q, qd, toe, eta, since_impact, rec, rec_on):
    """Integrate the stance phase until the next impact, a fall or a stall.

    q, qd are updated in place; on ST_IMPACT they hold the pre-impact state.
    Returns (status, elapsed time, number of recorded rows).
    """
    ws = np.empty(WS_STANCE)
    t = 0.0
    nrec = 0
    h_prev, _ = swing_clearance(q, qd, toe, eta, body)
    max_rec = rec.shape[0]
    took_off = False
    if rec_on and nrec < max_rec:
        record_row(model, q, qd, toe, eta, body, gains, t, PHASE_IMPACT, rec[nrec])
        nrec += 1
    while True:
        dt = choose_dt(q, qd, toe, eta, body, cfg, since_impact)
        if not _stance_rk4(model, q, qd, body, gains, dt, ws):
            return ST_SINGULAR, t, nrec
        t += dt
        since_impact += dt
        if diverged(q, qd, body):
            return ST_DIVERGED, t, nrec
        if stance_fallen(model, q, qd, toe, eta, body):
            return ST_FALL, t, nrec
        h, _ = swing_clearance(q, qd, toe, eta, body)
        phase = PHASE_SWING
        if since_impact < cfg[C_WIN]:
            phase = PHASE_IMPACT
        if not took_off and toe_force(q[1], qd[1], body, gains) <= 0.0:
            took_off = True
            phase = PHASE_TAKEOFF
        if rec_on and nrec < max_rec:
            record_row(model, q, qd, toe, eta, body, gains, t, phase, rec[nrec])
            nrec += 1
        if q[0] - q[2] > cfg[C_CLR] and h <= 0.0 and h_prev > 0.0:
            return ST_IMPACT, t, nrec
        h_prev = h
        if t > cfg[C_TMAX]:
            return ST_STALL, t, nrec


@njit(cache=True)
def floating_mass(body, qf):
    """7x7 mass matrix in floating coordinates."""
    qfd = np.zeros(NF)
    px = np.empty(NP)
    py = np.empty(NP)
    Jx = np.empty((NP, NF))
    Jy = np.empty((NP, NF))
    bx = np.empty(NP)
    by = np.empty(NP)
    points(body, qf, qfd, px, py, Jx, Jy, bx, by)
    m = np.empty(NP)
    masses(FLIGHT, body, m)
    M = np.zeros((NF, NF))
    for k in range(NP):
        for i in range(NF):
            for j in range(NF):
                M[i, j] += m[k] * (Jx[k, i] * Jx[k, j] + Jy[k, i] * Jy[k, j])
    return M


@njit(cache=True)
def _kinetic(qd, M):
    n = qd.shape[0]
    e = 0.0
    for i in range(n):
        for j in range(n):
            e += 0.5 * qd[i] * M[i, j] * qd[j]
    return e


@njit(cache=True)
def exchange(model, body, gains, cfg, q, qd, toe, eta, out):
    """Toe-off impulsion on the departing leg, then the no-slip exchange.

    The velocity-driven impulsion acts along the stance leg while its toe is
    still pinned, bringing the leg extension rate to the reference in one
    impulsive step. The landing leg then becomes the stance leg: momentum is
    projected onto the new pinned-toe coordinates and the departing leg is
    released at rest length. The landing toe is placed on the ground line of
    slope eta through the old toe, so that the overshoot of the discrete
    impact detection does not sink the walker.

    Updates q, qd and toe in place. out receives (landing mechanical energy change,
    impulsion energy change, impulsion force, apparent inertia, leg rate
    before impulsion). Returns False on an impulse singularity.
    """
    n = q.shape[0]
    l0 = body[B_LP0]
    M0 = np.empty((n, n))
    r0 = np.empty(n)
    a0 = np.empty(5)
    m0 = np.empty((2, n + 1))
    evaluate(STANCE, model, q, qd, toe, body, gains, np.zeros(n), M0, r0, a0, m0)
    e1 = np.zeros(n)
    e1[1] = 1.0
    w = np.empty(n)
    if not chol_solve(M0, e1, w):
        return False
    if w[1] <= 0.0 or 1.0 / w[1] < 1e-9:
        return False
    m_eff = 1.0 / w[1]
    rate = qd[1]
    P = m_eff * (gains[K_VREF] - rate)
    ke_a = _kinetic(qd, M0)
    for i in range(n):
        qd[i] += w[i] * P
    ke_b = _kinetic(qd, M0)
    e_mid = energy(STANCE, model, q, qd, toe, body)

    qf = np.empty(NF)
    qfd = np.empty(NF)
    S = np.empty((NF, n))
    sdq = np.empty(NF)
    expand(STANCE, model, q, qd, toe, qf, qfd, S, sdq)
    hx = qf[IX]
    hy = qf[IY]
    phi = q[0]
    psi = q[2]
    # relabel so that the landing leg is the stance leg
    qf2 = qf.copy()
    qfd2 = qfd.copy()
    qf2[IAS] = qf[IAW]
    qf2[IAW] = qf[IAS]
    qfd2[IAS] = qfd[IAW]
    qfd2[IAW] = qfd[IAS]
    Mf = floating_mass(body, qf2)

    sx = hx - l0 * math.sin(psi)
    sy = hy - l0 * math.cos(psi)
    h = ground_height(sx, sy, toe, eta)
    toe[0] = sx + h * math.sin(eta)
    toe[1] = sy - h * math.cos(eta)
    q[0] = math.atan2(hx - toe[0], hy - toe[1])
    q[1] = math.hypot(hx - toe[0], hy - toe[1])
    q[2] = phi
    qz = np.zeros(n)
    expand(STANCE, model, q, qz, toe, qf, qfd, S, sdq)
    # momentum projection onto the pinned-toe subspace: S^T Mf S qd = S^T Mf qfd
    MS = Mf @ S
    Mr = S.T @ MS
    b = MS.T @ qfd2
    if not chol_solve(Mr, b, qd):
        return False
    out[0] = energy(STANCE, model, q, qd, toe, body) - e_mid
    out[1] = ke_b - ke_a
    out[2] = P / cfg[C_DTI]
    out[3] = m_eff
    out[4] = rate
    return True


@njit(cache=True)
def mahalanobis2(xi, center, C):
    d = xi - center
    acc = 0.0
    for i in range(d.shape[0]):
        for j in range(d.shape[0]):
            acc += d[i] * C[i, j] * d[j]
    return acc


@njit(cache=True)
def run_steps(model, body, gains, cfg, q, qd, toe, eta0, slopes, center, C, d0, check_kernel,
              out_xi):
    """Apply the step map repeatedly to a live stance configuration.

    q, qd and toe hold a pre-impact state reached on ground of slope eta0
    and are advanced in place. slopes[i] is the ground slope met during step i. Stops at a fall, at a return to
    the kernel (when check_kernel) or when the slopes run out.
    Returns (completed steps, status).
    """
    ex = np.empty(5)
    dummy = np.empty((1, NREC))
    xi = np.empty(12)
    eta = eta0
    for i in range(slopes.shape[0]):
        if not exchange(model, body, gains, cfg, q, qd, toe, eta, ex):
            return i, ST_SINGULAR
        eta = slopes[i]
        status, _, _ = advance(model, body, gains, cfg, q, qd, toe, eta, 0.0, dummy, False)
        if status != ST_IMPACT:
            return i, status
        section_state(model, q, qd, eta, body, xi)
        for j in range(12):
            out_xi[i, j] = xi[j]
        if check_kernel and mahalanobis2(xi, center, C) < d0:
            return i + 1, ST_RETURNED
    return slopes.shape[0], ST_OK


@njit(cache=True)
def run_from_section(model, body, gains, cfg, xi0, slopes, center, C, d0, check_kernel, out_xi):
    """run_steps starting from a section state rebuilt with from_section."""
    n = 3 + n_upper(model)
    q = np.empty(n)
    qd = np.empty(n)
    if not from_section(model, xi0, body, q, qd):
        return 0, ST_DIVERGED
    toe = np.zeros(2)
    return run_steps(model, body, gains, cfg, q, qd, toe, xi0[3], slopes, center, C, d0,
                     check_kernel, out_xi)


@njit(cache=True)
def stance_rk4_step(model, q, qd, body, gains, dt):
    """One in-place stance RK4 step with the specialised kernel."""
    return _stance_rk4(model, q, qd, body, gains, dt, np.empty(WS_STANCE))


@njit(cache=True)
def flight_energy(model, q, qd, body, gains, dt, n_steps):
    """Mechanical energy after each of ``n_steps`` contact-free RK4 steps.

    Entry 0 is the initial energy; q, qd are advanced in place.
    """
    out = np.empty(n_steps + 1)
    base = np.zeros(2)
    ext = np.zeros(q.shape[0])
    out[0] = energy(FLIGHT, model, q, qd, base, body)
    for k in range(n_steps):
        rk4(FLIGHT, model, q, qd, base, body, gains, ext, dt)
        out[k + 1] = energy(FLIGHT, model, q, qd, base, body)
    return out
