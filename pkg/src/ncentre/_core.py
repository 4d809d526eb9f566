"""Compiled propagation kernel.

Physical mode integrates y = (q, p) in time t.  Regularized mode integrates
y = (u, P, t) in the fictitious time s with dt/ds = |q - s_k|, where u are
Levi-Civita (d=2, two components) or Kustaanheimo-Stiefel (d=3, four
components) coordinates of q - s_k and P = 2 L(u)^T p.  On the energy
shell H = E the regularized Hamiltonian

    K = |P|^2/8 - Z_k + |u|^2 (W(q) - E),    W = potential of the other centres

vanishes; its equations are regular at u = 0.

Both modes use the Dormand-Prince 8(5,3) pair.  Events are located by
re-stepping from the start of the bracketing step with a shortened step
(Illinois root finding), which keeps located states at full method order.
"""

import math

import numpy as np
from numba import njit
from scipy.integrate._ivp import dop853_coefficients as _dc

NS = 12
RK_A = np.ascontiguousarray(_dc.A[:NS, :NS])
RK_B = np.ascontiguousarray(_dc.B)
RK_E3 = np.ascontiguousarray(_dc.E3)
RK_E5 = np.ascontiguousarray(_dc.E5)

SAFETY = 0.9
FAC_MIN = 0.333
FAC_MAX = 6.0
PI_BETA = 0.04

# status codes
RUNNING = 0
ESCAPED = 1
RADIUS_REACHED = 2
MAX_TIME = 3
MAX_STEPS = 4
COLLISION = 5
WORD_LIMIT = 6
UNDERFLOW = 7
REG_EXITED = 8

# event kinds
EV_SPHERE_ENTER = 0
EV_SPHERE_EXIT = 1
EV_CLOSE = 2
EV_COLLISION = 3
EV_BUDGET = 4
EV_REG_ENTER = 5
EV_REG_EXIT = 6

COLLISION_L = 1e-14


@njit(cache=True)
def _phys_rhs(y, centres, strengths, d, out):
    n = strengths.shape[0]
    for i in range(d):
        out[i] = y[d + i]
        out[d + i] = 0.0
    for k in range(n):
        r2 = 0.0
        for i in range(d):
            dx = y[i] - centres[k, i]
            r2 += dx * dx
        fac = strengths[k] / (r2 * math.sqrt(r2))
        for i in range(d):
            out[d + i] -= fac * (y[i] - centres[k, i])


@njit(cache=True)
def _ks_x(u, d, x):
    """x = L(u) u (first d components)."""
    if d == 2:
        x[0] = u[0] * u[0] - u[1] * u[1]
        x[1] = 2.0 * u[0] * u[1]
    else:
        x[0] = u[0] * u[0] - u[1] * u[1] - u[2] * u[2] + u[3] * u[3]
        x[1] = 2.0 * (u[0] * u[1] - u[2] * u[3])
        x[2] = 2.0 * (u[0] * u[2] + u[1] * u[3])


@njit(cache=True)
def _ks_lt(u, d, f, out):
    """out = L(u)^T (f, 0)."""
    if d == 2:
        out[0] = u[0] * f[0] + u[1] * f[1]
        out[1] = -u[1] * f[0] + u[0] * f[1]
    else:
        out[0] = u[0] * f[0] + u[1] * f[1] + u[2] * f[2]
        out[1] = -u[1] * f[0] + u[0] * f[1] + u[3] * f[2]
        out[2] = -u[2] * f[0] - u[3] * f[1] + u[0] * f[2]
        out[3] = u[3] * f[0] - u[2] * f[1] + u[1] * f[2]


@njit(cache=True)
def _ks_l(u, d, P, out):
    """out = first d components of L(u) P."""
    if d == 2:
        out[0] = u[0] * P[0] - u[1] * P[1]
        out[1] = u[1] * P[0] + u[0] * P[1]
    else:
        out[0] = u[0] * P[0] - u[1] * P[1] - u[2] * P[2] + u[3] * P[3]
        out[1] = u[1] * P[0] + u[0] * P[1] - u[3] * P[2] - u[2] * P[3]
        out[2] = u[2] * P[0] + u[3] * P[1] + u[0] * P[2] + u[1] * P[3]


@njit(cache=True)
def _reg_rhs(y, centres, strengths, d, kreg, ereg, out):
    n = strengths.shape[0]
    if d == 2:
        u0, u1 = y[0], y[1]
        r = u0 * u0 + u1 * u1
        q0 = centres[kreg, 0] + u0 * u0 - u1 * u1
        q1 = centres[kreg, 1] + 2.0 * u0 * u1
        w = 0.0
        f0 = 0.0
        f1 = 0.0
        for j in range(n):
            if j == kreg:
                continue
            a0 = q0 - centres[j, 0]
            a1 = q1 - centres[j, 1]
            rj2 = a0 * a0 + a1 * a1
            rj = math.sqrt(rj2)
            w -= strengths[j] / rj
            fac = strengths[j] / (rj2 * rj)
            f0 -= fac * a0
            f1 -= fac * a1
        c = w - ereg
        out[0] = 0.25 * y[2]
        out[1] = 0.25 * y[3]
        out[2] = -2.0 * u0 * c + 2.0 * r * (u0 * f0 + u1 * f1)
        out[3] = -2.0 * u1 * c + 2.0 * r * (-u1 * f0 + u0 * f1)
        out[4] = r
    else:
        u0, u1, u2, u3 = y[0], y[1], y[2], y[3]
        r = u0 * u0 + u1 * u1 + u2 * u2 + u3 * u3
        q0 = centres[kreg, 0] + u0 * u0 - u1 * u1 - u2 * u2 + u3 * u3
        q1 = centres[kreg, 1] + 2.0 * (u0 * u1 - u2 * u3)
        q2 = centres[kreg, 2] + 2.0 * (u0 * u2 + u1 * u3)
        w = 0.0
        f0 = 0.0
        f1 = 0.0
        f2 = 0.0
        for j in range(n):
            if j == kreg:
                continue
            a0 = q0 - centres[j, 0]
            a1 = q1 - centres[j, 1]
            a2 = q2 - centres[j, 2]
            rj2 = a0 * a0 + a1 * a1 + a2 * a2
            rj = math.sqrt(rj2)
            w -= strengths[j] / rj
            fac = strengths[j] / (rj2 * rj)
            f0 -= fac * a0
            f1 -= fac * a1
            f2 -= fac * a2
        c = w - ereg
        out[0] = 0.25 * y[4]
        out[1] = 0.25 * y[5]
        out[2] = 0.25 * y[6]
        out[3] = 0.25 * y[7]
        out[4] = -2.0 * u0 * c + 2.0 * r * (u0 * f0 + u1 * f1 + u2 * f2)
        out[5] = -2.0 * u1 * c + 2.0 * r * (-u1 * f0 + u0 * f1 + u3 * f2)
        out[6] = -2.0 * u2 * c + 2.0 * r * (-u2 * f0 - u3 * f1 + u0 * f2)
        out[7] = -2.0 * u3 * c + 2.0 * r * (u3 * f0 - u2 * f1 + u1 * f2)
        out[8] = r


@njit(cache=True)
def _rhs(mode, y, centres, strengths, d, kreg, ereg, out):
    if mode == 0:
        _phys_rhs(y, centres, strengths, d, out)
    else:
        _reg_rhs(y, centres, strengths, d, kreg, ereg, out)


@njit(cache=True)
def _rk_step(mode, y, h, centres, strengths, d, kreg, ereg, rtol, atol, K, ynew):
    """One DOP853 step of size h; returns the scaled error norm.

    K has NS + 2 rows: stage derivatives, the end-point derivative and a
    scratch row.
    """
    nv = y.shape[0]
    tmp = K[NS + 1]
    _rhs(mode, y, centres, strengths, d, kreg, ereg, K[0])
    for s in range(1, NS):
        for i in range(nv):
            acc = 0.0
            for j in range(s):
                acc += RK_A[s, j] * K[j, i]
            tmp[i] = y[i] + h * acc
        _rhs(mode, tmp, centres, strengths, d, kreg, ereg, K[s])
    for i in range(nv):
        acc = 0.0
        for j in range(NS):
            acc += RK_B[j] * K[j, i]
        ynew[i] = y[i] + h * acc
    _rhs(mode, ynew, centres, strengths, d, kreg, ereg, K[NS])
    e5 = 0.0
    e3 = 0.0
    for i in range(nv):
        sc = atol + rtol * max(abs(y[i]), abs(ynew[i]))
        a5 = 0.0
        a3 = 0.0
        for j in range(NS + 1):
            a5 += RK_E5[j] * K[j, i]
            a3 += RK_E3[j] * K[j, i]
        e5 += (a5 / sc) ** 2
        e3 += (a3 / sc) ** 2
    if e5 == 0.0 and e3 == 0.0:
        return 0.0
    return abs(h) * e5 / math.sqrt((e5 + 0.01 * e3) * nv)


@njit(cache=True)
def _hinit(mode, y, centres, strengths, d, kreg, ereg, rtol, atol):
    nv = y.shape[0]
    f0 = np.empty(nv)
    f1 = np.empty(nv)
    _rhs(mode, y, centres, strengths, d, kreg, ereg, f0)
    d0 = 0.0
    d1 = 0.0
    for i in range(nv):
        sc = atol + rtol * abs(y[i])
        d0 += (y[i] / sc) ** 2
        d1 += (f0[i] / sc) ** 2
    d0 = math.sqrt(d0 / nv)
    d1 = math.sqrt(d1 / nv)
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    y1 = np.empty(nv)
    for i in range(nv):
        y1[i] = y[i] + h0 * f0[i]
    _rhs(mode, y1, centres, strengths, d, kreg, ereg, f1)
    d2 = 0.0
    for i in range(nv):
        sc = atol + rtol * abs(y[i])
        d2 += ((f1[i] - f0[i]) / sc) ** 2
    d2 = math.sqrt(d2 / nv) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / 8.0)
    return min(100.0 * h0, h1)


@njit(cache=True)
def _gval(kind, y, d, centres, idx, radius):
    """Event functions: 0 sphere |q|^2 - R^2, 1 radial velocity about centre
    idx, 2 regularized radial velocity u.P."""
    if kind == 0:
        r2 = 0.0
        for i in range(d):
            r2 += y[i] * y[i]
        return r2 - radius * radius
    if kind == 1:
        g = 0.0
        for i in range(d):
            g += (y[i] - centres[idx, i]) * y[d + i]
        return g
    m = 2 if d == 2 else 4
    g = 0.0
    for i in range(m):
        g += y[i] * y[m + i]
    return g


@njit(cache=True)
def _locate(mode, y0, h, ga, gb, kind, idx, radius, centres, strengths, d, kreg, ereg,
            rtol, atol, K, yout):
    """Root of the event function along a step from y0: returns h* in (0, h]
    and leaves the state at h* in yout."""
    a = 0.0
    fa = ga
    b = h
    fb = gb
    tmp = np.empty(y0.shape[0])
    for _ in range(100):
        if fb == fa:
            break
        c = b - fb * (b - a) / (fb - fa)
        if not (min(a, b) < c < max(a, b)):
            c = 0.5 * (a + b)
        _rk_step(mode, y0, c, centres, strengths, d, kreg, ereg, rtol, atol, K, tmp)
        fc = _gval(kind, tmp, d, centres, idx, radius)
        if fc == 0.0:
            b = c
            break
        if fc * fb < 0.0:
            a = b
            fa = fb
        else:
            fa *= 0.5
        b = c
        fb = fc
        if abs(b - a) <= 1e-15 * abs(h):
            break
    _rk_step(mode, y0, b, centres, strengths, d, kreg, ereg, rtol, atol, K, yout)
    return b


@njit(cache=True)
def _to_reg(q, p, centres, kreg, d, yreg):
    m = 2 if d == 2 else 4
    x = np.zeros(3)
    for i in range(d):
        x[i] = q[i] - centres[kreg, i]
    r = 0.0
    for i in range(d):
        r += x[i] * x[i]
    r = math.sqrt(r)
    u = np.zeros(4)
    if d == 2:
        if x[0] >= 0.0:
            u[0] = math.sqrt(0.5 * (r + x[0]))
            u[1] = x[1] / (2.0 * u[0])
        else:
            u[1] = math.sqrt(0.5 * (r - x[0]))
            u[0] = x[1] / (2.0 * u[1])
    else:
        if x[0] >= 0.0:
            u[0] = math.sqrt(0.5 * (r + x[0]))
            u[1] = x[1] / (2.0 * u[0])
            u[2] = x[2] / (2.0 * u[0])
        else:
            u[1] = math.sqrt(0.5 * (r - x[0]))
            u[0] = x[1] / (2.0 * u[1])
            u[3] = x[2] / (2.0 * u[1])
    lt = np.empty(4)
    _ks_lt(u, d, p, lt)
    for i in range(m):
        yreg[i] = u[i]
        yreg[m + i] = 2.0 * lt[i]
    yreg[2 * m] = 0.0


@njit(cache=True)
def _from_reg(yreg, centres, kreg, d, yphys):
    m = 2 if d == 2 else 4
    u = yreg[:m]
    P = yreg[m:2 * m]
    x = np.empty(3)
    _ks_x(u, d, x)
    r = 0.0
    for i in range(m):
        r += u[i] * u[i]
    lp = np.empty(3)
    _ks_l(u, d, P, lp)
    for i in range(d):
        yphys[i] = centres[kreg, i] + x[i]
        yphys[d + i] = lp[i] / (2.0 * r) if r > 0.0 else math.inf
    return r


@njit(cache=True)
def _energy(y, centres, strengths, d):
    n = strengths.shape[0]
    e = 0.0
    for i in range(d):
        e += 0.5 * y[d + i] * y[d + i]
    for k in range(n):
        r2 = 0.0
        for i in range(d):
            dx = y[i] - centres[k, i]
            r2 += dx * dx
        e -= strengths[k] / math.sqrt(r2)
    return e


@njit(cache=True)
def _nearest(y, centres, d):
    n = centres.shape[0]
    best = math.inf
    kbest = -1
    for k in range(n):
        r2 = 0.0
        for i in range(d):
            dx = y[i] - centres[k, i]
            r2 += dx * dx
        if r2 < best:
            best = r2
            kbest = k
    return kbest, math.sqrt(best)


@njit(cache=True)
def _ang_mom_about(y, centres, k, d):
    if d == 2:
        x0 = y[0] - centres[k, 0]
        x1 = y[1] - centres[k, 1]
        return abs(x0 * y[3] - x1 * y[2])
    x0 = y[0] - centres[k, 0]
    x1 = y[1] - centres[k, 1]
    x2 = y[2] - centres[k, 2]
    l0 = x1 * y[5] - x2 * y[4]
    l1 = x2 * y[3] - x0 * y[5]
    l2 = x0 * y[4] - x1 * y[3]
    return math.sqrt(l0 * l0 + l1 * l1 + l2 * l2)


@njit(cache=True)
def _grow(buf, n):
    if n < buf.shape[0]:
        return buf
    new = np.empty((2 * buf.shape[0] + 16, buf.shape[1]))
    new[:n] = buf[:n]
    return new


@njit(cache=True)
def _push_event(ev, ne, t, kind, k, val, y, d):
    ev = _grow(ev, ne)
    ev[ne, 0] = t
    ev[ne, 1] = kind
    ev[ne, 2] = k
    ev[ne, 3] = val
    for i in range(2 * d):
        ev[ne, 4 + i] = y[i]
    return ev, ne + 1


@njit(cache=True)
def _push_sample(sm, ns, t, y, e, d):
    sm = _grow(sm, ns)
    sm[ns, 0] = t
    for i in range(2 * d):
        sm[ns, 1 + i] = y[i]
    sm[ns, 1 + 2 * d] = e
    return sm, ns + 1


@njit(cache=True)
def _controller(err, facold):
    """PI step-size factor h_new = h / fac for an accepted step."""
    fac11 = err ** (1.0 / 8.0 - PI_BETA * 0.75) if err > 0 else 0.0
    fac = fac11 / facold ** PI_BETA
    return max(1.0 / FAC_MAX, min(1.0 / FAC_MIN, fac / SAFETY))


@njit(cache=True)
def adaptive_step(mode, y, h, facold, centres, strengths, d, kreg, ereg, rtol, atol, hmin,
                  K, ynew):
    """Take one accepted step, shrinking h on rejection.

    Returns (h_used, h_next, facold, ok); ok is False on step underflow.
    """
    while True:
        if abs(h) < hmin:
            return h, h, facold, False
        err = _rk_step(mode, y, h, centres, strengths, d, kreg, ereg, rtol, atol, K, ynew)
        if err <= 1.0:
            fac = _controller(err, facold)
            return h, h / fac, max(err, 1e-4), True
        if not math.isfinite(err):
            h *= 0.25
        else:
            h = h / min(1.0 / FAC_MIN, err ** (1.0 / 8.0 - PI_BETA * 0.75) / SAFETY)


@njit(cache=True)
def _sphere_escape_ok(y, d, z_total):
    rr = 0.0
    kin = 0.0
    rv = 0.0
    for i in range(d):
        rr += y[i] * y[i]
        kin += 0.5 * y[d + i] * y[d + i]
        rv += y[i] * y[d + i]
    return rv > 0.0 and kin - z_total / math.sqrt(rr) > 0.0


@njit(cache=True)
def integrate(y0, t0, centres, strengths, z_total, rtol, atol, r_reg, rho,
              spheres, i_escape, i_stop, max_time, max_steps, word_limit,
              record, h_init, timescale, stop_on_reg_exit=False):
    """Propagate y0 = (q, p) from time t0 until a stop condition.

    ``spheres`` holds radii whose crossings are recorded; ``i_escape`` and
    ``i_stop`` index the escape sphere and an optional outward stop sphere
    (-1 when unused).  Returns

        (y, t, status, nsteps, nreg, drift, rmax, samples, events, h_next)

    with sample rows (t, q, p, H) and event rows (t, kind, k, value, q, p).
    Energy drift is measured on physical-mode states only; inside a
    regularization ball H is a difference of large terms.
    """
    d = y0.shape[0] // 2
    m = 2 if d == 2 else 4
    n = centres.shape[0]
    nsph = spheres.shape[0]
    y = y0.copy()
    t = t0
    K = np.empty((NS + 2, 2 * m + 1))
    Kp = np.empty((NS + 2, 2 * d))
    ynew = np.empty(2 * d)
    yev = np.empty(2 * d)
    yreg = np.empty(2 * m + 1)
    yregnew = np.empty(2 * m + 1)
    yregev = np.empty(2 * m + 1)
    ev = np.empty((16, 4 + 2 * d))
    ne = 0
    sm = np.empty((256 if record else 1, 2 + 2 * d))
    ns = 0
    e0 = _energy(y, centres, strengths, d)
    drift = 0.0
    rmax = 0.0
    for i in range(d):
        rmax += y[i] * y[i]
    rmax = math.sqrt(rmax)
    nsteps = 0
    nreg = 0
    status = RUNNING
    last_sym = -1
    nsym = 0
    hmin = 1e-15 * timescale
    h = h_init
    facold = 1e-4
    if record:
        sm, ns = _push_sample(sm, ns, t, y, e0, d)

    kreg, dist = _nearest(y, centres, d)
    mode = 1 if dist < r_reg else 0

    if i_escape >= 0:
        if rmax >= spheres[i_escape] and _sphere_escape_ok(y, d, z_total):
            status = ESCAPED

    cand_t = np.empty(nsph + n)
    cand_kind = np.empty(nsph + n, dtype=np.int64)
    cand_idx = np.empty(nsph + n, dtype=np.int64)

    while status == RUNNING:
        if nsteps >= max_steps:
            status = MAX_STEPS
            ev, ne = _push_event(ev, ne, t, EV_BUDGET, -1, 0.0, y, d)
            break
        if t >= max_time * (1.0 - 1e-15):
            status = MAX_TIME
            ev, ne = _push_event(ev, ne, t, EV_BUDGET, -1, 1.0, y, d)
            break

        if mode == 0:
            if h <= 0.0:
                h = _hinit(0, y, centres, strengths, d, -1, 0.0, rtol, atol)
                facold = 1e-4
            clamped = h > max_time - t
            hstep = max_time - t if clamped else h
            hused, hnext, facold, ok = adaptive_step(0, y, hstep, facold, centres, strengths, d,
                                                     -1, 0.0, rtol, atol, hmin, Kp, ynew)
            nsteps += 1
            if not ok:
                status = UNDERFLOW
                break
            if not clamped or hnext < h:
                h = hnext
            tnew = t + hused
            nc = 0
            ra = 0.0
            rb = 0.0
            for i in range(d):
                ra += y[i] * y[i]
                rb += ynew[i] * ynew[i]
            ra = math.sqrt(ra)
            rb = math.sqrt(rb)
            for s in range(nsph):
                R = spheres[s]
                if (ra < R <= rb) or (ra > R >= rb):
                    hc = _locate(0, y, hused, ra * ra - R * R, rb * rb - R * R, 0, s, R,
                                 centres, strengths, d, -1, 0.0, rtol, atol, Kp, yev)
                    cand_t[nc] = hc
                    cand_kind[nc] = 0
                    cand_idx[nc] = s
                    nc += 1
            dq = 0.0
            for i in range(d):
                dq += (ynew[i] - y[i]) ** 2
            dq = math.sqrt(dq)
            for k in range(n):
                ga = _gval(1, y, d, centres, k, 0.0)
                gb = _gval(1, ynew, d, centres, k, 0.0)
                if ga < 0.0 <= gb:
                    da = 0.0
                    db = 0.0
                    for i in range(d):
                        da += (y[i] - centres[k, i]) ** 2
                        db += (ynew[i] - centres[k, i]) ** 2
                    if min(math.sqrt(da), math.sqrt(db)) < rho + dq:
                        hc = _locate(0, y, hused, ga, gb, 1, k, 0.0, centres, strengths, d,
                                     -1, 0.0, rtol, atol, Kp, yev)
                        cand_t[nc] = hc
                        cand_kind[nc] = 1
                        cand_idx[nc] = k
                        nc += 1
            stopped = False
            if nc > 0:
                order = np.argsort(cand_t[:nc])
                for oi in range(nc):
                    c = order[oi]
                    hc = cand_t[c]
                    _rk_step(0, y, hc, centres, strengths, d, -1, 0.0, rtol, atol, Kp, yev)
                    tc = t + hc
                    if cand_kind[c] == 0:
                        s = cand_idx[c]
                        outward = rb > ra
                        kind = EV_SPHERE_EXIT if outward else EV_SPHERE_ENTER
                        ev, ne = _push_event(ev, ne, tc, kind, s, spheres[s], yev, d)
                        if outward and s == i_stop:
                            status = RADIUS_REACHED
                        elif outward and s == i_escape and _sphere_escape_ok(yev, d, z_total):
                            status = ESCAPED
                    else:
                        k = cand_idx[c]
                        dd = 0.0
                        for i in range(d):
                            dd += (yev[i] - centres[k, i]) ** 2
                        dd = math.sqrt(dd)
                        if dd < rho:
                            ev, ne = _push_event(ev, ne, tc, EV_CLOSE, k, dd, yev, d)
                            if k != last_sym:
                                last_sym = k
                                nsym += 1
                                if word_limit > 0 and nsym > word_limit:
                                    status = WORD_LIMIT
                    if status != RUNNING:
                        for i in range(2 * d):
                            y[i] = yev[i]
                        t = tc
                        stopped = True
                        break
            if not stopped:
                for i in range(2 * d):
                    y[i] = ynew[i]
                t = tnew
            e = _energy(y, centres, strengths, d)
            drift = max(drift, abs(e - e0))
            r = 0.0
            for i in range(d):
                r += y[i] * y[i]
            rmax = max(rmax, math.sqrt(r))
            if record:
                sm, ns = _push_sample(sm, ns, t, y, e, d)
            if stopped:
                break
            kreg, dist = _nearest(y, centres, d)
            if dist < r_reg:
                mode = 1
        else:
            ereg = _energy(y, centres, strengths, d)
            _to_reg(y, y[d:], centres, kreg, d, yreg)
            t_entry = t
            nreg += 1
            ev, ne = _push_event(ev, ne, t, EV_REG_ENTER, kreg, dist, y, d)
            hs = _hinit(1, yreg, centres, strengths, d, kreg, ereg, rtol, atol)
            fold = 1e-4
            while True:
                if nsteps >= max_steps:
                    break
                hused, hs, fold, ok = adaptive_step(1, yreg, hs, fold, centres, strengths, d,
                                                    kreg, ereg, rtol, atol, 1e-300, K, yregnew)
                nsteps += 1
                if not ok:
                    status = UNDERFLOW
                    break
                ga = _gval(2, yreg, d, centres, 0, 0.0)
                gb = _gval(2, yregnew, d, centres, 0, 0.0)
                done = False
                if ga < 0.0 <= gb:
                    _locate(1, yreg, hused, ga, gb, 2, 0, 0.0, centres, strengths, d,
                            kreg, ereg, rtol, atol, K, yregev)
                    rmin = _from_reg(yregev, centres, kreg, d, yev)
                    tc = t_entry + yregev[2 * m]
                    lk = _ang_mom_about(yev, centres, kreg, d) if rmin > 0.0 else 0.0
                    if strengths[kreg] > 0.0 and lk < COLLISION_L:
                        _from_reg(yreg, centres, kreg, d, y)
                        t = tc
                        ev, ne = _push_event(ev, ne, tc, EV_COLLISION, kreg, rmin, y, d)
                        status = COLLISION
                        done = True
                    else:
                        ev, ne = _push_event(ev, ne, tc, EV_CLOSE, kreg, rmin, yev, d)
                        if kreg != last_sym:
                            last_sym = kreg
                            nsym += 1
                            if word_limit > 0 and nsym > word_limit:
                                status = WORD_LIMIT
                                for i in range(2 * d):
                                    y[i] = yev[i]
                                t = tc
                                done = True
                if done:
                    break
                for i in range(2 * m + 1):
                    yreg[i] = yregnew[i]
                rnow = _from_reg(yreg, centres, kreg, d, y)
                t = t_entry + yreg[2 * m]
                if record:
                    sm, ns = _push_sample(sm, ns, t, y, _energy(y, centres, strengths, d), d)
                if rnow >= r_reg or t >= max_time:
                    break
            if status == RUNNING:
                e = _energy(y, centres, strengths, d)
                drift = max(drift, abs(e - e0))
                ev, ne = _push_event(ev, ne, t, EV_REG_EXIT, kreg, 0.0, y, d)
                if stop_on_reg_exit:
                    status = REG_EXITED
            mode = 0
            h = 0.0

    return (y, t, status, nsteps, nreg, drift, rmax, sm[:ns].copy(), ev[:ne].copy(), h)
