"""Closed-form machinery for the reference Kepler problem H = p^2/2 - z/|q|.

Two-dimensional vectors are embedded in the plane x3 = 0 so that one set
of cross-product formulas serves both dimensions.  ``z`` may have either
sign; ``z == 0`` is handled as free motion, not as a limit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import PhaseState

__all__ = [
    "KeplerElements",
    "NoAsymptoteError",
    "CollisionOrbitError",
    "BallNotReachedError",
    "elements_from_state",
    "kepler_asymptotic_momentum",
    "kepler_propagate",
    "kepler_time_in_ball",
    "pericentre_distance",
    "incoming_state",
    "stumpff_g",
]

NEWTON_TOL = 1e-13
NEWTON_MAXITER = 50


class NoAsymptoteError(ValueError):
    """Bound (E <= 0) Kepler orbit has no asymptotic momentum."""


class CollisionOrbitError(ValueError):
    """Orbit with vanishing angular momentum runs into the origin."""


class BallNotReachedError(ValueError):
    """Requested sphere radius lies inside the pericentre distance."""


def _embed(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.size == 3:
        return v.copy()
    return np.array([v[0], v[1], 0.0])


@dataclass(frozen=True)
class KeplerElements:
    """Conserved quantities of one Kepler orbit.

    ``ang_mom`` is a scalar for planar orbits and a 3-vector otherwise;
    ``ang_mom3`` and ``lrl3`` always hold the embedded 3-vectors.
    """

    energy: float
    ang_mom: float | np.ndarray
    lrl: np.ndarray
    z: float
    dim: int
    ang_mom3: np.ndarray
    lrl3: np.ndarray

    @property
    def speed_at_infinity(self) -> float:
        if self.energy <= 0:
            raise NoAsymptoteError("bound orbit")
        return math.sqrt(2.0 * self.energy)

    @property
    def ang_mom_norm(self) -> float:
        return float(np.linalg.norm(self.ang_mom3))

    @property
    def eccentricity(self) -> float:
        if self.z == 0:
            return math.inf
        return float(np.linalg.norm(self.lrl3)) / abs(self.z)


def elements_from_state(state: PhaseState, z: float) -> KeplerElements:
    q = _embed(state.q)
    p = _embed(state.p)
    r = float(np.linalg.norm(q))
    if r == 0.0:
        raise ZeroDivisionError("Kepler elements undefined at the origin")
    energy = 0.5 * float(p @ p) - z / r
    L = np.cross(q, p)
    A = np.cross(p, L) - z * q / r
    d = state.q.size
    return KeplerElements(
        energy=energy,
        ang_mom=float(L[2]) if d == 2 else L,
        lrl=A[:d].copy(),
        z=float(z),
        dim=d,
        ang_mom3=L,
        lrl3=A,
    )


def kepler_asymptotic_momentum(elements: KeplerElements, branch: str = "outgoing",
                               momentum=None) -> np.ndarray:
    """Limit of p(t) for t -> +inf ("outgoing") or t -> -inf ("incoming").

    For the free case (z == 0) the constant momentum is returned, which
    the caller passes as ``momentum``.
    """
    if branch not in ("outgoing", "incoming"):
        raise ValueError("branch must be 'outgoing' or 'incoming'")
    d = elements.dim
    if elements.z == 0.0:
        if momentum is not None:
            return np.array(momentum, dtype=float)
        L, A = elements.ang_mom3, elements.lrl3
        L2 = float(L @ L)
        if L2 == 0.0:
            raise CollisionOrbitError("free orbit through the origin: pass momentum explicitly")
        return (np.cross(L, A) / L2)[:d]
    if elements.energy <= 0.0:
        raise NoAsymptoteError(f"Kepler energy {elements.energy:g} <= 0 has no asymptote")
    L, A, z = elements.ang_mom3, elements.lrl3, elements.z
    L2 = float(L @ L)
    if L2 == 0.0:
        raise CollisionOrbitError("zero angular momentum: collision-line orbit")
    k = math.sqrt(2.0 * elements.energy)
    sgn = 1.0 if branch == "outgoing" else -1.0
    # u (k^2 L^2 + z^2) = k (k L x A -/+ z A)
    out = k * (k * np.cross(L, A) - sgn * z * A) / (k * k * L2 + z * z)
    return out[:d]


def stumpff_g(beta: float, s):
    """Universal functions G0..G3 of argument beta*s^2.

    G_n(s) = s^n c_n(beta s^2) with the Stumpff functions c_n.
    """
    shape = np.shape(s)
    s = np.atleast_1d(np.asarray(s, dtype=float)).ravel()
    x = beta * s * s
    G = np.empty((4,) + s.shape)
    small = np.abs(x) < 1.0
    if np.any(small):
        ss, xs = s[small], x[small]
        c = np.zeros((4,) + ss.shape)
        term = [np.ones_like(xs) / math.factorial(n) for n in range(4)]
        for j in range(25):
            for n in range(4):
                if j == 0:
                    c[n] += term[n]
                else:
                    term[n] = term[n] * (-xs) / ((2 * j + n) * (2 * j + n - 1))
                    c[n] += term[n]
        for n in range(4):
            G[n][small] = ss**n * c[n]
    big = ~small
    if np.any(big):
        sb = s[big]
        if beta > 0:
            rb = math.sqrt(beta)
            y = rb * sb
            G[0][big] = np.cos(y)
            G[1][big] = np.sin(y) / rb
            G[2][big] = 2.0 * np.sin(0.5 * y) ** 2 / beta
            G[3][big] = (sb - G[1][big]) / beta
        else:
            rb = math.sqrt(-beta)
            y = rb * sb
            with np.errstate(over="ignore"):
                G[0][big] = np.cosh(y)
                G[1][big] = np.sinh(y) / rb
                G[2][big] = 2.0 * np.sinh(0.5 * y) ** 2 / (-beta)
                G[3][big] = (G[1][big] - sb) / (-beta)
    return G.reshape((4,) + shape)


def _kepler_time(beta, r0, eta, zeta, s):
    G = stumpff_g(beta, s)
    # overflow while bracketing large spans yields inf/nan, handled by the caller
    with np.errstate(invalid="ignore", over="ignore"):
        t = r0 * s + eta * G[2] + zeta * G[3]
        r = r0 * G[0] + eta * G[1] + (zeta + beta * r0) * G[2]
    return t, r, G


def _solve_universal(beta, r0, eta, zeta, dt):
    """Universal anomaly s with t(s) = dt; Newton safeguarded by bisection."""

    def tof(s):
        t, r, _ = _kepler_time(beta, r0, eta, zeta, s)
        return float(t), float(r)

    sign = 1.0 if dt > 0 else -1.0
    inner, outer = 0.0, dt / r0
    for _ in range(200):
        t, _ = tof(outer)
        if not math.isfinite(t) or sign * (t - dt) >= 0:
            break
        inner, outer = outer, 2.0 * outer
    lo, hi = min(inner, outer), max(inner, outer)
    s = 0.5 * (lo + hi)
    tol = NEWTON_TOL * abs(dt)
    for it in range(NEWTON_MAXITER + 300):
        t, r = tof(s)
        res = t - dt if math.isfinite(t) else math.copysign(math.inf, s)
        if abs(res) <= tol:
            return s
        if res > 0:
            hi = s
        else:
            lo = s
        s_new = s - res / r if (it < NEWTON_MAXITER and r > 0 and math.isfinite(res)) else lo
        if not lo < s_new < hi:
            s_new = 0.5 * (lo + hi)
        if s_new == s or hi - lo <= 4e-16 * max(abs(lo), abs(hi)):
            return s_new
        s = s_new
    return s


def kepler_propagate(state: PhaseState, z: float, dt: float) -> PhaseState:
    """Exact Kepler flow of ``state`` over time ``dt`` (universal variables)."""
    d = state.q.size
    q0, p0 = _embed(state.q), _embed(state.p)
    if dt == 0:
        return PhaseState(state.q, state.p, state.t)
    if z == 0.0:
        return PhaseState(state.q + dt * state.p, state.p, state.t + dt)
    r0 = float(np.linalg.norm(q0))
    if r0 == 0.0:
        raise CollisionOrbitError("state at the origin")
    v2 = float(p0 @ p0)
    beta = 2.0 * z / r0 - v2
    eta = float(q0 @ p0)
    zeta = z - beta * r0
    L = np.linalg.norm(np.cross(q0, p0))
    s = _solve_universal(beta, r0, eta, zeta, dt)
    if z > 0 and L <= 1e-12 * r0 * math.sqrt(max(v2, z / r0)):
        probe = np.linspace(0.0, s, 257)
        _, rs, _ = _kepler_time(beta, r0, eta, zeta, probe)
        if np.min(rs) <= 1e-10 * r0:
            raise CollisionOrbitError("radial orbit reaches the origin within dt")
    _, r, G = _kepler_time(beta, r0, eta, zeta, s)
    r = float(r)
    f = 1.0 - z * G[2] / r0
    g = r0 * G[1] + eta * G[2]
    fd = -z * G[1] / (r * r0)
    gd = 1.0 - z * G[2] / r
    # restore f gd - g fd = 1, which carries the conservation of L
    if abs(f * gd) >= abs(g * fd):
        gd = (1.0 + g * fd) / f
    else:
        fd = (f * gd - 1.0) / g
    q = f * q0 + g * p0
    p = fd * q0 + gd * p0
    return PhaseState(q[:d], p[:d], state.t + dt)


def pericentre_distance(elements: KeplerElements) -> float:
    z, L2 = elements.z, elements.ang_mom_norm ** 2
    A = float(np.linalg.norm(elements.lrl3))
    if z == 0.0:
        return math.sqrt(L2) / math.sqrt(2.0 * elements.energy)
    # r (z + |A| cos phi) = L^2 at phi = 0
    return L2 / (z + A) if z + A > 0 else math.inf


def kepler_time_in_ball(elements: KeplerElements, state_on_orbit: PhaseState | None, R: float) -> float:
    """Total time the unbounded Kepler orbit spends inside |q| <= R.

    The orbit is fixed by ``elements``; ``state_on_orbit`` is accepted for
    interface symmetry and only consulted in the free case.
    """
    z, E = elements.z, elements.energy
    if z == 0.0:
        if state_on_orbit is not None:
            p = np.asarray(state_on_orbit.p, dtype=float)
            k = float(np.linalg.norm(p))
        else:
            k = math.sqrt(2.0 * E)
        b = elements.ang_mom_norm / k
        if R < b:
            raise BallNotReachedError(f"R={R:g} below closest approach {b:g}")
        return 2.0 * math.sqrt((R - b) * (R + b)) / k
    if E <= 0.0:
        raise NoAsymptoteError("time in ball needs an unbounded orbit")
    A = float(np.linalg.norm(elements.lrl3))
    az = abs(z)
    a = az / (2.0 * E)
    e = A / az
    rp = pericentre_distance(elements)
    if R < rp:
        raise BallNotReachedError(f"R={R:g} below pericentre {rp:g}")
    mean_motion = math.sqrt(az / a**3)
    if z > 0:
        # r = a (e cosh F - 1), n t = e sinh F - F
        x = (R / a + 1.0) / e
        F = math.acosh(max(x, 1.0))
        return 2.0 * (e * math.sinh(F) - F) / mean_motion
    # repulsive branch: r = a (e cosh F + 1), n t = e sinh F + F
    x = (R / a - 1.0) / e
    F = math.acosh(max(x, 1.0))
    return 2.0 * (e * math.sinh(F) + F) / mean_motion


def incoming_state(z: float, momentum, impact, R: float) -> PhaseState:
    """Point at radius ``R`` on the incoming branch of the Kepler orbit whose
    asymptote has momentum ``momentum`` and offset vector ``impact``.

    ``impact`` is the perpendicular displacement of the incoming asymptote
    from the origin; its component along ``momentum`` is discarded.
    """
    pin = np.asarray(momentum, dtype=float)
    d = pin.size
    k = float(np.linalg.norm(pin))
    if k == 0.0:
        raise ValueError("asymptotic momentum must be nonzero")
    u = _embed(pin) / k
    b = _embed(impact)
    b = b - (b @ u) * u
    L = np.cross(b, k * u)
    L2 = float(L @ L)
    if L2 == 0.0:
        if z != 0.0:
            speed2 = k * k + 2.0 * z / R
            if speed2 <= 0:
                raise BallNotReachedError("repelled before reaching R")
            return PhaseState((-R * u)[:d], (math.sqrt(speed2) * u)[:d])
        return PhaseState((-R * u)[:d], (k * u)[:d])
    A = np.cross(k * u, L) + z * u
    Anorm = float(np.linalg.norm(A))
    c = (L2 / R - z) / Anorm
    if c > 1.0 or c < -1.0:
        raise BallNotReachedError(f"orbit does not reach radius {R:g}")
    ahat = A / Anorm
    what = np.cross(L / math.sqrt(L2), ahat)
    phi = math.acos(c)
    for sgn in (1.0, -1.0):
        qhat = math.cos(phi) * ahat + sgn * math.sin(phi) * what
        q = R * qhat
        p = np.cross(L, A + z * qhat) / L2
        if q @ p < 0:
            return PhaseState(q[:d], p[:d])
    raise BallNotReachedError("no incoming point at this radius")
