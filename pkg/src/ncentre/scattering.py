"""Orbit classification and scattering data: asymptotic momenta p+-, time
delay tau and the close-approach itinerary.

Both asymptotic quantities are read off a ladder of handoff radii
R_j = r_escape * 2**j.  At each radius the osculating Kepler orbit of the
monopole Hamiltonian (strength Z_inf) is matched to the true orbit and its
asymptote or time-in-ball supplies the estimate; Richardson extrapolation
in 1/R removes the leading error of the multipole remainder.

Time delay convention: tau is the limit of

    (exit time - entry time of the ball |q| <= R)
      - (time_in_ball(incoming-matched Kepler) + time_in_ball(outgoing-matched)) / 2,

which equals the difference of the pericentre passage times of the two
asymptotic Kepler orbits.  The symmetric average makes tau exactly
invariant under time reversal.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple

import numpy as np

from .integrator import IntegratorSettings, StopCondition, Trajectory, propagate
from .kepler import (
    BallNotReachedError,
    CollisionOrbitError,
    NoAsymptoteError,
    elements_from_state,
    incoming_state,
    kepler_asymptotic_momentum,
    kepler_time_in_ball,
)
from .model import CentreConfig, PhaseState, hamiltonian

__all__ = [
    "OrbitClass",
    "LadderOptions",
    "ScatteringRecord",
    "Classification",
    "Estimate",
    "beam_state",
    "beam_direction",
    "impact_vector",
    "classify_orbit",
    "asymptotic_momentum",
    "time_delay",
    "itinerary",
    "scattering_record",
    "record_row",
    "scattering_map_csv",
]


class OrbitClass(str, Enum):
    SCATTERING = "Scattering"
    BOUNDED = "BoundedCandidate"
    TRAPPED = "TrappedCandidate"
    COLLISION = "Collision"
    UNDETERMINED = "Undetermined"


@dataclass(frozen=True)
class LadderOptions:
    """Handoff ladder R_j = r_escape * 2**j for j = 0..levels-1.

    ``p_order`` and ``tau_order`` are the leading powers of 1/R removed by
    Richardson extrapolation.  Left as None they follow from the dipole
    moment sum Z_k s_k about the origin: with a dipole the momentum error
    decays like R^-2 and the delay error like R^-1, without one both gain
    an order.  ``fixed_level`` skips the convergence search
    and reports the extrapolant at that level, which makes the returned
    values smooth functions of the initial point (used for differentiation).
    """

    levels: int = 13
    p_rel_tol: float = 1e-8
    tau_tol: float = 1e-6
    p_order: int | None = None
    tau_order: int | None = None
    min_level: int = 2
    fixed_level: int | None = None


def _orders(config: CentreConfig, opts: LadderOptions) -> tuple[int, int]:
    dip = np.asarray(config.strengths) @ np.asarray(config.centres)
    ref = float(np.sum(np.abs(config.strengths))) * config.length_scale
    bump = 1 if float(np.linalg.norm(dip)) <= 1e-12 * ref else 0
    p_order = opts.p_order if opts.p_order is not None else 2 + bump
    tau_order = opts.tau_order if opts.tau_order is not None else 1 + bump
    return p_order, tau_order


class Estimate(NamedTuple):
    value: object
    residual: float
    level: int
    converged: bool


@dataclass
class ScatteringRecord:
    state: PhaseState
    energy: float
    orbit_class: OrbitClass
    p_minus: np.ndarray | None = None
    p_plus: np.ndarray | None = None
    tau: float | None = None
    tau_residual: float = math.nan
    tau_converged: bool = False
    p_residual: float = math.nan
    p_converged: bool = False
    itinerary: tuple = ()
    handoff_radius_used: float = math.nan
    level: int = -1
    ang_mom_minus: np.ndarray | None = None
    ang_mom_plus: np.ndarray | None = None
    forward_status: str = ""
    backward_status: str = ""
    energy_drift: float = 0.0
    n_regularized: int = 0
    degraded: bool = False
    flags: list = field(default_factory=list)

    @property
    def is_scattering(self) -> bool:
        return self.orbit_class is OrbitClass.SCATTERING

    def itinerary_string(self) -> str:
        return "-".join(str(k) for k in self.itinerary)


class Classification(NamedTuple):
    orbit_class: OrbitClass
    forward: Trajectory
    backward: Trajectory


def beam_direction(angles, dim: int) -> np.ndarray:
    """Unit vector from a polar angle (dim=2) or (theta, phi) (dim=3)."""
    a = np.atleast_1d(np.asarray(angles, dtype=float))
    if dim == 2:
        return np.array([math.cos(a[0]), math.sin(a[0])])
    theta, phi = a[0], a[1]
    return np.array([math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi),
                     math.cos(theta)])


def impact_vector(direction, impact) -> np.ndarray:
    """Offset perpendicular to ``direction``.

    In the plane a scalar ``impact`` is measured along the direction rotated
    by +90 degrees.  In space a pair (b1, b2) is taken in a fixed
    orthonormal frame of the plane perpendicular to ``direction``.
    """
    u = np.asarray(direction, dtype=float)
    u = u / np.linalg.norm(u)
    b = np.atleast_1d(np.asarray(impact, dtype=float))
    if u.size == 2:
        return float(b[0]) * np.array([-u[1], u[0]])
    ref = np.array([0.0, 0.0, 1.0]) if abs(u[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    e1 = np.cross(ref, u)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(u, e1)
    return b[0] * e1 + (b[1] if b.size > 1 else 0.0) * e2


def beam_state(config: CentreConfig, energy: float, direction, impact,
               radius: float | None = None) -> PhaseState:
    """Phase point of energy ``energy`` on an incoming beam.

    The beam arrives from infinity moving along ``direction`` with offset
    ``impact`` from the origin.  The point is placed on the incoming branch
    of the monopole Kepler orbit at ``radius`` (default: half the default
    escape radius) and its speed rescaled so that H equals ``energy``
    exactly.
    """
    if energy <= 0:
        raise ValueError("beams need positive energy")
    u = np.asarray(direction, dtype=float)
    u = u / np.linalg.norm(u)
    if radius is None:
        radius = 0.5 * (config.extent + 20.0 * config.length_scale)
    k = math.sqrt(2.0 * energy)
    st = incoming_state(config.z_total, k * u, impact_vector(u, impact), radius)
    v = -sum(zk / np.linalg.norm(st.q - s) for zk, s in zip(config.strengths, config.centres))
    kin = energy - v
    if kin <= 0:
        raise BallNotReachedError("beam point lies in a classically forbidden region")
    p = st.p * math.sqrt(2.0 * kin) / np.linalg.norm(st.p)
    return PhaseState(st.q, p, 0.0)


def classify_orbit(x: PhaseState, config: CentreConfig,
                   settings: IntegratorSettings) -> Classification:
    """Propagate both ways and sort the orbit into the budget-relative classes.

    Scattering: both directions leave the escape sphere outward with
    hyperbolic monopole energy.  TrappedCandidate: exactly one does.
    BoundedCandidate: both exhaust the budget while staying within
    extent + 2 length scales.  Collision: either direction hits a centre.
    Undetermined: everything else.
    """
    fwd = propagate(x, config, settings, StopCondition(escape=True), direction=1)
    bwd = propagate(x, config, settings, StopCondition(escape=True), direction=-1)
    return Classification(_classify(fwd, bwd, config), fwd, bwd)


def _classify(fwd: Trajectory, bwd: Trajectory, config: CentreConfig) -> OrbitClass:
    if fwd.status == "collision" or bwd.status == "collision":
        return OrbitClass.COLLISION
    esc = (fwd.status == "escaped", bwd.status == "escaped")
    if all(esc):
        return OrbitClass.SCATTERING
    budget = ("max_time", "max_steps")
    if any(esc):
        other = bwd if esc[0] else fwd
        return OrbitClass.TRAPPED if other.status in budget else OrbitClass.UNDETERMINED
    bound = config.extent + 2.0 * config.length_scale
    if (fwd.status in budget and bwd.status in budget
            and max(fwd.max_radius, bwd.max_radius) <= bound):
        return OrbitClass.BOUNDED
    return OrbitClass.UNDETERMINED


class _Crossing(NamedTuple):
    radius: float
    state: PhaseState


def _ladder(leg: Trajectory, config: CentreConfig, settings: IntegratorSettings,
            levels: int) -> list:
    """Crossings of R_j = r_escape 2**j by an escaped leg, j = 0..levels-1.

    The escape event itself is the R_0 crossing; the leg is continued
    outward to the remaining radii.  For a backward leg the crossings are
    the entries, for a forward leg the exits.
    """
    radii = settings.r_escape * 2.0 ** np.arange(levels)
    start = leg.final
    out = [_Crossing(radii[0], start)]
    if levels == 1:
        return out
    k = math.sqrt(max(float(start.p @ start.p), 1e-300))
    budget = settings.with_(max_time=settings.max_time + 10.0 * radii[-1] / k)
    cont = propagate(start, config, budget, StopCondition(escape=False, radius=radii[-1]),
                     direction=leg.direction, record=False, spheres=tuple(radii[1:-1]),
                     h_init=leg.h_next)
    want = "sphere_exit" if leg.direction == 1 else "sphere_enter"
    found = {}
    for ev in cont.events:
        if ev.kind != want:
            continue
        r = cont.sphere_radii[ev.k]
        prev = found.get(r)
        if prev is None:
            found[r] = ev.state
        elif (ev.t > prev.t) == (leg.direction == 1):
            found[r] = ev.state
    for r in radii[1:]:
        if r not in found:
            break
        out.append(_Crossing(float(r), found[r]))
    return out


def _richardson(values: list, order: int) -> list:
    f = 2.0**order
    return [None] + [(f * values[j] - values[j - 1]) / (f - 1.0) for j in range(1, len(values))]


def _select(values: list, order: int, tol: float, opts: LadderOptions) -> Estimate:
    """Richardson-extrapolate a ladder sequence and pick the accepted level."""
    if len(values) < 2:
        raise ValueError("ladder too short")
    rich = _richardson(values, order)
    diffs = [math.inf, math.inf] + [
        float(np.max(np.abs(np.asarray(rich[j]) - np.asarray(rich[j - 1]))))
        for j in range(2, len(values))
    ]
    if opts.fixed_level is not None:
        j = min(opts.fixed_level, len(values) - 1)
        j = max(j, 1)
        return Estimate(rich[j], diffs[j] if j >= 2 else math.nan, j, diffs[j] < tol)
    for j in range(max(opts.min_level, 2), len(values)):
        if diffs[j] < tol:
            return Estimate(rich[j], diffs[j], j, True)
    j = len(values) - 1
    return Estimate(rich[j], diffs[j] if j >= 2 else math.inf, j, False)


def _momenta(crossings: list, z: float, branch: str) -> list:
    out = []
    for c in crossings:
        el = elements_from_state(c.state, z)
        out.append(kepler_asymptotic_momentum(el, branch, momentum=c.state.p))
    return out


def asymptotic_momentum(traj: Trajectory, config: CentreConfig, settings: IntegratorSettings,
                        options: LadderOptions | None = None) -> Estimate:
    """p+ (forward leg) or p- (backward leg) of an escaped trajectory.

    The residual is the max-norm difference of the last two extrapolants;
    convergence requires it below ``p_rel_tol * |p|``.
    """
    opts = options or LadderOptions()
    if traj.status != "escaped":
        raise ValueError("trajectory did not escape")
    branch = "outgoing" if traj.direction == 1 else "incoming"
    cr = _ladder(traj, config, settings, opts.levels)
    vals = _momenta(cr, config.z_total, branch)
    tol = opts.p_rel_tol * float(np.linalg.norm(vals[-1]))
    return _select(vals, _orders(config, opts)[0], tol, opts)


def _delays(cin: list, cout: list, z: float) -> list:
    out = []
    for a, b in zip(cin, cout):
        el_in = elements_from_state(a.state, z)
        el_out = elements_from_state(b.state, z)
        r_in = float(np.linalg.norm(a.state.q))
        r_out = float(np.linalg.norm(b.state.q))
        kep = 0.5 * (kepler_time_in_ball(el_in, a.state, r_in)
                     + kepler_time_in_ball(el_out, b.state, r_out))
        out.append((b.state.t - a.state.t) - kep)
    return out


def time_delay(forward: Trajectory, backward: Trajectory, config: CentreConfig,
               settings: IntegratorSettings, options: LadderOptions | None = None) -> Estimate:
    """Time delay of a scattering orbit from its two escaped legs."""
    opts = options or LadderOptions()
    if forward.status != "escaped" or backward.status != "escaped":
        raise ValueError("time delay needs a scattering orbit")
    cout = _ladder(forward, config, settings, opts.levels)
    cin = _ladder(backward, config, settings, opts.levels)
    m = min(len(cin), len(cout))
    vals = _delays(cin[:m], cout[:m], config.z_total)
    return _select(vals, _orders(config, opts)[1], opts.tau_tol, opts)


def itinerary(*legs: Trajectory) -> tuple:
    """Centre indices (1-based) of close approaches in time order, with
    consecutive repeats collapsed.  Legs are concatenated chronologically."""
    events = sorted((e for leg in legs for e in leg.events if e.kind == "close_approach"),
                    key=lambda e: e.t)
    word = []
    for e in events:
        k = e.k + 1
        if not word or word[-1] != k:
            word.append(k)
    return tuple(word)


def scattering_record(x: PhaseState, config: CentreConfig,
                      settings: IntegratorSettings | None = None,
                      options: LadderOptions | None = None) -> ScatteringRecord:
    """Classify ``x`` and, for scattering orbits, extract p+-, tau and the
    itinerary.  Never raises for dynamical outcomes; failures are recorded
    in ``flags``."""
    opts = options or LadderOptions()
    energy = hamiltonian(x, config)
    if settings is None:
        settings = IntegratorSettings.for_config(config, energy)
    cls, fwd, bwd = classify_orbit(x, config, settings)
    rec = ScatteringRecord(
        state=x, energy=energy, orbit_class=cls, itinerary=itinerary(bwd, fwd),
        forward_status=fwd.status, backward_status=bwd.status,
        energy_drift=max(fwd.energy_drift, bwd.energy_drift),
        n_regularized=fwd.n_regularized + bwd.n_regularized,
        degraded=fwd.degraded or bwd.degraded,
    )
    if rec.degraded:
        rec.flags.append("energy_drift_above_tolerance")
    if cls is not OrbitClass.SCATTERING:
        return rec
    try:
        cout = _ladder(fwd, config, settings, opts.levels)
        cin = _ladder(bwd, config, settings, opts.levels)
        m = min(len(cin), len(cout))
        if m < 3:
            rec.flags.append("ladder_incomplete")
        cin, cout = cin[:m], cout[:m]
        z = config.z_total
        pp = _momenta(cout, z, "outgoing")
        pm = _momenta(cin, z, "incoming")
        scale = float(np.linalg.norm(pp[-1]))
        po, to = _orders(config, opts)
        taus = _delays(cin, cout, z)
        est_pp = _select(pp, po, opts.p_rel_tol * scale, opts)
        est_pm = _select(pm, po, opts.p_rel_tol * scale, opts)
        est_tau = _select(taus, to, opts.tau_tol, opts)
        lp = [elements_from_state(c.state, z).ang_mom3 for c in cout]
        lm = [elements_from_state(c.state, z).ang_mom3 for c in cin]
    except (NoAsymptoteError, CollisionOrbitError, BallNotReachedError, ValueError) as exc:
        rec.flags.append(f"scattering_data_failed: {exc}")
        return rec
    level = max(est_pp.level, est_pm.level, est_tau.level)
    if opts.fixed_level is None and est_pp.converged and est_pm.converged and est_tau.converged:
        # report all quantities at one common level
        fixed = LadderOptions(**{**opts.__dict__, "fixed_level": level})
        est_pp = _select(pp, po, opts.p_rel_tol * scale, fixed)
        est_pm = _select(pm, po, opts.p_rel_tol * scale, fixed)
        est_tau = _select(taus, to, opts.tau_tol, fixed)
    rec.p_plus = np.asarray(est_pp.value)
    rec.p_minus = np.asarray(est_pm.value)
    rec.p_residual = max(est_pp.residual, est_pm.residual)
    rec.p_converged = est_pp.converged and est_pm.converged
    rec.level = level
    rec.handoff_radius_used = float(cout[level].radius)
    rec.ang_mom_plus = np.asarray(_richardson(lp, 1)[level])
    rec.ang_mom_minus = np.asarray(_richardson(lm, 1)[level])
    if not rec.p_converged:
        rec.flags.append("asymptotic_momentum_not_converged")
    rec.tau_residual = est_tau.residual
    rec.tau_converged = est_tau.converged
    if est_tau.converged or opts.fixed_level is not None:
        rec.tau = float(est_tau.value)
    else:
        rec.flags.append("time_delay_not_converged")
    return rec


def record_row(params, rec: ScatteringRecord, dim: int) -> list:
    """One scattering-map row: params, class, p-, p+, tau, tau residual, itinerary."""
    nan = [math.nan] * dim
    pm = [float(v) for v in rec.p_minus] if rec.p_minus is not None else nan
    pp = [float(v) for v in rec.p_plus] if rec.p_plus is not None else nan
    tau = rec.tau if rec.tau is not None else math.nan
    return [*params, rec.orbit_class.value, *pm, *pp, tau, rec.tau_residual,
            rec.itinerary_string()]


def scattering_map_csv(param_names, rows, dim: int) -> str:
    head = [*param_names, "class", *[f"pm{i + 1}" for i in range(dim)],
            *[f"pp{i + 1}" for i in range(dim)], "tau", "tau_resid", "itinerary"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(head)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()
