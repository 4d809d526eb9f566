"""Verification suites shared by the command line and the acceptance tests:
beam ensembles, conservation of the integrals along orbits, Jacobian rank
and bracket checks."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .integrals import (
    StencilBroken,
    gevrey_integral,
    hamiltonian_gradient,
    independence_rank,
    normalised_brackets,
    scattering_gradient,
)
from .integrator import IntegratorSettings, StopCondition, propagate
from .model import CentreConfig, GevreyParams, PhaseState
from .scattering import LadderOptions, beam_direction, beam_state, scattering_record

__all__ = [
    "Beam",
    "random_beams",
    "orbit_points",
    "conservation_spread",
    "IntegralChecks",
    "integral_checks",
    "translation_delay_shift",
]


@dataclass(frozen=True)
class Beam:
    params: tuple
    state: PhaseState


def random_beams(config: CentreConfig, energy: float, count: int, rng: np.random.Generator,
                 b_max: float | None = None) -> list:
    """Beams with uniformly random direction and impact offset.

    Planar params are (angle, b); spatial params (theta, phi, b1, b2) with
    the direction uniform on the sphere.
    """
    if b_max is None:
        b_max = config.extent + 0.5 * config.length_scale
    out = []
    for _ in range(count):
        if config.dim == 2:
            ang = float(rng.uniform(0.0, 2.0 * math.pi))
            b = float(rng.uniform(-b_max, b_max))
            params = (ang, b)
            u = beam_direction(ang, 2)
            imp = b
        else:
            theta = float(math.acos(rng.uniform(-1.0, 1.0)))
            phi = float(rng.uniform(0.0, 2.0 * math.pi))
            b1, b2 = (float(v) for v in rng.uniform(-b_max, b_max, size=2))
            params = (theta, phi, b1, b2)
            u = beam_direction((theta, phi), 3)
            imp = (b1, b2)
        out.append(Beam(params, beam_state(config, energy, u, imp)))
    return out


def orbit_points(x: PhaseState, config: CentreConfig, settings: IntegratorSettings,
                 count: int) -> list:
    """``count`` phase points on the orbit through ``x`` inside the escape
    sphere, spread evenly in time (nearest accepted integration step)."""
    bwd = propagate(x, config, settings, StopCondition(escape=True), direction=-1)
    fwd = propagate(x, config, settings, StopCondition(escape=True), direction=1)
    t = np.concatenate([bwd.t, fwd.t[1:]])
    q = np.vstack([bwd.q, fwd.q[1:]])
    p = np.vstack([bwd.p, fwd.p[1:]])
    targets = np.linspace(t[0], t[-1], count + 2)[1:-1]
    idx = np.unique(np.clip(np.searchsorted(t, targets), 0, len(t) - 1))
    return [PhaseState(q[i], p[i], t[i]) for i in idx]


def conservation_spread(x: PhaseState, config: CentreConfig, params: GevreyParams,
                        count: int = 20, settings: IntegratorSettings | None = None,
                        options: LadderOptions | None = None) -> tuple[float, int]:
    """Largest |f(y) - f(x)| / |f(x)| over ``count`` points y on the orbit of x.

    Returns (spread, points used); spread is inf if any point is not a
    converged scattering point.
    """
    rec0 = scattering_record(x, config, settings, options)
    if not rec0.is_scattering or rec0.tau is None:
        return math.inf, 0
    st = settings or IntegratorSettings.for_config(config, rec0.energy)
    f0 = gevrey_integral(rec0, params).f
    n0 = float(np.linalg.norm(f0))
    pts = orbit_points(x, config, st, count)
    worst = 0.0
    for y in pts:
        rec = scattering_record(y, config, settings, options)
        if not rec.is_scattering or rec.tau is None:
            return math.inf, len(pts)
        f = gevrey_integral(rec, params).f
        worst = max(worst, float(np.linalg.norm(f - f0)) / n0)
    return worst, len(pts)


@dataclass
class IntegralChecks:
    point: PhaseState
    orbit_class: str
    rank: int | None = None
    singular_values: list | None = None
    brackets: dict | None = None
    bracket_h_ok: bool | None = None
    bracket_ff_ok: bool | None = None
    spread: float | None = None
    stencil_broken: str | None = None

    def to_dict(self) -> dict:
        return {
            "point": {"q": self.point.q.tolist(), "p": self.point.p.tolist()},
            "class": self.orbit_class,
            "rank": self.rank,
            "singular_values": self.singular_values,
            "brackets": self.brackets,
            "bracket_H_ok": self.bracket_h_ok,
            "bracket_ff_ok": self.bracket_ff_ok,
            "spread": self.spread,
            "stencil_broken": self.stencil_broken,
        }


def integral_checks(x: PhaseState, config: CentreConfig, params: GevreyParams,
                    bracket_tol: float = 1e-4, h: float = 1e-5,
                    settings: IntegratorSettings | None = None,
                    options: LadderOptions | None = None,
                    spread_points: int = 0) -> IntegralChecks:
    """Rank and normalised brackets at one point, optionally with the
    conservation spread along its orbit."""
    rec = scattering_record(x, config, settings, options)
    out = IntegralChecks(x, rec.orbit_class.value)
    if not rec.is_scattering or rec.tau is None:
        return out
    try:
        sg = scattering_gradient(x, config, settings, options, h)
    except StencilBroken as exc:
        out.stencil_broken = str(exc)
        return out
    rr = independence_rank(x, config, params, gradient=sg)
    out.rank = rr.rank
    out.singular_values = rr.singular_values.tolist()
    br = normalised_brackets(sg, params, hamiltonian_gradient(x, config))
    out.brackets = br
    out.bracket_h_ok = all(v <= bracket_tol for k, v in br.items() if k.endswith(",H"))
    out.bracket_ff_ok = all(v <= bracket_tol for k, v in br.items() if not k.endswith(",H"))
    if spread_points:
        out.spread = conservation_spread(x, config, params, spread_points, settings, options)[0]
    return out


def _embed3(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v if v.size == 3 else np.array([v[0], v[1], 0.0])


def translation_delay_shift(record, shift, z: float) -> float:
    """Change of tau when configuration and phase point move by ``shift``.

    p+- are unchanged, but the reference Kepler orbits stay centred at the
    origin, so the entry and exit times move by a.p/k^2 and the
    eccentricities of both comparison orbits change through L -> L + a x p:

        tau' - tau = a.(p- - p+)/k^2 + (z/k^3) log(e_in e_out / (e_in' e_out'))

    with e^2 = 1 + k^2 |L|^2 / z^2.
    """
    a = _embed3(shift)
    pm, pp = _embed3(record.p_minus), _embed3(record.p_plus)
    k2 = float(pp @ pp)
    out = float(a @ (pm - pp)) / k2
    if z == 0.0:
        return out
    k = math.sqrt(k2)

    def ecc(L):
        return math.sqrt(1.0 + k2 * float(L @ L) / (z * z))

    lin, lout = record.ang_mom_minus, record.ang_mom_plus
    lin2, lout2 = lin + np.cross(a, pm), lout + np.cross(a, pp)
    return out + z / k**3 * math.log(ecc(lin) * ecc(lout) / (ecc(lin2) * ecc(lout2)))
