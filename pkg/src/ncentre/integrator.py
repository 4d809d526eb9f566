"""Adaptive propagation of the n-centre flow with near-collision
regularization and event detection.

The heavy lifting happens in :mod:`ncentre._core`; this module wraps it in
value types and handles time reversal (backward propagation integrates the
momentum-flipped state forward).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from . import _core
from .model import CentreConfig, ConfigError, PhaseState, hamiltonian

__all__ = [
    "IntegratorSettings",
    "StopCondition",
    "Event",
    "Trajectory",
    "CollisionReport",
    "StepUnderflow",
    "StepResult",
    "step_adaptive",
    "step_regularized",
    "propagate",
    "crossing_time",
    "energy_scale",
]

STATUS = {
    _core.RUNNING: "running",
    _core.ESCAPED: "escaped",
    _core.RADIUS_REACHED: "radius_reached",
    _core.MAX_TIME: "max_time",
    _core.MAX_STEPS: "max_steps",
    _core.COLLISION: "collision",
    _core.WORD_LIMIT: "word_limit",
    _core.UNDERFLOW: "underflow",
    _core.REG_EXITED: "reg_exited",
}

KINDS = {
    _core.EV_SPHERE_ENTER: "sphere_enter",
    _core.EV_SPHERE_EXIT: "sphere_exit",
    _core.EV_CLOSE: "close_approach",
    _core.EV_COLLISION: "collision",
    _core.EV_BUDGET: "budget_exhausted",
    _core.EV_REG_ENTER: "reg_enter",
    _core.EV_REG_EXIT: "reg_exit",
}

REVERSED_KIND = {"sphere_enter": "sphere_exit", "sphere_exit": "sphere_enter",
                 "reg_enter": "reg_exit", "reg_exit": "reg_enter"}


class CollisionReport(Exception):
    """Orbit runs into attracting centre ``k`` (0-based) at time ``t``."""

    def __init__(self, k: int, t: float):
        super().__init__(f"collision with centre {k + 1} at t={t:.17g}")
        self.k = k
        self.t = t


class StepUnderflow(ArithmeticError):
    """Adaptive step fell below the resolvable size."""


def crossing_time(config: CentreConfig, energy: float) -> float:
    """Time to cross the configuration at the asymptotic speed."""
    if energy != 0.0:
        return config.length_scale / math.sqrt(2.0 * abs(energy))
    zs = float(np.sum(np.abs(config.strengths)))
    return config.length_scale / math.sqrt(zs / config.length_scale)


def energy_scale(config: CentreConfig, energy: float) -> float:
    zs = float(np.sum(np.abs(config.strengths)))
    return max(abs(energy), 1e-3 * zs / config.length_scale)


@dataclass(frozen=True)
class IntegratorSettings:
    """Tolerances, geometric radii (absolute lengths) and budgets."""

    rel_tol: float = 1e-12
    abs_tol: float = 1e-14
    r_reg: float = 0.05
    r_escape: float = 20.0
    rho_event: float = 0.25
    max_steps: int = 10**8
    max_time: float = 1e4
    energy_tol: float = 1e-9

    @classmethod
    def for_config(cls, config: CentreConfig, energy: float | None = None, **overrides):
        """Defaults scaled to the configuration: r_reg = 0.05 and
        rho_event = 0.25 minimum separations, r_escape = 20 diameters beyond
        the outermost centre, max_time = 1e4 crossing times."""
        dmin = config.min_separation
        kw = dict(
            r_reg=0.05 * dmin,
            rho_event=0.25 * dmin,
            r_escape=config.extent + 20.0 * config.length_scale,
        )
        if energy is not None:
            kw["max_time"] = 1e4 * crossing_time(config, energy)
        kw.update(overrides)
        out = cls(**kw)
        out.validate(config)
        return out

    def validate(self, config: CentreConfig) -> None:
        if not 0 < self.r_reg < 0.5 * config.min_separation:
            raise ConfigError("need 0 < r_reg < half the minimum centre separation", "r_reg")
        if not self.r_escape > 2.0 * config.diameter:
            raise ConfigError("r_escape must exceed twice the configuration diameter", "r_escape")
        if not self.rho_event > self.r_reg:
            raise ConfigError("rho_event must exceed r_reg", "rho_event")
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ConfigError("tolerances must be positive", "rel_tol")

    def with_(self, **kw) -> "IntegratorSettings":
        return replace(self, **kw)


@dataclass(frozen=True)
class StopCondition:
    """Stop predicates beyond the budgets in :class:`IntegratorSettings`.

    ``escape``: stop on leaving the escape sphere with hyperbolic
    reference-Kepler energy.  ``radius``: stop on crossing this radius
    outward.  ``word_limit``: stop once the collapsed itinerary is longer.
    """

    escape: bool = True
    radius: float | None = None
    word_limit: int = 0


class Event(NamedTuple):
    t: float
    kind: str
    k: int | None
    value: float
    state: PhaseState

    def to_json(self) -> str:
        centre = self.kind not in ("sphere_enter", "sphere_exit") and self.k is not None
        rec = {"t": self.t, "kind": self.kind, "k": self.k + 1 if centre else None,
               "dist": self.value}
        return json.dumps(rec)


@dataclass
class Trajectory:
    """Time-ordered samples (t, q, p, H) plus events.

    ``events`` are in chronological order.  For backward propagation
    (``direction == -1``) the samples are stored chronologically too, so the
    starting state is the last sample.
    """

    t: np.ndarray
    q: np.ndarray
    p: np.ndarray
    H: np.ndarray
    events: list
    status: str
    final: PhaseState
    energy_drift: float
    n_regularized: int
    n_steps: int
    max_radius: float
    direction: int = 1
    degraded: bool = False
    collision: CollisionReport | None = None
    h_next: float = 0.0
    sphere_radii: tuple = field(default_factory=tuple)

    @property
    def samples(self) -> list:
        return [PhaseState(q, p, t) for t, q, p in zip(self.t, self.q, self.p)]

    def close_approaches(self) -> list:
        return [e for e in self.events if e.kind == "close_approach"]

    def to_csv(self, path_or_file) -> None:
        d = self.q.shape[1]
        head = ["t"] + [f"q{i + 1}" for i in range(d)] + [f"p{i + 1}" for i in range(d)] + ["H"]
        rows = np.column_stack([self.t, self.q, self.p, self.H])
        lines = [",".join(head)]
        lines += [",".join(repr(float(v)) for v in row) for row in rows]
        _write_text(path_or_file, "\n".join(lines) + "\n")

    def events_jsonl(self, path_or_file) -> None:
        _write_text(path_or_file, "".join(e.to_json() + "\n" for e in self.events))


def _write_text(path_or_file, text: str) -> None:
    if hasattr(path_or_file, "write"):
        path_or_file.write(text)
    else:
        with open(path_or_file, "w") as fh:
            fh.write(text)


class StepResult(NamedTuple):
    state: PhaseState
    h_used: float
    h_next: float


def _arrays(config: CentreConfig):
    return (np.ascontiguousarray(config.centres, dtype=float),
            np.ascontiguousarray(config.strengths, dtype=float))


def step_adaptive(state: PhaseState, config: CentreConfig, settings: IntegratorSettings,
                  h: float | None = None) -> StepResult:
    """One accepted DOP853 step of Hamilton's equations.

    The state must lie outside every regularization ball.  Raises
    :class:`StepUnderflow` when error control drives the step below the
    resolvable size.
    """
    centres, strengths = _arrays(config)
    y = state.as_vector()
    d = state.dim
    dist = np.min(np.linalg.norm(config.centres - state.q, axis=1))
    if dist < settings.r_reg:
        raise ValueError("state inside a regularization ball; use step_regularized")
    if h is None or h <= 0:
        h = _core._hinit(0, y, centres, strengths, d, -1, 0.0, settings.rel_tol, settings.abs_tol)
    K = np.empty((_core.NS + 2, 2 * d))
    ynew = np.empty(2 * d)
    energy = hamiltonian(state, config)
    hmin = 1e-15 * crossing_time(config, energy)
    hused, hnext, _, ok = _core.adaptive_step(0, y, h, 1e-4, centres, strengths, d, -1, 0.0,
                                              settings.rel_tol, settings.abs_tol, hmin, K, ynew)
    if not ok:
        raise StepUnderflow(f"step size fell below {hmin:g}")
    return StepResult(PhaseState.from_vector(ynew, state.t + hused), hused, hnext)


def _nearest(config: CentreConfig, q) -> tuple[int, float]:
    dist = np.linalg.norm(config.centres - np.asarray(q), axis=1)
    k = int(np.argmin(dist))
    return k, float(dist[k])


def step_regularized(state: PhaseState, config: CentreConfig, settings: IntegratorSettings,
                     k: int) -> PhaseState:
    """Carry the orbit through the regularization ball of centre ``k``.

    Integrates in Levi-Civita (d=2) / Kustaanheimo-Stiefel (d=3) variables
    with time as a dependent variable, the other centres acting as exact
    perturbing forces.  Returns the state on leaving the ball; raises
    :class:`CollisionReport` when the orbit hits an attracting centre.
    """
    kn, dist = _nearest(config, state.q)
    if kn != k or dist >= settings.r_reg:
        raise ValueError(f"state is not inside the regularization ball of centre {k + 1}")
    traj = _run(state, config, settings, StopCondition(escape=False), record=False,
                stop_on_reg_exit=True)
    if traj.collision is not None:
        raise traj.collision
    if traj.status != "reg_exited":
        raise StepUnderflow(f"regularized passage ended with status {traj.status}")
    return traj.final


def _run(state, config, settings, stop, record=True, spheres=(), h_init=0.0,
         stop_on_reg_exit=False, time_offset=0.0):
    centres, strengths = _arrays(config)
    d = state.dim
    if d != config.dim:
        raise ValueError("state dimension does not match the configuration")
    energy = hamiltonian(state, config)
    sph = list(spheres)
    i_escape = -1
    i_stop = -1
    if stop.escape:
        i_escape = len(sph)
        sph.append(settings.r_escape)
    if stop.radius is not None:
        i_stop = len(sph)
        sph.append(float(stop.radius))
    out = _core.integrate(
        state.as_vector(), 0.0, centres, strengths, config.z_total,
        settings.rel_tol, settings.abs_tol, settings.r_reg, settings.rho_event,
        np.array(sph, dtype=float), i_escape, i_stop,
        float(settings.max_time), int(settings.max_steps), int(stop.word_limit),
        bool(record), float(h_init), crossing_time(config, energy), stop_on_reg_exit,
    )
    y, t, status, nsteps, nreg, drift, rmax, sm, ev, hnext = out
    t0 = state.t + time_offset
    events = []
    collision = None
    for row in ev:
        kind = KINDS[int(row[1])]
        k = int(row[2])
        ev_state = PhaseState(row[4:4 + d], row[4 + d:4 + 2 * d], t0 + row[0])
        events.append(Event(t0 + float(row[0]), kind, None if k < 0 else k, float(row[3]),
                            ev_state))
        if kind == "collision":
            collision = CollisionReport(k, t0 + float(row[0]))
    if record:
        ts, qs, ps, hs = sm[:, 0] + t0, sm[:, 1:1 + d], sm[:, 1 + d:1 + 2 * d], sm[:, 1 + 2 * d]
    else:
        ts, qs, ps, hs = np.empty(0), np.empty((0, d)), np.empty((0, d)), np.empty(0)
    status_s = STATUS[int(status)]
    degraded = status_s == "underflow" or drift > settings.energy_tol * energy_scale(config, energy)
    return Trajectory(
        t=ts, q=qs, p=ps, H=hs, events=events, status=status_s,
        final=PhaseState(y[:d], y[d:], t0 + t), energy_drift=float(drift),
        n_regularized=int(nreg), n_steps=int(nsteps), max_radius=float(rmax),
        direction=1, degraded=bool(degraded), collision=collision, h_next=float(hnext),
        sphere_radii=tuple(sph),
    )


def _reverse_state(s: PhaseState, t_ref: float) -> PhaseState:
    return PhaseState(s.q, -s.p, 2.0 * t_ref - s.t)


def propagate(state: PhaseState, config: CentreConfig, settings: IntegratorSettings,
              stop: StopCondition | None = None, *, direction: int = 1, record: bool = True,
              spheres=(), h_init: float = 0.0) -> Trajectory:
    """Propagate ``state`` forward (``direction=1``) or backward in time.

    Stops at the first of: escape (if requested), outward crossing of
    ``stop.radius``, collision, ``settings.max_time`` elapsed,
    ``settings.max_steps`` steps, or the itinerary word limit.  Crossings of
    the extra ``spheres`` radii are recorded as events.
    """
    if stop is None:
        stop = StopCondition()
    if direction == 1:
        return _run(state, config, settings, stop, record=record, spheres=spheres, h_init=h_init)
    if direction != -1:
        raise ValueError("direction must be +1 or -1")
    flipped = PhaseState(state.q, -state.p, state.t)
    tr = _run(flipped, config, settings, stop, record=record, spheres=spheres, h_init=h_init)
    # integration ran in reversed time starting at state.t
    t_ref = state.t

    def back(s: PhaseState) -> PhaseState:
        return _reverse_state(s, t_ref)

    events = []
    for e in reversed(tr.events):
        kind = REVERSED_KIND.get(e.kind, e.kind)
        events.append(Event(2.0 * t_ref - e.t, kind, e.k, e.value, back(e.state)))
    collision = None
    if tr.collision is not None:
        collision = CollisionReport(tr.collision.k, 2.0 * t_ref - tr.collision.t)
    return Trajectory(
        t=(2.0 * t_ref - tr.t)[::-1], q=tr.q[::-1], p=(-tr.p)[::-1], H=tr.H[::-1],
        events=events, status=tr.status, final=back(tr.final),
        energy_drift=tr.energy_drift, n_regularized=tr.n_regularized, n_steps=tr.n_steps,
        max_radius=tr.max_radius, direction=-1, degraded=tr.degraded, collision=collision,
        h_next=tr.h_next, sphere_radii=tr.sphere_radii,
    )
