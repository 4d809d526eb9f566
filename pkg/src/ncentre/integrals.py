"""Smooth integrals of motion built from scattering data, plus the numerical
machinery to test them: finite-difference phase-space gradients, Jacobian
rank and Poisson brackets.

The integrals are

    f_k(x) = p+_k(x) * D(tau(x)),   D(tau) = exp(-exp(c sqrt(1 + tau^2))),

with c = C/(g - 1) on scattering orbits and f = 0 elsewhere.  D is
evaluated through its logarithm; its gradient is factored out analytically
so that Jacobians stay representable even when D underflows.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .integrator import IntegratorSettings
from .model import CentreConfig, GevreyParams, PhaseState, force
from .scattering import LadderOptions, OrbitClass, ScatteringRecord, scattering_record

__all__ = [
    "LOG_FLOOR",
    "RANK_RTOL",
    "StencilBroken",
    "IntegralValue",
    "ScatteringGradient",
    "RankResult",
    "log_damping",
    "gevrey_damping",
    "damping_log_derivative",
    "gevrey_integral",
    "phase_gradient",
    "poisson_bracket",
    "bracket_from_gradients",
    "scattering_gradient",
    "independence_rank",
    "hamiltonian_gradient",
    "integral_jacobian",
    "normalised_brackets",
    "integral_report",
    "report_json",
]

LOG_FLOOR = -700.0
RANK_RTOL = 1e-8


class StencilBroken(RuntimeError):
    """A finite-difference stencil point left the scattering set."""


def log_damping(tau: float, params: GevreyParams) -> float:
    """log D(tau) = -exp(c sqrt(1 + tau^2)); -inf once the inner exponential overflows."""
    arg = params.rate * math.hypot(1.0, tau)
    if arg > 709.0:
        return -math.inf
    return -math.exp(arg)


def gevrey_damping(tau: float, params: GevreyParams) -> float:
    """D(tau) = exp(-exp(c sqrt(1 + tau^2))); 0 below exp(LOG_FLOOR)."""
    lg = log_damping(tau, params)
    return 0.0 if lg < LOG_FLOOR else math.exp(lg)


def damping_log_derivative(tau: float, params: GevreyParams) -> float:
    """d log D / d tau."""
    s = math.hypot(1.0, tau)
    lg = log_damping(tau, params)
    return lg * params.rate * tau / s


@dataclass(frozen=True)
class IntegralValue:
    f: np.ndarray
    damping: float
    damping_log: float
    underflow: bool
    authoritative: bool
    source: ScatteringRecord


def gevrey_integral(record: ScatteringRecord, params: GevreyParams) -> IntegralValue:
    """f = p+ D(tau) on scattering records, exactly 0 otherwise.

    Undetermined records give 0 but are marked non-authoritative, since the
    classification is only budget-relative.
    """
    d = record.state.dim
    if record.orbit_class is not OrbitClass.SCATTERING:
        return IntegralValue(np.zeros(d), 0.0, -math.inf, False,
                             record.orbit_class is not OrbitClass.UNDETERMINED, record)
    if record.tau is None or record.p_plus is None:
        raise ValueError("scattering record lacks a converged time delay")
    lg = log_damping(record.tau, params)
    under = lg < LOG_FLOOR
    damp = 0.0 if under else math.exp(lg)
    return IntegralValue(np.asarray(record.p_plus) * damp, damp, lg, under, True, record)


def _steps(x: PhaseState, h: float, scale) -> np.ndarray:
    v = x.as_vector()
    if scale is None:
        scale = np.maximum(np.abs(v), 1.0)
    return h * np.asarray(scale, dtype=float) * np.ones_like(v)


def phase_gradient(func: Callable, x: PhaseState, h: float = 1e-5, scale=None) -> np.ndarray:
    """Gradient of ``func`` in (q, p) by central differences with one
    Richardson step: (4 D(h/2) - D(h)) / 3, fourth order in h.

    ``func`` maps a PhaseState to a scalar or an array; array-valued
    functions give one gradient row per component.  ``scale`` sets the
    per-coordinate step h * scale_i (default max(|x_i|, 1)).  If ``func``
    raises :class:`StencilBroken` the error propagates.
    """
    v = x.as_vector()
    hs = _steps(x, h, scale)
    n = v.size
    rows = []
    for i in range(n):
        vals = {}
        for m in (-2, -1, 1, 2):
            w = v.copy()
            w[i] += 0.5 * m * hs[i]
            vals[m] = np.asarray(func(PhaseState.from_vector(w, x.t)), dtype=float)
        d_h = (vals[2] - vals[-2]) / (2.0 * hs[i])
        d_h2 = (vals[1] - vals[-1]) / hs[i]
        rows.append((4.0 * d_h2 - d_h) / 3.0)
    g = np.array(rows)
    return g.T if g.ndim == 2 else g


def bracket_from_gradients(ga, gb) -> float:
    """{a, b} = sum_i da/dq_i db/dp_i - da/dp_i db/dq_i."""
    ga = np.asarray(ga, dtype=float)
    gb = np.asarray(gb, dtype=float)
    d = ga.size // 2
    return float(ga[:d] @ gb[d:] - ga[d:] @ gb[:d])


def poisson_bracket(func_a: Callable, func_b: Callable, x: PhaseState, h: float = 1e-5,
                    scale=None) -> float:
    return bracket_from_gradients(phase_gradient(func_a, x, h, scale),
                                  phase_gradient(func_b, x, h, scale))


def hamiltonian_gradient(x: PhaseState, config: CentreConfig) -> np.ndarray:
    return np.concatenate([-force(x.q, config), x.p])


class ScatteringGradient(NamedTuple):
    record: ScatteringRecord
    p_plus: np.ndarray
    tau: float
    jac_p_plus: np.ndarray
    grad_tau: np.ndarray
    level: int


def scattering_gradient(x: PhaseState, config: CentreConfig,
                        settings: IntegratorSettings | None = None,
                        options: LadderOptions | None = None, h: float = 1e-5,
                        scale=None) -> ScatteringGradient:
    """Jacobian of p+ and gradient of tau at ``x``.

    The ladder level is frozen at the one accepted for ``x`` itself, so
    every stencil value is the same smooth function of the orbit.  Raises
    :class:`StencilBroken` if a stencil point is not scattering.
    """
    opts = options or LadderOptions()
    base = scattering_record(x, config, settings, opts)
    if not base.is_scattering or base.tau is None:
        raise StencilBroken(f"base point is {base.orbit_class.value} or lacks tau")
    fixed = LadderOptions(**{**opts.__dict__, "fixed_level": base.level})

    def data(s: PhaseState) -> np.ndarray:
        r = scattering_record(s, config, settings, fixed)
        if not r.is_scattering or r.tau is None:
            raise StencilBroken(f"stencil point classified {r.orbit_class.value}")
        return np.append(r.p_plus, r.tau)

    g = phase_gradient(data, x, h, scale)
    d = x.dim
    return ScatteringGradient(base, base.p_plus, base.tau, g[:d], g[d], base.level)


class RankResult(NamedTuple):
    rank: int
    singular_values: np.ndarray
    matrix: np.ndarray


def integral_jacobian(sg: ScatteringGradient, params: GevreyParams) -> np.ndarray:
    """Jacobian of f divided by the common factor D(tau).

    d f / D = J(p+) + (d log D / d tau) p+ (x) grad tau.
    """
    dl = damping_log_derivative(sg.tau, params)
    return sg.jac_p_plus + dl * np.outer(sg.p_plus, sg.grad_tau)


def independence_rank(x: PhaseState, config: CentreConfig, params: GevreyParams,
                      h: float = 1e-5, settings: IntegratorSettings | None = None,
                      options: LadderOptions | None = None,
                      gradient: ScatteringGradient | None = None) -> RankResult:
    """Numerical rank of the d x 2d Jacobian of (f_1..f_d) at ``x``.

    Singular values below RANK_RTOL times the largest count as zero.  The
    damping factor is divided out, which leaves the rank unchanged.
    """
    sg = gradient or scattering_gradient(x, config, settings, options, h)
    m = integral_jacobian(sg, params)
    sv = np.linalg.svd(m, compute_uv=False)
    rank = int(np.sum(sv > RANK_RTOL * sv[0])) if sv[0] > 0 else 0
    return RankResult(rank, sv, m)


def integral_report(x: PhaseState, config: CentreConfig, params: GevreyParams,
                    h: float = 1e-5, settings: IntegratorSettings | None = None,
                    options: LadderOptions | None = None) -> dict:
    """JSON-ready summary {point, class, f, damping_log, rank, singular_values,
    brackets} at one phase point.  Brackets are normalised by the product
    of gradient norms."""
    rec = scattering_record(x, config, settings, options)
    out = {
        "point": {"q": x.q.tolist(), "p": x.p.tolist()},
        "class": rec.orbit_class.value,
        "f": None, "damping_log": None, "rank": None, "singular_values": None,
        "brackets": None,
    }
    if not rec.is_scattering:
        out["f"] = gevrey_integral(rec, params).f.tolist()
        return out
    if rec.tau is None:
        out["flags"] = list(rec.flags)
        return out
    val = gevrey_integral(rec, params)
    out["f"] = val.f.tolist()
    out["damping_log"] = val.damping_log
    try:
        sg = scattering_gradient(x, config, settings, options, h)
    except StencilBroken as exc:
        out["stencil_broken"] = str(exc)
        return out
    rr = independence_rank(x, config, params, gradient=sg)
    out["rank"] = rr.rank
    out["singular_values"] = rr.singular_values.tolist()
    out["brackets"] = normalised_brackets(sg, params, hamiltonian_gradient(x, config))
    return out


def normalised_brackets(sg: ScatteringGradient, params: GevreyParams, grad_h) -> dict:
    """|{f_i, H}| and |{f_i, f_j}| over the product of gradient norms."""
    m = integral_jacobian(sg, params)
    d = m.shape[0]
    nh = float(np.linalg.norm(grad_h))
    norms = np.linalg.norm(m, axis=1)
    out = {}
    for i in range(d):
        out[f"f{i + 1},H"] = abs(bracket_from_gradients(m[i], grad_h)) / (norms[i] * nh)
    for i in range(d):
        for j in range(i + 1, d):
            out[f"f{i + 1},f{j + 1}"] = (abs(bracket_from_gradients(m[i], m[j]))
                                         / (norms[i] * norms[j]))
    return out


def report_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, allow_nan=True)
