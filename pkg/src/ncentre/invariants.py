"""Classical conserved quantities of the integrable special cases.

Used as oracles for the integrator: angular momentum and Runge-Lenz vector
for one centre, the separation constant of the two-centre problem, and the
axial angular momentum of a collinear configuration in space.
"""

from __future__ import annotations

import numpy as np

from .model import CentreConfig, PhaseState

__all__ = [
    "angular_momentum",
    "runge_lenz",
    "two_centre_constant",
    "axial_angular_momentum",
]


def _cross3(a, b):
    a3 = np.zeros(3)
    b3 = np.zeros(3)
    a3[: len(a)] = a
    b3[: len(b)] = b
    return np.cross(a3, b3)


def angular_momentum(state: PhaseState, about=None) -> np.ndarray:
    """(q - about) x p as a 3-vector (planar states embedded at z=0)."""
    q = state.q if about is None else state.q - np.asarray(about, dtype=float)
    return _cross3(q, state.p)


def runge_lenz(state: PhaseState, z: float, about=None) -> np.ndarray:
    """p x L - z (q - about)/|q - about| as a 3-vector."""
    q = state.q if about is None else state.q - np.asarray(about, dtype=float)
    L = _cross3(q, state.p)
    p3 = np.zeros(3)
    p3[: state.dim] = state.p
    q3 = np.zeros(3)
    q3[: state.dim] = q
    return np.cross(p3, L) - z * q3 / np.linalg.norm(q3)


def two_centre_constant(state: PhaseState, config: CentreConfig) -> float:
    """Separation constant of the two-centre problem.

    With the centres at m +/- a e (unit axis e, Z_1 at m + a e) and
    x = q - m, the quantity

        G = |x x p|^2 + a^2 (p.e)^2 - 2 a (x.e) (Z_1/r_1 - Z_2/r_2)

    Poisson-commutes with H.  It arises from separating the Hamilton-Jacobi
    equation in prolate spheroidal coordinates.
    """
    if config.n != 2:
        raise ValueError("two_centre_constant needs exactly two centres")
    s1, s2 = config.centres
    z1, z2 = config.strengths
    mid = 0.5 * (s1 + s2)
    half = 0.5 * (s1 - s2)
    a = float(np.linalg.norm(half))
    e = half / a
    x = state.q - mid
    r1 = float(np.linalg.norm(state.q - s1))
    r2 = float(np.linalg.norm(state.q - s2))
    L = _cross3(x, state.p)
    xe = float(x @ e)
    pe = float(state.p @ e)
    return float(L @ L) + a * a * pe * pe - 2.0 * a * xe * (z1 / r1 - z2 / r2)


def axial_angular_momentum(state: PhaseState, config: CentreConfig) -> float:
    """Angular momentum about the line through collinear centres."""
    if config.dim != 3 or not config.collinear:
        raise ValueError("axial angular momentum needs a collinear configuration in space")
    axis = config.axis if config.axis is not None else np.array([0.0, 0.0, 1.0])
    point = config.axis_point if config.axis_point is not None else config.centres[0]
    L = np.cross(state.q - point, state.p)
    return float(L @ axis)
