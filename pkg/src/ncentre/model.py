"""Centre configurations, phase-space points and the n-centre Hamiltonian.

Units: unit test mass, gravitational constant absorbed into the strengths
``Z_k``.  Positive strengths attract, negative strengths repel.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "CentreConfig",
    "PhaseState",
    "GevreyParams",
    "ConfigError",
    "CentreCollisionError",
    "HypothesisWarning",
    "validate_config",
    "load_config",
    "potential",
    "force",
    "hamiltonian",
    "kepler_hamiltonian",
]

GEOM_EPS = 1e-12


class ConfigError(ValueError):
    """Invalid centre configuration or parameter set.

    ``field`` names the offending entry of the configuration file.
    """

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class CentreCollisionError(ArithmeticError):
    """Evaluation requested exactly at the centre with index ``k`` (0-based)."""

    def __init__(self, k: int):
        super().__init__(f"position coincides with centre {k + 1}")
        self.k = k


class HypothesisWarning(UserWarning):
    """Configuration is simulable but outside the integrability hypotheses
    (d=2 with all Z_k > 0, or d=3 with non-collinear centres)."""


@dataclass(frozen=True)
class CentreConfig:
    dim: int
    centres: np.ndarray
    strengths: np.ndarray
    z_total: float
    collinear: bool
    axis: np.ndarray | None = None
    axis_point: np.ndarray | None = None

    @property
    def n(self) -> int:
        return len(self.strengths)

    @property
    def diameter(self) -> float:
        if self.n < 2:
            return 0.0
        diff = self.centres[:, None, :] - self.centres[None, :, :]
        return float(np.max(np.linalg.norm(diff, axis=-1)))

    @property
    def min_separation(self) -> float:
        """Smallest inter-centre distance; 1.0 for a single centre."""
        if self.n < 2:
            return 1.0
        diff = self.centres[:, None, :] - self.centres[None, :, :]
        dist = np.linalg.norm(diff, axis=-1)
        return float(np.min(dist[~np.eye(self.n, dtype=bool)]))

    @property
    def length_scale(self) -> float:
        """Configuration diameter, or 1.0 for a single centre."""
        return self.diameter if self.n >= 2 else 1.0

    @property
    def extent(self) -> float:
        """Largest distance of a centre from the origin."""
        return float(np.max(np.linalg.norm(self.centres, axis=1)))

    def translated(self, shift) -> "CentreConfig":
        shift = np.asarray(shift, dtype=float)
        return validate_config(self.centres + shift, self.strengths, self.dim, quiet=True)

    def rotated(self, rot) -> "CentreConfig":
        rot = np.asarray(rot, dtype=float)
        return validate_config(self.centres @ rot.T, self.strengths, self.dim, quiet=True)

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "centres": self.centres.tolist(),
            "strengths": self.strengths.tolist(),
        }

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class PhaseState:
    q: np.ndarray
    p: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "q", np.array(self.q, dtype=float))
        object.__setattr__(self, "p", np.array(self.p, dtype=float))
        object.__setattr__(self, "t", float(self.t))
        if self.q.shape != self.p.shape or self.q.ndim != 1:
            raise ValueError("q and p must be vectors of equal length")

    @property
    def dim(self) -> int:
        return self.q.size

    def reversed(self) -> "PhaseState":
        """Time-reversal image (q, -p); the time label is negated."""
        return PhaseState(self.q, -self.p, -self.t)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.q, self.p])

    @classmethod
    def from_vector(cls, y, t: float = 0.0) -> "PhaseState":
        y = np.asarray(y, dtype=float)
        d = y.size // 2
        return cls(y[:d], y[d:], t)


@dataclass(frozen=True)
class GevreyParams:
    c_const: float = 1.0
    g_index: float = 2.0
    e_window: tuple[float, float] = field(default=(1.0, 100.0))
    e_threshold_assumed: float = 0.0

    def __post_init__(self):
        if not self.c_const > 0:
            raise ConfigError("gevrey constant C must be positive", "gevrey.C")
        if not self.g_index > 1:
            raise ConfigError("gevrey index g must exceed 1", "gevrey.g")
        e1, e2 = self.e_window
        if e1 > e2:
            raise ConfigError("energy window needs E1 <= E2", "gevrey.E1")
        if not e1 > self.e_threshold_assumed:
            raise ConfigError("energy window must lie above E_th", "gevrey.E_th")

    @property
    def rate(self) -> float:
        return self.c_const / (self.g_index - 1.0)


def _collinear_axis(centres: np.ndarray, dim: int):
    """Return (collinear, point, unit axis) for a point set."""
    n = len(centres)
    if n == 1:
        return True, centres[0].copy(), None
    diff = centres[:, None, :] - centres[None, :, :]
    dist = np.linalg.norm(diff, axis=-1)
    i, j = np.unravel_index(np.argmax(dist), dist.shape)
    diam = dist[i, j]
    axis = (centres[j] - centres[i]) / diam
    rel = centres - centres[i]
    off = rel - np.outer(rel @ axis, axis)
    collinear = bool(np.all(np.linalg.norm(off, axis=1) <= GEOM_EPS * diam))
    return collinear, centres[i].copy(), axis


def validate_config(centres, strengths, dim: int, quiet: bool = False) -> CentreConfig:
    """Check raw centre/strength lists and build a :class:`CentreConfig`.

    Raises :class:`ConfigError` for a bad dimension, zero strengths or
    coincident centres.  A :class:`HypothesisWarning` is emitted when the
    configuration lies outside the integrability hypotheses; such systems
    are still simulated.
    """
    if dim not in (2, 3):
        raise ConfigError(f"dim must be 2 or 3, got {dim!r}", "dim")
    try:
        c = np.array(centres, dtype=float)
        z = np.array(strengths, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"non-numeric centre data: {exc}", "centres") from None
    if c.ndim != 2 or c.shape[0] == 0 or c.shape[1] != dim:
        raise ConfigError(f"centres must be a non-empty list of {dim}-vectors", "centres")
    if z.ndim != 1 or z.size != c.shape[0]:
        raise ConfigError("need exactly one strength per centre", "strengths")
    if not (np.all(np.isfinite(c)) and np.all(np.isfinite(z))):
        raise ConfigError("centres and strengths must be finite", "centres")
    if np.any(z == 0.0):
        k = int(np.flatnonzero(z == 0.0)[0])
        raise ConfigError(f"strength of centre {k + 1} is zero", "strengths")
    n = len(z)
    for k in range(n):
        for l in range(k + 1, n):
            if np.array_equal(c[k], c[l]):
                raise ConfigError(f"duplicate centres {k + 1} and {l + 1}", "centres")

    z_total = 0.0
    for zk in z:
        z_total += float(zk)

    collinear, point, axis = _collinear_axis(c, dim)
    c.setflags(write=False)
    z.setflags(write=False)
    keep_axis = collinear and axis is not None
    cfg = CentreConfig(
        dim=dim,
        centres=c,
        strengths=z,
        z_total=z_total,
        collinear=collinear,
        axis=axis if keep_axis else None,
        axis_point=point if keep_axis else None,
    )
    if not quiet:
        if dim == 3 and collinear and n > 1:
            warnings.warn(
                "collinear 3D config outside integrability hypotheses", HypothesisWarning, stacklevel=2
            )
        if dim == 2 and np.any(z < 0):
            warnings.warn(
                "2D config with repelling centres outside integrability hypotheses",
                HypothesisWarning,
                stacklevel=2,
            )
    return cfg


def load_config(path) -> tuple[CentreConfig, GevreyParams | None]:
    """Read a JSON configuration file.

    Schema::

        {"dim": 2, "centres": [[x, y], ...], "strengths": [Z1, ...],
         "gevrey": {"C": 1, "g": 2, "E1": 5, "E2": 20, "E_th": 0}}
    """
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    return config_from_dict(raw)


def config_from_dict(raw: dict) -> tuple[CentreConfig, GevreyParams | None]:
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object")
    for key in ("dim", "centres", "strengths"):
        if key not in raw:
            raise ConfigError(f"missing field {key!r}", key)
    cfg = validate_config(raw["centres"], raw["strengths"], raw["dim"])
    gev = None
    if "gevrey" in raw:
        g = raw["gevrey"]
        try:
            gev = GevreyParams(
                c_const=float(g.get("C", 1.0)),
                g_index=float(g.get("g", 2.0)),
                e_window=(float(g["E1"]), float(g["E2"])),
                e_threshold_assumed=float(g.get("E_th", 0.0)),
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad gevrey block: {exc}", "gevrey") from None
    return cfg, gev


def _offsets(q, config: CentreConfig):
    q = np.asarray(q, dtype=float)
    rel = q[None, :] - config.centres
    dist = np.linalg.norm(rel, axis=1)
    hit = np.flatnonzero(dist == 0.0)
    if hit.size:
        raise CentreCollisionError(int(hit[0]))
    return rel, dist


def potential(q, config: CentreConfig) -> float:
    """V(q) = -sum_k Z_k / |q - s_k|."""
    _, dist = _offsets(q, config)
    return float(-np.sum(config.strengths / dist))


def force(q, config: CentreConfig) -> np.ndarray:
    """-grad V(q) = -sum_k Z_k (q - s_k) / |q - s_k|^3."""
    rel, dist = _offsets(q, config)
    return -np.sum((config.strengths / dist**3)[:, None] * rel, axis=0)


def hamiltonian(state: PhaseState, config: CentreConfig) -> float:
    return 0.5 * float(state.p @ state.p) + potential(state.q, config)


def kepler_hamiltonian(state: PhaseState, z: float) -> float:
    """Reference Kepler energy 1/2 |p|^2 - z/|q| about the origin."""
    r = float(np.linalg.norm(state.q))
    if r == 0.0:
        raise ZeroDivisionError("Kepler Hamiltonian undefined at the origin")
    return 0.5 * float(state.p @ state.p) - z / r
