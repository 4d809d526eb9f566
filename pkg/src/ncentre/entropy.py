"""Symbolic census of close-approach itineraries.

Orbits are coded by the sequence of centres they pass within rho_event,
with immediate repeats collapsed.  Counting the distinct length-L prefixes
realised by a sample of orbits gives a lower estimate of the topological
entropy per symbol.  Sampling runs along one-parameter beam families and
bisects between neighbours with different words, which is how the
exponentially thin parameter intervals of long words are found.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .integrator import IntegratorSettings, StopCondition, Trajectory, propagate
from .model import CentreConfig, PhaseState
from .scattering import beam_state, itinerary as _itinerary

__all__ = [
    "COLLAPSE_CONVENTION",
    "BeamFamily",
    "WordCensus",
    "itinerary",
    "sample_word",
    "word_census",
    "prefix_counts",
    "full_shift_bound",
    "fit_growth",
    "census_csv",
]

COLLAPSE_CONVENTION = "consecutive repeats collapsed (no immediate repeat)"


def itinerary(traj: Trajectory, config: CentreConfig | None = None) -> tuple:
    """Centre indices (1-based) of the close approaches of ``traj``."""
    return _itinerary(traj)


@dataclass(frozen=True)
class BeamFamily:
    """Beams of fixed energy and direction, parameterised by impact offset."""

    config: CentreConfig
    energy: float
    direction: tuple
    b_min: float
    b_max: float

    def state(self, b: float) -> PhaseState:
        return beam_state(self.config, self.energy, np.asarray(self.direction), b)


def sample_word(x: PhaseState, config: CentreConfig, settings: IntegratorSettings,
                word_limit: int) -> tuple:
    """Itinerary of the full orbit through ``x``, truncated at ``word_limit``.

    Both directions are propagated; each leg stops as soon as its word is
    longer than the limit.
    """
    return _probe(x, config, settings, word_limit)[0]


def _probe(x, config, settings, word_limit):
    """(word, outgoing unit direction or None if the orbit did not escape)."""
    stop = StopCondition(escape=True, word_limit=word_limit)
    bwd = propagate(x, config, settings, stop, direction=-1, record=False)
    fwd = propagate(x, config, settings, stop, direction=1, record=False)
    word = _itinerary(bwd, fwd)[:word_limit]
    if fwd.status != "escaped" or bwd.status != "escaped":
        return word, None
    p = fwd.final.p
    return word, p / np.linalg.norm(p)


def full_shift_bound(n: int, L: int) -> int:
    """Number of length-L words over n symbols without immediate repeats."""
    if L == 0:
        return 1
    return n * (n - 1) ** (L - 1)


def prefix_counts(words, L_max: int) -> dict:
    """L -> number of distinct length-L prefixes, for L = 1..L_max."""
    out = {}
    for L in range(1, L_max + 1):
        out[L] = len({w[:L] for w in words if len(w) >= L})
    return out


def fit_growth(counts: dict, n: int, min_points: int = 3) -> tuple[float, float]:
    """Slope of log count(L) against L, and its relative standard error.

    The fit uses the longest window of consecutive lengths with nonzero
    counts, starting at L=1.  The slope is clipped to [0, log(n-1)], the
    growth rate of the no-repeat full shift; this makes one and two centres
    give exactly zero.
    """
    cap = math.log(max(n - 1, 1))
    Ls = [L for L in sorted(counts) if counts[L] > 0]
    run = []
    for L in Ls:
        if run and L != run[-1] + 1:
            break
        run.append(L)
    if len(run) < min_points or cap == 0.0:
        return 0.0, 0.0
    x = np.array(run, dtype=float)
    y = np.log([counts[L] for L in run])
    a = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(a, y, rcond=None)
    slope = float(coef[0])
    res = y - a @ coef
    dof = len(x) - 2
    stderr = math.sqrt(float(res @ res) / dof / float(((x - x.mean()) ** 2).sum()))
    clipped = min(max(slope, 0.0), cap)
    rel = stderr / clipped if clipped > 0 else 0.0
    return clipped, rel


@dataclass
class WordCensus:
    word_length_counts: dict
    sample_size: int
    energy: float
    growth_fit: tuple
    n_centres: int
    L_max: int
    words: set = field(default_factory=set, repr=False)
    metadata: dict = field(default_factory=dict)

    @property
    def slope(self) -> float:
        return self.growth_fit[0]

    @property
    def residual(self) -> float:
        return self.growth_fit[1]

    def merged(self, other: "WordCensus") -> "WordCensus":
        """Census of the union of both samples."""
        words = self.words | other.words
        counts = prefix_counts(words, self.L_max)
        return WordCensus(counts, self.sample_size + other.sample_size, self.energy,
                          fit_growth(counts, self.n_centres), self.n_centres, self.L_max,
                          words, dict(self.metadata))


class _Sampler:
    """Adaptive sampling of one beam family.

    An interval is bisected while its end words differ, the outgoing
    direction turns by more than ``max_turn`` radians across it, or either
    end fails to escape.  The deflection function winds rapidly near the
    trapped set, so this finds cylinders that lie strictly inside an
    interval whose end words agree.
    """

    def __init__(self, family, config, settings, L_max, max_depth, max_turn, budget):
        self.family = family
        self.config = config
        self.settings = settings
        self.L_max = L_max
        self.max_depth = max_depth
        self.max_turn = max_turn
        self.budget = budget
        self.samples = 0
        self.words = set()
        self._tick = 0

    def probe(self, b: float):
        self.samples += 1
        word, out = _probe(self.family.state(b), self.config, self.settings, self.L_max)
        self.words.add(word)
        return word, out

    def _split(self, pa, pb) -> bool:
        (wa, da), (wb, db) = pa, pb
        if wa != wb or da is None or db is None:
            return True
        return math.acos(min(1.0, float(da @ db))) > self.max_turn

    def refine(self, xs, probes):
        """Bisect the widest splittable interval first until the budget
        or the depth limit is reached."""
        heap = []
        for i in range(len(xs) - 1):
            self._push(heap, xs[i], probes[i], xs[i + 1], probes[i + 1], 0)
        while heap and self.samples < self.budget:
            _, _, a, pa, b, pb, depth = heapq.heappop(heap)
            m = 0.5 * (a + b)
            pm = self.probe(m)
            self._push(heap, a, pa, m, pm, depth + 1)
            self._push(heap, m, pm, b, pb, depth + 1)

    def _push(self, heap, a, pa, b, pb, depth):
        if depth >= self.max_depth or (b - a) <= 4e-16 * max(abs(a), abs(b), 1.0):
            return
        if self._split(pa, pb):
            self._tick += 1
            heapq.heappush(heap, (-(b - a), self._tick, a, pa, b, pb, depth))


def word_census(families, config: CentreConfig, L_max: int,
                settings: IntegratorSettings | None = None, grid: int = 200,
                refine: bool = True, max_depth: int = 48, max_turn: float = 0.2,
                max_samples: int = 200_000) -> WordCensus:
    """Distinct itinerary prefixes realised by beam families.

    Each family is sampled on ``grid`` evenly spaced impact offsets; with
    ``refine`` neighbouring samples are bisected adaptively (see
    :class:`_Sampler`), widest interval first, up to ``max_depth`` levels
    and at most ``max_samples`` orbits per family.
    """
    families = list(families)
    if not families:
        raise ValueError("need at least one beam family")
    energy = families[0].energy
    if settings is None:
        settings = IntegratorSettings.for_config(config, energy)
    words = set()
    total = 0
    for fam in families:
        smp = _Sampler(fam, config, settings, L_max, max_depth, max_turn, max_samples)
        bs = [float(b) for b in np.linspace(fam.b_min, fam.b_max, grid)]
        probes = [smp.probe(b) for b in bs]
        if refine:
            smp.refine(bs, probes)
        words |= smp.words
        total += smp.samples
    counts = prefix_counts(words, L_max)
    meta = {
        "config_hash": config.digest(),
        "energy": energy,
        "L_max": L_max,
        "grid": grid,
        "refine": refine,
        "max_depth": max_depth,
        "max_turn": max_turn,
        "families": len(families),
        "max_time": settings.max_time,
        "max_steps": settings.max_steps,
        "rho_event": settings.rho_event,
        "convention": COLLAPSE_CONVENTION,
        "slope_unit": "per symbol",
    }
    return WordCensus(counts, total, energy, fit_growth(counts, config.n),
                      config.n, L_max, words, meta)


def census_csv(census: WordCensus) -> str:
    """``# {metadata}`` line, then ``L,count,bound`` rows."""
    meta = dict(census.metadata)
    meta.update(slope=census.slope, fit_residual=census.residual,
                sample_size=census.sample_size)
    lines = ["# " + json.dumps(meta, sort_keys=True), "L,count,bound"]
    for L in sorted(census.word_length_counts):
        lines.append(f"{L},{census.word_length_counts[L]},"
                     f"{full_shift_bound(census.n_centres, L)}")
    return "\n".join(lines) + "\n"
