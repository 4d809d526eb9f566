import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ncentre import BeamFamily, IntegratorSettings, word_census
from ncentre.entropy import (
    census_csv,
    fit_growth,
    full_shift_bound,
    prefix_counts,
    sample_word,
)
from ncentre.scattering import beam_state

from .conftest import quiet_config


def families(config, energy, count=2, half_width=0.8):
    out = []
    for j in range(count):
        a = 2 * math.pi * j / count + 0.1
        out.append(BeamFamily(config, energy, (math.cos(a), math.sin(a)),
                              -half_width, half_width))
    return out


def test_full_shift_bound_values():
    assert [full_shift_bound(3, L) for L in range(5)] == [1, 3, 6, 12, 24]
    assert full_shift_bound(2, 7) == 2
    assert full_shift_bound(1, 3) == 0


def test_prefix_counts():
    words = {(1, 2, 1), (1, 2, 3), (2,)}
    assert prefix_counts(words, 3) == {1: 2, 2: 1, 3: 2}


@given(st.integers(2, 6), st.floats(0.1, 3.0), st.floats(0.0, 2.0))
def test_fit_growth_clipped_to_full_shift(n, rate, c0):
    counts = {L: max(1, int(round(math.exp(c0 + rate * L)))) for L in range(1, 7)}
    slope, rel = fit_growth(counts, n)
    assert 0.0 <= slope <= math.log(max(n - 1, 1)) + 1e-15
    assert rel >= 0.0


def test_fit_growth_exact_exponential():
    counts = {L: 3 * 2 ** (L - 1) for L in range(1, 9)}
    slope, rel = fit_growth(counts, 3)
    assert slope == pytest.approx(math.log(2), rel=1e-12)
    assert rel <= 1e-12


def test_fit_growth_too_few_points_is_zero():
    assert fit_growth({1: 3, 2: 6}, 3) == (0.0, 0.0)


@pytest.fixture(scope="module")
def small_triangle_census(triangle):
    return word_census(families(triangle, 10.0), triangle, 5, grid=60, max_samples=1500)


def test_single_centre_has_zero_slope(kepler1):
    c = word_census(families(kepler1, 2.0), kepler1, 4, grid=40, max_samples=300)
    assert c.slope == 0.0
    assert all(v <= 1 for v in c.word_length_counts.values())


def test_two_centres_have_zero_slope_and_at_most_two_words(euler2):
    c = word_census(families(euler2, 5.0), euler2, 6, grid=60, max_samples=1000)
    assert c.slope == 0.0
    assert all(v <= 2 for v in c.word_length_counts.values())


def test_counts_below_full_shift(small_triangle_census):
    c = small_triangle_census
    assert c.word_length_counts[1] == 3
    for L, v in c.word_length_counts.items():
        assert v <= full_shift_bound(3, L)
    for w in c.words:
        assert all(a != b for a, b in zip(w, w[1:]))
    assert 0.0 <= c.slope <= math.log(2)


def test_counts_are_monotone_in_sample(triangle, small_triangle_census):
    extra = word_census(families(triangle, 10.0, count=3), triangle, 5, grid=40,
                        refine=False)
    merged = small_triangle_census.merged(extra)
    assert merged.words >= small_triangle_census.words
    for L, v in small_triangle_census.word_length_counts.items():
        assert merged.word_length_counts[L] >= v
    assert merged.sample_size == small_triangle_census.sample_size + extra.sample_size


def test_relabelling_centres_preserves_counts(triangle):
    perm = [2, 0, 1]
    relabelled = quiet_config(triangle.centres[perm], triangle.strengths[perm], 2)
    a = word_census(families(triangle, 10.0), triangle, 4, grid=80, refine=False)
    b = word_census(families(relabelled, 10.0), relabelled, 4, grid=80, refine=False)
    assert a.word_length_counts == b.word_length_counts
    # symbol j of the relabelled config is centre perm[j - 1] + 1 of the original
    rename = {j + 1: perm[j] + 1 for j in range(3)}
    assert {tuple(rename[s] for s in w) for w in b.words} == a.words


def test_sample_word_respects_limit(triangle):
    st_ = IntegratorSettings.for_config(triangle, 10.0)
    x = beam_state(triangle, 10.0, [1.0, 0.0], 0.05)
    full = sample_word(x, triangle, st_, 50)
    short = sample_word(x, triangle, st_, 1)
    assert len(short) <= 1
    assert full[:1] == short


def test_census_csv_format(small_triangle_census):
    lines = census_csv(small_triangle_census).splitlines()
    assert lines[0].startswith("# ")
    meta = json.loads(lines[0][2:])
    assert {"config_hash", "energy", "L_max", "convention", "slope", "fit_residual",
            "sample_size"} <= set(meta)
    assert lines[1] == "L,count,bound"
    rows = [ln.split(",") for ln in lines[2:]]
    assert [int(r[0]) for r in rows] == list(range(1, 6))
    assert all(int(r[1]) <= int(r[2]) for r in rows)


def test_empty_family_list_rejected(triangle):
    with pytest.raises(ValueError):
        word_census([], triangle, 3)


def test_words_reflect_reversal_symmetry(triangle):
    """Reversing an orbit reverses its word."""
    st_ = IntegratorSettings.for_config(triangle, 10.0)
    for b in np.linspace(-0.6, 0.6, 7):
        x = beam_state(triangle, 10.0, [0.6, 0.8], b)
        w = sample_word(x, triangle, st_, 40)
        assert sample_word(x.__class__(x.q, -x.p), triangle, st_, 40) == w[::-1]
