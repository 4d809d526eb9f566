import json
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ncentre import (
    GevreyParams,
    IntegratorSettings,
    LadderOptions,
    PhaseState,
    StencilBroken,
    beam_state,
    force,
    gevrey_damping,
    gevrey_integral,
    hamiltonian,
    independence_rank,
    phase_gradient,
    poisson_bracket,
    scattering_record,
)
from ncentre.integrals import (
    ScatteringGradient,
    damping_log_derivative,
    hamiltonian_gradient,
    integral_jacobian,
    integral_report,
    log_damping,
    normalised_brackets,
    report_json,
    scattering_gradient,
)
from ncentre.scattering import OrbitClass, ScatteringRecord, beam_direction

DEFAULT = GevreyParams()


def test_damping_at_zero_delay():
    assert gevrey_damping(0.0, DEFAULT) == pytest.approx(math.exp(-math.e), rel=1e-15)
    assert gevrey_damping(0.0, DEFAULT) == pytest.approx(0.0659880358, rel=1e-9)


def test_damping_large_index_matches_bignum():
    params = GevreyParams(1.0, 101.0)
    mpmath.mp.dps = 50
    exact = mpmath.exp(-mpmath.exp(mpmath.mpf(1) / 100))
    assert gevrey_damping(0.0, params) == pytest.approx(float(exact), rel=1e-12)


@given(st.floats(-50.0, 50.0), st.floats(0.0, 5.0))
def test_damping_bounded_and_monotone(tau, extra):
    d0 = gevrey_damping(tau, DEFAULT)
    d1 = gevrey_damping(abs(tau) + extra, DEFAULT)
    assert 0.0 <= d0 <= math.exp(-math.e)
    assert d1 <= d0


def test_damping_underflows_to_zero():
    assert gevrey_damping(1e3, DEFAULT) == 0.0
    assert log_damping(1e3, DEFAULT) == -math.inf
    assert gevrey_damping(5.0, DEFAULT) > 0.0


def test_damping_log_derivative_matches_difference():
    for tau in (-2.0, 0.3, 1.7):
        h = 1e-6
        fd = (log_damping(tau + h, DEFAULT) - log_damping(tau - h, DEFAULT)) / (2 * h)
        assert damping_log_derivative(tau, DEFAULT) == pytest.approx(fd, rel=1e-7)


def make_record(p_plus, tau, cls=OrbitClass.SCATTERING):
    s = PhaseState([10.0, 0.0], [-2.0, 0.0])
    return ScatteringRecord(state=s, energy=2.0, orbit_class=cls,
                            p_plus=None if p_plus is None else np.array(p_plus), tau=tau)


def test_integral_direct_substitution():
    val = gevrey_integral(make_record([2.0, 0.0], 0.0), DEFAULT)
    assert np.allclose(val.f, [2 * math.exp(-math.e), 0.0], rtol=1e-15)
    assert val.authoritative and not val.underflow


def test_integral_zero_off_scattering_set():
    for cls in (OrbitClass.BOUNDED, OrbitClass.TRAPPED, OrbitClass.COLLISION):
        val = gevrey_integral(make_record(None, None, cls), DEFAULT)
        assert np.all(val.f == 0.0) and val.authoritative
    val = gevrey_integral(make_record(None, None, OrbitClass.UNDETERMINED), DEFAULT)
    assert np.all(val.f == 0.0) and not val.authoritative


def test_integral_flags_underflow():
    val = gevrey_integral(make_record([2.0, 0.0], 40.0), DEFAULT)
    assert val.underflow and np.all(val.f == 0.0)


def test_scattering_record_without_delay_is_an_error():
    with pytest.raises(ValueError):
        gevrey_integral(make_record([2.0, 0.0], None), DEFAULT)


def test_gradient_of_hamiltonian(triangle):
    x = PhaseState([0.9, -0.7], [1.5, 2.5])
    g = phase_gradient(lambda s: hamiltonian(s, triangle), x)
    expect = np.concatenate([-force(x.q, triangle), x.p])
    assert np.allclose(g, expect, rtol=1e-6)
    assert np.allclose(g, hamiltonian_gradient(x, triangle), rtol=1e-6)


def test_gradient_of_coordinate():
    x = PhaseState([0.9, -0.7], [1.5, 2.5])
    g = phase_gradient(lambda s: s.p[1], x)
    assert np.allclose(g, [0, 0, 0, 1], atol=1e-10)


def test_canonical_brackets(triangle):
    x = PhaseState([0.9, -0.7], [1.5, 2.5])
    assert poisson_bracket(lambda s: s.q[0], lambda s: s.p[0], x) == pytest.approx(1.0, abs=1e-8)
    assert poisson_bracket(lambda s: s.q[0], lambda s: s.p[1], x) == pytest.approx(0.0, abs=1e-8)
    h = lambda s: hamiltonian(s, triangle)  # noqa: E731
    assert abs(poisson_bracket(h, h, x)) <= 1e-12


@pytest.fixture(scope="module")
def triangle_point(triangle):
    x = beam_state(triangle, 10.0, beam_direction(0.4, 2), 0.3)
    return x, scattering_gradient(x, triangle)


def test_assembled_jacobian_matches_direct_difference(triangle, triangle_point):
    """Route 1 factors D out analytically; route 2 differentiates f itself."""
    x, sg = triangle_point
    params = GevreyParams(0.05, 2.0)
    fixed = LadderOptions(fixed_level=sg.level)

    def f(s):
        return gevrey_integral(scattering_record(s, triangle, options=fixed), params).f

    direct = phase_gradient(f, x)
    d = gevrey_damping(sg.tau, params)
    assembled = d * integral_jacobian(sg, params)
    assert np.allclose(direct, assembled, rtol=1e-5, atol=1e-7 * np.abs(assembled).max())


def test_gradient_step_refinement(triangle, triangle_point):
    x, sg = triangle_point
    half = scattering_gradient(x, triangle, h=5e-6)
    ref = np.abs(sg.jac_p_plus).max()
    assert np.abs(half.jac_p_plus - sg.jac_p_plus).max() <= 1e-6 * ref
    assert np.abs(half.grad_tau - sg.grad_tau).max() <= 1e-6 * np.abs(sg.grad_tau).max()


def test_triangle_rank_and_hamiltonian_brackets(triangle, triangle_point):
    x, sg = triangle_point
    rr = independence_rank(x, triangle, DEFAULT, gradient=sg)
    assert rr.rank == 2
    br = normalised_brackets(sg, DEFAULT, hamiltonian_gradient(x, triangle))
    assert br["f1,H"] <= 1e-4 and br["f2,H"] <= 1e-4
    assert "f1,f2" in br


def test_momentum_shell_consistency(triangle, triangle_point):
    x, sg = triangle_point
    assert 0.5 * sg.p_plus @ sg.p_plus == pytest.approx(hamiltonian(x, triangle), rel=1e-6)


def test_single_centre_rank(kepler1):
    x = beam_state(kepler1, 2.0, beam_direction(0.2, 2), 0.7)
    rr = independence_rank(x, kepler1, DEFAULT)
    assert rr.rank == 2


def test_degenerate_gradient_reports_low_rank():
    rec = make_record([2.0, 0.0], 0.0)
    sg = ScatteringGradient(rec, np.array([2.0, 0.0]), 0.0, np.zeros((2, 4)), np.zeros(4), 0)
    rr = independence_rank(rec.state, None, DEFAULT, gradient=sg)
    assert rr.rank == 0


def test_stencil_broken_on_bounded_point(kepler1):
    st = IntegratorSettings.for_config(kepler1, None, max_time=50.0)
    with pytest.raises(StencilBroken):
        scattering_gradient(PhaseState([1.0, 0.0], [0.0, 1.0]), kepler1, st)


def test_integral_decays_along_delay_spike(triangle):
    E = 10.0
    pts = []
    lo, hi = -0.8, 0.8
    for _ in range(6):
        bs = np.linspace(lo, hi, 41)
        recs = [scattering_record(beam_state(triangle, E, [1.0, 0.0], b), triangle) for b in bs]
        taus = [r.tau if r.tau_converged else -math.inf for r in recs]
        i = int(np.argmax(taus))
        pts.append(recs[i])
        lo, hi = bs[max(i - 1, 0)], bs[min(i + 1, 40)]
    pts.sort(key=lambda r: abs(r.tau))
    assert abs(pts[-1].tau) > abs(pts[0].tau)
    norms = [np.linalg.norm(gevrey_integral(r, DEFAULT).f) for r in pts]
    assert norms[-1] < norms[0]
    assert all(b <= a for a, b in zip(norms, norms[1:]))


def test_report_json_fields(triangle):
    x = beam_state(triangle, 10.0, beam_direction(0.4, 2), 0.3)
    rep = json.loads(report_json(integral_report(x, triangle, DEFAULT)))
    assert {"point", "class", "f", "damping_log", "rank", "singular_values",
            "brackets"} <= set(rep)
    assert rep["class"] == "Scattering"
    assert rep["rank"] == 2
