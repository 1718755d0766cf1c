import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from liblab import (
    CircleMeasure,
    IntervalMeasure,
    LiblabError,
    NegativeMass,
    SpecValidationError,
    TraceParams,
    circle_cdf_interval,
    circle_grid,
    compact_bump,
    cos_coefficients,
    decompose,
    delta_zero_start,
    density_from_cos_coefficients,
    free_projection_edges,
    free_projections,
    from_circle,
    haar_half,
    interval_nodes,
    measure_from_spec,
    raised_cosine,
    symmetrize_density,
    to_circle,
)

HALF = TraceParams(0.5, 0.5)

taus = st.floats(min_value=0.05, max_value=0.95)


def test_grid_convention():
    th = circle_grid(8)
    assert th[0] == -math.pi
    assert th[4] == 0.0
    np.testing.assert_allclose(np.diff(th), math.pi / 4)


def test_grid_even_pairing():
    # theta_j and theta_{(n-j) mod n} are negatives of each other
    th = circle_grid(16)
    j = np.arange(1, 16)
    np.testing.assert_allclose(th[j], -th[(16 - j) % 16], atol=1e-15)


def test_interval_nodes_exclude_fixed_points():
    x = interval_nodes(64)
    assert len(x) == 31
    assert 0.0 < x.min() and x.max() < 1.0
    # nodes ordered by increasing theta means decreasing x
    assert np.all(np.diff(x) < 0)


@given(st.integers(min_value=3, max_value=6))
def test_symmetrize_is_idempotent_and_even(k):
    rng = np.random.default_rng(k)
    d = symmetrize_density(rng.uniform(size=2**k))
    np.testing.assert_array_equal(symmetrize_density(d), d)
    assert np.abs(d[1:] - d[1:][::-1]).max() == 0.0


@given(st.lists(st.floats(-1, 1), min_size=1, max_size=6))
def test_cosine_coefficients_round_trip(coeffs):
    m = np.array([2.0] + coeffs)
    d = density_from_cos_coefficients(m, 256)
    back = cos_coefficients(d, len(m) - 1)
    np.testing.assert_allclose(back, m, atol=1e-12)


def test_cosine_moments_of_raised_cosine():
    m = raised_cosine(512).cos_moments(4)
    np.testing.assert_allclose(m, [0.5, 0.25, 0, 0, 0], atol=1e-14)


def test_circle_measure_rejects_bad_input():
    with pytest.raises(NegativeMass):
        CircleMeasure(-0.1, 0.0, np.zeros(64))
    with pytest.raises(LiblabError):
        CircleMeasure(0.0, 0.0, np.zeros(60))
    d = np.zeros(64)
    d[3] = 1.0  # not even under j <-> n - j
    with pytest.raises(LiblabError):
        CircleMeasure(0.0, 0.0, d)


def test_circle_measure_clips_roundoff_negatives():
    d = symmetrize_density(np.full(64, -1e-13))
    m = CircleMeasure(0.0, 0.0, d)
    assert m.density.min() == 0.0


@given(taus, taus)
def test_trace_params_mass_budget(tau_p, tau_q):
    p = TraceParams(tau_p, tau_q)
    assert p.a == pytest.approx(abs(tau_p - tau_q))
    assert p.b == pytest.approx(abs(tau_p + tau_q - 1.0))
    interior = (1.0 - p.a - p.b) / 2.0
    total = p.atom_weight_zero + p.atom_weight_one + interior
    assert total == pytest.approx(1.0, abs=1e-12)


def test_trace_params_rejects_out_of_range():
    with pytest.raises(LiblabError):
        TraceParams(0.0, 0.5)
    with pytest.raises(LiblabError):
        TraceParams(0.5, 1.0)


def test_haar_half_is_uniform():
    m = haar_half(256)
    np.testing.assert_allclose(m.density, 1.0 / (4.0 * math.pi))
    assert m.interior_mass == pytest.approx(0.5, abs=1e-12)
    assert not m.has_atoms


def test_delta_zero_start_is_pure_atom():
    m = delta_zero_start(256)
    assert m.atom_zero == 0.5
    assert m.atom_pi == 0.0
    assert m.interior_mass == 0.0
    np.testing.assert_allclose(m.cos_moments(6), 0.5)


def test_free_projections_half_trace_is_uniform():
    # uniform up to the preset's own x -> theta discretization error;
    # the two pole nodes theta in {0, -pi} carry no x-node and stay empty
    d = free_projections(HALF, 512).density
    u = haar_half(512).density
    keep = np.ones(512, dtype=bool)
    keep[[0, 256]] = False
    np.testing.assert_allclose(d[keep], u[keep], rtol=5e-3)


@given(taus, taus)
def test_free_projections_mass(tau_p, tau_q):
    p = TraceParams(tau_p, tau_q)
    m = free_projections(p, 512)
    assert m.interior_mass == pytest.approx((1.0 - p.a - p.b) / 2.0, abs=1e-9)
    lo, hi = free_projection_edges(p)
    assert 0.0 <= lo < hi <= 1.0


def test_compact_bump_support():
    p = TraceParams(0.5, 0.6)
    m = compact_bump(p, 1024)
    assert m.interior_mass == pytest.approx((1.0 - p.a - p.b) / 2.0, abs=1e-12)
    x = np.cos(0.5 * circle_grid(1024)) ** 2
    outside = (x < 0.19) | (x > 0.81)
    assert np.abs(m.density[outside]).max() == 0.0


def test_half_trace_cdf_matches_arcsine_law():
    # full-space law of QPQ for a free pair at tau = 1/2:
    # half an atom at 0 plus the arcsine density, F(x) = 1/2 + arcsin(sqrt x)/pi
    cdf = circle_cdf_interval(haar_half(4096), HALF)
    assert cdf(0.0) == pytest.approx(0.5, abs=1e-9)
    x = np.linspace(0.01, 0.99, 37)
    np.testing.assert_allclose(
        cdf(x), 0.5 + np.arcsin(np.sqrt(x)) / math.pi, atol=1e-4
    )


def test_cdf_of_delta_start():
    cdf = circle_cdf_interval(delta_zero_start(512), HALF)
    assert cdf(0.0) == pytest.approx(0.5)  # kernel atom at x = 0
    assert cdf(0.5) == pytest.approx(0.5, abs=1e-9)  # no interior mass
    assert cdf(1.0) == pytest.approx(1.0)  # atom at x = 1 closes the mass


@given(taus, taus)
def test_cdf_is_monotone(tau_p, tau_q):
    p = TraceParams(tau_p, tau_q)
    cdf = circle_cdf_interval(free_projections(p, 512), p)
    vals = cdf(np.linspace(0, 1, 101))
    assert np.all(np.diff(vals) >= -1e-12)
    assert vals[-1] == pytest.approx(1.0, abs=1e-6)


def test_interval_round_trip():
    p = TraceParams(0.5, 0.6)
    hat = compact_bump(p, 512)
    nu = from_circle(hat, p)
    assert nu.total_mass == pytest.approx(1.0, abs=1e-6)
    back = to_circle(nu)
    # interior nodes away from the poles agree; the two filled angles are extrapolated
    np.testing.assert_allclose(back.density[2:-2], hat.density[2:-2], atol=1e-10)
    mu, generic = decompose(nu, p)
    assert generic
    assert mu.atom0 == 0.0 and mu.atom1 == 0.0


def test_decompose_rejects_missing_generic_atoms():
    p = TraceParams(0.5, 0.6)
    nu = IntervalMeasure(0.1, 0.0, np.zeros(255), 512)
    with pytest.raises(NegativeMass):
        decompose(nu, p)


def test_measure_from_spec_presets_and_errors():
    m = measure_from_spec("haar_half", HALF, 256)
    np.testing.assert_array_equal(m.density, haar_half(256).density)
    m2 = measure_from_spec({"kind": "raised_cosine", "amplitude": 0.5}, HALF, 256)
    assert m2.density.max() > m2.density.min()
    with pytest.raises(SpecValidationError):
        measure_from_spec("nope", HALF, 256)


def test_measure_from_spec_samples_kind():
    d = np.full(128, 1.0 / (4.0 * math.pi))
    m = measure_from_spec({"kind": "samples", "density": d.tolist()}, HALF, 128)
    assert m.interior_mass == pytest.approx(0.5, abs=1e-12)
