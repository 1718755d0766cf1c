import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from liblab import (
    HerglotzField,
    LiblabError,
    TimeGridMismatch,
    TraceParams,
    boundary_density,
    cauchy_from_circle,
    circle_grid,
    delta_zero_start,
    free_projections,
    haar_half,
    hardy_norm_diag,
    herglotz_H,
    herglotz_L,
    hilbert_transform,
    pde_residual_G,
    raised_cosine,
    recover_L_from_H,
)

HALF = TraceParams(0.5, 0.5)


def pv_hilbert_oracle(f, n=4096):
    """PV quadrature of (1/2pi) int f(phi) cot((theta-phi)/2) dphi.

    Midpoint sampling of phi between the theta nodes never touches the
    singularity, so no node is skipped and the rule stays spectrally
    accurate for band-limited f.
    """
    theta = circle_grid(n)
    mid = theta + math.pi / n
    diff = theta[:, None] - mid[None, :]
    kernel = 1.0 / np.tan(0.5 * diff)
    return (kernel @ f(mid)) / n


@pytest.mark.parametrize("n_mode", range(1, 9))
def test_hilbert_convention_cos_to_sin(n_mode):
    theta = circle_grid(4096)
    got = hilbert_transform(np.cos(n_mode * theta))
    np.testing.assert_allclose(got, np.sin(n_mode * theta), atol=1e-12)


@pytest.mark.parametrize("n_mode", range(1, 9))
def test_hilbert_matches_pv_quadrature(n_mode):
    theta = circle_grid(4096)
    fft_side = hilbert_transform(np.cos(n_mode * theta))
    pv_side = pv_hilbert_oracle(lambda th: np.cos(n_mode * th))
    assert np.abs(fft_side - pv_side).max() < 1e-6


def test_hilbert_annihilates_constants():
    np.testing.assert_allclose(hilbert_transform(np.full(512, 3.7)), 0.0, atol=1e-12)


def test_hilbert_of_even_is_odd():
    theta = circle_grid(512)
    f = np.cos(theta) + 0.3 * np.cos(4 * theta)
    g = hilbert_transform(f)
    # odd on the grid: g(theta_j) = -g(theta_{(n-j) mod n})
    np.testing.assert_allclose(g[1:], -g[1:][::-1], atol=1e-13)
    assert abs(g[0]) < 1e-13


@given(st.integers(min_value=1, max_value=20))
def test_hilbert_isometry_on_mean_zero(seed):
    rng = np.random.default_rng(seed)
    f = rng.standard_normal(256)
    f -= f.mean()
    f -= np.fft.irfft(np.fft.rfft(f) * (np.arange(129) == 128), 256)  # drop Nyquist
    g = hilbert_transform(f)
    assert np.linalg.norm(g) == pytest.approx(np.linalg.norm(f), abs=1e-10)


# ---------------------------------------------------------------------------
# Herglotz field
# ---------------------------------------------------------------------------


def test_field_of_haar_has_constant_L():
    field = HerglotzField(haar_half(512), HALF)
    z = 0.3 * np.exp(1j * np.linspace(0, 2 * math.pi, 7))
    np.testing.assert_allclose(field.L(z), 0.5, atol=1e-12)


def test_field_of_delta_is_moebius():
    field = HerglotzField(delta_zero_start(512), HALF)
    z = np.array([0.0, 0.2 + 0.1j, -0.5j])
    np.testing.assert_allclose(field.L(z), 0.5 * (1 + z) / (1 - z), atol=1e-12)


def test_herglotz_L_at_zero_is_total_mass():
    mu = raised_cosine(512)
    np.testing.assert_allclose(herglotz_L(mu, 0.0), 0.5, atol=1e-12)
    with pytest.raises(LiblabError):
        herglotz_L(mu, 1.0 + 0j)


def test_H_L_round_trip():
    params = TraceParams(0.6, 0.7)
    field = HerglotzField(free_projections(params, 512), params)
    z = np.array([0.0, 0.3 - 0.2j, -0.4 + 0.1j])
    lval = field.L(z)
    h = herglotz_H(field, z)
    back = recover_L_from_H(h, z, params, branch_hint=lval * 1.001)
    np.testing.assert_allclose(back, lval, atol=1e-12)


def test_recover_L_without_hint_takes_herglotz_root():
    # a = b = 0: H = L^2, so H = 1/4 pairs with the Re >= 0 root L = 1/2
    back = recover_L_from_H(np.array([0.25 + 0j]), np.array([0.0 + 0j]), HALF)
    np.testing.assert_allclose(back, 0.5)


def test_boundary_density_recovers_input():
    for mu in (haar_half(1024), raised_cosine(1024)):
        field = HerglotzField(mu, HALF)
        dens = boundary_density(field, grid_size=1024)
        np.testing.assert_allclose(dens, mu.density, atol=2e-7)


def test_boundary_density_is_even_and_mass_correct():
    mu = raised_cosine(1024, amplitude=0.7)
    field = HerglotzField(mu, HALF)
    dens = boundary_density(field, grid_size=1024)
    np.testing.assert_array_equal(dens[1:], dens[1:][::-1])
    assert dens.sum() * 2 * math.pi / 1024 == pytest.approx(0.5, abs=1e-6)
    assert dens.min() >= 0.0


def test_cauchy_G_of_free_pair():
    # free pair at tau = 1/2: G(z) = 1/(2 sqrt(z) sqrt(z-1)) + 1/(2z)
    # (two principal roots put the cut on [0, 1] with the right sign)
    z = np.array([2.0 + 0.0j, 1.5 + 0.5j, -1.0 + 0.2j])
    got = cauchy_from_circle(
        haar_half(4096), z, atom0=HALF.atom_weight_zero, atom1=HALF.atom_weight_one
    )
    expect = 0.5 / (np.sqrt(z) * np.sqrt(z - 1.0)) + 0.5 / z
    np.testing.assert_allclose(got, expect, atol=1e-6)


# ---------------------------------------------------------------------------
# PDE residual plumbing
# ---------------------------------------------------------------------------


def test_pde_residual_rejects_nonuniform_grids():
    t = np.array([0.0, 0.1, 0.3])
    z = np.linspace(0, 1, 5) + 0.8j
    g = np.zeros((3, 5), dtype=complex)
    with pytest.raises(TimeGridMismatch):
        pde_residual_G(g, t, z, HALF)
    t_ok = np.array([0.0, 0.1, 0.2])
    z_bad = np.array([0.1, 0.2, 0.5]) + 0.8j
    with pytest.raises(TimeGridMismatch):
        pde_residual_G(g[:, :3], t_ok, z_bad, HALF)
    with pytest.raises(LiblabError):
        pde_residual_G(g[:2, :2], t_ok[:2], z[:2], HALF)


def test_pde_residual_zero_for_stationary_flow():
    # the free-pair law is a fixed point, so d_t G = 0 and the bracket
    # divergence must vanish on its own
    z = np.linspace(-0.5, 1.5, 41) + 0.9j
    g = cauchy_from_circle(haar_half(4096), z, atom0=HALF.atom_weight_zero)
    rep = pde_residual_G(np.tile(g, (3, 1)), np.array([0.4, 0.5, 0.6]), z, HALF)
    assert rep["max"] < 1e-6
    assert rep["field"].shape == (1, 39)


def test_hardy_norm_bounded_for_smooth_measure():
    field = HerglotzField(raised_cosine(2048), HALF)
    norms = hardy_norm_diag(field, radii=(0.9, 0.99, 0.999))
    assert norms.shape == (3,)
    assert np.all(np.isfinite(norms))
    assert abs(norms[2] - norms[1]) <= 0.01 * abs(norms[1])


def test_hardy_norm_grows_for_atom():
    # an atom at angle zero breaks the Hardy bound: norms blow up as r -> 1
    field = HerglotzField(delta_zero_start(2048), HALF)
    norms = hardy_norm_diag(field, radii=(0.9, 0.99, 0.999))
    assert norms[2] > 2.0 * norms[0]
