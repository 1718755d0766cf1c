import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from liblab import (
    HalfTraceFlow,
    MatrixModelConfig,
    SpecValidationError,
    TimeGridMismatch,
    TraceParams,
    circle_cdf_interval,
    compare_to_flow,
    delta_zero_start,
    haar_half,
    ks_distance,
    simulate_spectrum,
)

HALF = TraceParams(0.5, 0.5)


# ---------------------------------------------------------------------------
# KS statistic
# ---------------------------------------------------------------------------


def test_ks_zero_for_exact_atoms():
    # half the samples tied on an atom the CDF also carries: distance is zero
    values = np.array([0.0] * 5 + [1.0] * 5)

    def cdf(x):
        x = np.asarray(x, dtype=float)
        return np.where(x < 0, 0.0, np.where(x < 1, 0.5, 1.0))

    assert ks_distance(values, cdf) < 1e-9


def test_ks_uniform_midpoints():
    m = 40
    values = (np.arange(m) + 0.5) / m

    def cdf(x):
        return np.clip(np.asarray(x, dtype=float), 0.0, 1.0)

    assert ks_distance(values, cdf) == pytest.approx(0.5 / m, abs=1e-12)


def test_ks_detects_shift():
    values = np.full(10, 0.25)

    def cdf(x):
        return np.clip(np.asarray(x, dtype=float), 0.0, 1.0)

    assert ks_distance(values, cdf) == pytest.approx(0.75, abs=1e-9)


@given(st.integers(min_value=1, max_value=400))
def test_ks_is_bounded(seed):
    rng = np.random.default_rng(seed)
    vals = rng.uniform(size=17)

    def cdf(x):
        return np.clip(np.asarray(x, dtype=float) ** 2, 0.0, 1.0)

    d = ks_distance(vals, cdf)
    assert 0.0 <= d <= 1.0


# ---------------------------------------------------------------------------
# configuration and validation
# ---------------------------------------------------------------------------


def test_config_validation():
    with pytest.raises(SpecValidationError):
        MatrixModelConfig(n=1)
    with pytest.raises(SpecValidationError):
        MatrixModelConfig(n=10, tau_p=0.01)  # rank 0
    with pytest.raises(SpecValidationError):
        MatrixModelConfig(n=10, dt=0.5)  # Euler step too coarse
    with pytest.raises(SpecValidationError):
        MatrixModelConfig(n=10, samples=0)
    cfg = MatrixModelConfig(n=10, tau_p=0.3)
    assert cfg.rank_p == 3


def test_snapshot_times_must_sit_on_the_euler_grid():
    cfg = MatrixModelConfig(n=8, dt=1e-2, t_end=0.1, samples=1)
    with pytest.raises(TimeGridMismatch):
        simulate_spectrum(cfg, times=[0.005])
    with pytest.raises(TimeGridMismatch):
        simulate_spectrum(cfg, times=[0.2])  # beyond t_end
    with pytest.raises(SpecValidationError):
        simulate_spectrum(cfg, times=[0.05, 0.05])


def test_equal_initial_needs_equal_ranks():
    cfg = MatrixModelConfig(n=10, tau_p=0.3, tau_q=0.5, t_end=0.0, samples=1)
    with pytest.raises(SpecValidationError):
        simulate_spectrum(cfg, initial="equal", times=[0.0])
    with pytest.raises(SpecValidationError):
        simulate_spectrum(cfg, initial="banana", times=[0.0])


def test_explicit_projection_pair_is_validated():
    n = 8
    cfg = MatrixModelConfig(n=n, t_end=0.0, samples=1)
    p = np.diag([1.0] * 4 + [0.0] * 4).astype(complex)
    q = np.eye(n, dtype=complex) - p
    res = simulate_spectrum(cfg, initial=(p, q), times=[0.0])
    # P and Q orthogonal: QPQ = 0
    assert res.pooled(0).max() == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(SpecValidationError):
        simulate_spectrum(cfg, initial=(p, q[:4, :4]), times=[0.0])
    with pytest.raises(SpecValidationError):
        simulate_spectrum(cfg, initial=(p + 0.1, q), times=[0.0])


# ---------------------------------------------------------------------------
# simulation output
# ---------------------------------------------------------------------------


def test_simulation_shapes_and_range():
    cfg = MatrixModelConfig(n=24, dt=1e-2, t_end=0.1, samples=3, seed=11)
    res = simulate_spectrum(cfg, times=[0.0, 0.05, 0.1])
    assert res.eigenvalues.shape == (3, 3, 24)
    assert res.times == (0.0, 0.05, 0.1)
    assert res.eigenvalues.min() >= 0.0 and res.eigenvalues.max() <= 1.0
    assert res.unitarity_drift < 1e-8
    rows = list(res.iter_csv_rows())
    assert len(rows) == 3 * 3 * 24


def test_simulation_is_seed_deterministic():
    cfg = MatrixModelConfig(n=16, dt=1e-2, t_end=0.05, samples=2, seed=5)
    a = simulate_spectrum(cfg, times=[0.05])
    b = simulate_spectrum(cfg, times=[0.05])
    np.testing.assert_array_equal(a.eigenvalues, b.eigenvalues)
    c = simulate_spectrum(
        MatrixModelConfig(n=16, dt=1e-2, t_end=0.05, samples=2, seed=6), times=[0.05]
    )
    assert not np.array_equal(a.eigenvalues, c.eigenvalues)


def test_free_pair_kernel_padding():
    # the full-space law of QPQ keeps at least the kernel of Q: half zeros
    cfg = MatrixModelConfig(n=30, t_end=0.0, samples=2, seed=3)
    res = simulate_spectrum(cfg, initial="free", times=[0.0])
    vals = res.pooled(0)
    assert np.sum(vals < 1e-12) >= 30  # n - rank_p zeros per replica


def test_equal_pair_at_time_zero_is_half_half():
    cfg = MatrixModelConfig(n=20, t_end=0.0, samples=2, seed=3)
    res = simulate_spectrum(cfg, initial="equal", times=[0.0])
    vals = res.pooled(0)
    assert np.sum(vals < 1e-10) == 20 and np.sum(vals > 1 - 1e-10) == 20
    cdf = circle_cdf_interval(delta_zero_start(256), HALF)
    assert ks_distance(vals, cdf) < 1e-9


def test_free_pair_matches_stationary_law():
    cfg = MatrixModelConfig(n=120, dt=1e-2, t_end=0.5, samples=2, seed=42)
    res = simulate_spectrum(cfg, initial="free", times=[0.0, 0.5])
    flow = HalfTraceFlow(haar_half(1024))
    ks = compare_to_flow(res, [haar_half(1024), flow.measure_at(0.5)], HALF)
    assert ks.shape == (2,)
    assert ks.max() < 0.06  # sampling noise at n=120, two replicas


def test_compare_to_flow_length_mismatch():
    cfg = MatrixModelConfig(n=16, t_end=0.0, samples=1)
    res = simulate_spectrum(cfg, times=[0.0])
    with pytest.raises(TimeGridMismatch):
        compare_to_flow(res, [haar_half(256), haar_half(256)], HALF)
