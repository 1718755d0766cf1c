"""Random-matrix Monte Carlo oracle for the liberation process.

Realizes X_t = Q U_t P U_t^* Q at finite matrix size n: P and Q are
n x n orthogonal projections of ranks round(n tau_p), round(n tau_q), and
U_t follows the unitary stochastic flow dU = i dS U - 1/2 U dt, discretized
by the geodesic Euler step

    U_{k+1} = exp(i sqrt(dt) H_k) U_k,

with H_k independent GUE(n) samples (entry variance 1/n, so tau(H^2) = 1
and the Ito drift -1/2 U dt emerges from the exponential automatically).
A Newton-Schulz polish keeps U unitary to 1e-10 at every step -- checked,
not assumed.  Eigenvalues of X_t are computed from the rank_p x rank_p
Gram matrix (V_q^* U B_p)^* (V_q^* U B_p), padded with the structural
zeros, so snapshots cost one small Hermitian eigensolve.

Replicas draw independent RNG streams spawned from the master seed, making
output bit-reproducible regardless of the thread schedule (cap workers
with LIBLAB_THREADS).
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence, Tuple, Union

import numpy as np

from .errors import LiblabError, SpecValidationError, TimeGridMismatch
from .measures import CircleMeasure, TraceParams, circle_cdf_interval

UNITARITY_TOL = 1e-10


@dataclass(frozen=True)
class MatrixModelConfig:
    """Monte Carlo model: size, rank fractions, Euler step, horizon, seed."""

    n: int
    tau_p: float = 0.5
    tau_q: float = 0.5
    dt: float = 1e-3
    t_end: float = 1.0
    samples: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.n < 2:
            raise SpecValidationError("matrix size n must be at least 2")
        for name, rank in (("p", self.rank_p), ("q", self.rank_q)):
            if not 1 <= rank <= self.n - 1:
                raise SpecValidationError(
                    f"rank of {name}-projection ({rank}) must lie in [1, n-1]"
                )
        if not 0.0 < self.dt <= 1e-2:
            raise SpecValidationError("Euler step dt must lie in (0, 1e-2]")
        if self.t_end < 0.0:
            raise SpecValidationError("t_end must be nonnegative")
        if self.samples < 1:
            raise SpecValidationError("need at least one Monte Carlo replica")

    @property
    def rank_p(self) -> int:
        return int(round(self.n * self.tau_p))

    @property
    def rank_q(self) -> int:
        return int(round(self.n * self.tau_q))


@dataclass(frozen=True)
class SpectrumResult:
    """Eigenvalue snapshots, shape (n_times, samples, n), sorted ascending."""

    config: MatrixModelConfig
    times: Tuple[float, ...]
    eigenvalues: np.ndarray
    unitarity_drift: float

    def pooled(self, time_index: int) -> np.ndarray:
        """All replicas' eigenvalues at one time, as a flat sorted array."""
        return np.sort(self.eigenvalues[time_index].ravel())

    def iter_csv_rows(self):
        """Rows (t, eigenvalue_index, value) pooled across replicas."""
        for i, t in enumerate(self.times):
            for j, v in enumerate(self.pooled(i)):
                yield t, j, v


def haar_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed unitary via QR with the phase-fixed R diagonal."""
    z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def gue_sample(n: int, rng: np.random.Generator) -> np.ndarray:
    """GUE(n) with entry variance 1/n (semicircle of radius 2 as n grows)."""
    z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return (z + z.conj().T) / (2.0 * np.sqrt(n))


def _range_basis(proj: np.ndarray, expected_rank: int) -> np.ndarray:
    proj = np.asarray(proj)
    if proj.ndim != 2 or proj.shape[0] != proj.shape[1]:
        raise SpecValidationError("projections must be square matrices")
    if np.abs(proj - proj.conj().T).max() > 1e-10:
        raise SpecValidationError("projection must be Hermitian")
    if np.abs(proj @ proj - proj).max() > 1e-8:
        raise SpecValidationError("projection must be idempotent")
    w, v = np.linalg.eigh(proj)
    basis = v[:, w > 0.5]
    if basis.shape[1] != expected_rank:
        raise SpecValidationError(
            f"projection rank {basis.shape[1]} disagrees with config rank {expected_rank}"
        )
    return np.ascontiguousarray(basis)


def _snapshot_eigs(u_cols: np.ndarray, vq: np.ndarray, n: int) -> np.ndarray:
    c = vq.conj().T @ u_cols
    gram = c.conj().T @ c
    ev = np.linalg.eigvalsh(gram)
    if ev.min() < -1e-8 or ev.max() > 1.0 + 1e-8:
        raise LiblabError(f"compressed-projection spectrum left [0,1]: {ev.min()}, {ev.max()}")
    full = np.zeros(n)
    full[n - len(ev) :] = np.clip(ev, 0.0, 1.0)
    return np.sort(full)


def _evolve_replica(config, step_targets, initial, child_seed):
    rng = np.random.default_rng(child_seed)
    n = config.n
    if initial == "free":
        b_p = None  # P = diag(1_rank_p, 0): U B_p is just the leading columns
        v_q = haar_unitary(n, rng)[:, : config.rank_q]
    elif initial == "equal":
        b_p = None
        v_q = np.eye(n, dtype=complex)[:, : config.rank_q]
    else:
        b_p, v_q = initial

    u = np.eye(n, dtype=complex)
    eye = np.eye(n, dtype=complex)
    sqrt_dt = np.sqrt(config.dt)
    drift = 0.0
    out = []
    current = 0
    for target in step_targets:
        for _ in range(target - current):
            h = gue_sample(n, rng)
            w, v = np.linalg.eigh(h)
            stepper = (v * np.exp(1j * sqrt_dt * w)) @ v.conj().T
            u = stepper @ u
            u = 0.5 * u @ (3.0 * eye - u.conj().T @ u)
            step_drift = float(np.abs(u.conj().T @ u - eye).max())
            drift = max(drift, step_drift)
            if step_drift > UNITARITY_TOL:
                raise LiblabError(f"unitarity drift {step_drift:g} exceeds {UNITARITY_TOL:g}")
        current = target
        u_cols = u[:, : config.rank_p] if b_p is None else u @ b_p
        out.append(_snapshot_eigs(u_cols, v_q, n))
    return np.array(out), drift


def simulate_spectrum(
    config: MatrixModelConfig,
    initial: Union[str, Tuple[np.ndarray, np.ndarray]] = "free",
    times: Sequence[float] = None,
) -> SpectrumResult:
    """Evolve the matrix model and collect eigenvalue snapshots.

    ``initial`` is "free" (P diagonal, Q independently Haar-rotated per
    replica), "equal" (P = Q diagonal; requires equal ranks), or an explicit
    (P, Q) pair of projection matrices shared by all replicas.  Snapshot
    times must be nonneg multiples of dt up to t_end, strictly increasing.
    """
    times = [config.t_end] if times is None else [float(t) for t in times]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise SpecValidationError("snapshot times must be strictly increasing")
    step_targets = []
    for t in times:
        k = t / config.dt
        if abs(k - round(k)) > 1e-9 or t < 0 or t > config.t_end + 1e-12:
            raise TimeGridMismatch(
                f"snapshot time {t:g} is not a multiple of dt={config.dt:g} within t_end"
            )
        step_targets.append(int(round(k)))

    if isinstance(initial, str):
        if initial not in ("free", "equal"):
            raise SpecValidationError(f"unknown initial pair spec {initial!r}")
        if initial == "equal" and config.rank_p != config.rank_q:
            raise SpecValidationError("initial='equal' needs rank_p == rank_q")
        shared = initial
    else:
        p_mat, q_mat = initial
        shared = (
            _range_basis(p_mat, config.rank_p),
            _range_basis(q_mat, config.rank_q),
        )

    children = np.random.SeedSequence(config.seed).spawn(config.samples)
    workers = int(os.environ.get("LIBLAB_THREADS", "0")) or min(
        config.samples, os.cpu_count() or 1
    )
    if workers <= 1:
        results = [_evolve_replica(config, step_targets, shared, c) for c in children]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(
                pool.map(lambda c: _evolve_replica(config, step_targets, shared, c), children)
            )

    eig = np.stack([r[0] for r in results], axis=1)
    drift = max(r[1] for r in results)
    return SpectrumResult(config, tuple(times), eig, drift)


def ks_distance(values: np.ndarray, cdf) -> float:
    """Kolmogorov-Smirnov distance between samples and a CDF callable.

    Uses the signed one-sided maxima D+ = max(i/m - F(x_i)) and
    D- = max(F(x_i^-) - (i-1)/m), which stay correct when samples tie on an
    atom that the CDF also carries (identical step functions give 0); taking
    absolute differences there would see the interior of the tie block.
    """
    x = np.sort(np.asarray(values, dtype=float))
    m = len(x)
    hi = np.arange(1, m + 1) / m
    lo = np.arange(0, m) / m
    f_right = np.asarray(cdf(x), dtype=float)
    f_left = np.asarray(cdf(x - 1e-12), dtype=float)
    return float(max((hi - f_right).max(), (f_left - lo).max(), 0.0))


def compare_to_flow(
    result: SpectrumResult,
    measures: Sequence[CircleMeasure],
    params: TraceParams,
) -> np.ndarray:
    """KS distance between pooled empirical spectra and analytic nu_t per time."""
    if len(measures) != len(result.times):
        raise TimeGridMismatch(
            f"{len(result.times)} snapshot times vs {len(measures)} analytic measures"
        )
    out = np.empty(len(measures))
    for i, hat_mu in enumerate(measures):
        out[i] = ks_distance(result.pooled(i), circle_cdf_interval(hat_mu, params))
    return out
