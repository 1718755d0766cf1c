"""Moment recursion for free unitary multiplicative Brownian motion.

The spectral distribution of u_s u, where u_s is a free unitary Brownian
motion started at 1 and u an independent unitary with even spectral law,
has moments c_n(s) = tr((u_s u)^n) satisfying the closed triangular system

    d/ds c_1 = -1/2 c_1,
    d/ds c_n = -(n/2) c_n - sum_{k=1}^{n-1} k c_k c_{n-k}.

For the two-projection liberation flow with tau_p = tau_q = 1/2 this gives
an independent oracle through a time doubling: the moments of the doubled
symmetrized measure 2 hat-mu_t at liberation time t equal c_n(2t).  Every
cross-check against the Loewner engine must apply that factor.

The system is lower triangular, so fixed-step RK4 integration keeps errors
from feeding upward; moments of an even measure stay real.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NegativeMass
from .measures import DEFAULT_GRID, CircleMeasure, density_from_cos_coefficients

DEFAULT_ORDER = 32
DEFAULT_DT = 1e-4


@dataclass(frozen=True)
class MomentVector:
    """Moments of a symmetric probability measure on the circle at time t.

    ``c[n]`` holds the n-th Fourier moment for n = 0..order, with c[0] = 1
    pinned (total mass); evenness makes every moment real.  In liberation
    bookkeeping, c[n] at recursion time t are the moments of 2 hat-mu_{t/2}.
    """

    t: float
    c: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).copy()
        if c.ndim != 1 or len(c) < 2:
            raise ValueError("moment array needs at least c[0] and c[1]")
        if abs(c[0] - 1.0) > 1e-9:
            raise ValueError(f"c[0] must be 1 (probability mass), got {c[0]!r}")
        if np.any(np.abs(c) > 1.0 + 1e-7):
            raise ValueError("circle moments must lie in [-1, 1]")
        c.flags.writeable = False
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "c", c)

    @property
    def order(self) -> int:
        return len(self.c) - 1

    def moment(self, n: int) -> float:
        return float(self.c[n])


def _rhs(c: np.ndarray, idx: np.ndarray) -> np.ndarray:
    tail = c[1:]
    quad = np.convolve(idx[1:] * tail, tail)
    out = np.empty_like(c)
    out[0] = 0.0
    out[1:] = -0.5 * idx[1:] * tail
    out[2:] -= quad[: len(c) - 2]
    return out


def moment_flow(c0: MomentVector, t: float, dt: float = DEFAULT_DT) -> MomentVector:
    """Integrate the moment system forward by t (classical RK4, step dt)."""
    if t < 0:
        raise ValueError("flow time must be nonnegative")
    c = np.array(c0.c, dtype=float)
    if t == 0.0:
        return MomentVector(c0.t, c)
    idx = np.arange(len(c), dtype=float)
    steps = int(np.ceil(t / dt))
    h = t / steps
    for _ in range(steps):
        k1 = _rhs(c, idx)
        k2 = _rhs(c + 0.5 * h * k1, idx)
        k3 = _rhs(c + 0.5 * h * k2, idx)
        k4 = _rhs(c + h * k3, idx)
        c += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    # the flow contracts toward Haar; trim roundoff overshoot of |c| <= 1
    np.clip(c, -1.0, 1.0, out=c)
    return MomentVector(c0.t + t, c)


def moments_of(
    measure: CircleMeasure, order: int = DEFAULT_ORDER, t: float = 0.0
) -> MomentVector:
    """Fourier moments of the doubled measure 2 hat-mu, atoms included.

    Only meaningful when 2 hat-mu is a probability measure (a = b = 0); the
    mass is checked to 1e-6 and then pinned exactly.
    """
    m = measure.cos_moments(order)
    c = 2.0 * m
    if abs(c[0] - 1.0) > 1e-6:
        raise NegativeMass(
            f"doubled measure has mass {c[0]:.8g}, expected 1 (is a = b = 0?)"
        )
    c[0] = 1.0
    return MomentVector(t, c)


def measure_from_moments(
    mv: MomentVector, grid_size: int = DEFAULT_GRID
) -> CircleMeasure:
    """Reconstruct hat-mu from moments of 2 hat-mu by Fejér summation.

    Meaningful once the measure has a density (any positive flow time).
    The Fejér kernel is positive, so negative lobes can only come from
    roundoff; they are clipped at -1e-7 and the density is renormalized to
    mass 1/2.
    """
    w = 1.0 - np.arange(mv.order + 1) / (mv.order + 1.0)
    dens = density_from_cos_coefficients(0.5 * w * mv.c, grid_size)
    if dens.min() < -1e-7:
        raise NegativeMass(f"Fejér reconstruction dips to {dens.min():.3g}")
    dens = np.clip(dens, 0.0, None)
    mass = dens.sum() * (2.0 * np.pi / grid_size)
    if mass <= 0.0:
        raise NegativeMass("reconstructed density carries no mass")
    return CircleMeasure(0.0, 0.0, dens * (0.5 / mass))


def delta_start(order: int = DEFAULT_ORDER) -> MomentVector:
    """Moments of the point mass at angle zero (all ones)."""
    return MomentVector(0.0, np.ones(order + 1))


def haar_start(order: int = DEFAULT_ORDER) -> MomentVector:
    """Moments of normalized Haar measure (all zero; fixed point of the flow)."""
    c = np.zeros(order + 1)
    c[0] = 1.0
    return MomentVector(0.0, c)


def density_moment_error(
    measure: CircleMeasure, mv: MomentVector, n_max: int = 10
) -> float:
    """Max gap between a measure's doubled moments and mv for 1 <= n <= n_max."""
    n_max = min(n_max, mv.order)
    got = 2.0 * measure.cos_moments(n_max)
    return float(np.abs(got[1:] - mv.c[1 : n_max + 1]).max())
