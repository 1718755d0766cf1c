"""Spectral measures of a two-projection pair and their circle avatars.

The operator X_t = Q u_t P u_t^* Q of a liberated projection pair (P, Q)
has a spectral distribution nu_t on [0, 1].  Everything downstream works
with three coupled representations:

* ``IntervalMeasure``  -- nu_t (or its interior part mu_t) on [0, 1],
* ``CircleMeasure``    -- the symmetrized pushforward hat-mu_t on the unit
  circle under x = cos^2(theta/2),
* Fourier cosine coefficients m_n = int cos(n theta) d(hat-mu), used by the
  transform layer.

Conventions (fixed once, relied on everywhere):

* circle densities are with respect to d(theta), not d(theta)/2pi;
* the circle grid is theta_j = -pi + 2 pi j / N with N a power of two,
  so theta = pi sits at j = 0 and theta = 0 at j = N/2;
* evenness of a circle density is exact: d[j] == d[(N - j) % N];
* x-nodes are the images x_m = cos^2(theta_m / 2) of the positive circle
  angles theta_m = 2 pi m / N, m = 1 .. N/2 - 1 (interior of (0, 1));
* atoms of the interval measure at x = 0 / x = 1 map to circle atoms at
  theta = pi / theta = 0 and keep their full weight, while the interior
  density is split evenly between positive and negative angles.

With a = |tau_p - tau_q| and b = |tau_p + tau_q - 1|, a pair in generic
position has interior mass (1 - a - b)/2 on the circle, and
2 hat-mu + a delta_pi + b delta_0 is a probability measure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from .errors import LiblabError, NegativeMass, SpecValidationError

DEFAULT_GRID = 4096

_EVEN_TOL = 0.0          # evenness is exact by construction
_NEG_TOL = 1e-12         # constructor tolerance for tiny negative densities


def _is_power_of_two(n: int) -> bool:
    return n >= 2 and (n & (n - 1)) == 0


@lru_cache(maxsize=8)
def circle_grid(n: int = DEFAULT_GRID) -> np.ndarray:
    """Uniform angle grid theta_j = -pi + 2 pi j / n, j = 0 .. n-1."""
    theta = -np.pi + 2.0 * np.pi * np.arange(n) / n
    theta.setflags(write=False)
    return theta


@lru_cache(maxsize=8)
def interval_nodes(n: int = DEFAULT_GRID) -> np.ndarray:
    """x-nodes cos^2(theta_m/2) at theta_m = 2 pi m / n, m = 1 .. n/2 - 1.

    Ordered by increasing theta, i.e. decreasing x.
    """
    m = np.arange(1, n // 2)
    x = np.cos(np.pi * m / n) ** 2
    x.setflags(write=False)
    return x


def symmetrize_density(d: np.ndarray) -> np.ndarray:
    """Force exact evenness d[j] = d[(N-j) % N] by pairwise averaging."""
    d = np.array(d, dtype=float)
    d[1:] = 0.5 * (d[1:] + d[1:][::-1])
    return d


def cos_coefficients(density: np.ndarray, n_max: Optional[int] = None) -> np.ndarray:
    """Cosine moments m_n = int cos(n theta) h(theta) d(theta), n = 0 .. n_max.

    Trapezoid quadrature on the uniform grid, which is exact for the
    band-limited trigonometric interpolant of the samples.
    """
    n = len(density)
    if n_max is None:
        n_max = n // 2
    n_max = min(n_max, n // 2)
    spec = np.fft.rfft(density)[: n_max + 1]
    signs = np.where(np.arange(n_max + 1) % 2 == 0, 1.0, -1.0)
    return (2.0 * np.pi / n) * signs * spec.real


def density_from_cos_coefficients(m: np.ndarray, n: int) -> np.ndarray:
    """Evaluate (1/2pi)(m_0 + 2 sum m_k cos(k theta)) on the n-point grid."""
    k_max = min(len(m) - 1, n // 2 - 1)
    spec = np.zeros(n // 2 + 1)
    signs = np.where(np.arange(k_max + 1) % 2 == 0, 1.0, -1.0)
    spec[: k_max + 1] = (n / (2.0 * np.pi)) * signs * m[: k_max + 1]
    d = np.fft.irfft(spec, n=n)
    return symmetrize_density(d)


@dataclass(frozen=True)
class TraceParams:
    """Trace data of the projection pair.

    a = |tau_p - tau_q| and b = |tau_p + tau_q - 1| are recomputed from the
    traces rather than stored, so they can never drift out of sync.
    """

    tau_p: float
    tau_q: float

    def __post_init__(self):
        for name, v in (("tau_p", self.tau_p), ("tau_q", self.tau_q)):
            if not (0.0 < v < 1.0):
                raise LiblabError(f"{name} = {v} outside the open interval (0, 1)")

    @property
    def a(self) -> float:
        return abs(self.tau_p - self.tau_q)

    @property
    def b(self) -> float:
        return abs(self.tau_p + self.tau_q - 1.0)

    @property
    def interior_mass(self) -> float:
        """Mass (1 - a - b)/2 of hat-mu for a pair in generic position."""
        return 0.5 * (1.0 - self.a - self.b)

    @property
    def atom_weight_zero(self) -> float:
        """Generic-position weight of nu at x = 0: 1 - min(tau_p, tau_q)."""
        return 1.0 - min(self.tau_p, self.tau_q)

    @property
    def atom_weight_one(self) -> float:
        """Generic-position weight of nu at x = 1: max(tau_p + tau_q - 1, 0)."""
        return max(self.tau_p + self.tau_q - 1.0, 0.0)

    @property
    def is_half_trace(self) -> bool:
        return self.a == 0.0 and self.b == 0.0


HALF_TRACE = TraceParams(0.5, 0.5)


def _freeze(obj, name, arr):
    arr = np.asarray(arr, dtype=float)
    arr.setflags(write=False)
    object.__setattr__(obj, name, arr)


@dataclass(frozen=True)
class CircleMeasure:
    """Even positive measure hat-mu on (-pi, pi]: density plus two atoms.

    ``density`` holds samples with respect to d(theta) on the grid of
    ``circle_grid(len(density))``; ``atom_zero`` / ``atom_pi`` are point
    masses at theta = 0 / theta = pi (images of x = 1 / x = 0).
    """

    atom_zero: float
    atom_pi: float
    density: np.ndarray

    def __post_init__(self):
        if self.atom_zero < 0 or self.atom_pi < 0:
            raise NegativeMass(
                f"negative atom weight ({self.atom_zero}, {self.atom_pi})"
            )
        d = np.asarray(self.density, dtype=float)
        if d.ndim != 1 or not _is_power_of_two(len(d)):
            raise LiblabError("density grid size must be a power of two")
        if d.min() < -_NEG_TOL:
            raise NegativeMass(f"density has negative values (min {d.min():.3e})")
        d = np.maximum(d, 0.0)
        if not np.array_equal(d[1:], d[1:][::-1]):
            raise LiblabError("circle density must be exactly even on the grid")
        _freeze(self, "density", d)

    @property
    def grid_size(self) -> int:
        return len(self.density)

    @property
    def theta(self) -> np.ndarray:
        return circle_grid(self.grid_size)

    @property
    def interior_mass(self) -> float:
        return float(self.density.sum()) * 2.0 * np.pi / self.grid_size

    @property
    def total_mass(self) -> float:
        return self.interior_mass + self.atom_zero + self.atom_pi

    @property
    def has_atoms(self) -> bool:
        return self.atom_zero > 0.0 or self.atom_pi > 0.0

    def cos_moments(self, n_max: int) -> np.ndarray:
        """Moments of hat-mu itself: m_n = atom_zero + (-1)^n atom_pi + density part."""
        m = cos_coefficients(self.density, n_max)
        n = np.arange(len(m))
        return m + self.atom_zero + np.where(n % 2 == 0, 1.0, -1.0) * self.atom_pi

    def with_density(self, new_density: np.ndarray) -> "CircleMeasure":
        return CircleMeasure(self.atom_zero, self.atom_pi, new_density)


@dataclass(frozen=True)
class IntervalMeasure:
    """Measure on [0, 1]: density at the Chebyshev-type nodes plus endpoint atoms.

    ``density`` is sampled at ``interval_nodes(grid_size)`` (ordered by
    increasing theta, i.e. decreasing x) with respect to dx.
    """

    atom0: float
    atom1: float
    density: np.ndarray
    grid_size: int = DEFAULT_GRID

    def __post_init__(self):
        if self.atom0 < -1e-15 or self.atom1 < -1e-15:
            raise NegativeMass(f"negative atom ({self.atom0}, {self.atom1})")
        object.__setattr__(self, "atom0", max(self.atom0, 0.0))
        object.__setattr__(self, "atom1", max(self.atom1, 0.0))
        if not _is_power_of_two(self.grid_size):
            raise LiblabError("grid_size must be a power of two")
        d = np.asarray(self.density, dtype=float)
        if d.shape != (self.grid_size // 2 - 1,):
            raise LiblabError(
                f"density must have length grid_size/2 - 1 = {self.grid_size // 2 - 1}"
            )
        if d.min() < -_NEG_TOL:
            raise NegativeMass(f"density has negative values (min {d.min():.3e})")
        _freeze(self, "density", np.maximum(d, 0.0))

    @property
    def x(self) -> np.ndarray:
        return interval_nodes(self.grid_size)

    @property
    def theta_pos(self) -> np.ndarray:
        n = self.grid_size
        return 2.0 * np.pi * np.arange(1, n // 2) / n

    @property
    def interior_mass(self) -> float:
        return to_circle(self).interior_mass

    @property
    def total_mass(self) -> float:
        return self.interior_mass + self.atom0 + self.atom1


def _extrapolate_even(v1: float, v2: float, v3: float, h: float) -> float:
    """Limit at 0 of an even smooth function from samples at h, 2h, 3h.

    Quadratic interpolation in the squared coordinate s = theta^2 through
    (h^2, v1), (4h^2, v2), (9h^2, v3), evaluated at s = 0.
    """
    # Lagrange weights at s=0 for nodes 1, 4, 9 (after scaling by h^2):
    # w1 = (0-4)(0-9)/((1-4)(1-9)) = 36/24 = 1.5
    # w2 = (0-1)(0-9)/((4-1)(4-9)) = 9/-15 = -0.6
    # w3 = (0-1)(0-4)/((9-1)(9-4)) = 4/40 = 0.1
    return 1.5 * v1 - 0.6 * v2 + 0.1 * v3


def to_circle(mu: IntervalMeasure) -> CircleMeasure:
    """Symmetrized pushforward of mu under x = cos^2(theta/2).

    The interior density transforms as hat-h(theta) = h(x) |sin theta| / 4;
    endpoint atoms of mu (at x = 0 and x = 1) keep their full weight at
    theta = pi and theta = 0.  Values of hat-h at the two fixed angles
    theta in {0, pi}, which have no x-node, are filled by even extrapolation.
    """
    n = mu.grid_size
    theta_m = mu.theta_pos
    half = mu.density * np.sin(theta_m) / 4.0
    d = np.zeros(n)
    # positive angles theta_m = 2 pi m / n live at circle index n/2 + m
    d[n // 2 + 1 :] = half
    h = 2.0 * np.pi / n
    d[n // 2] = max(_extrapolate_even(half[0], half[1], half[2], h), 0.0)
    d[0] = max(_extrapolate_even(half[-1], half[-2], half[-3], h), 0.0)
    d[1 : n // 2] = half[::-1]
    return CircleMeasure(atom_zero=mu.atom1, atom_pi=mu.atom0, density=d)


def from_circle(hat_mu: CircleMeasure, params: TraceParams) -> IntervalMeasure:
    """Inverse of ``to_circle`` composed with re-attachment of the generic atoms.

    Returns the full spectral measure nu = mu + (1 - min tau) delta_0
    + max(tau_p + tau_q - 1, 0) delta_1, where mu is read off from hat_mu.
    """
    n = hat_mu.grid_size
    theta_m = 2.0 * np.pi * np.arange(1, n // 2) / n
    hat_pos = hat_mu.density[n // 2 + 1 :]
    h = 4.0 * hat_pos / np.sin(theta_m)
    return IntervalMeasure(
        atom0=params.atom_weight_zero + hat_mu.atom_pi,
        atom1=params.atom_weight_one + hat_mu.atom_zero,
        density=h,
        grid_size=n,
    )


def decompose(nu: IntervalMeasure, params: TraceParams):
    """Split nu into its interior part mu and the generic-position atoms.

    mu = nu - (1 - min tau) delta_0 - max(tau_p + tau_q - 1, 0) delta_1.
    Returns ``(mu, generic)`` where ``generic`` is True iff the subtraction
    exactly exhausts the atoms of nu (tolerance 1e-8).  Raises NegativeMass
    if nu carries less atom mass than the generic weights.
    """
    w0 = params.atom_weight_zero
    w1 = params.atom_weight_one
    tol = 1e-8
    if nu.atom0 < w0 - tol or nu.atom1 < w1 - tol:
        raise NegativeMass(
            f"atoms ({nu.atom0:.6g}, {nu.atom1:.6g}) below generic weights "
            f"({w0:.6g}, {w1:.6g})"
        )
    r0 = max(nu.atom0 - w0, 0.0)
    r1 = max(nu.atom1 - w1, 0.0)
    generic = r0 <= tol and r1 <= tol
    mu = IntervalMeasure(
        atom0=0.0 if generic else r0,
        atom1=0.0 if generic else r1,
        density=nu.density,
        grid_size=nu.grid_size,
    )
    return mu, generic


def circle_cdf_interval(hat_mu: CircleMeasure, params: TraceParams):
    """CDF evaluator x -> nu((-inf, x]) of from_circle(hat_mu, params).

    Right-continuous, with jumps at 0 and 1.  Used by the matrix oracle's
    KS comparison.
    """
    n = hat_mu.grid_size
    theta = circle_grid(n)
    pos = slice(n // 2, n)  # theta in [0, pi)
    th = np.concatenate([theta[pos], [np.pi]])
    dens = np.concatenate([2.0 * hat_mu.density[pos], [2.0 * hat_mu.density[0]]])
    # C(theta) = int_theta^pi 2 hat-h, accumulated from pi downward
    h = 2.0 * np.pi / n
    seg = 0.5 * (dens[1:] + dens[:-1]) * h
    tail = np.concatenate([[0.0], np.cumsum(seg[::-1])])[::-1]
    atom0 = params.atom_weight_zero + hat_mu.atom_pi
    atom1 = params.atom_weight_one + hat_mu.atom_zero
    x_nodes = np.cos(0.5 * th) ** 2  # decreasing in theta

    def cdf(x):
        x = np.asarray(x, dtype=float)
        th_of_x = 2.0 * np.arccos(np.sqrt(np.clip(x, 0.0, 1.0)))
        interior = np.interp(th_of_x, th, tail)
        out = np.where(x < 0.0, 0.0, atom0 + interior)
        out = np.where(x >= 1.0, atom0 + tail[0] + atom1, out)
        return out

    return cdf


# ---------------------------------------------------------------------------
# named initial measures
# ---------------------------------------------------------------------------


def haar_half(n: int = DEFAULT_GRID) -> CircleMeasure:
    """Uniform density 1/(4 pi): the stationary measure for tau = 1/2."""
    return CircleMeasure(0.0, 0.0, np.full(n, 1.0 / (4.0 * np.pi)))


def delta_zero_start(n: int = DEFAULT_GRID) -> CircleMeasure:
    """hat-mu with 2 hat-mu = delta_0: the P = Q start at tau = 1/2."""
    return CircleMeasure(0.5, 0.0, np.zeros(n))


def raised_cosine(n: int = DEFAULT_GRID, amplitude: float = 1.0) -> CircleMeasure:
    """Density (1 + amplitude cos theta)/(4 pi), amplitude in [0, 1]."""
    if not (0.0 <= amplitude <= 1.0):
        raise LiblabError("raised_cosine amplitude must lie in [0, 1]")
    theta = circle_grid(n)
    half = (1.0 + amplitude * np.cos(np.abs(theta))) / (4.0 * np.pi)
    return CircleMeasure(0.0, 0.0, symmetrize_density(half))


def free_projection_edges(params: TraceParams):
    """Support edges [alpha, beta] of the free-pair interior density."""
    p, q = params.tau_p, params.tau_q
    root = 2.0 * math.sqrt(p * q * (1.0 - p) * (1.0 - q))
    c = p + q - 2.0 * p * q
    # edges live in [0, 1]; equal traces make c - root exactly 0 up to roundoff
    return max(c - root, 0.0), min(c + root, 1.0)


def free_projections(params: TraceParams, n: int = DEFAULT_GRID) -> CircleMeasure:
    """Circle measure of a pair in free position with the given traces.

    Interior density on [alpha, beta]:
        h(x) = sqrt((beta - x)(x - alpha)) / (2 pi x (1 - x)),
    which pushes to hat-h(theta) = sqrt((beta - x)(x - alpha)) / (2 pi sin theta).
    The grid samples are rescaled (an O(h^(3/2)) quadrature correction from
    the square-root edges) so the discrete interior mass equals
    (1 - a - b)/2 exactly.
    """
    alpha, beta = free_projection_edges(params)
    theta = np.abs(circle_grid(n))
    x = np.cos(0.5 * theta) ** 2
    rad = (beta - x) * (x - alpha)
    d = np.zeros(n)
    inside = rad > 0.0
    sin_t = np.sin(theta[inside])
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = np.sqrt(rad[inside]) / (2.0 * np.pi * sin_t)
    vals = np.where(np.isfinite(vals), vals, 0.0)
    d[inside] = vals
    d = symmetrize_density(d)
    mass = d.sum() * 2.0 * np.pi / n
    if mass <= 0:
        raise LiblabError("free projection density vanished on the grid")
    d *= params.interior_mass / mass
    return CircleMeasure(0.0, 0.0, d)


def compact_bump(
    params: TraceParams,
    n: int = DEFAULT_GRID,
    x_lo: float = 0.2,
    x_hi: float = 0.8,
) -> CircleMeasure:
    """Smooth density compactly supported in [x_lo, x_hi] subset (0, 1).

    C-infinity bump exp(-1/(1-u^2)) in the rescaled coordinate, normalized
    on the grid to interior mass (1 - a - b)/2.  All Fourier coefficients
    decay super-algebraically, which keeps the general-trace Loewner flow
    well resolved.
    """
    if not (0.0 < x_lo < x_hi < 1.0):
        raise LiblabError("bump support must satisfy 0 < x_lo < x_hi < 1")
    theta = np.abs(circle_grid(n))
    x = np.cos(0.5 * theta) ** 2
    u = (2.0 * x - (x_lo + x_hi)) / (x_hi - x_lo)
    d = np.zeros(n)
    inside = np.abs(u) < 1.0
    with np.errstate(divide="ignore", over="ignore"):
        bump = np.exp(-1.0 / (1.0 - u[inside] ** 2))
    d[inside] = bump * np.sin(theta[inside]) / 4.0
    d = symmetrize_density(d)
    mass = d.sum() * 2.0 * np.pi / n
    d *= params.interior_mass / mass
    return CircleMeasure(0.0, 0.0, d)


PRESETS = ("haar_half", "free_projections", "delta_zero", "raised_cosine", "compact_bump")


def measure_from_spec(spec, params: TraceParams, n: int = DEFAULT_GRID) -> CircleMeasure:
    """Build a CircleMeasure from a JSON-style measure spec.

    Either ``{"kind": "<preset name>", ...preset options}`` or
    ``{"kind": "samples", "density": [...], "atom_zero": w0, "atom_pi": wp}``
    with the density given on the standard grid of size ``n``.
    """
    if isinstance(spec, str):
        spec = {"kind": spec}
    if not isinstance(spec, dict) or "kind" not in spec:
        raise LiblabError("measure spec must be a name or a dict with a 'kind' key")
    kind = spec["kind"]
    if kind == "haar_half":
        return haar_half(n)
    if kind == "delta_zero":
        return delta_zero_start(n)
    if kind == "raised_cosine":
        return raised_cosine(n, amplitude=float(spec.get("amplitude", 1.0)))
    if kind == "free_projections":
        return free_projections(params, n)
    if kind == "compact_bump":
        return compact_bump(
            params, n, x_lo=float(spec.get("x_lo", 0.2)), x_hi=float(spec.get("x_hi", 0.8))
        )
    if kind == "samples":
        d = symmetrize_density(np.asarray(spec["density"], dtype=float))
        return CircleMeasure(
            atom_zero=float(spec.get("atom_zero", 0.0)),
            atom_pi=float(spec.get("atom_pi", 0.0)),
            density=d,
        )
    raise SpecValidationError(f"unknown measure kind {kind!r}; known: {PRESETS + ('samples',)}")
