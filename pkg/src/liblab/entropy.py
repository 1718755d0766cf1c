"""Liberation Fisher information, free mutual information, orbital entropy.

Everything here is a functional of the symmetrized circle measure hat-mu_t
produced by the Loewner flow:

* liberation gradient  k(theta) = 2 pi H(2h)(theta) - a tan(theta/2)
  + b cot(theta/2), an odd function (H is the circle Hilbert transform);
* Fisher information  phi*(t) = int k^2 (2h) dtheta, the dissipation rate
  of the flow;
* free mutual information  i* = 1/2 int_0^infty phi*(t) dt, integrated
  along the flow with a power-law divergence probe at t -> 0;
* orbital entropy  chi_orb = 2 { int int log|e^{i a} - e^{i b}| dmu dmu
  + a int log|1+e^{i theta}| dmu + b int log|1-e^{i theta}| dmu } + Z,
  with Z = Z(tau_p, tau_q) calibrated so the freely-independent pair gets
  chi_orb = 0 (Z = 0 at tau = 1/2).

The headline identity i* = -chi_orb (+inf matching -inf in the atomic
case) is checked by verify_identity; the two sides go through disjoint
numerical machinery, so agreement is a real cross-validation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, Optional

import numpy as np

from .errors import AtomPresent, DivergenceDetected, LiblabError, SpecValidationError
from .loewner import make_flow
from .measures import (
    DEFAULT_GRID,
    HALF_TRACE,
    CircleMeasure,
    TraceParams,
    circle_grid,
    cos_coefficients,
    free_projections,
)
from .transforms import hilbert_transform

# nodes adjacent to theta in {0, pi} inspected for non-vanishing density
# before the singular tan/cot factors are squared against it
POLE_WINDOW = 8
POLE_DENSITY_TOL = 1e-7

# power-law probe window for the t -> 0 divergence of phi*
PROBE_T = (1e-4, 1e-2)
PROBE_SLOPE = -0.95
PROBE_R2 = 0.999


def liberation_gradient_k(hat_h: np.ndarray, params: TraceParams = HALF_TRACE):
    """Gradient k(theta) = 2 pi H(2h) - a tan(theta/2) + b cot(theta/2).

    The two grid nodes sitting exactly on the poles of tan/cot (theta = 0
    and theta = -pi) are excluded: k is odd, so its continuous extension
    vanishes there whenever it is finite, and quadratures never read them.
    Oddness is enforced exactly on return.
    """
    hat_h = np.asarray(hat_h, dtype=float)
    n = len(hat_h)
    k = 2.0 * np.pi * hilbert_transform(2.0 * hat_h)
    if params.a > 0.0 or params.b > 0.0:
        half = 0.5 * circle_grid(n)
        mask = np.ones(n, dtype=bool)
        mask[0] = False  # theta = -pi
        mask[n // 2] = False  # theta = 0
        tan_half = np.zeros(n)
        tan_half[mask] = np.tan(half[mask])
        cot_half = np.zeros(n)
        cot_half[mask] = 1.0 / np.tan(half[mask])
        k = k - params.a * tan_half + params.b * cot_half
    k[0] = 0.0
    k[1:] = 0.5 * (k[1:] - k[1:][::-1])
    return k


def fisher_info(measure: CircleMeasure, params: TraceParams = HALF_TRACE) -> float:
    """Fisher information phi* = int k(theta)^2 d(2 hat-mu)(theta).

    Returns the +inf sentinel when a singular tan/cot term meets density
    that does not vanish at its pole (the integral cannot converge).
    """
    if measure.has_atoms:
        raise AtomPresent("phi* is undefined for measures with atoms")
    h = measure.density
    n = len(h)
    if params.a > 0.0:
        near_pi = np.r_[h[: POLE_WINDOW + 1], h[-POLE_WINDOW:]]
        if near_pi.max() > POLE_DENSITY_TOL:
            return math.inf
    if params.b > 0.0:
        near_zero = h[n // 2 - POLE_WINDOW : n // 2 + POLE_WINDOW + 1]
        if near_zero.max() > POLE_DENSITY_TOL:
            return math.inf
    k = liberation_gradient_k(h, params)
    return float(np.sum(k * k * 2.0 * h) * (2.0 * np.pi / n))


@dataclass(frozen=True)
class FisherProfile:
    """phi*(t) sampled along the flow; times strictly positive."""

    times: np.ndarray
    phi_star: np.ndarray
    divergent_at_zero: bool = False

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        phi = np.asarray(self.phi_star, dtype=float)
        if times.shape != phi.shape or times.ndim != 1:
            raise ValueError("times and phi_star must be matching 1-d arrays")
        if np.any(times <= 0.0):
            raise ValueError("profile times must be positive")
        if np.any(phi < -1e-12):
            raise ValueError("phi* must be nonnegative")
        times.flags.writeable = False
        phi.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "phi_star", phi)

    def tail_is_nonincreasing(self, slack: float = 1e-9) -> bool:
        """Monotone decay over the last quartile of samples."""
        q = max(2, len(self.phi_star) // 4)
        tail = self.phi_star[-q:]
        return bool(np.all(np.diff(tail) <= slack * (1.0 + np.abs(tail[:-1]))))


def fisher_profile(
    mu0: CircleMeasure,
    params: TraceParams = HALF_TRACE,
    times=None,
    probe_zero: bool = False,
) -> FisherProfile:
    """Sample phi*(t) along the liberation flow started at mu0."""
    if times is None:
        times = np.geomspace(0.05, 4.0, 24)
    times = np.sort(np.asarray(times, dtype=float))
    flow = make_flow(mu0, params)
    phi = np.array([fisher_info(flow.measure_at(t), params) for t in times])
    divergent = False
    if probe_zero:
        divergent, _ = _divergence_probe(_phi_evaluator(mu0, params, flow))
    return FisherProfile(times, phi, divergent)


def _phi_evaluator(mu0, params, flow, cache: Optional[Dict[float, float]] = None):
    memo = cache if cache is not None else {}

    def phi(t: float) -> float:
        if t not in memo:
            # an atom at time t -- declared by the measure or detected during
            # boundary recovery -- means infinite Fisher information there
            try:
                measure = mu0 if t == 0.0 else flow.measure_at(t)
                memo[t] = fisher_info(measure, params)
            except (AtomPresent, DivergenceDetected):
                memo[t] = math.inf
        return memo[t]

    return phi


def _divergence_probe(phi, n_samples: int = 7):
    """Fit log phi* against log t on the probe window.

    Fires (non-integrable at 0) when the fitted power law has exponent at
    or below the probe slope with near-perfect fit quality.  A slope
    threshold slightly above -1 keeps the borderline 1/t profile of atomic
    initial data on the divergent side of finite-precision fits.
    """
    ts = np.geomspace(PROBE_T[0], PROBE_T[1], n_samples)
    vals = np.array([phi(t) for t in ts])
    if np.any(np.isinf(vals)):
        return True, {"slope": -math.inf, "r_squared": 1.0}
    if np.any(vals <= 1e-10):
        return False, {"slope": 0.0, "r_squared": 0.0}
    x = np.log(ts)
    y = np.log(vals)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 0.0
    return bool(slope <= PROBE_SLOPE and r2 > PROBE_R2), {
        "slope": float(slope),
        "r_squared": r2,
    }


def _adaptive_simpson(f, a, b, eps, fa, fm, fb, whole, depth):
    m = 0.5 * (a + b)
    lm, rm = 0.5 * (a + m), 0.5 * (m + b)
    flm, frm = f(lm), f(rm)
    left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    diff = left + right - whole
    if depth <= 0 or abs(diff) <= 15.0 * eps:
        return left + right + diff / 15.0, abs(diff) / 15.0
    lv, le = _adaptive_simpson(f, a, m, eps / 2.0, fa, flm, fm, left, depth - 1)
    rv, re = _adaptive_simpson(f, m, b, eps / 2.0, fm, frm, fb, right, depth - 1)
    return lv + rv, le + re


def _integrate(f, a, b, eps, depth=14):
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    return _adaptive_simpson(f, a, b, eps, fa, fm, fb, whole, depth)


def i_star(
    mu0: CircleMeasure,
    params: TraceParams = HALF_TRACE,
    t_max: float = 8.0,
    tol: float = 1e-6,
    return_details: bool = False,
):
    """Free mutual information i* = 1/2 int_0^infty phi*(t) dt.

    phi* is sampled along the Loewner flow and integrated by adaptive
    Simpson on seeded knots; a power-law probe near t = 0 classifies
    non-integrable profiles as +inf.  Integration stops at t_max once
    phi*(t_max) < tol (t_max doubles, up to 64, if not); the estimated
    exponential tail goes into the error bar, not the value.
    """
    flow = make_flow(mu0, params)
    cache: Dict[float, float] = {}
    phi = _phi_evaluator(mu0, params, flow, cache)

    divergent, fit = _divergence_probe(phi)
    if divergent:
        details = {"value": math.inf, "error": 0.0, "probe": fit, "samples": len(cache)}
        return (math.inf, details) if return_details else math.inf

    while phi(t_max) >= tol and t_max < 64.0:
        t_max *= 2.0
    if phi(t_max) >= tol:
        raise LiblabError(f"phi* has not decayed below {tol:g} by t = {t_max:g}")

    if mu0.has_atoms:
        # probe says integrable but phi(0) is not evaluable through the
        # density formula; refuse to guess
        raise LiblabError("atomic initial data with no detected divergence")

    knots = [k for k in (0.0, 0.01, 0.05, 0.1, 0.2, 0.4, 0.8, 1.6, 3.2) if k < t_max]
    knots.append(t_max)
    total = 0.0
    err = 0.0
    for lo, hi in zip(knots[:-1], knots[1:]):
        v, e = _integrate(phi, lo, hi, tol * (hi - lo) / t_max)
        total += v
        err += e

    # exponential tail bound from the last decade of samples
    t_ref = 0.5 * t_max
    rate = math.log(max(phi(t_ref), 1e-300) / max(phi(t_max), 1e-300)) / (t_max - t_ref)
    tail = phi(t_max) / rate if rate > 0.1 else phi(t_max) * 10.0
    err += tail

    value = 0.5 * total
    details = {
        "value": value,
        "error": 0.5 * err,
        "probe": fit,
        "samples": len(cache),
        "t_max": t_max,
    }
    return (value, details) if return_details else value


# ---------------------------------------------------------------------------
# orbital entropy
# ---------------------------------------------------------------------------


def log_energy_fourier(density: np.ndarray, tiny: float = 1e-12) -> float:
    """int int log|e^{i a} - e^{i b}| dmu dmu = - sum_n m_n^2 / n.

    m_n are the cosine moments of the density; the sum stops after eight
    consecutive negligible terms (sparse spectra keep later modes).
    """
    m = cos_coefficients(np.asarray(density, dtype=float))
    terms = m[1:] ** 2 / np.arange(1, len(m))
    run = 0
    stop = len(terms)
    for i, small in enumerate(terms < tiny):
        run = run + 1 if small else 0
        if run >= 8:
            stop = i + 1
            break
    return -float(terms[:stop].sum())


def log_energy_quadrature(density: np.ndarray, s: float = 1.0 - 1e-4) -> float:
    """Same double integral by s-regularized direct quadrature.

    The kernel log|1 - s e^{i(a-b)}| is evaluated on every grid shift via
    one circular autocorrelation (FFT).  The constant mode of the discrete
    regularized kernel carries an exactly computable artifact
    mass^2 log(1 - s^n)/n, which is removed.
    """
    h = np.asarray(density, dtype=float)
    n = len(h)
    shifts = 2.0 * np.pi * np.arange(n) / n
    kernel = np.log(np.abs(1.0 - s * np.exp(1j * shifts)))
    corr = np.fft.ifft(np.abs(np.fft.fft(h)) ** 2).real
    val = (2.0 * np.pi / n) ** 2 * float(kernel @ corr)
    mass = float(h.sum()) * (2.0 * np.pi / n)
    val -= mass * mass * math.log1p(-(s**n)) / n
    return val


def _trimmed_cos_eval(density: np.ndarray):
    """Band-limited evaluator theta -> h(theta) from trimmed cosine moments."""
    m = cos_coefficients(np.asarray(density, dtype=float))
    scale = np.abs(m).max()
    keep = np.nonzero(np.abs(m) > 1e-16 * max(scale, 1e-300))[0]
    m = m[: (keep[-1] + 1)] if len(keep) else m[:1]
    nvec = np.arange(1, len(m))

    def evaluate(theta):
        theta = np.asarray(theta, dtype=float)
        vals = m[0] + 2.0 * (np.cos(np.outer(theta, nvec)) @ m[1:])
        return vals / (2.0 * np.pi)

    return evaluate


def _simpson(f, a, b, n_intervals=2000):
    x = np.linspace(a, b, n_intervals + 1)
    y = f(x)
    h = (b - a) / n_intervals
    return h / 3.0 * (y[0] + y[-1] + 4.0 * y[1:-1:2].sum() + 2.0 * y[2:-1:2].sum())


def log_kernel_integral(density: np.ndarray, angle: float, window: float = 0.5) -> float:
    """int log|e^{i theta} - e^{i angle}| h(theta) dtheta, angle in {0, pi}.

    The logarithmic singularity at the target angle is tamed by the
    substitution theta = angle -+ u^2; both pieces use composite Simpson on
    the band-limited interpolant of h.
    """
    ev = _trimmed_cos_eval(density)
    root_w = math.sqrt(window)
    if angle == 0.0:
        kernel = lambda th: np.log(2.0 * np.sin(0.5 * th))  # noqa: E731
        to_theta = lambda u: u**2  # noqa: E731
        outer_lo, outer_hi = window, math.pi
    elif angle == math.pi:
        kernel = lambda th: np.log(2.0 * np.cos(0.5 * th))  # noqa: E731
        to_theta = lambda u: math.pi - u**2  # noqa: E731
        outer_lo, outer_hi = 0.0, math.pi - window
    else:
        raise ValueError("singular kernel integral only supports angles 0 and pi")

    def inner_integrand(u):
        # the u = 0 endpoint sits on the log singularity; the u-weight kills it
        out = np.zeros_like(u)
        pos = u > 0.0
        th = to_theta(u[pos])
        out[pos] = ev(th) * kernel(th) * 2.0 * u[pos]
        return out

    outer = _simpson(lambda th: ev(th) * kernel(th), outer_lo, outer_hi)
    inner = _simpson(inner_integrand, 0.0, root_w)
    return float(2.0 * (outer + inner))


def _braced(measure: CircleMeasure, params: TraceParams) -> float:
    """The braced log-energy expression entering chi_orb (before the 2x and Z)."""
    dens = measure.density
    dd = log_energy_fourier(dens)
    ddq = log_energy_quadrature(dens)
    if abs(dd - ddq) > 1e-4:
        raise LiblabError(
            f"log-energy routes disagree: fourier {dd:.8g} vs quadrature {ddq:.8g}"
        )
    out = dd
    if params.a > 0.0:
        out += params.a * log_kernel_integral(dens, math.pi)
    if params.b > 0.0:
        out += params.b * log_kernel_integral(dens, 0.0)
    return out


@lru_cache(maxsize=64)
def calibrate_Z(params: TraceParams) -> float:
    """Additive constant making chi_orb vanish on the freely independent pair."""
    free = free_projections(params, DEFAULT_GRID)
    return -2.0 * _braced(free, params)


def chi_orb(
    mu0: CircleMeasure, params: TraceParams = HALF_TRACE, generic: bool = True
) -> float:
    """Orbital entropy of the projection pair encoded by mu0.

    -inf when the pair is not in generic position or the symmetrized
    measure carries atoms; otherwise the calibrated log-energy functional.
    """
    if not generic or mu0.has_atoms:
        return -math.inf
    return float(2.0 * _braced(mu0, params) + calibrate_Z(params))


def gradient_l1_diagnostic(
    measure: CircleMeasure, params: TraceParams = HALF_TRACE
) -> Dict[str, float]:
    """Quadrature value of int |k| d(2 hat-mu) with a grid-refinement flag.

    Integrability of the gradient is an assumption of the theory with no
    constructive test; this reports the number and whether halving the grid
    moves it, without claiming a decision procedure.
    """
    def value(h):
        k = liberation_gradient_k(h, params)
        return float(np.sum(np.abs(k) * 2.0 * h) * (2.0 * np.pi / len(h)))

    fine = value(measure.density)
    coarse = value(measure.density[::2])
    return {
        "value": fine,
        "coarse_value": coarse,
        "converged": bool(abs(fine - coarse) <= max(1e-6, 1e-3 * abs(fine))),
    }


@dataclass(frozen=True)
class IdentityReport:
    """Two independently computed sides of i* = -chi_orb."""

    i_star: float
    chi_orb: float
    gap: Optional[float]
    infinite_match: bool
    i_star_error: float = 0.0

    @property
    def holds(self) -> bool:
        return self.infinite_match or (self.gap is not None and self.gap < 2e-3)


def verify_identity(
    mu0: CircleMeasure,
    params: TraceParams = HALF_TRACE,
    t_max: float = 8.0,
    tol: float = 1e-6,
) -> IdentityReport:
    """Compute i* and chi_orb independently and report the gap."""
    if not params.is_half_trace:
        raise SpecValidationError(
            "the identity is only asserted for tau_p = tau_q = 1/2"
        )
    value, details = i_star(mu0, params, t_max=t_max, tol=tol, return_details=True)
    chi = chi_orb(mu0, params)
    infinite = math.isinf(value) and math.isinf(chi)
    gap = None
    if math.isfinite(value) and math.isfinite(chi):
        gap = abs(value + chi)
    return IdentityReport(value, chi, gap, infinite, details.get("error", 0.0))
