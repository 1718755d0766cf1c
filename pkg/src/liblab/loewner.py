"""Radial Loewner flow of the liberation process.

The circle measures hat-mu_t of X_t = Q u_t P u_t^* Q evolve by a radial
Loewner equation whose driving measure is 2 hat-mu_t + a delta_pi + b delta_0.
The characteristic maps g_t (from the shrinking domain D_t onto the disk)
satisfy

    d/dt g_t(zeta) = g_t(zeta) [ 2 L(t, g_t(zeta)) + A(g_t(zeta)) ],
    A(zeta) = a (1-zeta)/(1+zeta) + b (1+zeta)/(1-zeta),

and H(t, .) = (L + A) L is conserved along them: H(t, g_t(zeta)) = H(0, zeta).
Writing S = 2L + A, conservation turns the characteristic ODE into the
self-contained form  g' = g sqrt(A(g)^2 + 4 H(0, seed))  with the square-root
branch tracked by continuity (S(0) = 2 L(0, seed) + A(seed) fixes it at the
start).

Two engines are provided.

* ``HalfTraceFlow`` (a = b = 0): the flow integrates in closed form,
  g_t(zeta) = zeta exp(2 t L(0, zeta)), so the inverse f_t = g_t^{-1} is
  obtained by a damped Newton iteration on  w exp(2 t L_0(w)) = zeta  and
  L(t, zeta) = L(0, f_t(zeta)).

* ``GeneralFlow``: f_t(zeta) on an evaluation ring is found by shooting --
  Newton in the seed w on the map w -> g_t(w), where each evaluation
  integrates the characteristic ODE (adaptive RK4) together with its
  variational equation for the Jacobian dg_t/dw.  The recovered boundary
  values L(t, .) = (S - A)/2 on the rings 1 - 1e-3, 1 - 1e-4 feed the
  Poisson/Richardson density recovery.

Both engines expose ``measure_at`` / ``state_at``; time-slice evaluators
(``slice_at``) provide L and H fields for the transform layer.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Dict, Optional

import numpy as np

from .errors import CharacteristicExit, LiblabError, NewtonDivergence
from .measures import (
    CircleMeasure,
    TraceParams,
    HALF_TRACE,
    circle_grid,
)
from .transforms import (
    BOUNDARY_EPS,
    HerglotzField,
    ab_kernel,
    boundary_density,
    d_ab_kernel,
    sqrt_z2_minus_z,
    szego_to_disk,
)

NEWTON_TOL = 1e-11
NEWTON_MAX_ITER = 100
LADDER_STEP = 0.25
# targets closer than this to the poles of A at +-1 are not shot at all;
# their L values are interpolated from resolved neighbors on the ring
POLE_WINDOW = 6.5e-3


def _cap_into_disk(guess, zeta):
    # Schwarz: |f_t(zeta)| <= |zeta|, so no seed should start outside that radius
    r = np.abs(guess)
    cap = np.minimum(np.abs(zeta), 1.0 - 1e-9)
    return guess * np.where(r > cap, cap / np.maximum(r, 1e-300), 1.0)


def _repair_ring(w, zeta, resolve, diagnostics):
    """Fix isolated wrong-sheet roots on a ring of targets.

    The preimage of a circle under f_t is a closed curve, so a converged root
    that leaps away from both neighbors is suspect: g_t has many inverse
    branches and Newton from a poor seed can land on one outside the range of
    f_t with a perfectly small residual.  Any point flanking an outlier gap is
    re-solved seeded from its nearest trusted neighbor and replaced only when
    the new root lies strictly closer to that neighbor; genuinely steep spots
    re-converge to the original root and are left alone.
    """
    n = len(w)
    for _ in range(3):
        gaps = np.abs(np.diff(w, append=w[:1]))
        med = max(float(np.median(gaps)), 1e-13)
        big = np.nonzero(gaps > 25.0 * med)[0]
        if len(big) == 0:
            break
        sus = np.zeros(n, dtype=bool)
        sus[big] = True
        sus[(big + 1) % n] = True
        good = np.nonzero(~sus)[0]
        if len(good) == 0:
            break
        changed = 0
        for j in np.nonzero(sus)[0]:
            dist = np.abs(good - j)
            k = int(good[np.argmin(np.minimum(dist, n - dist))])
            wj = resolve(zeta[j : j + 1], w[k : k + 1].copy())
            if wj is not None and abs(wj[0] - w[k]) < abs(w[j] - w[k]) - 1e-15:
                w[j] = wj[0]
                changed += 1
        diagnostics["sheet_repairs"] = diagnostics.get("sheet_repairs", 0) + changed
        if changed == 0:
            break
    return w


@dataclass
class FlowState:
    """Snapshot of the flow at one time: the measure plus solver telemetry.

    ``char_cache`` maps evaluation targets to characteristic preimages
    (zeta -> f_t(zeta)) so g_t(f_t(zeta)) = zeta can be re-verified; the
    diagnostics counters end up in CLI provenance blocks.
    """

    t: float
    measure: CircleMeasure
    params: TraceParams
    char_cache: Dict[str, np.ndarray] = dc_field(default_factory=dict)
    diagnostics: Dict[str, float] = dc_field(default_factory=dict)


class _FlowSlice:
    """L / H evaluator for a fixed time of a flow (duck-typed like HerglotzField)."""

    def __init__(self, flow, t: float, table=None):
        self.flow = flow
        self.t = t
        self.params = flow.params
        self.measure = flow.initial  # grid bookkeeping only
        self.table = table or {}  # precomputed L values on known rings

    def L(self, zeta):
        zeta = np.asarray(zeta, dtype=complex)
        key = (zeta.size, complex(zeta.flat[0]))
        if key in self.table:
            return self.table[key]
        return self.flow.L(self.t, zeta)

    def H(self, zeta):
        return self.flow.H(self.t, zeta)


def subordinate_f(field0: HerglotzField, t: float, zeta, seed=None):
    """Subordination map f_t(zeta) for the half-trace flow of ``field0``.

    Solves w exp(2 t L_0(w)) = zeta by damped Newton; ``seed`` overrides the
    default initial guess (continuation from e^{-t} zeta).
    """
    flow = HalfTraceFlow(field0.measure, field0.params)
    zeta = np.asarray(zeta, dtype=complex)
    scalar = zeta.ndim == 0
    w = flow.f(t, np.atleast_1d(zeta), seed=None if seed is None else np.atleast_1d(seed))
    return w[0] if scalar else w


class HalfTraceFlow:
    """Loewner flow with a = b = 0 via the exact characteristic formula."""

    def __init__(self, mu0: CircleMeasure, params: TraceParams = HALF_TRACE):
        if not params.is_half_trace:
            raise LiblabError("HalfTraceFlow requires tau_p = tau_q = 1/2 (a = b = 0)")
        self.initial = mu0
        self.params = params
        self.field0 = HerglotzField(mu0, params)
        self.diagnostics = {
            "newton_iterations": 0,
            "max_residual": 0.0,
            "branch_flips": 0,
            "dropped_seeds": 0,
        }
        self._warm: Dict[tuple, np.ndarray] = {}

    # -- forward / inverse characteristic maps --------------------------------

    def g(self, t: float, w):
        """Forward map g_t(w) = w exp(2 t L_0(w)) on its domain D_t."""
        w = np.asarray(w, dtype=complex)
        return w * np.exp(2.0 * t * self.field0.L(w))

    def f(self, t: float, zeta, seed=None):
        """Inverse map f_t = g_t^{-1}, defined on all of the unit disk."""
        zeta = np.asarray(zeta, dtype=complex)
        if t == 0.0:
            return zeta.copy()
        key = (zeta.size, complex(zeta.flat[0]))
        w0 = seed if seed is not None else self._initial_guess(t, zeta, key)
        w, ok = self._newton(t, zeta, np.asarray(w0, dtype=complex).copy())
        if not ok.all():
            w, ok = self._continuation_sweep(t, zeta, w, ok)
        if not ok.all():
            j = int(np.argmin(ok))
            raise NewtonDivergence(
                f"subordination Newton failed at zeta={zeta.ravel()[j]:.6g}, t={t:.6g}"
            )
        self.diagnostics["max_residual"] = max(
            self.diagnostics["max_residual"],
            float(np.abs(w * np.exp(2.0 * t * self.field0.L(w)) - zeta).max()),
        )
        if seed is None:
            self._warm[(t, key)] = w
        return w

    def _nearest_warm(self, key, t):
        best = None
        for (tk, kk), wk in self._warm.items():
            if kk == key and (best is None or abs(tk - t) < abs(best[0] - t)):
                best = (tk, wk)
        return best

    def _initial_guess(self, t, zeta, key):
        """Seed from the nearest solved time, laddering in steps of 0.25.

        Newton on w e^{2tL} = zeta converges to *a* root from almost anywhere,
        but only stays on the branch that is the actual range of f_t when the
        seed is already close; continuation in t guarantees that.  Each rung
        of the ladder caches itself, so repeated evaluations (entropy profiles,
        quadrature in t) amortize the climb.
        """
        best = self._nearest_warm(key, t)
        if best is None or abs(best[0] - t) > LADDER_STEP:
            base = best[0] if best is not None and best[0] < t else 0.0
            for s in np.arange(base + LADDER_STEP, t, LADDER_STEP):
                self.f(float(s), zeta)
            best = self._nearest_warm(key, t)
        if best is not None and abs(best[0] - t) <= LADDER_STEP + 1e-12:
            tk, wk = best
            guess = wk * np.exp(-2.0 * (t - tk) * self.field0.L(wk))
            return _cap_into_disk(guess, zeta)
        # cold start, only reachable for small t where one exact inverse
        # characteristic step from t = 0 is already accurate
        w0 = zeta * np.exp(-2.0 * t * self.field0.L(zeta * 0.95))
        return _cap_into_disk(w0, zeta)

    def _newton(self, t, zeta, w):
        ok = np.zeros(w.shape, dtype=bool)
        for it in range(NEWTON_MAX_ITER):
            lval = self.field0.L(w)
            expf = np.exp(2.0 * t * lval)
            resid = w * expf - zeta
            ok = np.abs(resid) < NEWTON_TOL
            self.diagnostics["newton_iterations"] += 1
            if ok.all():
                break
            deriv = expf * (1.0 + 2.0 * t * w * self.field0.dL(w))
            deriv = np.where(np.abs(deriv) < 1e-300, 1e-300, deriv)
            step = resid / deriv
            wn = np.where(ok, w, w - step)
            # damp any update that tries to leave the disk
            factor = np.ones_like(w.real)
            for _ in range(60):
                bad = (np.abs(wn) >= 1.0 - 1e-12) & ~ok
                if not bad.any():
                    break
                factor = np.where(bad, 0.5 * factor, factor)
                wn = np.where(bad, w - factor * step, wn)
            w = wn
        return w, ok

    def _continuation_sweep(self, t, zeta, w, ok):
        """Angular continuation fallback: reseed failures from converged neighbors."""
        idx = np.arange(len(zeta))
        good = idx[ok]
        if len(good) == 0:
            # ladder in time: solve at t/2 first and use it as the seed
            half = self.f(t / 2.0, zeta)
            w = half * np.exp(-2.0 * (t / 2.0) * self.field0.L(half))
            return self._newton(t, zeta, w)
        for j in idx[~ok]:
            k = good[np.argmin(np.abs(good - j))]
            wj, okj = self._newton(t, zeta[j : j + 1], w[k : k + 1].copy())
            w[j] = wj[0]
            ok[j] = okj[0]
            if okj[0]:
                good = np.append(good, j)
            else:
                self.diagnostics["dropped_seeds"] += 1
        return w, ok

    # -- field evaluation ------------------------------------------------------

    def L(self, t: float, zeta):
        """L(t, zeta) = L(0, f_t(zeta))."""
        return self.field0.L(self.f(t, zeta))

    def H(self, t: float, zeta):
        """Conserved H(t, zeta) = H(0, f_t(zeta))."""
        return self.field0.H(self.f(t, zeta))

    def G(self, t: float, z):
        """Full Cauchy transform G(t, z) of nu_t, via the subordinated L field.

        G = -L(t, zeta(z)) / sqrt(z^2 - z) + w_0/z + w_1/(z - 1) with the
        generic atom weights; exact to Newton tolerance, no density recovery.
        """
        z = np.asarray(z, dtype=complex)
        zeta = szego_to_disk(z)
        s = sqrt_z2_minus_z(z)
        g_val = -self.L(t, zeta) / s
        w0 = self.params.atom_weight_zero
        w1 = self.params.atom_weight_one
        if w0:
            g_val = g_val + w0 / z
        if w1:
            g_val = g_val + w1 / (z - 1.0)
        return g_val

    def slice_at(self, t: float) -> _FlowSlice:
        return _FlowSlice(self, t)

    def measure_at(self, t: float) -> CircleMeasure:
        return self.state_at(t).measure

    def state_at(self, t: float) -> FlowState:
        if t < 0:
            raise LiblabError("flow time must be nonnegative")
        if t == 0.0:
            return FlowState(0.0, self.initial, self.params, {}, dict(self.diagnostics))
        n = self.initial.grid_size
        theta = circle_grid(n)
        ring = np.exp(1j * theta)
        cache = {}
        w_prev = None
        targets_prev = None
        for e in BOUNDARY_EPS:
            targets = (1.0 - e) * ring
            if w_prev is None:
                w = self.f(t, targets)
            else:
                # radial continuation: f_t is univalent on the disk, so the
                # deeper ring's preimages follow from the previous ring by one
                # predictor step along dw = d zeta / g'(w)
                lv = self.field0.L(w_prev)
                gp = np.exp(2.0 * t * lv) * (
                    1.0 + 2.0 * t * w_prev * self.field0.dL(w_prev)
                )
                gp = np.where(np.abs(gp) < 1e-300, 1e-300, gp)
                seed = w_prev + (targets - targets_prev) / gp
                w = self.f(t, targets, seed=_cap_into_disk(seed, targets))

            def resolve(tz, seed):
                wj, okj = self._newton(t, tz, seed)
                return wj if bool(okj[0]) else None

            w = _repair_ring(w, targets, resolve, self.diagnostics)
            self._warm[(t, (targets.size, complex(targets.flat[0])))] = w
            cache[f"targets_{e:g}"] = targets
            cache[f"preimages_{e:g}"] = w
            w_prev, targets_prev = w, targets
        dens = boundary_density(self.slice_at(t), grid_size=n)
        measure = CircleMeasure(0.0, 0.0, dens)
        return FlowState(t, measure, self.params, cache, dict(self.diagnostics))


def evolve_half_trace(mu0: CircleMeasure, t: float, params: TraceParams = HALF_TRACE):
    """Evolve the circle measure by the tau = 1/2 liberation flow to time t."""
    return HalfTraceFlow(mu0, params).measure_at(t)


# ---------------------------------------------------------------------------
# general trace parameters: characteristic shooting
# ---------------------------------------------------------------------------


class GeneralFlow:
    """Loewner flow for arbitrary (tau_p, tau_q) via characteristic shooting.

    Forward characteristics g' = g S(g; c), c = H(0, seed), are integrated by
    RK4 with step halving (base step ``ode_dt``, local error below
    ``ode_tol``); the square-root branch of S = sqrt(A(g)^2 + 4c) follows the
    value carried from the previous step.  The inverse map f_t on a ring is
    obtained by Newton in the seed, with the Jacobian dg_t/dw integrated
    alongside (the conserved c = H(0, w) contributes through H'(0, w)).
    Characteristics are allowed to continue slightly outside the closed disk
    (|g| < 2 soft wall) so Newton can pull overshooting seeds back in; a
    characteristic pushed onto the poles of A raises CharacteristicExit.
    """

    def __init__(
        self,
        mu0: CircleMeasure,
        params: TraceParams,
        ode_dt: float = 1e-2,
        ode_tol: float = 1e-9,
    ):
        self.initial = mu0
        self.params = params
        self.field0 = HerglotzField(mu0, params)
        self.ode_dt = ode_dt
        self.ode_tol = ode_tol
        self.diagnostics = {
            "newton_iterations": 0,
            "max_residual": 0.0,
            "branch_flips": 0,
            "dropped_seeds": 0,
            "ode_steps": 0,
        }
        self._warm: Dict[tuple, np.ndarray] = {}

    # -- characteristic integration -------------------------------------------

    def _rhs(self, g, s_ref, c):
        a_val = ab_kernel(g, self.params)
        s = np.sqrt(a_val * a_val + 4.0 * c)
        flip = np.abs(s - s_ref) > np.abs(s + s_ref)
        s = np.where(flip, -s, s)
        return g * s, s, int(flip.sum())

    def _rk4_step(self, g, d, h, s_ref, c, cp, want_jac):
        def deriv(gv, dv):
            a_val = ab_kernel(gv, self.params)
            s = np.sqrt(a_val * a_val + 4.0 * c)
            s = np.where(np.abs(s - s_ref) > np.abs(s + s_ref), -s, s)
            dg = gv * s
            if not want_jac:
                return dg, None
            s_safe = np.where(np.abs(s) < 1e-14, 1e-14, s)
            ds_dg = a_val * d_ab_kernel(gv, self.params) / s_safe
            dd = (s + gv * ds_dg) * dv + gv * (2.0 / s_safe) * cp
            return dg, dd

        k1g, k1d = deriv(g, d)
        k2g, k2d = deriv(g + 0.5 * h * k1g, None if not want_jac else d + 0.5 * h * k1d)
        k3g, k3d = deriv(g + 0.5 * h * k2g, None if not want_jac else d + 0.5 * h * k2d)
        k4g, k4d = deriv(g + h * k3g, None if not want_jac else d + h * k3d)
        gn = g + (h / 6.0) * (k1g + 2.0 * k2g + 2.0 * k3g + k4g)
        dn = None
        if want_jac:
            dn = d + (h / 6.0) * (k1d + 2.0 * k2d + 2.0 * k3d + k4d)
        return gn, dn

    def integrate(self, w, t: float, want_jac: bool = True):
        """Integrate characteristics from seeds w over [0, t].

        Returns (g_t(w), dg_t/dw, S_end); the Jacobian is None when not
        requested.  Every trajectory carries its own clock and step size, so
        one stiff path near a pole of A cannot stall the batch; a trajectory
        whose step collapses or that runs into a pole is frozen and reported
        as NaN for the caller to retry or reject.
        """
        w = np.asarray(w, dtype=complex)
        shape = w.shape

        def san(x):
            # frozen points ride along as harmless placeholders; their
            # stepped values are discarded by the accept mask
            return np.where(np.isfinite(x), x, 0.0 + 0.0j)

        g = w.ravel().copy()
        npts = g.size
        d = np.ones_like(g) if want_jac else None
        alive = np.isfinite(g)
        g0 = san(g)
        c = self.field0.H(g0)
        cp = self.field0.dH(g0) if want_jac else None
        s_now = 2.0 * self.field0.L(g0) + ab_kernel(g0, self.params)
        tau = np.zeros(npts)
        h = np.full(npts, min(self.ode_dt, t) if t > 0 else 0.0)
        check_pole = self.params.a > 0 or self.params.b > 0
        guard = 0

        def freeze(idx):
            alive[idx] = False
            g[idx] = np.nan + 0j
            if want_jac:
                d[idx] = np.nan + 0j
            self.diagnostics["frozen_characteristics"] = self.diagnostics.get(
                "frozen_characteristics", 0
            ) + int(idx.size)

        while True:
            live = np.nonzero(alive & (tau < t - 1e-15))[0]
            if live.size == 0:
                break
            guard += 1
            if guard > 200000:
                raise CharacteristicExit("characteristic integration stalled")
            hl = np.minimum(h[live], t - tau[live])
            gl = san(g[live])
            dl = san(d[live]) if want_jac else None
            sl, cl = s_now[live], c[live]
            cpl = cp[live] if want_jac else None
            g1, _ = self._rk4_step(gl, dl, hl, sl, cl, cpl, want_jac)
            gm, dm = self._rk4_step(gl, dl, 0.5 * hl, sl, cl, cpl, want_jac)
            g2, d2 = self._rk4_step(
                san(gm), san(dm) if want_jac else None, 0.5 * hl, sl, cl, cpl, want_jac
            )
            err = np.abs(g1 - g2)
            err = np.where(np.isfinite(err), err, np.inf)
            acc = err <= self.ode_tol
            ai, ri = live[acc], live[~acc]
            h[ri] *= 0.5
            coll = h[ri] < 1e-9
            if coll.any():
                freeze(ri[coll])
            if ai.size == 0:
                continue
            g2a = g2[acc]
            g[ai] = g2a
            if want_jac:
                d[ai] = d2[acc]
            tau[ai] += hl[acc]
            self.diagnostics["ode_steps"] += int(ai.size)
            grow = err[acc] < self.ode_tol / 64.0
            h[ai] = np.where(grow, np.minimum(2.0 * h[ai], self.ode_dt), h[ai])
            # refresh the branch reference from the accepted states
            _, s_new, flips = self._rhs(san(g2a), sl[acc], cl[acc])
            self.diagnostics["branch_flips"] += flips
            s_now[ai] = s_new
            # soft wall: allow moderate excursions outside the disk but not
            # up to the poles of A at +-1
            mag = np.abs(g2a)
            over = np.isfinite(mag) & (mag > 2.0)
            if over.any():
                g[ai[over]] *= 2.0 / mag[over]
            dead = ~np.isfinite(g2a)
            if check_pole:
                dead |= np.minimum(np.abs(g2a - 1.0), np.abs(g2a + 1.0)) < 1e-9
            if dead.any():
                freeze(ai[dead])
        d_out = d.reshape(shape) if want_jac else None
        return g.reshape(shape), d_out, s_now.reshape(shape)

    # -- inverse map by shooting ----------------------------------------------

    def _stiff(self, flat_z):
        """Targets inside the pole window; shooting there is hopeless."""
        if self.params.a == 0.0 and self.params.b == 0.0:
            return np.zeros(flat_z.shape, dtype=bool)
        return (
            np.minimum(np.abs(flat_z - 1.0), np.abs(flat_z + 1.0)) < POLE_WINDOW
        )

    def _newton_batch(self, t, zeta, w0, max_iter=NEWTON_MAX_ITER):
        zeta = np.asarray(zeta, dtype=complex)
        w = np.asarray(w0, dtype=complex).ravel().copy()
        flat_z = zeta.ravel()
        lost = ~np.isfinite(w)
        if lost.any():
            w[lost] = 0.9 * flat_z[lost]
        ok = np.zeros(w.shape, dtype=bool)
        stiff = self._stiff(flat_z)
        w[stiff] = np.nan + 0j
        live = np.nonzero(~stiff)[0]  # indices still iterating
        for it in range(max_iter):
            if live.size == 0:
                break
            g, d, _ = self.integrate(w[live], t, want_jac=True)
            resid = g - flat_z[live]
            finite = np.isfinite(resid)
            resid = np.where(finite, resid, 1.0)
            conv = finite & (np.abs(resid) < 1e-10)
            self.diagnostics["newton_iterations"] += 1
            if conv.any():
                ok[live[conv]] = True
                self.diagnostics["max_residual"] = max(
                    self.diagnostics["max_residual"],
                    float(np.abs(resid[conv]).max()),
                )
                live = live[~conv]
                if live.size == 0:
                    break
                g, d = g[~conv], d[~conv]
                resid, finite = resid[~conv], finite[~conv]
            d = np.where(np.isfinite(d) & (np.abs(d) > 1e-300), d, 1e-300)
            step = resid / d
            # a frozen characteristic left no residual: pull that seed inward
            step = np.where(finite, step, 0.05 * w[live])
            # trust region on the step; keep iterates inside the disk
            mag = np.abs(step)
            step = np.where(mag > 0.1, 0.1 * step / np.maximum(mag, 1e-300), step)
            wn = w[live] - step
            factor = np.ones(live.size)
            for _ in range(60):
                bad = np.abs(wn) >= 1.0 - 1e-12
                if not bad.any():
                    break
                factor = np.where(bad, 0.5 * factor, factor)
                wn = np.where(bad, w[live] - factor * step, wn)
            w[live] = wn
        return w.reshape(zeta.shape), ok.reshape(zeta.shape)

    def _sweep(self, t, zeta, w, ok):
        """Angular continuation: retry failed points from converged neighbors."""
        flat_z = zeta.ravel()
        flat_w, flat_ok = w.ravel().copy(), ok.ravel().copy()
        idx = np.arange(flat_z.size)
        stiff = self._stiff(flat_z)
        for _ in range(4):
            fail = idx[~flat_ok & ~stiff]
            good = idx[flat_ok]
            if fail.size == 0 or good.size == 0:
                break
            pos = np.searchsorted(good, fail)
            lo = good[np.clip(pos - 1, 0, good.size - 1)]
            hi = good[np.clip(pos, 0, good.size - 1)]
            near = np.where(np.abs(fail - lo) <= np.abs(hi - fail), lo, hi)
            wj, okj = self._newton_batch(t, flat_z[fail], flat_w[near], max_iter=16)
            flat_w[fail[okj]] = wj[okj]
            flat_ok[fail[okj]] = True
            if okj.all():
                break
        return flat_w.reshape(w.shape), flat_ok.reshape(ok.shape)

    def _solve_ring(self, t, targets, seed=None, mirror=False, periodic=True):
        """Preimages of a full ring of targets, coarse-to-fine.

        A cold ring is solved on a sparse subring first; finer levels are
        seeded by periodic interpolation of the coarser preimage curve, which
        keeps Newton in its quadratic regime even where the targets crowd the
        poles of A.  Points that still fail come back as NaN.  With
        ``mirror=True`` the targets are assumed conjugation-symmetric (the
        density is even in theta, so preimages obey w(conj zeta) =
        conj w(zeta)) and only half the ring is solved.
        """
        targets = np.asarray(targets, dtype=complex)
        n = targets.size
        if mirror and n % 2 == 0:
            # grid runs theta = -pi .. pi - d, so conjugation pairs j <-> n-j;
            # solve theta in [-pi, 0] (indices 0 .. n/2) and reflect the rest
            m = n // 2
            half = self._solve_ring(
                t,
                targets[: m + 1],
                seed=None if seed is None else np.asarray(seed)[: m + 1],
                periodic=False,
            )
            w = np.empty(n, dtype=complex)
            w[: m + 1] = half
            w[m + 1 :] = np.conj(half[1:m][::-1])
            return w

        key = (n, complex(targets.flat[0]))
        if seed is None:
            best = None
            for (tk, kk), wk in self._warm.items():
                if kk == key and (best is None or abs(tk - t) < abs(best[0] - t)):
                    best = (tk, wk)
            if best is not None and abs(best[0] - t) <= 0.35:
                seed = _cap_into_disk(best[1], targets)

        def interp_curve(at, known, vals):
            period = n if periodic else None
            if period is None:
                re = np.interp(at, known, vals.real)
                im = np.interp(at, known, vals.imag)
            else:
                re = np.interp(at, known, vals.real, period=period)
                im = np.interp(at, known, vals.imag, period=period)
            return re + 1j * im

        if seed is None and n >= 256:
            w_sub = None
            levels = [s for s in (64, 16, 4, 1) if s < n]
            prev_idx = None
            for step in levels:
                idx = np.arange(0, n, step)
                sub = targets[idx]
                if w_sub is None:
                    s0 = self._initial_guess(t, sub)
                else:
                    s0 = _cap_into_disk(interp_curve(idx, prev_idx, w_sub), sub)
                w, ok = self._newton_batch(t, sub, s0, max_iter=24)
                if not ok.all():
                    w, ok = self._sweep(t, sub, w, ok)
                if not ok.all():
                    # keep the seed curve finite for the next level
                    bad = ~ok
                    if bad.all():
                        raise NewtonDivergence(
                            f"ring solve lost every target at t={t:.6g}"
                        )
                    w[bad] = interp_curve(idx[bad], idx[~bad], w[~bad])
                    if step == 1:
                        w[bad] = np.nan + 0j
                        self.diagnostics["dropped_seeds"] += int(
                            (bad & ~self._stiff(sub)).sum()
                        )
                # warm-start the same level of later solves at nearby times
                self._warm[(t, (sub.size, complex(sub.flat[0])))] = w
                w_sub, prev_idx = w, idx
            return w_sub
        w, ok = self._newton_batch(t, targets, seed, max_iter=24)
        if not ok.all():
            w, ok = self._sweep(t, targets, w, ok)
        if not ok.all():
            self.diagnostics["dropped_seeds"] += int((~ok & ~self._stiff(targets)).sum())
            w = np.where(ok, w, np.nan + 0j)
        self._warm[(t, key)] = w
        return w

    def f(self, t: float, zeta, seed=None, allow_dead: bool = False):
        zeta = np.asarray(zeta, dtype=complex)
        if t == 0.0:
            return zeta.copy()
        key = (zeta.size, complex(zeta.flat[0]))
        w0 = seed if seed is not None else self._initial_guess(t, zeta)
        # stragglers that cycle near the poles of A waste batch iterations;
        # cut the batch short and let neighbor continuation reseed them
        w, ok = self._newton_batch(t, zeta, w0, max_iter=24)
        if not ok.all():
            w, ok = self._sweep(t, zeta, w, ok)
        if not ok.all():
            self.diagnostics["dropped_seeds"] += int(
                (~ok & ~self._stiff(zeta.ravel())).sum()
            )
            if not allow_dead:
                j = int(np.argmin(ok))
                raise NewtonDivergence(
                    f"characteristic shooting failed at zeta={zeta.ravel()[j]:.6g}, "
                    f"t={t:.6g}"
                )
            w = np.where(ok, w, np.nan + 0j)
        if seed is None and ok.all():
            self._warm[(t, key)] = w
        return w

    def _initial_guess(self, t, zeta):
        key = (zeta.size, complex(zeta.flat[0]))
        best = None
        for (tk, kk), wk in self._warm.items():
            if kk == key and (best is None or abs(tk - t) < abs(best[0] - t)):
                best = (tk, wk)
        if best is not None and abs(best[0] - t) <= 0.35:
            return best[1]
        if t > 0.25:
            # ladder: solve the half-time problem first (recursion caches it);
            # points frozen at the half time restart from the cold rate below
            wh = self.f(t / 2.0, zeta, allow_dead=True)
            cold = zeta * 0.9
            wh = np.where(np.isfinite(wh), wh, cold)
            rate = 2.0 * self.field0.L(wh) + ab_kernel(wh, self.params)
            guess = wh * np.exp(-0.5 * t * rate)
        else:
            rate = 2.0 * self.field0.L(zeta * 0.9) + ab_kernel(zeta * 0.9, self.params)
            guess = zeta * np.exp(-t * rate)
        r = np.abs(guess)
        cap = np.minimum(np.abs(zeta), 1.0 - 1e-9)
        return guess * np.where(r > cap, cap / np.maximum(r, 1e-300), 1.0)

    # -- field evaluation ------------------------------------------------------

    def L(self, t: float, zeta):
        """L(t, zeta) = (S - A)/2 at the characteristic endpoint over f_t(zeta).

        Isolated targets whose characteristic cannot be shot (they graze a
        pole of A) are filled by interpolating the analytic L along the ring
        from their resolved neighbors; more than a handful of such points is
        an honest failure.
        """
        zeta = np.asarray(zeta, dtype=complex)
        if t == 0.0:
            return self.field0.L(zeta)
        w = self.f(t, zeta, allow_dead=True)
        return self._L_of(t, zeta, w)

    def H(self, t: float, zeta):
        """Conserved H along characteristics, pole-window points interpolated.

        H(t, zeta) = H(0, f_t(zeta)); near the poles of A the subordination
        map is not shot, but H stays bounded there (L vanishes at +-1 for
        atomless even measures), so ring values interpolate cleanly.
        """
        zeta = np.asarray(zeta, dtype=complex)
        if t == 0.0:
            return self.field0.H(zeta)
        w = self.f(t, zeta, allow_dead=True)
        bad = ~np.isfinite(w)
        hv = self.field0.H(np.where(bad, 0.0, w))
        if bad.any():
            if zeta.ndim != 1 or int(bad.sum()) > max(4, zeta.size // 128):
                raise NewtonDivergence(
                    f"{int(bad.sum())} subordination targets unresolved at t={t:.6g}"
                )
            pos = np.arange(zeta.size)
            goodpos = pos[~bad]
            hv = hv.copy()
            hv[bad] = np.interp(
                pos[bad], goodpos, hv[goodpos].real, period=zeta.size
            ) + 1j * np.interp(pos[bad], goodpos, hv[goodpos].imag, period=zeta.size)
        return hv

    def _L_of(self, t, zeta, w):
        """L values from already-solved preimages (NaN = unresolved target)."""
        bad = ~np.isfinite(w)
        g, _, s_end = self.integrate(np.where(bad, 0.0, w), t, want_jac=False)
        lv = 0.5 * (s_end - ab_kernel(g, self.params))
        if bad.any():
            if zeta.ndim != 1 or int(bad.sum()) > max(4, zeta.size // 128):
                raise NewtonDivergence(
                    f"{int(bad.sum())} subordination targets unresolved at t={t:.6g}"
                )
            pos = np.arange(zeta.size)
            goodpos = pos[~bad]
            lv = lv.copy()
            lv[bad] = np.interp(
                pos[bad], goodpos, lv[goodpos].real, period=zeta.size
            ) + 1j * np.interp(pos[bad], goodpos, lv[goodpos].imag, period=zeta.size)
            self.diagnostics["interpolated_targets"] = self.diagnostics.get(
                "interpolated_targets", 0
            ) + int(bad.sum())
        return lv

    def G(self, t: float, z):
        z = np.asarray(z, dtype=complex)
        zeta = szego_to_disk(z)
        s = sqrt_z2_minus_z(z)
        g_val = -self.L(t, zeta) / s
        w0 = self.params.atom_weight_zero
        w1 = self.params.atom_weight_one
        if w0:
            g_val = g_val + w0 / z
        if w1:
            g_val = g_val + w1 / (z - 1.0)
        return g_val

    def slice_at(self, t: float) -> _FlowSlice:
        return _FlowSlice(self, t)

    def measure_at(self, t: float) -> CircleMeasure:
        return self.state_at(t).measure

    def state_at(self, t: float) -> FlowState:
        if t < 0:
            raise LiblabError("flow time must be nonnegative")
        if t == 0.0:
            return FlowState(0.0, self.initial, self.params, {}, dict(self.diagnostics))
        n = self.initial.grid_size
        theta = circle_grid(n)
        ring = np.exp(1j * theta)
        cache = {}
        ltab = {}
        w_prev = None
        for e in BOUNDARY_EPS:
            targets = (1.0 - e) * ring
            seed = None if w_prev is None else _cap_into_disk(w_prev, targets)
            w = self._solve_ring(t, targets, seed=seed, mirror=True)

            def resolve(tz, seed):
                wj, okj = self._newton_batch(t, tz, seed, max_iter=40)
                return wj if bool(okj[0]) else None

            stiff = self._stiff(targets)
            dead = np.nonzero(~np.isfinite(w) & ~stiff)[0]
            goodpos = np.nonzero(np.isfinite(w))[0]
            for j in dead:
                k = goodpos[np.argmin(np.abs(goodpos - j))]
                wj = resolve(targets[j : j + 1], w[k : k + 1].copy())
                if wj is not None:
                    w[j] = wj[0]
            still = ~np.isfinite(w)
            if still.any():
                # unsolvable pole-grazing points: interpolate their L values
                # from resolved neighbors, and fill the preimage curve so
                # later warm starts of this ring stay finite
                w_for_l = w.copy()
                pos = np.arange(n)
                w[still] = np.interp(
                    pos[still], pos[~still], w[~still].real, period=n
                ) + 1j * np.interp(pos[still], pos[~still], w[~still].imag, period=n)
            else:
                w = _repair_ring(w, targets, resolve, self.diagnostics)
                w_for_l = w
            key = (targets.size, complex(targets.flat[0]))
            ltab[key] = self._L_of(t, targets, w_for_l)
            self._warm[(t, key)] = w
            cache[f"targets_{e:g}"] = targets
            cache[f"preimages_{e:g}"] = w
            w_prev = w
        dens = boundary_density(_FlowSlice(self, t, ltab), grid_size=n)
        measure = CircleMeasure(0.0, 0.0, dens)
        return FlowState(t, measure, self.params, cache, dict(self.diagnostics))


def evolve_general(
    mu0: CircleMeasure,
    params: TraceParams,
    t: float,
    ode_dt: float = 1e-2,
    ode_tol: float = 1e-9,
):
    """Evolve the circle measure by the liberation flow with general traces."""
    return GeneralFlow(mu0, params, ode_dt=ode_dt, ode_tol=ode_tol).measure_at(t)


def make_flow(mu0: CircleMeasure, params: TraceParams):
    """Pick the closed-form engine when a = b = 0, the shooting engine otherwise."""
    if params.is_half_trace:
        return HalfTraceFlow(mu0, params)
    return GeneralFlow(mu0, params)
