"""Compiled inner loops of the flow integrator.

Everything here operates on plain float64 arrays so the stepper can run
millions of diffusive steps without interpreter overhead.  The grid is
extended by two ghost nodes per side, filled from the declared boundary
model: the potential minus the class-predicted linear part is a cubic
polynomial in the decaying tail variable (e^rho on the left, e^-rho on
the right), interpolated through the outermost four interior nodes with
precomputed scale-invariant weights.  Higher-degree tail closures are
not a free upgrade: their one-out extrapolation ghosts destabilise the
semi-discrete operator (edge modes with positive growth rates), so the
cubic closure is load-bearing, not a truncation-order choice.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# termination codes returned by `advance`
OK = 0
SINGULARITY = 1
BAD_STATE = 2
MAX_STEPS = 3

# kinds
KIND_BUNDLE_ID = 0
KIND_PRODUCT_ID = 1


@njit(cache=True)
def _rhs(u, rho, h, n, kind_id, a_t, b_t, log_sigma, ghost_w, ext, out):
    """Log volume-density ratio driving the flow, on the tail-model grid.

    Fills `ext` (len N + 4) with u plus tail-model ghosts, differentiates
    with interior fourth-order stencils, and writes the density into
    `out`.  Returns (ok, min u'') -- ok is False as soon as positivity
    fails at any node, leaving `out` unspecified.  A grid-constant gauge
    term never enters here: the density sees the potential only through
    its derivatives, so constants integrate exactly outside the kernel.
    """
    N = u.shape[0]
    for i in range(N):
        ext[i + 2] = u[i]
    # left ghosts: w = u - a_t * rho is polynomial in e^rho
    p = ghost_w.shape[1]
    for g in range(2):
        acc = 0.0
        for j in range(p):
            acc += ghost_w[g, j] * (u[j] - a_t * rho[j])
        ext[1 - g] = acc + a_t * (rho[0] - (g + 1) * h)
    # right ghosts: w = u - b_t * rho is polynomial in e^-rho
    for g in range(2):
        acc = 0.0
        for j in range(p):
            acc += ghost_w[g, j] * (u[N - 1 - j] - b_t * rho[N - 1 - j])
        ext[N + 2 + g] = acc + b_t * (rho[N - 1] + (g + 1) * h)

    inv12h = 1.0 / (12.0 * h)
    inv12h2 = 1.0 / (12.0 * h * h)
    upp_min = np.inf
    ok = True
    for i in range(N):
        c = i + 2
        upp = (-ext[c - 2] + 16.0 * ext[c - 1] - 30.0 * ext[c]
               + 16.0 * ext[c + 1] - ext[c + 2]) * inv12h2
        if not upp > 0.0:
            return False, 0.0
        if upp < upp_min:
            upp_min = upp
        if kind_id == KIND_BUNDLE_ID:
            up = (ext[c - 2] - 8.0 * ext[c - 1]
                  + 8.0 * ext[c + 1] - ext[c + 2]) * inv12h
            if not up > 0.0:
                return False, 0.0
            out[i] = np.log(upp) + (n - 1) * np.log(up) - n * rho[i]
        else:
            out[i] = np.log(upp) - rho[i] + log_sigma
    return ok, upp_min


@njit(cache=True)
def advance(u, rho, h, n, kind_id, T,
            a0, adot, b0, bdot, sigma0, sigma_rate,
            ghost_w,
            t, t_target, dt,
            dt_max, dt_floor, kappa, stab_coef, tol,
            max_accepts, max_steps,
            k1, k2, ka, um, uh, uf, ext):
    """March the potential from t to t_target with the step-doubled
    midpoint pair, extrapolating accepted steps to third order.

    Returns (t, dt_next, status, n_accepted, n_rejected, upp_min).
    The state array `u` is updated in place; `k1` holds the derivative
    at the returned state whenever status is OK or MAX_STEPS.
    """
    N = u.shape[0]
    accepted = 0
    rejected = 0
    upp_seen = np.inf

    def lsig(tt):
        if kind_id == KIND_PRODUCT_ID:
            return (n - 1) * np.log(sigma0 - sigma_rate * tt)
        return 0.0

    ok, m = _rhs(u, rho, h, n, kind_id, a0 + adot * t, b0 + bdot * t,
                 lsig(t), ghost_w, ext, k1)
    if not ok:
        return t, dt, BAD_STATE, accepted, rejected, 0.0

    snap = 1e-14 * T
    while t_target - t > snap:
        if accepted + rejected >= max_steps:
            return t, dt, MAX_STEPS, accepted, rejected, upp_seen
        # caps: configured maximum, time-to-collapse, diffusive stability
        cap = dt_max
        c2 = kappa * (T - t)
        if c2 < cap:
            cap = c2
        c3 = stab_coef * h * h * m
        if c3 < cap:
            cap = c3
        if dt > cap:
            dt = cap
        de = dt
        if de > t_target - t:
            de = t_target - t
        if de < dt_floor:
            return t, dt, SINGULARITY, accepted, rejected, upp_seen

        # one full step of the midpoint rule
        for i in range(N):
            um[i] = u[i] + 0.5 * de * k1[i]
        ok, _ = _rhs(um, rho, h, n, kind_id,
                     a0 + adot * (t + 0.5 * de), b0 + bdot * (t + 0.5 * de),
                     lsig(t + 0.5 * de), ghost_w, ext, k2)
        if not ok:
            dt = 0.5 * de
            rejected += 1
            continue
        for i in range(N):
            uf[i] = u[i] + de * k2[i]

        # two half steps (k1 shared with the full step)
        for i in range(N):
            um[i] = u[i] + 0.25 * de * k1[i]
        ok, _ = _rhs(um, rho, h, n, kind_id,
                     a0 + adot * (t + 0.25 * de), b0 + bdot * (t + 0.25 * de),
                     lsig(t + 0.25 * de), ghost_w, ext, k2)
        if not ok:
            dt = 0.5 * de
            rejected += 1
            continue
        for i in range(N):
            uh[i] = u[i] + 0.5 * de * k2[i]
        ok, _ = _rhs(uh, rho, h, n, kind_id,
                     a0 + adot * (t + 0.5 * de), b0 + bdot * (t + 0.5 * de),
                     lsig(t + 0.5 * de), ghost_w, ext, ka)
        if not ok:
            dt = 0.5 * de
            rejected += 1
            continue
        for i in range(N):
            um[i] = uh[i] + 0.25 * de * ka[i]
        ok, _ = _rhs(um, rho, h, n, kind_id,
                     a0 + adot * (t + 0.75 * de), b0 + bdot * (t + 0.75 * de),
                     lsig(t + 0.75 * de), ghost_w, ext, k2)
        if not ok:
            dt = 0.5 * de
            rejected += 1
            continue
        for i in range(N):
            uh[i] = uh[i] + 0.5 * de * k2[i]

        # embedded error estimate of the half-step solution
        err = 0.0
        for i in range(N):
            d = abs(uh[i] - uf[i])
            if d > err:
                err = d
        err /= 3.0
        if err > tol:
            fac = 0.9 * (tol / err) ** (1.0 / 3.0)
            if fac < 0.2:
                fac = 0.2
            dt = de * fac
            rejected += 1
            continue

        # extrapolated candidate, checked for positivity before committing
        for i in range(N):
            um[i] = uh[i] + (uh[i] - uf[i]) / 3.0
        tn = t + de
        if t_target - tn <= snap:
            tn = t_target
        ok, m2 = _rhs(um, rho, h, n, kind_id,
                      a0 + adot * tn, b0 + bdot * tn,
                      lsig(tn), ghost_w, ext, k2)
        if not ok:
            dt = 0.5 * de
            rejected += 1
            continue

        for i in range(N):
            u[i] = um[i]
            k1[i] = k2[i]
        t = tn
        m = m2
        if m2 < upp_seen:
            upp_seen = m2
        accepted += 1
        if err > 0.0:
            fac = 0.9 * (tol / err) ** (1.0 / 3.0)
            if fac > 2.0:
                fac = 2.0
            elif fac < 0.2:
                fac = 0.2
        else:
            fac = 2.0
        dt = de * fac
        if 0 < max_accepts <= accepted:
            break
    return t, dt, OK, accepted, rejected, upp_seen
