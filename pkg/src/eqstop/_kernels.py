"""Compiled path kernels for the driftless-GBM simulation engine.

All kernels step the state exactly in log space (no state discretization
error), accumulate the randomized-stopping intensity with a left-point rule,
and estimate local time at the push points through the discrete Tanaka defect
with sgn(0) = 0 and increments clamped at zero.  Paths are independent work
items over a prange; each one draws only from its own substream, so results
do not depend on the worker count.

Intensity kinds: 0 zero, 1 constant, 2 rational (slope*x - const)/(pole - x),
3 tabulated (uniform grid, linear interpolation).  Values are clamped to
[0, cap]; the engine passes cap = 1/dt so a unit per-step stopping mass is
never exceeded near the blow-up boundary.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit, prange

from ._rng import (
    exp_small,
    next_exponential,
    next_normal,
    seed_state,
)

U64 = np.uint64


@njit(cache=True, inline="always")
def _eval_intensity(x, ik, ipar, isup_lo, isup_hi, itab, itab_x0, itab_dx, cap):
    if x < isup_lo or x >= isup_hi or ik == 0:
        return 0.0
    if ik == 1:
        v = ipar[0]
    elif ik == 2:
        den = ipar[2] - x
        if den <= 0.0:
            return cap
        v = (ipar[0] * x - ipar[1]) / den
    else:
        pos = (x - itab_x0) / itab_dx
        if pos <= 0.0:
            v = itab[0]
        elif pos >= itab.shape[0] - 1:
            v = itab[itab.shape[0] - 1]
        else:
            i0 = int(pos)
            frac = pos - i0
            v = itab[i0] * (1.0 - frac) + itab[i0 + 1] * frac
    if v < 0.0:
        v = 0.0
    if v > cap:
        v = cap
    return v


@njit(cache=True, inline="always")
def _in_region(x, reg_lo, reg_hi):
    for q in range(reg_lo.shape[0]):
        if reg_lo[q] < x < reg_hi[q]:
            return True
    return False


@njit(cache=True, inline="always")
def _tanaka(a, x_old, x_new):
    if x_old > a:
        s = 1.0
    elif x_old < a:
        s = -1.0
    else:
        s = 0.0
    dl = abs(x_new - a) - abs(x_old - a) - s * (x_new - x_old)
    return dl if dl > 0.0 else 0.0


@njit(cache=True, parallel=True, fastmath=True)
def paths_estimate(x0, sigma, dt, n_steps, rates,
                   reg_lo, reg_hi, push_x, push_w,
                   ik, ipar, isup_lo, isup_hi, itab, itab_x0, itab_dx, cap,
                   zx, zf, zr, master_seed, stream_base,
                   out_stop_step, out_state, out_censored,
                   out_lam, out_ltime, out_run):
    n = out_state.shape[0]
    kr = rates.shape[0]
    drift = -0.5 * sigma * sigma * dt
    vol = sigma * math.sqrt(dt)
    dmul = np.exp(-rates * dt)
    act_lo = isup_lo
    for q in range(push_x.shape[0]):
        if push_x[q] < act_lo:
            act_lo = push_x[q]
    for idx in prange(n):
        s0, s1, s2, s3 = seed_state(master_seed, stream_base + idx)
        u_clock, s0, s1, s2, s3 = next_exponential(s0, s1, s2, s3)
        x = x0
        if not _in_region(x, reg_lo, reg_hi):
            out_stop_step[idx] = 0
            out_state[idx] = x
            out_censored[idx] = 0
            out_lam[idx] = 0.0
            out_ltime[idx] = 0.0
            for k in range(kr):
                out_run[idx, k] = 0.0
            continue
        run = np.zeros(kr)
        disc = np.ones(kr)
        lam_acc = 0.0
        lt = 0.0
        stopped = False
        step = 0
        for j in range(n_steps):
            for k in range(kr):
                run[k] += disc[k] * x * dt
            z, s0, s1, s2, s3 = next_normal(s0, s1, s2, s3, zx, zf, zr)
            xn = x * exp_small(drift + vol * z)
            if x >= act_lo or xn >= act_lo:
                lam_acc += dt * _eval_intensity(x, ik, ipar, isup_lo, isup_hi,
                                                itab, itab_x0, itab_dx, cap)
                for q in range(push_x.shape[0]):
                    dl = _tanaka(push_x[q], x, xn)
                    if dl > 0.0:
                        lam_acc += push_w[q] * dl
                        lt += dl
            for k in range(kr):
                disc[k] *= dmul[k]
            x = xn
            if lam_acc >= u_clock:
                stopped = True
                step = j + 1
                break
            if not _in_region(x, reg_lo, reg_hi):
                stopped = True
                step = j + 1
                break
        if stopped:
            out_stop_step[idx] = step
            out_censored[idx] = 0
        else:
            out_stop_step[idx] = n_steps
            out_censored[idx] = 1
        out_state[idx] = x
        out_lam[idx] = lam_acc
        out_ltime[idx] = lt
        for k in range(kr):
            out_run[idx, k] = run[k]


@njit(cache=True, parallel=True, fastmath=True)
def paths_survival(x0, sigma, dt, n_steps,
                   push_x, push_w,
                   ik, ipar, isup_lo, isup_hi, itab, itab_x0, itab_dx, cap,
                   zx, zf, zr, master_seed, stream_base, grid_steps,
                   out_tau_step, out_lam_grid):
    """Free evolution (no exit): intensity accumulation, exponential clock and
    the accumulated intensity recorded at the requested step indices."""
    n = out_tau_step.shape[0]
    n_grid = grid_steps.shape[0]
    drift = -0.5 * sigma * sigma * dt
    vol = sigma * math.sqrt(dt)
    act_lo = isup_lo
    for q in range(push_x.shape[0]):
        if push_x[q] < act_lo:
            act_lo = push_x[q]
    for idx in prange(n):
        s0, s1, s2, s3 = seed_state(master_seed, stream_base + idx)
        u_clock, s0, s1, s2, s3 = next_exponential(s0, s1, s2, s3)
        x = x0
        lam_acc = 0.0
        fired = np.int64(-1)
        g = 0
        for j in range(n_steps):
            z, s0, s1, s2, s3 = next_normal(s0, s1, s2, s3, zx, zf, zr)
            xn = x * exp_small(drift + vol * z)
            if x >= act_lo or xn >= act_lo:
                lam_acc += dt * _eval_intensity(x, ik, ipar, isup_lo, isup_hi,
                                                itab, itab_x0, itab_dx, cap)
                for q in range(push_x.shape[0]):
                    lam_acc += push_w[q] * _tanaka(push_x[q], x, xn)
            x = xn
            step_now = j + 1
            if fired < 0 and lam_acc >= u_clock:
                fired = step_now
            while g < n_grid and grid_steps[g] == step_now:
                out_lam_grid[idx, g] = lam_acc
                g += 1
            if fired >= 0 and g >= n_grid:
                break
        while g < n_grid:
            out_lam_grid[idx, g] = lam_acc
            g += 1
        out_tau_step[idx] = fired


@njit(cache=True, parallel=True, fastmath=True)
def paths_identity(x0, sigma, dt, n_steps, rate, g_const,
                   reg_lo, reg_hi, push_x, push_w,
                   ik, ipar, isup_lo, isup_hi, itab, itab_x0, itab_dx, cap,
                   zx, zf, zr, master_seed, stream_base,
                   out_lhs, out_rhs, out_flag):
    """Per path: the discounted payoff-weighted intensity integral truncated at
    the clock draw (lhs) and the discounted payoff at the clock if it beats the
    region exit (rhs).  flag: 1 clock, 0 exit, -1 censored."""
    n = out_lhs.shape[0]
    drift = -0.5 * sigma * sigma * dt
    vol = sigma * math.sqrt(dt)
    dmul = math.exp(-rate * dt)
    act_lo = isup_lo
    for q in range(push_x.shape[0]):
        if push_x[q] < act_lo:
            act_lo = push_x[q]
    for idx in prange(n):
        s0, s1, s2, s3 = seed_state(master_seed, stream_base + idx)
        u_clock, s0, s1, s2, s3 = next_exponential(s0, s1, s2, s3)
        x = x0
        lhs = 0.0
        rhs = 0.0
        flag = np.int8(-1)
        if not _in_region(x, reg_lo, reg_hi):
            out_lhs[idx] = 0.0
            out_rhs[idx] = 0.0
            out_flag[idx] = 0
            continue
        psi = 0.0
        disc = 1.0
        for j in range(n_steps):
            z, s0, s1, s2, s3 = next_normal(s0, s1, s2, s3, zx, zf, zr)
            xn = x * exp_small(drift + vol * z)
            dpsi = dt * _eval_intensity(x, ik, ipar, isup_lo, isup_hi,
                                        itab, itab_x0, itab_dx, cap)
            if x >= act_lo or xn >= act_lo:
                for q in range(push_x.shape[0]):
                    dpsi += push_w[q] * _tanaka(push_x[q], x, xn)
            if psi < u_clock:
                room = u_clock - psi
                take = dpsi if dpsi < room else room
                lhs += disc * g_const * take
            psi += dpsi
            disc *= dmul
            x = xn
            if psi >= u_clock:
                rhs = disc * g_const
                flag = 1
                break
            if not _in_region(x, reg_lo, reg_hi):
                flag = 0
                break
        out_lhs[idx] = lhs
        out_rhs[idx] = rhs
        out_flag[idx] = flag


@njit(cache=True, parallel=True, fastmath=True)
def paths_smalltime(x0, sigma, dt, n_steps, band_lo, band_hi, level,
                    zx, zf, zr, master_seed, stream_base,
                    out_tau, out_lt, out_exited):
    """First exit from (band_lo, band_hi) and the Tanaka local time at ``level``."""
    n = out_tau.shape[0]
    drift = -0.5 * sigma * sigma * dt
    vol = sigma * math.sqrt(dt)
    for idx in prange(n):
        s0, s1, s2, s3 = seed_state(master_seed, stream_base + idx)
        x = x0
        lt = 0.0
        exited = np.uint8(0)
        tau = dt * n_steps
        for j in range(n_steps):
            z, s0, s1, s2, s3 = next_normal(s0, s1, s2, s3, zx, zf, zr)
            xn = x * exp_small(drift + vol * z)
            lt += _tanaka(level, x, xn)
            x = xn
            if x <= band_lo or x >= band_hi:
                tau = dt * (j + 1)
                exited = np.uint8(1)
                break
        out_tau[idx] = tau
        out_lt[idx] = lt
        out_exited[idx] = exited
