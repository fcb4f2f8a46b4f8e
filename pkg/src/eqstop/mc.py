"""Monte Carlo engine for local-time-pushed randomized stopping.

The flagship path (driftless-GBM real-option problems) runs through compiled
kernels with exact log-space stepping; general diffusions go through a slower
vectorized Euler reference engine that shares the same discretization rules
(left-point intensity, Tanaka local time, clock drawn once per path).

Determinism contract: for a fixed (problem, strategy, config, master_seed),
aggregate outputs are bit-identical regardless of the worker count, because
every path draws only from its own substream and aggregation runs in fixed
path order.  ``EQSTOP_THREADS`` caps the kernel thread count.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from .core import (
    CustomProblem,
    GeneralMixedStrategy,
    MixedThresholdStrategy,
    NumericalError,
    ProblemValidationError,
    RealOptionProblem,
    validate,
)
from . import _kernels
from ._rng import ZIG_F, ZIG_R, ZIG_X

Strategy = MixedThresholdStrategy | GeneralMixedStrategy

_INTENSITY_TABLE_SIZE = 4097


def _apply_thread_cap() -> None:
    cap = os.environ.get("EQSTOP_THREADS")
    if not cap:
        return
    import numba

    n = int(cap)
    if n < 1:
        raise ProblemValidationError(f"EQSTOP_THREADS must be >= 1, got {cap}")
    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


# --------------------------------------------------------------------------- #
# Configuration and result records
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class SimConfig:
    """Engine controls.  ``t_max=None`` auto-selects the horizon per start
    state: the smallest t with (x + K) * h(t) below ``tail_tol * K``."""

    dt: float = 1e-4
    n_paths: int = 10_000
    master_seed: int = 0
    t_max: float | None = None
    tail_mode: str = "analytic"      # "analytic" | "truncate"
    tail_tol: float = 1e-3

    def __post_init__(self):
        if not self.dt > 0.0:
            raise ProblemValidationError(f"dt must be > 0, got {self.dt}")
        if self.n_paths < 1:
            raise ProblemValidationError(f"n_paths must be >= 1, got {self.n_paths}")
        if self.t_max is not None and self.t_max < self.dt:
            raise ProblemValidationError("t_max must be >= dt")
        if self.tail_mode not in ("analytic", "truncate"):
            raise ProblemValidationError(f"unknown tail_mode {self.tail_mode!r}")


@dataclass(frozen=True)
class PathOutcome:
    stop_time: float
    stop_state: float
    censored: bool
    running_cost_discounted: tuple[float, ...]   # per rate, realized integral
    discount_at_stop: tuple[float, ...]          # per rate, exp(-r * stop_time)
    intensity_accumulated: float
    local_time: float


@dataclass(frozen=True)
class Estimate:
    x: float
    mean: float
    se: float
    tail_bias_bound: float
    n_censored: int
    t_max: float
    dt: float
    n_paths: int


@dataclass(frozen=True)
class SurvivalPoint:
    t: float
    empirical: float
    empirical_se: float
    pathwise: float          # mean of exp(-Lambda_t) on an independent set
    pathwise_se: float
    z: float


@dataclass(frozen=True)
class IdentityResult:
    lhs: float
    lhs_se: float
    rhs: float
    rhs_se: float
    z: float
    n_paths: int


@dataclass(frozen=True)
class SmallTimeRow:
    h: float
    dt: float
    n_paths: int
    n_censored: int
    mean_exit_time: float
    ratio_h2_tau: float          # -> sigma(x)^2
    ratio_h2_tau_se: float
    ratio_tau2_tau: float        # -> 0
    ratio_tau2_tau_se: float
    ratio_ltime_sq_tau: float    # -> sigma(x)^2
    ratio_ltime_sq_tau_se: float
    ratio_tau_ltime_tau: float   # -> 0
    ratio_tau_ltime_tau_se: float
    ratio_ltime2_tau: float      # -> 2 sigma(x)^2
    ratio_ltime2_tau_se: float


# --------------------------------------------------------------------------- #
# Strategy lowering for the kernels
# --------------------------------------------------------------------------- #

def _lower_strategy(strategy: Strategy, dt: float, state_lo: float = 0.0):
    if isinstance(strategy, MixedThresholdStrategy):
        gen = strategy.as_general(state_lo)
    elif isinstance(strategy, GeneralMixedStrategy):
        gen = strategy
    else:
        raise TypeError(f"unsupported strategy type {type(strategy).__name__}")
    reg_lo = np.array([a for a, _ in gen.region], dtype=float)
    reg_hi = np.array([b for _, b in gen.region], dtype=float)
    push_x = np.array(gen.push_points, dtype=float)
    push_w = np.array(gen.push_weights, dtype=float)
    cap = 1.0 / dt

    intensity = gen.intensity
    sup_lo, sup_hi = intensity.support
    ipar = np.zeros(3)
    itab = np.zeros(1)
    itab_x0, itab_dx = 0.0, 1.0
    if intensity.kind == "zero":
        ik = 0
    elif intensity.kind == "constant":
        ik = 1
        ipar[0] = intensity.level
    elif intensity.kind == "rational":
        ik = 2
        ipar[0] = intensity.slope
        ipar[1] = intensity.const
        ipar[2] = intensity.pole
    else:
        if not (math.isfinite(sup_lo) and math.isfinite(sup_hi)):
            raise ProblemValidationError(
                "callable intensities need a finite support to be tabulated"
            )
        ik = 3
        xs = np.linspace(sup_lo, sup_hi, _INTENSITY_TABLE_SIZE)
        itab = np.maximum(np.array([intensity.fn(x) for x in xs], dtype=float), 0.0)
        itab_x0 = sup_lo
        itab_dx = xs[1] - xs[0]
    return (reg_lo, reg_hi, push_x, push_w, ik, ipar,
            float(sup_lo), float(sup_hi), itab, itab_x0, itab_dx, cap)


def _gbm_params(problem: RealOptionProblem) -> tuple[float, np.ndarray, np.ndarray, float]:
    violations = validate(problem)
    if violations:
        raise ProblemValidationError("; ".join(violations))
    rates = np.array(problem.rates, dtype=float)
    weights = np.array(problem.weights, dtype=float)
    return problem.sigma, rates, weights, problem.strike


def _auto_t_max(problem: RealOptionProblem, x0: float, cfg: SimConfig) -> float:
    """Smallest t with (x0 + K) * h(t) < tail_tol * K, rounded up to a step."""
    if cfg.t_max is not None:
        return cfg.t_max
    K = problem.strike
    mix = problem.mixture()
    target = cfg.tail_tol * K
    scale = x0 + K

    def excess(t: float) -> float:
        return scale * mix.discount_eval(t) - target

    if excess(0.0) <= 0.0:
        return cfg.dt
    hi = 1.0
    while excess(hi) > 0.0:
        hi *= 2.0
        if hi > 1e9:
            raise NumericalError("tail horizon search exceeded 1e9 time units")
    lo = hi / 2.0 if hi > 1.0 else 0.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if excess(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return hi


def _steps_for(t_max: float, dt: float) -> int:
    return max(1, int(math.ceil(t_max / dt - 1e-12)))


# --------------------------------------------------------------------------- #
# Core batch runner (GBM fast path)
# --------------------------------------------------------------------------- #

def _run_batch(problem: RealOptionProblem, strategy: Strategy, cfg: SimConfig,
               x0: float, n_steps: int, stream_base: int):
    _apply_thread_cap()
    sigma, rates, _, _ = _gbm_params(problem)
    lowered = _lower_strategy(strategy, cfg.dt)
    n = cfg.n_paths
    out_stop_step = np.empty(n, dtype=np.int64)
    out_state = np.empty(n, dtype=float)
    out_censored = np.empty(n, dtype=np.uint8)
    out_lam = np.empty(n, dtype=float)
    out_ltime = np.empty(n, dtype=float)
    out_run = np.empty((n, rates.size), dtype=float)
    _kernels.paths_estimate(
        float(x0), sigma, cfg.dt, n_steps, rates, *lowered,
        ZIG_X, ZIG_F, ZIG_R, np.uint64(cfg.master_seed), int(stream_base),
        out_stop_step, out_state, out_censored, out_lam, out_ltime, out_run,
    )
    if not (np.all(np.isfinite(out_state)) and np.all(np.isfinite(out_run))):
        raise NumericalError(
            f"non-finite state in the simulation batch at x0={x0}, dt={cfg.dt}"
        )
    return out_stop_step, out_state, out_censored, out_lam, out_ltime, out_run


def _per_rate_values(problem: RealOptionProblem, cfg: SimConfig, t_max: float,
                     stop_step, state, censored, run) -> np.ndarray:
    """Per-path discounted cost for each rate, with the configured tail rule."""
    rates = np.array(problem.rates, dtype=float)
    K = problem.strike
    tau = stop_step.astype(float) * cfg.dt
    v = run.copy()
    stopped = censored == 0
    for k, r in enumerate(rates):
        disc_tau = np.exp(-r * tau)
        v[:, k] += np.where(stopped, disc_tau * K, 0.0)
        if cfg.tail_mode == "analytic":
            v[:, k] += np.where(stopped, 0.0, math.exp(-r * t_max) * state / r)
    return v


def _tail_bound(problem: RealOptionProblem, cfg: SimConfig, x0: float, t_max: float) -> float:
    mix = problem.mixture()
    K = problem.strike
    if cfg.tail_mode == "analytic":
        return K * mix.discount_eval(t_max)
    return mix.moment(lambda r: math.exp(-r * t_max) * (x0 / r + K))


def simulate_path(problem: RealOptionProblem, strategy: Strategy, cfg: SimConfig,
                  path_index: int, x0: float, t_max: float | None = None) -> PathOutcome:
    """Run one path (the batch member ``path_index``) and return its outcome."""
    horizon = t_max if t_max is not None else _auto_t_max(problem, x0, cfg)
    n_steps = _steps_for(horizon, cfg.dt)
    one = SimConfig(dt=cfg.dt, n_paths=1, master_seed=cfg.master_seed,
                    t_max=cfg.t_max, tail_mode=cfg.tail_mode, tail_tol=cfg.tail_tol)
    stop_step, state, censored, lam, ltime, run = _run_batch(
        problem, strategy, one, x0, n_steps, stream_base=path_index
    )
    tau = float(stop_step[0]) * cfg.dt
    return PathOutcome(
        stop_time=tau,
        stop_state=float(state[0]),
        censored=bool(censored[0]),
        running_cost_discounted=tuple(float(r) for r in run[0]),
        discount_at_stop=tuple(math.exp(-r * tau) for r in problem.rates),
        intensity_accumulated=float(lam[0]),
        local_time=float(ltime[0]),
    )


# --------------------------------------------------------------------------- #
# Cost estimators
# --------------------------------------------------------------------------- #

def estimate_J(problem: RealOptionProblem | CustomProblem, strategy: Strategy,
               cfg: SimConfig, eval_states) -> list[Estimate]:
    """Mixture-cost estimate (mean, standard error) per start state."""
    return _estimate(problem, strategy, cfg, eval_states, rate_index=None)


def estimate_w(problem: RealOptionProblem | CustomProblem, strategy: Strategy,
               cfg: SimConfig, eval_states, rate_index: int) -> list[Estimate]:
    """Single-rate cost estimate per start state (``rate_index`` is 1-based).

    Uses the same substreams as :func:`estimate_J`, so the weighted combination
    of the per-rate means reproduces the mixture estimate exactly.
    """
    return _estimate(problem, strategy, cfg, eval_states, rate_index=rate_index)


def _estimate(problem, strategy, cfg: SimConfig, eval_states, rate_index):
    states = [float(x) for x in eval_states]
    if not states:
        raise ProblemValidationError("eval_states must be non-empty")
    if isinstance(problem, CustomProblem):
        return _estimate_reference(problem, strategy, cfg, states, rate_index)
    if not isinstance(problem, RealOptionProblem):
        raise TypeError(f"unsupported problem type {type(problem).__name__}")
    weights = np.array(problem.weights, dtype=float)
    if rate_index is not None and rate_index not in range(1, weights.size + 1):
        raise ProblemValidationError(f"rate_index must be in 1..{weights.size}")
    out = []
    for si, x0 in enumerate(states):
        if not x0 > 0.0:
            raise ProblemValidationError(f"start state must be > 0, got {x0}")
        t_max = _auto_t_max(problem, x0, cfg)
        n_steps = _steps_for(t_max, cfg.dt)
        t_max = n_steps * cfg.dt
        stop_step, state, censored, _, _, run = _run_batch(
            problem, strategy, cfg, x0, n_steps, stream_base=si * cfg.n_paths
        )
        v = _per_rate_values(problem, cfg, t_max, stop_step, state, censored, run)
        if rate_index is None:
            # accumulate exactly like the weighted sum of estimate_w means so
            # p*w1_hat + (1-p)*w2_hat reproduces J_hat bit-for-bit
            mean = 0.0
            for k in range(v.shape[1]):
                mean += float(weights[k]) * float(v[:, k].mean())
            per_path = v @ weights
        else:
            per_path = v[:, rate_index - 1]
            mean = float(per_path.mean())
        se = float(per_path.std(ddof=1) / math.sqrt(cfg.n_paths)) if cfg.n_paths > 1 else 0.0
        out.append(Estimate(
            x=x0, mean=mean, se=se,
            tail_bias_bound=_tail_bound(problem, cfg, x0, t_max),
            n_censored=int(censored.sum()),
            t_max=t_max, dt=cfg.dt, n_paths=cfg.n_paths,
        ))
    return out


# --------------------------------------------------------------------------- #
# Distributional checks
# --------------------------------------------------------------------------- #

def survival_check(problem: RealOptionProblem, strategy: Strategy, cfg: SimConfig,
                   t_grid, x0: float | None = None) -> list[SurvivalPoint]:
    """Empirical clock survival vs the pathwise exp(-Lambda_t) mean.

    Set A (streams 0..n-1) realizes the clock and reports the empirical
    fraction with tau > t; set B (independent streams n..2n-1) evolves freely
    and averages exp(-Lambda_t).  The two agree in the dt -> 0 limit.
    """
    _apply_thread_cap()
    ts = [float(t) for t in t_grid]
    if not ts or any(t <= 0.0 for t in ts) or any(b <= a for a, b in zip(ts, ts[1:])):
        raise ProblemValidationError("t_grid must be strictly increasing and positive")
    horizon = cfg.t_max if cfg.t_max is not None else ts[-1]
    if ts[-1] > horizon + 1e-12:
        raise ProblemValidationError("t_grid exceeds the configured horizon")
    sigma, _, _, _ = _gbm_params(problem)
    lowered = _lower_strategy(strategy, cfg.dt)
    push_x, push_w = lowered[2], lowered[3]
    intensity_args = lowered[4:]
    n_steps = _steps_for(horizon, cfg.dt)
    grid_steps = np.array([min(n_steps, max(1, int(round(t / cfg.dt)))) for t in ts],
                          dtype=np.int64)
    if x0 is None:
        x0 = _survival_start(strategy)
    x0 = float(x0)

    n = cfg.n_paths
    out = []
    tau_a = np.empty(n, dtype=np.int64)
    lam_a = np.empty((n, grid_steps.size), dtype=float)
    _kernels.paths_survival(x0, sigma, cfg.dt, n_steps, push_x, push_w,
                            *intensity_args, ZIG_X, ZIG_F, ZIG_R,
                            np.uint64(cfg.master_seed), 0, grid_steps, tau_a, lam_a)
    tau_b = np.empty(n, dtype=np.int64)
    lam_b = np.empty((n, grid_steps.size), dtype=float)
    _kernels.paths_survival(x0, sigma, cfg.dt, n_steps, push_x, push_w,
                            *intensity_args, ZIG_X, ZIG_F, ZIG_R,
                            np.uint64(cfg.master_seed), n, grid_steps, tau_b, lam_b)

    for gi, t in enumerate(ts):
        alive = (tau_a < 0) | (tau_a > grid_steps[gi])
        emp = float(alive.mean())
        emp_se = math.sqrt(max(emp * (1.0 - emp), 0.0) / n)
        surv = np.exp(-lam_b[:, gi])
        pw = float(surv.mean())
        pw_se = float(surv.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        denom = math.hypot(emp_se, pw_se)
        z = (emp - pw) / denom if denom > 0.0 else (0.0 if emp == pw else math.inf)
        out.append(SurvivalPoint(t=t, empirical=emp, empirical_se=emp_se,
                                 pathwise=pw, pathwise_se=pw_se, z=z))
    return out


def _survival_start(strategy: Strategy) -> float:
    """Default start state: the lower threshold / first push point, else 1."""
    if isinstance(strategy, MixedThresholdStrategy):
        return strategy.lower if strategy.lower > 0.0 else 1.0
    if strategy.push_points:
        return strategy.push_points[0]
    lo, hi = strategy.region[0]
    if math.isfinite(lo) and math.isfinite(hi):
        return 0.5 * (lo + hi)
    return 1.0


def identity_check(problem: RealOptionProblem, strategy: Strategy, cfg: SimConfig,
                   r: float, x: float) -> IdentityResult:
    """Two-route estimate of the discounted-stopping identity at rate ``r``.

    lhs: E[ int_0^{tau} e^{-rt} g(X_t) dPsi_t ] truncated at the clock draw,
    rhs: E[ e^{-r tau} g(X_tau) 1{clock before region exit} ],
    on independent sample sets; the z-score measures their agreement.
    """
    _apply_thread_cap()
    sigma, _, _, K = _gbm_params(problem)
    if r < 0.0:
        raise ProblemValidationError("rate must be >= 0")
    lowered = _lower_strategy(strategy, cfg.dt)
    reg_lo, reg_hi = lowered[0], lowered[1]
    if not any(a < x < b for a, b in zip(reg_lo, reg_hi)):
        raise ProblemValidationError(f"start state {x} is outside the continuation region")
    horizon = cfg.t_max if cfg.t_max is not None else math.log(1e4) / max(r, 0.05)
    n_steps = _steps_for(horizon, cfg.dt)
    n = cfg.n_paths

    lhs_a = np.empty(n, dtype=float)
    rhs_a = np.empty(n, dtype=float)
    flag_a = np.empty(n, dtype=np.int8)
    _kernels.paths_identity(float(x), sigma, cfg.dt, n_steps, float(r), K, *lowered,
                            ZIG_X, ZIG_F, ZIG_R, np.uint64(cfg.master_seed), 0,
                            lhs_a, rhs_a, flag_a)
    lhs_b = np.empty(n, dtype=float)
    rhs_b = np.empty(n, dtype=float)
    flag_b = np.empty(n, dtype=np.int8)
    _kernels.paths_identity(float(x), sigma, cfg.dt, n_steps, float(r), K, *lowered,
                            ZIG_X, ZIG_F, ZIG_R, np.uint64(cfg.master_seed), n,
                            lhs_b, rhs_b, flag_b)

    lhs_mean = float(lhs_a.mean())
    lhs_se = float(lhs_a.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    rhs_mean = float(rhs_b.mean())
    rhs_se = float(rhs_b.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    denom = math.hypot(lhs_se, rhs_se)
    z = (lhs_mean - rhs_mean) / denom if denom > 0.0 else (
        0.0 if lhs_mean == rhs_mean else math.inf)
    return IdentityResult(lhs=lhs_mean, lhs_se=lhs_se, rhs=rhs_mean, rhs_se=rhs_se,
                          z=z, n_paths=n)


# --------------------------------------------------------------------------- #
# Small-time exit diagnostics
# --------------------------------------------------------------------------- #

def smalltime_diagnostics(problem: RealOptionProblem, x: float, h_list,
                          cfg: SimConfig) -> list[SmallTimeRow]:
    """Monte Carlo check of the small-band exit-time and local-time limits.

    For each band half-width h the ratios h^2/E[tau], (E[l])^2/E[tau] converge
    to sigma(x)^2 and E[l^2]/E[tau] to 2 sigma(x)^2 while E[tau^2]/E[tau] and
    E[tau l]/E[tau] vanish.  The step is refined per band so the discrete
    barrier-crossing bias stays a small fraction of the targets.
    """
    _apply_thread_cap()
    sigma, _, _, _ = _gbm_params(problem)
    hs = [float(h) for h in h_list]
    if any(b >= a for a, b in zip(hs, hs[1:])):
        raise ProblemValidationError("h_list must be strictly decreasing")
    if any(x - h <= 0.0 for h in hs):
        raise ProblemValidationError("band [x-h, x+h] must stay inside (0, inf)")
    sig_x = sigma * x
    rows = []
    for hi_idx, h in enumerate(hs):
        dt_h = min(cfg.dt, (0.03 * h / sig_x) ** 2)
        horizon = 60.0 * h * h / (sig_x * sig_x)
        n_steps = _steps_for(horizon, dt_h)
        n = cfg.n_paths
        tau = np.empty(n, dtype=float)
        lt = np.empty(n, dtype=float)
        exited = np.empty(n, dtype=np.uint8)
        _kernels.paths_smalltime(float(x), sigma, dt_h, n_steps, x - h, x + h,
                                 float(x), ZIG_X, ZIG_F, ZIG_R,
                                 np.uint64(cfg.master_seed),
                                 hi_idx * cfg.n_paths, tau, lt, exited)
        rows.append(_smalltime_row(h, dt_h, tau, lt, exited))
    return rows


def _smalltime_row(h: float, dt_h: float, tau, lt, exited) -> SmallTimeRow:
    n = tau.size
    r1, s1 = _delta_ratio(np.full_like(tau, h * h), tau)
    r2, s2 = _delta_ratio(tau * tau, tau)
    r3, s3 = _delta_sqmean_ratio(lt, tau)
    r4, s4 = _delta_ratio(tau * lt, tau)
    r5, s5 = _delta_ratio(lt * lt, tau)
    return SmallTimeRow(
        h=h, dt=dt_h, n_paths=n, n_censored=int(n - exited.sum()),
        mean_exit_time=float(tau.mean()),
        ratio_h2_tau=r1, ratio_h2_tau_se=s1,
        ratio_tau2_tau=r2, ratio_tau2_tau_se=s2,
        ratio_ltime_sq_tau=r3, ratio_ltime_sq_tau_se=s3,
        ratio_tau_ltime_tau=r4, ratio_tau_ltime_tau_se=s4,
        ratio_ltime2_tau=r5, ratio_ltime2_tau_se=s5,
    )


def _delta_ratio(num, den) -> tuple[float, float]:
    """Mean-ratio mean(num)/mean(den) with a delta-method standard error."""
    n = num.size
    a, b = float(num.mean()), float(den.mean())
    ratio = a / b
    var_a = float(num.var(ddof=1))
    var_b = float(den.var(ddof=1))
    cov = float(np.cov(num, den, ddof=1)[0, 1])
    var_r = (var_a / (b * b) + a * a * var_b / b ** 4 - 2.0 * a * cov / b ** 3) / n
    return ratio, math.sqrt(max(var_r, 0.0))


def _delta_sqmean_ratio(num, den) -> tuple[float, float]:
    """Ratio mean(num)^2 / mean(den) with a delta-method standard error."""
    n = num.size
    a, b = float(num.mean()), float(den.mean())
    ratio = a * a / b
    var_a = float(num.var(ddof=1))
    var_b = float(den.var(ddof=1))
    cov = float(np.cov(num, den, ddof=1)[0, 1])
    ga = 2.0 * a / b
    gb = -a * a / (b * b)
    var_r = (ga * ga * var_a + gb * gb * var_b + 2.0 * ga * gb * cov) / n
    return ratio, math.sqrt(max(var_r, 0.0))


# --------------------------------------------------------------------------- #
# Reference engine (general diffusions; also used to validate the kernels)
# --------------------------------------------------------------------------- #

def _estimate_reference(problem: CustomProblem, strategy: Strategy, cfg: SimConfig,
                        states: list[float], rate_index) -> list[Estimate]:
    if cfg.tail_mode != "truncate":
        raise ProblemValidationError(
            "general diffusions support tail_mode='truncate' only"
        )
    if cfg.t_max is None:
        raise ProblemValidationError("general diffusions need an explicit t_max")
    weights = np.array(problem.mix.weights, dtype=float)
    if rate_index is not None and rate_index not in range(1, weights.size + 1):
        raise ProblemValidationError(f"rate_index must be in 1..{weights.size}")
    out = []
    for si, x0 in enumerate(states):
        v, censored = reference_values(problem, strategy, cfg, x0,
                                       stream_base=si * cfg.n_paths)
        if rate_index is None:
            per_path = v @ weights
            mean = float(weights @ v.mean(axis=0))
        else:
            per_path = v[:, rate_index - 1]
            mean = float(per_path.mean())
        se = float(per_path.std(ddof=1) / math.sqrt(cfg.n_paths)) if cfg.n_paths > 1 else 0.0
        t_max = _steps_for(cfg.t_max, cfg.dt) * cfg.dt
        # no analytic tail bound without the driftless-GBM martingale identity
        out.append(Estimate(x=x0, mean=mean, se=se, tail_bias_bound=math.nan,
                            n_censored=int(censored.sum()), t_max=t_max,
                            dt=cfg.dt, n_paths=cfg.n_paths))
    return out


def reference_values(problem: CustomProblem, strategy: Strategy, cfg: SimConfig,
                     x0: float, stream_base: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized Euler reference: per-path per-rate discounted cost (truncate
    tail rule) and the censoring mask.  Shares the kernels' discretization:
    left-point running cost and intensity, Tanaka pushes, one clock per path,
    intensity capped at 1/dt.  Batch-level determinism via a Philox key
    (master_seed, stream_base); callables are evaluated pointwise.
    """
    if isinstance(strategy, MixedThresholdStrategy):
        gen = strategy.as_general(problem.diffusion.lo)
    else:
        gen = strategy
    rng = np.random.Generator(np.random.Philox(key=[cfg.master_seed, stream_base]))
    n = cfg.n_paths
    rates = np.array(problem.mix.rates, dtype=float)
    dt = cfg.dt
    n_steps = _steps_for(cfg.t_max, dt)
    drift = np.vectorize(problem.diffusion.drift)
    vol = np.vectorize(problem.diffusion.volatility)
    f = np.vectorize(problem.payoff.running_cost)
    g = np.vectorize(problem.payoff.terminal_cost)
    lam_fn = np.vectorize(gen.intensity)
    cap = 1.0 / dt
    sqdt = math.sqrt(dt)

    x = np.full(n, float(x0))
    alive = _region_mask(gen, x)
    clock = rng.exponential(size=n)
    lam_acc = np.zeros(n)
    run = np.zeros((n, rates.size))
    value = np.zeros((n, rates.size))
    disc = np.ones(rates.size)
    dmul = np.exp(-rates * dt)

    stopped_now = ~alive
    if stopped_now.any():
        value[stopped_now, :] = g(x[stopped_now])[:, None]

    for _ in range(n_steps):
        if not alive.any():
            break
        idx = np.nonzero(alive)[0]
        xa = x[idx]
        fa = f(xa) * dt
        for k in range(rates.size):
            run[idx, k] += disc[k] * fa
        z = rng.standard_normal(idx.size)
        xn = xa + drift(xa) * dt + vol(xa) * sqdt * z
        if not np.all(np.isfinite(xn)):
            raise NumericalError("non-finite state in the reference engine")
        lam_inc = np.minimum(lam_fn(xa), cap) * dt
        for a, w in zip(gen.push_points, gen.push_weights):
            s = np.sign(xa - a)
            dl = np.abs(xn - a) - np.abs(xa - a) - s * (xn - xa)
            lam_inc = lam_inc + w * np.maximum(dl, 0.0)
        lam_acc[idx] += lam_inc
        disc = disc * dmul
        x[idx] = xn
        fired = lam_acc[idx] >= clock[idx]
        done = fired | ~_region_mask(gen, xn)
        done_idx = idx[done]
        if done_idx.size:
            gx = g(x[done_idx])
            for k in range(rates.size):
                value[done_idx, k] = disc[k] * gx
            alive[done_idx] = False
    censored = alive.copy()
    return run + value, censored


def _region_mask(gen: GeneralMixedStrategy, x: np.ndarray) -> np.ndarray:
    mask = np.zeros(x.shape, dtype=bool)
    for a, b in gen.region:
        mask |= (x > a) & (x < b)
    return mask
