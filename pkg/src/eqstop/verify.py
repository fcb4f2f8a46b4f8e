"""Independent numerical verification of candidate threshold equilibria.

Four instruments, deliberately decoupled from the closed forms they test:

* ``check_conditions`` evaluates the four variational conditions (value gap
  below the lower threshold, value pasting on the randomization region, the
  generator inequality above the sure-stop boundary, smooth fit) on a grid.
* ``ansatz_residual`` evaluates the randomization-region ODE residual in both
  its simplified and full forms.
* ``fd_solve_w`` re-solves the per-rate boundary value problem by second-order
  finite differences with the derivative-jump interface condition, giving an
  oracle for the closed-form value functions.
* ``smoothfit_root`` finds the lower threshold by bracketed bisection on the
  mixture smooth-fit map, independent of the printed threshold formula.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core import (
    MixedThresholdStrategy,
    NumericalError,
    ProblemValidationError,
    RealOptionProblem,
    RegimeError,
    RootNotFoundError,
    validate,
)
from .closedform import (
    EquilibriumSolution,
    Regime,
    alpha,
    linear_coefficients,
    lower_threshold_bracket,
    upper_threshold,
)

LAMBDA_CAP = 1e6


# --------------------------------------------------------------------------- #
# Grid
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class Grid:
    """Strictly increasing state grid containing both thresholds as nodes.

    Built piecewise-uniform on [x_min, lower], [lower, upper], [upper, x_max]
    so the thresholds are exact nodes while the spacing stays within a fraction
    of a percent of uniform.
    """

    nodes: np.ndarray
    lower_index: int
    upper_index: int

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        object.__setattr__(self, "nodes", nodes)
        if nodes.ndim != 1 or nodes.size < 3:
            raise ProblemValidationError("grid needs at least 3 nodes")
        if not np.all(np.diff(nodes) > 0.0):
            raise ProblemValidationError("grid nodes must be strictly increasing")
        if not (0 < self.lower_index <= self.upper_index < nodes.size - 1):
            raise ProblemValidationError("thresholds must be interior grid nodes")

    @property
    def lower(self) -> float:
        return float(self.nodes[self.lower_index])

    @property
    def upper(self) -> float:
        return float(self.nodes[self.upper_index])

    @classmethod
    def for_thresholds(cls, lower: float, upper: float, x_min: float, x_max: float,
                       n_nodes: int = 1201) -> "Grid":
        if not (0.0 < x_min < lower and x_max > upper):
            raise ProblemValidationError(
                f"grid must span the thresholds: x_min={x_min}, lower={lower}, "
                f"upper={upper}, x_max={x_max}"
            )
        if n_nodes < 13:
            raise ProblemValidationError("grid needs at least 13 nodes")
        breaks = [x_min, lower, x_max] if lower == upper else [x_min, lower, upper, x_max]
        lengths = np.diff(breaks)
        total_intervals = n_nodes - 1
        counts = [max(4, int(round(total_intervals * L / lengths.sum()))) for L in lengths[:-1]]
        counts.append(total_intervals - sum(counts))
        if counts[-1] < 4:
            raise ProblemValidationError("grid too coarse for the requested span")
        pieces = [np.linspace(a, b, c + 1)[:-1] for a, b, c in zip(breaks[:-1], breaks[1:], counts)]
        nodes = np.concatenate(pieces + [np.array([x_max])])
        lower_index = counts[0]
        upper_index = lower_index if lower == upper else counts[0] + counts[1]
        # snap the threshold nodes exactly (linspace endpoints already exact)
        nodes[lower_index] = lower
        nodes[upper_index] = upper
        return cls(nodes=nodes, lower_index=lower_index, upper_index=upper_index)

    @classmethod
    def for_solution(cls, sol: EquilibriumSolution, n_nodes: int = 1201,
                     x_min: float | None = None, x_max: float | None = None) -> "Grid":
        K = sol.problem.strike
        if x_min is None:
            x_min = 1e-3 * K
        if x_max is None:
            x_max = 2.0 * sol.upper
        return cls.for_thresholds(sol.lower, sol.upper, x_min, x_max, n_nodes)


# --------------------------------------------------------------------------- #
# Tolerances and report
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class Tolerances:
    strict: float          # condition (I) strictness, cost units
    eq: float              # conditions (II)/(III) equality slack, cost units
    fit: float             # condition (IV) derivative bound, cost/state units
    ode: float = 1e-10     # randomization-region residual bound
    jump: float = 1e-10    # derivative-jump residual bound
    fd_rtol: float = 1e-3  # FD vs closed form max relative error

    @classmethod
    def for_problem(cls, problem: RealOptionProblem) -> "Tolerances":
        K = problem.strike
        x_bar_scale = max(upper_threshold(problem), K)
        return cls(strict=1e-9 * K, eq=1e-9 * K, fit=1e-9 * K / x_bar_scale)


@dataclass(frozen=True)
class ConditionReport:
    """Per-condition outcomes plus the auxiliary residual diagnostics.

    ``*_violation`` entries are violation magnitudes past the tolerance
    (zero when the condition holds, always finite and non-negative);
    ``*_worst_x`` locates the node that came closest to violating.
    """

    cond1_ok: bool
    cond1_violation: float
    cond1_worst_x: float
    cond1_layer: float
    cond2_ok: bool
    cond2_violation: float
    cond2_worst_x: float
    cond3_ok: bool
    cond3_violation: float
    cond3_worst_x: float
    cond4_ok: bool
    fit_left: float
    fit_right: float
    ode_residual_sup: float
    ode_ok: bool
    jump_residuals: tuple[float, ...]
    jump_ok: bool
    fd_max_rel_err: float
    fd_ok: bool
    notes: tuple[str, ...] = field(default_factory=tuple)

    @property
    def conditions_passed(self) -> bool:
        return self.cond1_ok and self.cond2_ok and self.cond3_ok and self.cond4_ok

    @property
    def passed(self) -> bool:
        return self.conditions_passed and self.ode_ok and self.jump_ok and self.fd_ok

    def as_flat_dict(self) -> dict[str, object]:
        out: dict[str, object] = {
            "cond1_ok": self.cond1_ok,
            "cond1_violation": self.cond1_violation,
            "cond1_worst_x": self.cond1_worst_x,
            "cond1_layer": self.cond1_layer,
            "cond2_ok": self.cond2_ok,
            "cond2_violation": self.cond2_violation,
            "cond2_worst_x": self.cond2_worst_x,
            "cond3_ok": self.cond3_ok,
            "cond3_violation": self.cond3_violation,
            "cond3_worst_x": self.cond3_worst_x,
            "cond4_ok": self.cond4_ok,
            "fit_left": self.fit_left,
            "fit_right": self.fit_right,
            "ode_residual_sup": self.ode_residual_sup,
            "ode_ok": self.ode_ok,
            "jump_ok": self.jump_ok,
            "fd_max_rel_err": self.fd_max_rel_err,
            "fd_ok": self.fd_ok,
            "passed": self.passed,
        }
        for i, res in enumerate(self.jump_residuals, start=1):
            out[f"jump_residual_{i}"] = res
        return out


# --------------------------------------------------------------------------- #
# Condition checker
# --------------------------------------------------------------------------- #

def check_conditions(sol: EquilibriumSolution, grid: Grid,
                     tol: Tolerances | None = None, fd: bool = True) -> ConditionReport:
    """Evaluate the four equilibrium conditions plus residual diagnostics.

    The strict value-gap condition below the lower threshold is skipped inside
    the smooth-fit tangency layer, where the analytically predicted gap
    |J''| d^2/2 + |J'''| d^3/6 falls under 4x the strictness tolerance and the
    sign is not resolvable in binary64; those nodes are held to the equality
    tolerance instead (layer width reported).
    """
    if tol is None:
        tol = Tolerances.for_problem(sol.problem)
    nodes = grid.nodes
    if not (math.isclose(grid.lower, sol.lower, rel_tol=1e-12)
            and math.isclose(grid.upper, sol.upper, rel_tol=1e-12)):
        raise ProblemValidationError("grid thresholds do not match the solution")
    K = sol.problem.strike

    # condition (I): J - K strictly negative below the lower threshold
    j2 = abs(sol.J_second(sol.lower * (1.0 - 1e-12)))
    j3 = abs(sol.J_third(sol.lower * (1.0 - 1e-12)))
    layer = _tangency_layer(j2, j3, 4.0 * tol.strict)
    below = nodes[: grid.lower_index]
    gaps = np.array([sol.J(x) - K for x in below])
    informative = (sol.lower - below) >= layer
    viol1 = np.where(informative, gaps + tol.strict, gaps - tol.eq)
    i1 = int(np.argmax(viol1))
    cond1_violation = max(float(viol1[i1]), 0.0)
    cond1_ok = cond1_violation == 0.0

    # condition (II): |J - K| on [lower, upper)
    mask2 = (nodes >= sol.lower) & (nodes < sol.upper)
    mid = nodes[mask2]
    if mid.size:
        dev2 = np.array([abs(sol.J(x) - K) for x in mid]) - tol.eq
        i2 = int(np.argmax(dev2))
        cond2_violation = max(float(dev2[i2]), 0.0)
        cond2_worst_x = float(mid[i2])
    else:
        # pure threshold: the randomization region is empty, vacuously true
        cond2_violation, cond2_worst_x = 0.0, sol.lower
    cond2_ok = cond2_violation == 0.0

    # condition (III): f + A g - g * E[r] >= 0 on [upper, x_max]
    payoff = sol.problem.payoff()
    mean_rate = sol.problem.mean_rate
    s2 = sol.problem.sigma2
    above = nodes[grid.upper_index:]
    gen = np.array([
        payoff.running_cost(x)
        + 0.5 * s2 * x * x * payoff.terminal_cost_d2(x)
        - payoff.terminal_cost(x) * mean_rate
        for x in above
    ])
    viol3 = -(gen + tol.eq)
    i3 = int(np.argmax(viol3))
    cond3_violation = max(float(viol3[i3]), 0.0)
    cond3_worst_x = float(above[i3])
    cond3_ok = cond3_violation == 0.0

    # condition (IV): smooth fit at the lower threshold, analytic one-sided
    fit_left, fit_right = sol.J_prime_pair_at_lower()
    cond4_ok = bool(abs(fit_left) <= tol.fit and abs(fit_right) <= tol.fit)

    # auxiliary: randomization-region ODE residual and derivative jumps
    if sol.regime is Regime.MIXED:
        inside = nodes[(nodes > sol.lower) & (nodes < sol.upper)]
        if inside.size == 0:
            inside = np.array([0.5 * (sol.lower + sol.upper)])
        residual_sup = max(
            max(abs(r) for r in ansatz_residual(sol, float(x))) for x in inside
        )
        ode_scale = max(1.0, sol.upper)
        ode_ok = residual_sup <= tol.ode * ode_scale
        jumps = jump_check(sol)
        jump_scale = max(1.0, K / sol.lower)
        jump_ok = all(r <= tol.jump * jump_scale for r in jumps)
    else:
        residual_sup = 0.0
        ode_ok = True
        jumps = (0.0, 0.0)
        jump_ok = True

    if fd:
        fd_res = fd_solve_w(sol.problem, sol.strategy, grid)
        exact = np.array([[sol.w(float(x), i) for x in nodes] for i in (1, 2)])
        fd_max_rel = float(np.max(np.abs(fd_res.values - exact) / np.abs(exact)))
        fd_ok = fd_max_rel <= tol.fd_rtol
    else:
        fd_max_rel = 0.0
        fd_ok = True

    notes = (
        "continuity and curvature are sampled on a grid; this is necessary, "
        "not sufficient, for the regularity the sufficiency argument assumes",
    )
    return ConditionReport(
        cond1_ok=cond1_ok,
        cond1_violation=cond1_violation,
        cond1_worst_x=float(below[i1]),
        cond1_layer=float(layer),
        cond2_ok=cond2_ok,
        cond2_violation=cond2_violation,
        cond2_worst_x=cond2_worst_x,
        cond3_ok=cond3_ok,
        cond3_violation=cond3_violation,
        cond3_worst_x=cond3_worst_x,
        cond4_ok=cond4_ok,
        fit_left=float(fit_left),
        fit_right=float(fit_right),
        ode_residual_sup=float(residual_sup),
        ode_ok=bool(ode_ok),
        jump_residuals=tuple(float(r) for r in jumps),
        jump_ok=bool(jump_ok),
        fd_max_rel_err=fd_max_rel,
        fd_ok=bool(fd_ok),
        notes=notes,
    )


def _tangency_layer(j2: float, j3: float, floor: float) -> float:
    """Distance below the lower threshold within which the predicted value gap
    |J''| d^2/2 + |J'''| d^3/6 stays under ``floor`` (strictness unresolvable)."""
    lo, hi = 0.0, 1.0
    def gap(d: float) -> float:
        return 0.5 * j2 * d * d + j3 * d ** 3 / 6.0
    if gap(hi) < floor:
        return hi
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if gap(mid) < floor:
            lo = mid
        else:
            hi = mid
    return hi


# --------------------------------------------------------------------------- #
# Residual diagnostics
# --------------------------------------------------------------------------- #

def ansatz_residual(sol: EquilibriumSolution, x: float) -> tuple[float, float]:
    """(simplified, full) ODE residuals at ``x`` in the open randomization region.

    simplified:  f(x) + A g(x) - sum_k p_k r_k w_k(x)
    full:        f(x) + A J(x) - sum_k p_k r_k w_k(x) - lambda(x) (J(x) - g(x))
    """
    if sol.regime is not Regime.MIXED:
        raise RegimeError("ansatz residual is defined for the mixed regime")
    if not (sol.lower < x < sol.upper):
        raise ValueError(f"x={x} outside the open randomization region "
                         f"({sol.lower}, {sol.upper})")
    prob = sol.problem
    p, K = prob.p, prob.strike
    rate_sum = p * prob.r1 * sol.w(x, 1) + (1.0 - p) * prob.r2 * sol.w(x, 2)
    simplified = x - rate_sum
    a_j = 0.5 * prob.sigma2 * x * x * sol.J_second(x)
    lam = sol.strategy.lam(x)
    full = x + a_j - rate_sum - lam * (sol.J(x) - K)
    return (simplified, full)


def jump_check(sol: EquilibriumSolution) -> tuple[float, float]:
    """|w'(x_low+, r_i) - w'(x_low-, r_i) - 2 push (w(x_low, r_i) - K)| per rate."""
    if sol.regime is not Regime.MIXED:
        raise RegimeError("the derivative-jump relation applies to the mixed regime")
    K = sol.problem.strike
    push = sol.strategy.push
    out = []
    for i in (1, 2):
        left, right = sol.w_prime_pair_at_lower(i)
        out.append(abs(right - left - 2.0 * push * (sol.w(sol.lower, i) - K)))
    return (out[0], out[1])


# --------------------------------------------------------------------------- #
# Finite-difference oracle for the per-rate value functions
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class FDResult:
    values: np.ndarray            # (2, n_nodes)
    cap_applied: bool
    cap_sensitivity: float        # sup change when the cap is halved (0 if unused)


def fd_solve_w(problem: RealOptionProblem, strategy: MixedThresholdStrategy,
               grid: Grid, lam_cap: float = LAMBDA_CAP) -> FDResult:
    """Solve the per-rate boundary value problem by finite differences.

    Second-order central stencils in the segment interiors, a Robin row at
    x_min annihilating the singular homogeneous mode, the derivative-jump
    interface row at the lower threshold (one-sided second-order stencils on
    both sides) and a Dirichlet value K at the sure-stop boundary.  Values
    beyond the boundary are K identically.
    """
    violations = validate(problem)
    if violations:
        raise ProblemValidationError("; ".join(violations))
    if not (math.isclose(grid.lower, strategy.lower, rel_tol=1e-12)
            and math.isclose(grid.upper, strategy.upper, rel_tol=1e-12)):
        raise ProblemValidationError("grid thresholds do not match the strategy")

    values = np.empty((2, grid.nodes.size))
    cap_applied = False
    for row, r in enumerate(problem.rates):
        h, capped = _fd_solve_single(problem, strategy, grid, r, lam_cap)
        cap_applied = cap_applied or capped
        values[row, : grid.upper_index + 1] = h
        values[row, grid.upper_index:] = problem.strike

    sensitivity = 0.0
    if cap_applied:
        for row, r in enumerate(problem.rates):
            h_half, _ = _fd_solve_single(problem, strategy, grid, r, 0.5 * lam_cap)
            sensitivity = max(
                sensitivity,
                float(np.max(np.abs(h_half - values[row, : grid.upper_index + 1]))),
            )
    return FDResult(values=values, cap_applied=cap_applied, cap_sensitivity=sensitivity)


def _fd_solve_single(problem: RealOptionProblem, strategy: MixedThresholdStrategy,
                     grid: Grid, r: float, lam_cap: float) -> tuple[np.ndarray, bool]:
    nodes = grid.nodes
    m = grid.upper_index
    j = grid.lower_index
    x = nodes[: m + 1]
    n = m + 1
    s2 = problem.sigma2
    K = problem.strike
    al = alpha(r, s2)
    pure = strategy.is_pure

    A = sp.lil_matrix((n, n))
    rhs = np.zeros(n)

    # Robin row at x_min: h' - (al/x) h = (1 - al)/r, one-sided second order.
    dl = x[1] - x[0]
    A[0, 0] = -3.0 / (2.0 * dl) - al / x[0]
    A[0, 1] = 4.0 / (2.0 * dl)
    A[0, 2] = -1.0 / (2.0 * dl)
    rhs[0] = (1.0 - al) / r

    capped = False
    for k in range(1, m):
        if k == j and not pure:
            continue
        if k < j:
            lam_k = 0.0
            dk = dl
        else:
            dk = x[k + 1] - x[k]
            lam_k = strategy.lam(float(x[k]))
            if lam_k > lam_cap:
                lam_k = lam_cap
                capped = True
        diff = 0.5 * s2 * x[k] * x[k]
        A[k, k - 1] = diff / (dk * dk)
        A[k, k] = -2.0 * diff / (dk * dk) - r - lam_k
        A[k, k + 1] = diff / (dk * dk)
        rhs[k] = -x[k] - lam_k * K

    if not pure:
        # interface row: h'(lower+) - h'(lower-) - 2 push h = -2 push K
        dr = x[j + 1] - x[j]
        push = strategy.push
        A[j, j - 2] = -1.0 / (2.0 * dl)
        A[j, j - 1] = 4.0 / (2.0 * dl)
        A[j, j] = -3.0 / (2.0 * dr) - 3.0 / (2.0 * dl) - 2.0 * push
        A[j, j + 1] = 4.0 / (2.0 * dr)
        A[j, j + 2] = -1.0 / (2.0 * dr)
        rhs[j] = -2.0 * push * K

    A[m, m] = 1.0
    rhs[m] = K

    try:
        h = spla.spsolve(A.tocsc(), rhs)
    except Exception as exc:  # pragma: no cover - singular systems
        raise NumericalError(
            f"finite-difference system failed for rate {r} on a {n}-node grid: {exc}"
        ) from exc
    if not np.all(np.isfinite(h)):
        raise NumericalError(
            f"finite-difference solution is not finite for rate {r} "
            f"(grid n={n}, spacing {dl:.3e})"
        )
    return h, capped


# --------------------------------------------------------------------------- #
# Smooth-fit root oracle
# --------------------------------------------------------------------------- #

def smoothfit_root(problem: RealOptionProblem, abs_tol: float = 1e-12) -> float:
    """Lower threshold as the bisection root of the mixture smooth-fit map.

    The map u -> p y1'(u) + (1-p) y2'(u) is built from the boundary data
    a_i u + b_i (power solution below, linear value at u), evaluated at u.
    Raises RootNotFoundError when the admissible bracket has no sign change,
    which signals the pure regime (or an inconsistent candidate).
    """
    violations = validate(problem)
    if violations:
        raise ProblemValidationError("; ".join(violations))
    coeffs = linear_coefficients(problem)
    s2 = problem.sigma2
    p = problem.p
    al = (alpha(problem.r1, s2), alpha(problem.r2, s2))
    ab = ((coeffs.a1, coeffs.b1), (coeffs.a2, coeffs.b2))

    def fit_map(u: float) -> float:
        total = 0.0
        for w_k, (a_i, b_i), al_i, r_i in zip(
            (p, 1.0 - p), ab, al, problem.rates
        ):
            d_i = (a_i * u + b_i - u / r_i) / u ** al_i
            total += w_k * (1.0 / r_i + al_i * d_i * u ** (al_i - 1.0))
        return total

    lo = lower_threshold_bracket(problem)
    hi = upper_threshold(problem) * (1.0 - 1e-9)
    if not lo < hi:
        raise RootNotFoundError(
            f"empty smooth-fit bracket [{lo}, {hi}] (pure regime)"
        )
    f_lo, f_hi = fit_map(lo), fit_map(hi)
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    if f_lo * f_hi > 0.0:
        raise RootNotFoundError(
            "no sign change of the smooth-fit map on "
            f"[{lo}, {hi}]: f(lo)={f_lo}, f(hi)={f_hi} (pure regime or "
            "inconsistent candidate)"
        )
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f_mid = fit_map(mid)
        if f_mid == 0.0:
            return mid
        if f_lo * f_mid < 0.0:
            hi, f_hi = mid, f_mid
        else:
            lo, f_lo = mid, f_mid
        if hi - lo <= abs_tol:
            break
    return 0.5 * (lo + hi)
