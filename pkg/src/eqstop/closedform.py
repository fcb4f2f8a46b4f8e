"""Closed-form threshold equilibria for the driftless-GBM real-option problem.

Given ``RealOptionProblem(sigma2, K, p, r1, r2)`` the cost of stopping at tau is

    J_tau(x) = p*w_tau(x, r1) + (1-p)*w_tau(x, r2),
    w_tau(x, r) = E_x[ int_0^tau e^{-r s} X_s ds + e^{-r tau} K ].

Depending on a single inequality between mixture moments, the equilibrium is
either a randomized (mixed) threshold rule on [x_low, x_bar) with a local-time
push at x_low, or a pure threshold rule.  This module classifies the regime,
builds the candidate strategy and evaluates the per-rate cost functions w and
the mixture cost J exactly.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple

from .core import (
    ConsistencyError,
    Intensity,
    MixedThresholdStrategy,
    ProblemValidationError,
    RealOptionProblem,
    RegimeError,
    RootNotFoundError,
    validate,
)

# Relative tolerance for the i=1 vs i=2 routes to the local-time push.
PUSH_CONSISTENCY_RTOL = 1e-10
# Relative tolerance for the closed-form lower threshold vs the smooth-fit root.
SMOOTHFIT_CONSISTENCY_RTOL = 1e-8


class Regime(enum.Enum):
    MIXED = "mixed"
    PURE = "pure"


class LinearCoefficients(NamedTuple):
    a1: float
    b1: float
    a2: float
    b2: float


def _require_valid(problem: RealOptionProblem) -> None:
    violations = validate(problem)
    if violations:
        raise ProblemValidationError("; ".join(violations))


def alpha(r: float, sigma2: float) -> float:
    """Positive root of (sigma2/2) a (a - 1) = r; always > 1 for r > 0."""
    if r <= 0.0 or sigma2 <= 0.0:
        raise ValueError(f"alpha needs r > 0 and sigma2 > 0, got r={r}, sigma2={sigma2}")
    return 0.5 * (1.0 + math.sqrt(8.0 * r / sigma2 + 1.0))


def linear_coefficients(problem: RealOptionProblem) -> LinearCoefficients:
    """Per-rate linear pieces w_i(x) = a_i x + b_i on the randomization region.

    Solution of the 2x2 system  p*r1*w1 + (1-p)*r2*w2 = x,
    p*w1 + (1-p)*w2 = K  solved for (w1, w2) pointwise in x.
    """
    _require_valid(problem)
    p, r1, r2, K = problem.p, problem.r1, problem.r2, problem.strike
    a1 = 1.0 / (p * (r1 - r2))
    b1 = -r2 * K / (p * (r1 - r2))
    a2 = 1.0 / ((1.0 - p) * (r2 - r1))
    b2 = -r1 * K / ((1.0 - p) * (r2 - r1))
    return LinearCoefficients(a1, b1, a2, b2)


def regime_condition(problem: RealOptionProblem) -> tuple[float, float]:
    """(lhs, rhs) of the classification inequality; mixed iff lhs < rhs strictly.

    lhs = E[alpha(r)], rhs = E[r] * E[(alpha(r) - 1)/r] under the mixture.
    """
    _require_valid(problem)
    mix = problem.mixture()
    s2 = problem.sigma2
    lhs = mix.moment(lambda r: alpha(r, s2))
    rhs = mix.mean_rate * mix.moment(lambda r: (alpha(r, s2) - 1.0) / r)
    return lhs, rhs


def classify_regime(problem: RealOptionProblem) -> Regime:
    """Mixed iff the strict moment inequality holds; ties classify as pure."""
    lhs, rhs = regime_condition(problem)
    return Regime.MIXED if lhs < rhs else Regime.PURE


def upper_threshold(problem: RealOptionProblem) -> float:
    """Sure-stop boundary of the mixed candidate: K * E[r]."""
    _require_valid(problem)
    return problem.strike * problem.mean_rate


def lower_threshold_bracket(problem: RealOptionProblem) -> float:
    """Smallest admissible lower threshold (intensity nonnegative there)."""
    p, r1, r2, K = problem.p, problem.r1, problem.r2, problem.strike
    return r1 * r2 * K / (p * r2 + (1.0 - p) * r1)


def _lower_threshold_mixed(problem: RealOptionProblem) -> float:
    """Smooth-fit lower threshold of the mixed candidate (closed form)."""
    p, K = problem.p, problem.strike
    s2 = problem.sigma2
    a1c, b1c, a2c, b2c = linear_coefficients(problem)
    al1 = alpha(problem.r1, s2)
    al2 = alpha(problem.r2, s2)
    mix = problem.mixture()
    frac_moment = mix.moment(lambda r: (alpha(r, s2) - 1.0) / r)
    num = p * al1 * b1c + (1.0 - p) * al2 * b2c
    den = frac_moment - (p * al1 * a1c + (1.0 - p) * al2 * a2c)
    return num / den


def mixed_candidate(problem: RealOptionProblem, *, force: bool = False) -> MixedThresholdStrategy:
    """Mixed threshold candidate: thresholds, rational intensity, local-time push.

    Raises RegimeError if the regime is pure (unless ``force``), and
    ConsistencyError if the two routes to the push disagree.
    """
    _require_valid(problem)
    if classify_regime(problem) is Regime.PURE and not force:
        raise RegimeError("mixed candidate requested for pure-regime parameters")
    p, r1, r2, K = problem.p, problem.r1, problem.r2, problem.strike
    x_bar = upper_threshold(problem)
    x_low = _lower_threshold_mixed(problem)
    bracket_lo = lower_threshold_bracket(problem)
    if not (0.0 < x_low < x_bar):
        raise RegimeError(
            f"mixed candidate thresholds are not ordered: x_low={x_low}, x_bar={x_bar}"
        )
    if x_low < bracket_lo * (1.0 - 1e-12):
        raise RegimeError(
            f"mixed candidate x_low={x_low} lies below the admissible bracket {bracket_lo}"
        )

    # lambda(x) = (cross*x - r1*r2*K) / (x_bar - x) on [x_low, x_bar)
    cross = p * r2 + (1.0 - p) * r1
    intensity = Intensity.rational(slope=cross, const=r1 * r2 * K, pole=x_bar,
                                   support=(x_low, x_bar))

    push1 = _push_from_rate(problem, x_low, 1)
    push2 = _push_from_rate(problem, x_low, 2)
    denom = max(abs(push1), abs(push2), 1e-300)
    if abs(push1 - push2) > PUSH_CONSISTENCY_RTOL * denom:
        raise ConsistencyError(
            f"local-time push disagrees between rates: {push1!r} vs {push2!r}"
        )
    if push1 <= 0.0:
        raise RegimeError(f"mixed candidate push must be > 0, got {push1}")
    return MixedThresholdStrategy(lower=x_low, upper=x_bar, push=push1, intensity=intensity)


def _push_from_rate(problem: RealOptionProblem, x_low: float, i: int) -> float:
    """Local-time push from the rate-i derivative jump at x_low."""
    coeffs = linear_coefficients(problem)
    a_i, b_i = (coeffs.a1, coeffs.b1) if i == 1 else (coeffs.a2, coeffs.b2)
    r_i = problem.r1 if i == 1 else problem.r2
    al_i = alpha(r_i, problem.sigma2)
    K = problem.strike
    num = a_i - (al_i / x_low) * (a_i * x_low + b_i - x_low / r_i) - 1.0 / r_i
    den = 2.0 * (a_i * x_low + b_i - K)
    return num / den


def pure_candidate(problem: RealOptionProblem, *, force: bool = False) -> MixedThresholdStrategy:
    """Pure threshold candidate: stop at/above K * E[alpha] / E[(alpha-1)/r]."""
    _require_valid(problem)
    if classify_regime(problem) is Regime.MIXED and not force:
        raise RegimeError("pure candidate requested for mixed-regime parameters")
    mix = problem.mixture()
    s2 = problem.sigma2
    threshold = (
        problem.strike
        * mix.moment(lambda r: alpha(r, s2))
        / mix.moment(lambda r: (alpha(r, s2) - 1.0) / r)
    )
    return MixedThresholdStrategy(lower=threshold, upper=threshold)


# --------------------------------------------------------------------------- #
# Equilibrium solution: exact value functions
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class EquilibriumSolution:
    """Closed-form equilibrium with exact evaluators for w(., r_i) and J.

    Piecewise structure (both regimes share the power form below x_low):

        w_i(x) = D_i x^alpha_i + x / r_i          on (0, x_low]
        w_i(x) = a_i x + b_i                      on [x_low, x_bar]   (mixed only)
        w_i(x) = K                                on [x_bar, inf)

    with x_low == x_bar in the pure regime.  a, b are only meaningful in the
    mixed regime but are stored for both since they are parameter functions.
    """

    regime: Regime
    problem: RealOptionProblem
    strategy: MixedThresholdStrategy
    alphas: tuple[float, float]
    a: tuple[float, float]
    b: tuple[float, float]
    D: tuple[float, float]

    # -- basic accessors ---------------------------------------------------- #

    @property
    def lower(self) -> float:
        return self.strategy.lower

    @property
    def upper(self) -> float:
        return self.strategy.upper

    def _rate(self, i: int) -> float:
        if i not in (1, 2):
            raise ValueError(f"rate index must be 1 or 2, got {i}")
        return self.problem.r1 if i == 1 else self.problem.r2

    def _check_state(self, x: float) -> None:
        if not (x > 0.0 and math.isfinite(x)):
            raise ValueError(f"state must be a finite positive number, got {x}")

    # -- per-rate cost w ----------------------------------------------------- #

    def w(self, x: float, i: int) -> float:
        self._check_state(x)
        r = self._rate(i)
        al = self.alphas[i - 1]
        if x < self.lower:
            return self.D[i - 1] * x ** al + x / r
        if x < self.upper:
            return self.a[i - 1] * x + self.b[i - 1]
        return self.problem.strike

    def w_prime(self, x: float, i: int, side: int = 0) -> float:
        """Derivative of w(., r_i); ``side=-1/+1`` selects the one-sided limit
        at the kink points x_low and x_bar, where side=0 raises."""
        self._check_state(x)
        r = self._rate(i)
        al = self.alphas[i - 1]
        below = self.D[i - 1] * al * x ** (al - 1.0) + 1.0 / r
        mid = self.a[i - 1] if not self.strategy.is_pure else 0.0
        if x == self.lower or (x == self.upper and not self.strategy.is_pure):
            if side == 0:
                raise ValueError(
                    "w is kinked here; ask for a one-sided derivative (side=-1 or +1)"
                )
            if x == self.lower:
                return below if side < 0 else mid
            return self.a[i - 1] if side < 0 else 0.0
        if x < self.lower:
            return below
        if x < self.upper:
            return mid
        return 0.0

    def w_prime_pair_at_lower(self, i: int) -> tuple[float, float]:
        return (self.w_prime(self.lower, i, side=-1), self.w_prime(self.lower, i, side=+1))

    # -- mixture cost J ------------------------------------------------------ #

    def J(self, x: float) -> float:
        p = self.problem.p
        return p * self.w(x, 1) + (1.0 - p) * self.w(x, 2)

    def J_prime(self, x: float, side: int = 0) -> float:
        p = self.problem.p
        if x == self.lower or x == self.upper:
            if side == 0:
                raise ValueError(
                    "one-sided derivatives are reported at the thresholds; pass side"
                )
        return p * self.w_prime(x, 1, side) + (1.0 - p) * self.w_prime(x, 2, side)

    def J_prime_pair_at_lower(self) -> tuple[float, float]:
        return (self.J_prime(self.lower, side=-1), self.J_prime(self.lower, side=+1))

    def J_second(self, x: float) -> float:
        """Analytic J'' away from the thresholds (linear terms drop out)."""
        self._check_state(x)
        if x >= self.lower:
            return 0.0
        p = self.problem.p
        out = 0.0
        for w_k, i in ((p, 0), (1.0 - p, 1)):
            al = self.alphas[i]
            out += w_k * self.D[i] * al * (al - 1.0) * x ** (al - 2.0)
        return out

    def J_third(self, x: float) -> float:
        self._check_state(x)
        if x >= self.lower:
            return 0.0
        p = self.problem.p
        out = 0.0
        for w_k, i in ((p, 0), (1.0 - p, 1)):
            al = self.alphas[i]
            out += w_k * self.D[i] * al * (al - 1.0) * (al - 2.0) * x ** (al - 3.0)
        return out


def _solution_from_strategy(problem: RealOptionProblem, regime: Regime,
                            strategy: MixedThresholdStrategy) -> EquilibriumSolution:
    coeffs = linear_coefficients(problem)
    al = (alpha(problem.r1, problem.sigma2), alpha(problem.r2, problem.sigma2))
    x_low = strategy.lower
    K = problem.strike
    if regime is Regime.MIXED:
        boundary = (coeffs.a1 * x_low + coeffs.b1, coeffs.a2 * x_low + coeffs.b2)
    else:
        boundary = (K, K)
    D = tuple(
        (boundary[i] - x_low / r) / x_low ** al[i]
        for i, r in enumerate(problem.rates)
    )
    return EquilibriumSolution(
        regime=regime,
        problem=problem,
        strategy=strategy,
        alphas=al,
        a=(coeffs.a1, coeffs.a2),
        b=(coeffs.b1, coeffs.b2),
        D=D,  # type: ignore[arg-type]
    )


def solve(problem: RealOptionProblem, force: Regime | None = None) -> EquilibriumSolution:
    """Classify the regime, build the candidate and package the exact solution.

    Mixed solves are cross-checked against the smooth-fit root oracle; a
    mismatch beyond SMOOTHFIT_CONSISTENCY_RTOL aborts with a diagnostic.
    """
    _require_valid(problem)
    regime = force if force is not None else classify_regime(problem)
    if regime is Regime.MIXED:
        strategy = mixed_candidate(problem, force=force is not None)
        from . import verify  # deferred: verify imports this module

        try:
            root = verify.smoothfit_root(problem)
        except RootNotFoundError as exc:
            raise ConsistencyError(
                f"smooth-fit root not found for a mixed-regime solve: {exc}"
            ) from exc
        if abs(root - strategy.lower) > SMOOTHFIT_CONSISTENCY_RTOL * abs(strategy.lower):
            raise ConsistencyError(
                "closed-form lower threshold disagrees with the smooth-fit root: "
                f"{strategy.lower!r} vs {root!r}"
            )
    else:
        strategy = pure_candidate(problem, force=force is not None)
    return _solution_from_strategy(problem, regime, strategy)


# Functional aliases over the solution object.

def value_w(sol: EquilibriumSolution, x: float, i: int) -> float:
    return sol.w(x, i)


def value_J(sol: EquilibriumSolution, x: float) -> float:
    return sol.J(x)


def value_J_prime(sol: EquilibriumSolution, x: float, side: int = 0) -> float:
    return sol.J_prime(x, side)
