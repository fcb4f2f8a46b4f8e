"""Domain types shared by the solver, verifier and simulator.

Everything here is an immutable value object; all operations are pure
functions, so instances can be shared freely across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable


class ProblemValidationError(ValueError):
    """Problem parameters violate a type invariant."""


class RegimeError(ValueError):
    """A candidate was requested for the wrong regime."""


class ConsistencyError(RuntimeError):
    """Two routes to the same quantity disagree beyond tolerance."""


class RootNotFoundError(RuntimeError):
    """Bracketed root search found no sign change."""


class NumericalError(RuntimeError):
    """A numerical procedure produced non-finite or singular output."""


# --------------------------------------------------------------------------- #
# Discounting
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class DiscountMixture:
    """Finite mixture of exponential discount rates.

    The discount factor is ``h(t) = sum_k weights[k] * exp(-rates[k] * t)``.
    Weights must be a probability vector and rates strictly increasing, so a
    genuine mixture (more than one rate) is a non-exponential discounter.
    """

    weights: tuple[float, ...]
    rates: tuple[float, ...]

    def __post_init__(self):
        weights = tuple(float(w) for w in self.weights)
        rates = tuple(float(r) for r in self.rates)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "rates", rates)
        if len(weights) != len(rates) or not weights:
            raise ProblemValidationError("weights and rates must be equally sized and non-empty")
        if any(w <= 0.0 for w in weights):
            raise ProblemValidationError("all mixture weights must be > 0")
        if abs(sum(weights) - 1.0) > 1e-9:
            raise ProblemValidationError("mixture weights must sum to 1")
        if any(r <= 0.0 for r in rates):
            raise ProblemValidationError("all discount rates must be > 0")
        if any(b <= a for a, b in zip(rates, rates[1:])):
            raise ProblemValidationError("discount rates must be strictly increasing")
        second_moment = sum(w * r * r for w, r in zip(weights, rates))
        if not math.isfinite(second_moment):
            raise ProblemValidationError("mixture second moment must be finite")

    @property
    def n_rates(self) -> int:
        return len(self.rates)

    def discount_eval(self, t: float) -> float:
        """Discount factor at time ``t >= 0``; equals 1 at t=0, strictly decreasing."""
        if t < 0.0:
            raise ValueError(f"discount_eval needs t >= 0, got {t}")
        return sum(w * math.exp(-r * t) for w, r in zip(self.weights, self.rates))

    def moment(self, transform: Callable[[float], float]) -> float:
        """Mixture expectation of ``transform`` over the rates."""
        return sum(w * transform(r) for w, r in zip(self.weights, self.rates))

    @property
    def mean_rate(self) -> float:
        return self.moment(lambda r: r)


# --------------------------------------------------------------------------- #
# Dynamics and payoff
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class DiffusionSpec:
    """One-dimensional diffusion dX = drift(X) dt + volatility(X) dW on (lo, hi)."""

    drift: Callable[[float], float]
    volatility: Callable[[float], float]
    lo: float = -math.inf
    hi: float = math.inf

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ProblemValidationError("state interval must satisfy lo < hi")


@dataclass(frozen=True)
class PayoffSpec:
    """Running cost f >= 0 and terminal cost g > 0 with analytic g', g''."""

    running_cost: Callable[[float], float]
    terminal_cost: Callable[[float], float]
    terminal_cost_d1: Callable[[float], float]
    terminal_cost_d2: Callable[[float], float]


@dataclass(frozen=True)
class RealOptionProblem:
    """Driftless-GBM stopping problem with constant strike and a two-rate mixture.

    Construction never raises on bad values; use :func:`validate` to collect
    violations, and the accessors below once the parameters are valid.
    """

    sigma2: float
    strike: float
    p: float
    r1: float
    r2: float

    def __post_init__(self):
        for name in ("sigma2", "strike", "p", "r1", "r2"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)

    @property
    def weights(self) -> tuple[float, float]:
        return (self.p, 1.0 - self.p)

    @property
    def rates(self) -> tuple[float, float]:
        return (self.r1, self.r2)

    @property
    def mean_rate(self) -> float:
        return self.p * self.r1 + (1.0 - self.p) * self.r2

    def mixture(self) -> DiscountMixture:
        violations = validate(self)
        if violations:
            raise ProblemValidationError("; ".join(violations))
        return DiscountMixture(self.weights, self.rates)

    def diffusion(self) -> DiffusionSpec:
        sigma = self.sigma
        return DiffusionSpec(
            drift=lambda x: 0.0,
            volatility=lambda x: sigma * x,
            lo=0.0,
            hi=math.inf,
        )

    def payoff(self) -> PayoffSpec:
        K = self.strike
        return PayoffSpec(
            running_cost=lambda x: x,
            terminal_cost=lambda x: K,
            terminal_cost_d1=lambda x: 0.0,
            terminal_cost_d2=lambda x: 0.0,
        )


def validate(problem: RealOptionProblem) -> list[str]:
    """Return the list of invariant violations (empty means the problem is valid)."""
    out: list[str] = []
    if not (problem.sigma2 > 0.0 and math.isfinite(problem.sigma2)):
        out.append(f"sigma2 must be > 0 and finite, got {problem.sigma2}")
    if not (problem.strike > 0.0 and math.isfinite(problem.strike)):
        out.append(f"strike K must be > 0 and finite, got {problem.strike}")
    if not (0.0 < problem.p < 1.0):
        out.append(f"p must lie in the open interval (0, 1), got {problem.p}")
    if not (problem.r1 > 0.0 and math.isfinite(problem.r1)):
        out.append(f"r1 must be > 0 and finite, got {problem.r1}")
    if not (problem.r2 > 0.0 and math.isfinite(problem.r2)):
        out.append(f"r2 must be > 0 and finite, got {problem.r2}")
    if problem.r1 > 0.0 and problem.r2 > 0.0 and not problem.r1 < problem.r2:
        out.append(f"rates must be strictly increasing, got r1={problem.r1}, r2={problem.r2}")
    return out


@dataclass(frozen=True)
class CustomProblem:
    """General (diffusion, payoff, mixture) bundle for the slow simulation path."""

    diffusion: DiffusionSpec
    payoff: PayoffSpec
    mix: DiscountMixture


# --------------------------------------------------------------------------- #
# Stopping strategies
# --------------------------------------------------------------------------- #

_INTENSITY_KINDS = ("zero", "constant", "rational", "callable")


@dataclass(frozen=True)
class Intensity:
    """Nonnegative state-dependent stopping intensity with a support interval.

    Outside ``support`` the intensity is identically zero.  ``rational`` is the
    family (slope*x - const) / (pole - x), which covers the closed-form
    candidate and lets the simulator evaluate it exactly in compiled code.
    """

    kind: str = "zero"
    level: float = 0.0                        # constant kind
    slope: float = 0.0                        # rational numerator slope
    const: float = 0.0                        # rational numerator constant
    pole: float = 0.0                         # rational denominator root
    fn: Callable[[float], float] | None = field(default=None, compare=False)
    support: tuple[float, float] = (-math.inf, math.inf)

    def __post_init__(self):
        if self.kind not in _INTENSITY_KINDS:
            raise ProblemValidationError(f"unknown intensity kind {self.kind!r}")
        lo, hi = self.support
        if not lo <= hi:
            raise ProblemValidationError("intensity support must satisfy lo <= hi")
        if self.kind == "callable" and self.fn is None:
            raise ProblemValidationError("callable intensity needs fn")

    @classmethod
    def zero(cls) -> "Intensity":
        return cls()

    @classmethod
    def constant(cls, level: float, support: tuple[float, float] = (-math.inf, math.inf)) -> "Intensity":
        if level < 0.0:
            raise ProblemValidationError("intensity level must be >= 0")
        return cls(kind="constant", level=float(level), support=support)

    @classmethod
    def rational(cls, slope: float, const: float, pole: float,
                 support: tuple[float, float]) -> "Intensity":
        return cls(kind="rational", slope=float(slope), const=float(const),
                   pole=float(pole), support=support)

    @classmethod
    def from_callable(cls, fn: Callable[[float], float],
                      support: tuple[float, float]) -> "Intensity":
        return cls(kind="callable", fn=fn, support=support)

    def __call__(self, x: float) -> float:
        lo, hi = self.support
        if x < lo or x >= hi:
            return 0.0
        if self.kind == "zero":
            return 0.0
        if self.kind == "constant":
            return self.level
        if self.kind == "rational":
            den = self.pole - x
            if den <= 0.0:
                return math.inf
            return (self.slope * x - self.const) / den
        return float(self.fn(x))


@dataclass(frozen=True)
class GeneralMixedStrategy:
    """Stopping rule: exit on leaving ``region``, randomize via intensity and pushes.

    ``region`` is a union of disjoint open intervals (the continuation set);
    ``push_points`` trigger singular intensity accumulation through the local
    time collected there, weighted by ``push_weights``.
    """

    region: tuple[tuple[float, float], ...]
    push_points: tuple[float, ...] = ()
    push_weights: tuple[float, ...] = ()
    intensity: Intensity = field(default_factory=Intensity.zero)

    def __post_init__(self):
        region = tuple((float(a), float(b)) for a, b in self.region)
        object.__setattr__(self, "region", region)
        object.__setattr__(self, "push_points", tuple(float(x) for x in self.push_points))
        object.__setattr__(self, "push_weights", tuple(float(w) for w in self.push_weights))
        if not region:
            raise ProblemValidationError("continuation region must be non-empty")
        for a, b in region:
            if not a < b:
                raise ProblemValidationError(f"region interval ({a}, {b}) is empty")
        for (a0, b0), (a1, b1) in zip(region, region[1:]):
            if not b0 <= a1:
                raise ProblemValidationError("region intervals must be disjoint and increasing")
        if len(self.push_points) != len(self.push_weights):
            raise ProblemValidationError("push points and weights must be equally sized")
        if any(w <= 0.0 for w in self.push_weights):
            raise ProblemValidationError("push weights must be > 0")
        for x in self.push_points:
            if not self.contains(x):
                raise ProblemValidationError(f"push point {x} lies outside the continuation region")

    def contains(self, x: float) -> bool:
        return any(a < x < b for a, b in self.region)


@dataclass(frozen=True)
class MixedThresholdStrategy:
    """Threshold rule: continue below ``lower``, stop surely at/above ``upper``,
    randomize on [lower, upper) with ``intensity`` plus a local-time push at
    ``lower``.  ``lower == upper`` degenerates to a pure threshold (no
    intensity, no push)."""

    lower: float
    upper: float
    push: float = 0.0
    intensity: Intensity = field(default_factory=Intensity.zero)

    def __post_init__(self):
        object.__setattr__(self, "lower", float(self.lower))
        object.__setattr__(self, "upper", float(self.upper))
        object.__setattr__(self, "push", float(self.push))
        if not self.lower <= self.upper:
            raise ProblemValidationError("thresholds must satisfy lower <= upper")
        if self.push < 0.0:
            raise ProblemValidationError("local-time push must be >= 0")
        if self.is_pure and (self.push != 0.0 or self.intensity.kind != "zero"):
            raise ProblemValidationError("pure threshold carries neither intensity nor push")

    @property
    def is_pure(self) -> bool:
        return self.lower == self.upper

    def lam(self, x: float) -> float:
        """Stopping intensity, zero below ``lower`` and on [upper, inf)."""
        if x < self.lower or x >= self.upper:
            return 0.0
        return self.intensity(x)

    def as_general(self, state_lo: float = 0.0) -> GeneralMixedStrategy:
        """Equivalent general strategy on the state interval (state_lo, upper)."""
        pushes = (self.lower,) if self.push > 0.0 else ()
        weights = (self.push,) if self.push > 0.0 else ()
        return GeneralMixedStrategy(
            region=((state_lo, self.upper),),
            push_points=pushes,
            push_weights=weights,
            intensity=self.intensity,
        )
