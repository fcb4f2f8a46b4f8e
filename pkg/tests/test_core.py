"""Domain types: mixture arithmetic, validation, strategy invariants."""

import math

import numpy as np
import pytest

from eqstop import (
    DiscountMixture,
    GeneralMixedStrategy,
    Intensity,
    MixedThresholdStrategy,
    ProblemValidationError,
    RealOptionProblem,
    validate,
)

FIG1A = dict(sigma2=0.2, strike=3.0, p=0.5, r1=0.2, r2=2.0)


def test_discount_at_zero_is_one():
    mix = DiscountMixture((0.5, 0.5), (0.2, 2.0))
    assert mix.discount_eval(0.0) == 1.0


def test_discount_two_point_value():
    mix = DiscountMixture((0.5, 0.5), (0.2, 2.0))
    expected = 0.5 * math.exp(-0.2) + 0.5 * math.exp(-2.0)
    assert mix.discount_eval(1.0) == pytest.approx(expected, rel=1e-15)


def test_single_point_mixture_reduces_to_exponential():
    mix = DiscountMixture((1.0,), (0.7,))
    for t in (0.0, 0.3, 2.5, 10.0):
        assert mix.discount_eval(t) == pytest.approx(math.exp(-0.7 * t), rel=1e-15)


def test_discount_rejects_negative_time():
    mix = DiscountMixture((1.0,), (0.7,))
    with pytest.raises(ValueError):
        mix.discount_eval(-1e-9)


def test_discount_strictly_decreasing_on_random_grid():
    rng = np.random.default_rng(7)
    mix = DiscountMixture((0.3, 0.45, 0.25), (0.1, 0.9, 3.0))
    ts = np.sort(rng.uniform(0.0, 20.0, size=200))
    vals = [mix.discount_eval(t) for t in ts]
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_discount_bracketing_between_extreme_rates():
    rng = np.random.default_rng(8)
    mix = DiscountMixture((0.2, 0.5, 0.3), (0.15, 0.8, 2.4))
    for t in rng.uniform(0.0, 30.0, size=100):
        h = mix.discount_eval(t)
        assert math.exp(-2.4 * t) <= h <= math.exp(-0.15 * t)


def test_moment_examples():
    mix = DiscountMixture((0.5, 0.5), (0.2, 2.0))
    assert mix.moment(lambda r: r) == pytest.approx(1.1, rel=1e-15)
    assert mix.moment(lambda r: 1.0) == pytest.approx(1.0, rel=1e-15)
    mix2 = DiscountMixture((0.5, 0.5), (0.2, 0.8))
    assert mix2.moment(lambda r: r) == pytest.approx(0.5, rel=1e-15)


def test_moment_linearity():
    rng = np.random.default_rng(9)
    mix = DiscountMixture((0.25, 0.25, 0.5), (0.3, 1.1, 2.2))
    for _ in range(20):
        a, b = rng.normal(size=2)
        f1 = lambda r: r * r
        f2 = lambda r: math.log1p(r)
        combo = mix.moment(lambda r: a * f1(r) + b * f2(r))
        assert combo == pytest.approx(a * mix.moment(f1) + b * mix.moment(f2), rel=1e-12, abs=1e-14)


@pytest.mark.parametrize("weights,rates", [
    ((0.5, 0.6), (0.2, 2.0)),       # weights do not sum to 1
    ((0.5, 0.5), (2.0, 0.2)),       # rates not increasing
    ((0.5, 0.5), (0.2, 0.2)),       # rates tie
    ((1.0, 0.0), (0.2, 2.0)),       # zero weight
    ((0.5, 0.5), (-0.1, 2.0)),      # negative rate
])
def test_mixture_invariants_rejected(weights, rates):
    with pytest.raises(ProblemValidationError):
        DiscountMixture(weights, rates)


def test_validate_fig1a_ok():
    assert validate(RealOptionProblem(**FIG1A)) == []


def test_validate_p_boundary():
    bad = RealOptionProblem(sigma2=0.2, strike=3.0, p=1.0, r1=0.2, r2=2.0)
    msgs = validate(bad)
    assert len(msgs) == 1 and "p must lie" in msgs[0]


def test_validate_equal_rates():
    bad = RealOptionProblem(sigma2=0.2, strike=3.0, p=0.5, r1=0.8, r2=0.8)
    msgs = validate(bad)
    assert any("strictly increasing" in m for m in msgs)


def test_validate_collects_multiple_violations():
    bad = RealOptionProblem(sigma2=-1.0, strike=0.0, p=2.0, r1=0.5, r2=0.1)
    msgs = validate(bad)
    assert len(msgs) >= 4


def test_problem_induces_gbm_diffusion_and_payoff():
    prob = RealOptionProblem(**FIG1A)
    diff = prob.diffusion()
    assert diff.drift(1.7) == 0.0
    assert diff.volatility(2.0) == pytest.approx(math.sqrt(0.2) * 2.0, rel=1e-15)
    assert (diff.lo, diff.hi) == (0.0, math.inf)
    pay = prob.payoff()
    assert pay.running_cost(1.3) == 1.3
    assert pay.terminal_cost(5.0) == 3.0
    assert pay.terminal_cost_d1(5.0) == 0.0
    assert pay.terminal_cost_d2(5.0) == 0.0


def test_mixture_accessor_requires_valid_problem():
    bad = RealOptionProblem(sigma2=0.2, strike=3.0, p=1.5, r1=0.2, r2=2.0)
    with pytest.raises(ProblemValidationError):
        bad.mixture()


def test_pure_threshold_strategy_carries_nothing():
    s = MixedThresholdStrategy(lower=2.0, upper=2.0)
    assert s.is_pure and s.push == 0.0 and s.lam(1.9) == 0.0
    with pytest.raises(ProblemValidationError):
        MixedThresholdStrategy(lower=2.0, upper=2.0, push=0.5)


def test_threshold_strategy_intensity_support():
    lam = Intensity.constant(2.0, support=(1.0, 3.0))
    s = MixedThresholdStrategy(lower=1.0, upper=3.0, push=0.4, intensity=lam)
    assert s.lam(0.5) == 0.0
    assert s.lam(1.0) == 2.0
    assert s.lam(2.9) == 2.0
    assert s.lam(3.0) == 0.0
    assert s.lam(10.0) == 0.0


def test_general_strategy_validation():
    with pytest.raises(ProblemValidationError):
        GeneralMixedStrategy(region=((1.0, 1.0),))
    with pytest.raises(ProblemValidationError):
        GeneralMixedStrategy(region=((0.0, 2.0),), push_points=(3.0,), push_weights=(1.0,))
    with pytest.raises(ProblemValidationError):
        GeneralMixedStrategy(region=((0.0, 2.0),), push_points=(1.0,), push_weights=(0.0,))
    g = GeneralMixedStrategy(region=((0.0, 2.0), (3.0, 4.0)))
    assert g.contains(1.0) and not g.contains(2.5) and g.contains(3.5)


def test_threshold_as_general_round_trip():
    lam = Intensity.rational(1.1, 1.2, 3.3, support=(2.7, 3.3))
    s = MixedThresholdStrategy(lower=2.7, upper=3.3, push=0.9, intensity=lam)
    g = s.as_general(0.0)
    assert g.region == ((0.0, 3.3),)
    assert g.push_points == (2.7,) and g.push_weights == (0.9,)
    assert g.intensity(3.0) == pytest.approx(s.lam(3.0), rel=1e-15)
