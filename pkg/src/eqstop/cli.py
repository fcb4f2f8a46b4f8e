"""Command-line surface: solve, classify, verify, simulate, figure, diagnostics.

Problem parameters come from a flat ``key: value`` config file (see
``CONFIG_KEYS`` for the schema); command flags override config entries.
Tabular output is RFC-4180-style CSV with '.' decimals and 17 significant
digits; every randomized run records its master seed in a comment-prefixed
header line.  Exit codes: 0 success/verified, 1 verification failure,
2 invalid input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, field

import numpy as np

from .core import (
    ConsistencyError,
    NumericalError,
    ProblemValidationError,
    RealOptionProblem,
    RegimeError,
    RootNotFoundError,
    validate,
)
from .closedform import Regime, regime_condition, solve
from .verify import Grid, check_conditions
from .mc import SimConfig, estimate_J, estimate_w, smalltime_diagnostics

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_INVALID = 2
EXIT_NUMERICAL = 3

# problem parameters (required), then per-command options
CONFIG_KEYS = {
    "sigma2": float,
    "K": float,
    "p": float,
    "r1": float,
    "r2": float,
    "seed": int,
    "dt": float,
    "paths": int,
    "grid": int,
    "x_min": float,
    "x_max": float,
    "t_max": float,
    "tail_mode": str,
    "tail_tol": float,
    "states": "float_list",
    "h_list": "float_list",
    "x_eval": float,
}

# solve-output keys accepted back as input (informational; values ignored)
INFO_KEYS = {
    "regime", "xlow", "xbar", "push", "lambda_at_xlow", "alpha1", "alpha2",
    "a1", "b1", "a2", "b2", "D1", "D2", "smoothfit_root",
}

_DEFAULTS = {
    "seed": 0,
    "dt": 1e-4,
    "paths": 10_000,
    "grid": 1201,
    "tail_mode": "analytic",
    "tail_tol": 1e-3,
    "h_list": (0.2, 0.1, 0.05),
    "x_eval": 2.0,
}


def fmt(value) -> str:
    """17-significant-digit text for floats; plain text otherwise."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)

    def get(self, key, default=None):
        if key in self.values:
            return self.values[key]
        if key in _DEFAULTS:
            return _DEFAULTS[key]
        return default

    def require_problem(self) -> RealOptionProblem:
        missing = [k for k in ("sigma2", "K", "p", "r1", "r2") if k not in self.values]
        if missing:
            raise ProblemValidationError(
                f"missing problem parameters: {', '.join(missing)} "
                "(supply them in --config or via solve-output re-ingestion)"
            )
        prob = RealOptionProblem(
            sigma2=self.values["sigma2"], strike=self.values["K"],
            p=self.values["p"], r1=self.values["r1"], r2=self.values["r2"],
        )
        violations = validate(prob)
        if violations:
            raise ProblemValidationError("; ".join(violations))
        return prob

    def sim_config(self) -> SimConfig:
        return SimConfig(
            dt=self.get("dt"),
            n_paths=self.get("paths"),
            master_seed=self.get("seed"),
            t_max=self.get("t_max"),
            tail_mode=self.get("tail_mode"),
            tail_tol=self.get("tail_tol"),
        )


def parse_config_text(text: str) -> dict:
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if ":" not in line:
            raise ProblemValidationError(f"config line {lineno}: expected 'key: value'")
        key, _, value = line.partition(":")
        key = key.strip()
        value = value.strip()
        if key in INFO_KEYS:
            continue
        if key not in CONFIG_KEYS:
            raise ProblemValidationError(f"config line {lineno}: unknown key {key!r}")
        kind = CONFIG_KEYS[key]
        try:
            if kind == "float_list":
                out[key] = tuple(float(v) for v in value.split(",") if v.strip())
            elif kind is str:
                out[key] = value
            else:
                out[key] = kind(value)
        except ValueError as exc:
            raise ProblemValidationError(f"config line {lineno}: {exc}") from exc
    return out


def _load_config(args) -> RunConfig:
    values: dict = {}
    if args.config:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                values.update(parse_config_text(fh.read()))
        except OSError as exc:
            raise ProblemValidationError(f"cannot read config {args.config}: {exc}") from exc
    for flag, key in (("seed", "seed"), ("dt", "dt"), ("paths", "paths"), ("grid", "grid")):
        v = getattr(args, flag, None)
        if v is not None:
            values[key] = v
    return RunConfig(values)


def _force_regime(args) -> Regime | None:
    if getattr(args, "force_pure", False) and getattr(args, "force_mixed", False):
        raise ProblemValidationError("--force-pure and --force-mixed are exclusive")
    if getattr(args, "force_pure", False):
        return Regime.PURE
    if getattr(args, "force_mixed", False):
        return Regime.MIXED
    return None


def _emit(args, lines: list[str]) -> None:
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# --------------------------------------------------------------------------- #
# Commands
# --------------------------------------------------------------------------- #

def _solution_document(cfg: RunConfig, sol) -> list[str]:
    prob = sol.problem
    from .verify import smoothfit_root

    lines = [
        f"sigma2: {fmt(prob.sigma2)}",
        f"K: {fmt(prob.strike)}",
        f"p: {fmt(prob.p)}",
        f"r1: {fmt(prob.r1)}",
        f"r2: {fmt(prob.r2)}",
        f"regime: {sol.regime.value}",
        f"xlow: {fmt(sol.lower)}",
        f"xbar: {fmt(sol.upper)}",
        f"push: {fmt(sol.strategy.push)}",
        f"lambda_at_xlow: {fmt(sol.strategy.lam(sol.lower))}",
        f"alpha1: {fmt(sol.alphas[0])}",
        f"alpha2: {fmt(sol.alphas[1])}",
        f"a1: {fmt(sol.a[0])}",
        f"b1: {fmt(sol.b[0])}",
        f"a2: {fmt(sol.a[1])}",
        f"b2: {fmt(sol.b[1])}",
        f"D1: {fmt(sol.D[0])}",
        f"D2: {fmt(sol.D[1])}",
    ]
    if sol.regime is Regime.MIXED:
        lines.append(f"smoothfit_root: {fmt(smoothfit_root(prob))}")
    return lines


def cmd_solve(args) -> int:
    cfg = _load_config(args)
    prob = cfg.require_problem()
    sol = solve(prob, force=_force_regime(args))
    _emit(args, _solution_document(cfg, sol))
    return EXIT_OK


def cmd_classify(args) -> int:
    cfg = _load_config(args)
    prob = cfg.require_problem()
    lhs, rhs = regime_condition(prob)
    regime = Regime.MIXED if lhs < rhs else Regime.PURE
    _emit(args, [
        f"regime: {regime.value}",
        f"condition_lhs: {fmt(lhs)}",
        f"condition_rhs: {fmt(rhs)}",
        f"mixed_iff: condition_lhs < condition_rhs",
    ])
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = _load_config(args)
    prob = cfg.require_problem()
    sol = solve(prob, force=_force_regime(args))
    grid = Grid.for_solution(
        sol, n_nodes=cfg.get("grid"),
        x_min=cfg.get("x_min"), x_max=cfg.get("x_max"),
    )
    report = check_conditions(sol, grid)
    lines = [f"regime: {sol.regime.value}",
             f"xlow: {fmt(sol.lower)}",
             f"xbar: {fmt(sol.upper)}"]
    lines += [f"{k}: {fmt(v)}" for k, v in report.as_flat_dict().items()]
    _emit(args, lines)
    return EXIT_OK if report.passed else EXIT_VERIFY_FAILED


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    prob = cfg.require_problem()
    sol = solve(prob, force=_force_regime(args))
    sim = cfg.sim_config()
    states = cfg.get("states")
    if not states:
        lo = 0.5 * sol.lower
        hi = 1.1 * sol.upper
        states = tuple(lo + (hi - lo) * k / 4.0 for k in range(5))
    est_j = estimate_J(prob, sol.strategy, sim, states)
    est_w1 = estimate_w(prob, sol.strategy, sim, states, 1)
    est_w2 = estimate_w(prob, sol.strategy, sim, states, 2)
    lines = [f"# master_seed: {sim.master_seed}",
             "x,J_closed,J_mc,J_se,w1_mc,w2_mc,tail_bias_bound,n_paths,dt"]
    for e, w1, w2 in zip(est_j, est_w1, est_w2):
        lines.append(",".join(fmt(v) for v in (
            e.x, sol.J(e.x), e.mean, e.se, w1.mean, w2.mean,
            e.tail_bias_bound, e.n_paths, e.dt,
        )))
    _emit(args, lines)
    return EXIT_OK


def cmd_figure(args) -> int:
    cfg = _load_config(args)
    prob = cfg.require_problem()
    sol = solve(prob, force=_force_regime(args))
    n = cfg.get("grid")
    x_min = cfg.get("x_min", 1e-3 * prob.strike)
    x_max = cfg.get("x_max", 2.0 * sol.upper)
    xs = np.linspace(x_min, x_max, n)
    lines = [f"# master_seed: {cfg.get('seed')}",
             "x,J,w1,w2,lambda,region"]
    for x in xs:
        x = float(x)
        if x < sol.lower:
            region = "continue"
        elif x < sol.upper:
            region = "randomize"
        else:
            region = "stop"
        lam = sol.strategy.lam(x) if sol.regime is Regime.MIXED else 0.0
        lines.append(",".join(fmt(v) for v in (
            x, sol.J(x), sol.w(x, 1), sol.w(x, 2), lam, region,
        )))
    _emit(args, lines)
    return EXIT_OK


def cmd_diagnostics(args) -> int:
    cfg = _load_config(args)
    prob = cfg.require_problem()
    sim = cfg.sim_config()
    x = cfg.get("x_eval")
    rows = smalltime_diagnostics(prob, x, cfg.get("h_list"), sim)
    sig_x2 = prob.sigma2 * x * x
    lines = [f"# master_seed: {sim.master_seed}",
             f"# targets: sigma_x2={fmt(sig_x2)} twice_sigma_x2={fmt(2.0 * sig_x2)}",
             "h,dt,n_paths,n_censored,mean_exit_time,"
             "h2_over_tau,h2_over_tau_se,tau2_over_tau,tau2_over_tau_se,"
             "lmean_sq_over_tau,lmean_sq_over_tau_se,tau_l_over_tau,tau_l_over_tau_se,"
             "l2_over_tau,l2_over_tau_se"]
    for r in rows:
        lines.append(",".join(fmt(v) for v in (
            r.h, r.dt, r.n_paths, r.n_censored, r.mean_exit_time,
            r.ratio_h2_tau, r.ratio_h2_tau_se,
            r.ratio_tau2_tau, r.ratio_tau2_tau_se,
            r.ratio_ltime_sq_tau, r.ratio_ltime_sq_tau_se,
            r.ratio_tau_ltime_tau, r.ratio_tau_ltime_tau_se,
            r.ratio_ltime2_tau, r.ratio_ltime2_tau_se,
        )))
    _emit(args, lines)
    return EXIT_OK


# --------------------------------------------------------------------------- #
# Entry point
# --------------------------------------------------------------------------- #

def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", metavar="PATH", help="flat key: value config file")
    shared.add_argument("--out", metavar="PATH", help="write output here instead of stdout")
    shared.add_argument("--seed", type=int, metavar="N", help="master seed")
    shared.add_argument("--dt", type=float, metavar="X", help="simulation time step")
    shared.add_argument("--paths", type=int, metavar="N", help="Monte Carlo path count")
    shared.add_argument("--grid", type=int, metavar="N", help="grid node count")
    shared.add_argument("--force-pure", action="store_true",
                        help="use the pure threshold candidate regardless of regime")
    shared.add_argument("--force-mixed", action="store_true",
                        help="use the mixed threshold candidate regardless of regime")

    parser = argparse.ArgumentParser(
        prog="eqstop",
        description="Threshold equilibria for stopping under mixed exponential discounting",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[shared],
                   help="closed-form equilibrium coefficients").set_defaults(fn=cmd_solve)
    sub.add_parser("classify", parents=[shared],
                   help="regime classification with the condition values").set_defaults(fn=cmd_classify)
    sub.add_parser("verify", parents=[shared],
                   help="grid verification of the equilibrium conditions").set_defaults(fn=cmd_verify)
    sub.add_parser("simulate", parents=[shared],
                   help="Monte Carlo cost estimates vs the closed form").set_defaults(fn=cmd_simulate)
    sub.add_parser("figure", parents=[shared],
                   help="plot-ready cost/intensity curves over a state grid").set_defaults(fn=cmd_figure)
    sub.add_parser("diagnostics", parents=[shared],
                   help="small-time exit and local-time limit checks").set_defaults(fn=cmd_diagnostics)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ProblemValidationError, RegimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (NumericalError, ConsistencyError, RootNotFoundError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
