"""Batch front-end: parse inputs, dispatch computations, emit reports.

Exit codes: 0 success, 2 input/validation failure, 3 numeric nonconvergence
(a partial trace is still emitted).  All exact values serialize as "p/q"
strings and every numeric field is listed in the report's "provenance" map as
"exact", "quadrature(tol)" or "bisection(tol)".  Output is deterministic for
a fixed configuration.
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction

import numpy as np

from . import bergman, soliton, thresholds
from .bergman import BalancedOptions, NumericError, ThresholdProbeOptions
from .inputs import ProblemInput, load_problem
from .quadrature import QuadratureError
from .rationals import format_rational
from .toric import (
    DivisibilityError,
    FanInputError,
    Polarization,
    PolarizationError,
    validate_fan,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERIC = 3


def _emit(args, payload: dict) -> None:
    if getattr(args, "compact", False):
        sys.stdout.write(json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n")
    else:
        sys.stdout.write(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _require_polarization(problem: ProblemInput) -> Polarization:
    if problem.polarization is None:
        raise FanInputError("this command needs a 'polarization' block")
    return problem.polarization


def _parse_m_range(spec: str) -> list[int]:
    if ".." in spec:
        a, b = spec.split("..", 1)
        lo, hi = int(a), int(b)
        if hi < lo:
            raise ValueError("empty m range")
        return list(range(lo, hi + 1))
    return [int(x) for x in spec.split(",") if x]


def cmd_validate(args) -> int:
    problem = load_problem(args.input)
    report = validate_fan(problem.fan)
    _emit(
        args,
        {
            "command": "validate",
            "input_sha256": problem.sha256,
            "ok": report.ok,
            "failures": list(report.failures),
        },
    )
    return EXIT_OK if report.ok else EXIT_VALIDATION


def cmd_delta(args) -> int:
    problem = load_problem(args.input)
    pol = _require_polarization(problem)
    report = thresholds.delta_bracket(problem.fan, pol, args.m)
    payload = {
        "command": "delta",
        "input_sha256": problem.sha256,
        **report.to_jsonable(),
        "provenance": {
            "delta_m": "exact",
            "delta_m_T": "exact",
            "s_L": "exact",
            "lower": "exact",
            "upper": "exact",
            "per_ray": "exact",
        },
    }
    _emit(args, payload)
    return EXIT_OK


def cmd_delta_sweep(args) -> int:
    problem = load_problem(args.input)
    pol = _require_polarization(problem)
    ms = _parse_m_range(args.m)
    reports = thresholds.delta_sweep(problem.fan, pol, ms)
    if args.format == "tsv":
        sys.stdout.write(thresholds.sweep_tsv(reports))
    else:
        _emit(
            args,
            {
                "command": "delta-sweep",
                "input_sha256": problem.sha256,
                "rows": [r.to_jsonable() for r in reports],
                "provenance": {"rows": "exact"},
            },
        )
    return EXIT_OK


def cmd_limit(args) -> int:
    problem = load_problem(args.input)
    pol = _require_polarization(problem)
    value = thresholds.delta_limit(problem.fan, pol)
    _emit(
        args,
        {
            "command": "limit",
            "input_sha256": problem.sha256,
            "delta_limit": format_rational(value),
            "provenance": {"delta_limit": "exact"},
        },
    )
    return EXIT_OK


def cmd_soliton(args) -> int:
    problem = load_problem(args.input)
    pol = problem.polarization or Polarization.anticanonical(problem.fan)
    rows = []
    if args.sweep:
        for m in _parse_m_range(args.sweep):
            sol = soliton.solve_soliton(problem.fan, pol, mode="quantized", m=m, tol=args.tol)
            rows.append({"m": m, "xi": list(sol.xi), "residual": sol.residual})
    sol = soliton.solve_soliton(problem.fan, pol, mode=args.mode, m=args.m, tol=args.tol)
    payload = {
        "command": "soliton",
        "input_sha256": problem.sha256,
        "mode": args.mode,
        "m": args.m if args.mode == "quantized" else None,
        "xi": list(sol.xi),
        "residual": sol.residual,
        "iterations": sol.iterations,
        "provenance": {"xi": f"newton({args.tol:g})", "delta_g_m": "exact-weighted(128-bit)"},
    }
    if args.mode == "quantized":
        wd, _ = soliton.soliton_weighted_delta(problem.fan, args.m, tol=args.tol)
        payload["delta_g_m"] = float(wd)
    if rows:
        payload["sweep"] = rows
    if args.format == "tsv":
        lines = ["m\t" + "\t".join(f"xi{i}" for i in range(problem.fan.dim))]
        for row in rows or [{"m": args.m, "xi": list(sol.xi)}]:
            lines.append("\t".join([str(row["m"])] + [repr(c) for c in row["xi"]]))
        sys.stdout.write("\n".join(lines) + "\n")
    else:
        _emit(args, payload)
    return EXIT_OK


def cmd_coupled(args) -> int:
    problem = load_problem(args.input)
    if not problem.coupled:
        raise FanInputError("this command needs a 'coupled' block")
    ms = _parse_m_range(args.m)
    if len(ms) == 1:
        ms = ms * len(problem.coupled)
    if len(ms) != len(problem.coupled):
        raise FanInputError("need one m per coupled polarization")
    pairs = list(zip(problem.coupled, ms))
    value = thresholds.coupled_delta(problem.fan, pairs)
    crit = thresholds.coupled_ke_criterion(problem.fan, problem.coupled)
    limit = thresholds.coupled_delta_limit(problem.fan, problem.coupled)
    _emit(
        args,
        {
            "command": "coupled",
            "input_sha256": problem.sha256,
            "m": ms,
            "coupled_delta_m": format_rational(value),
            "coupled_delta_limit": format_rational(limit),
            "ke_criterion": crit,
            "provenance": {
                "coupled_delta_m": "exact",
                "coupled_delta_limit": "exact",
                "ke_criterion": "exact",
            },
        },
    )
    return EXIT_OK


def cmd_balanced(args) -> int:
    problem = load_problem(args.input)
    pol = _require_polarization(problem)
    basis = bergman.section_basis(problem.fan, pol, args.m)
    f = bergman.bump_function(args.f_bump[0], args.f_bump[1]) if args.f_bump else None
    if args.threshold:
        popts = ThresholdProbeOptions(width=args.threshold_width)
        probe = bergman.balanced_threshold(basis, f=f, popts=popts)
        payload = {
            "command": "balanced-threshold",
            "input_sha256": problem.sha256,
            "m": args.m,
            "threshold": probe.threshold,
            "bracket": [probe.lo, probe.hi],
            "probes": [[d, s] for d, s in probe.probes],
            "inconclusive": probe.inconclusive,
            "provenance": {"threshold": f"bisection({args.threshold_width:g})"},
        }
        _emit(args, payload)
        return EXIT_NUMERIC if probe.inconclusive else EXIT_OK
    opts = BalancedOptions(
        max_iter=args.max_iter,
        tol=args.fp_tol,
        escape_gauge=args.escape,
        f_floor=-abs(args.escape),
    )
    run = bergman.balanced_iterate(basis, args.delta, f=f, opts=opts)
    payload = {
        "command": "balanced",
        "input_sha256": problem.sha256,
        "m": args.m,
        "delta": args.delta,
        "status": run.status,
        "iterations": run.iterations,
        "residual": run.residual,
        "final_log_mu": [float(v) for v in run.form.log_mu] if run.form else None,
        "trace_tail": [[j, s, fv] for j, s, fv in run.trace[-10:]],
        "provenance": {"residual": f"quadrature({args.quad_tol:g})"},
    }
    if args.trace_tsv:
        lines = ["j\td1m_step\tF_m"]
        lines += [f"{j}\t{s!r}\t{fv!r}" for j, s, fv in run.trace]
        with open(args.trace_tsv, "w") as fh:
            fh.write("\n".join(lines) + "\n")
    _emit(args, payload)
    return EXIT_OK if run.status in ("Converged", "Diverged") else EXIT_NUMERIC


def cmd_mt_threshold(args) -> int:
    problem = load_problem(args.input)
    pol = _require_polarization(problem)
    basis = bergman.section_basis(problem.fan, pol, args.m)
    if args.ray is not None:
        rays = [args.ray]
    else:
        rays = list(range(len(problem.fan.rays)))
    per_ray = {}
    table = {}
    for i in rays:
        val = thresholds.ToricValuation.of(problem.fan.rays[i], is_fan_ray=True)
        ray = bergman.ray_from_valuation(basis, val)
        per_ray[str(i)] = bergman.mt_threshold(basis, ray, rel_tol=args.quad_tol_delta)
        if args.slope_tsv:
            fit = bergman.mt_slope(basis, ray, delta=1.0, t_max=args.t_max)
            table[i] = fit
    estimate = min(per_ray.values())
    exact, witness = thresholds.torus_delta(problem.fan, pol, args.m)
    payload = {
        "command": "mt-threshold",
        "input_sha256": problem.sha256,
        "m": args.m,
        "delta_A_m_estimate": estimate,
        "per_ray": per_ray,
        "exact_delta_m_T": format_rational(exact),
        "relative_gap": abs(estimate - float(exact)) / float(exact),
        "provenance": {
            "delta_A_m_estimate": f"bisection({args.quad_tol_delta:g})",
            "exact_delta_m_T": "exact",
        },
    }
    if args.slope_tsv:
        lines = ["ray\tt\tlog_I"]
        for i, fit in table.items():
            for t, li in zip(fit.ts, fit.log_integrals):
                lines.append(f"{i}\t{t!r}\t{li!r}")
        with open(args.slope_tsv, "w") as fh:
            fh.write("\n".join(lines) + "\n")
    _emit(args, payload)
    return EXIT_OK


def cmd_selftest(args) -> int:
    rng = np.random.default_rng(args.seed)
    problem = load_problem(args.input)
    pol = _require_polarization(problem)
    fan = problem.fan
    delta_t, _ = thresholds.torus_delta(fan, pol, args.m)
    worst = None
    for trial in range(args.cases):
        ci = int(rng.integers(0, len(fan.max_cones)))
        val = thresholds.random_cone_valuation(fan, ci, rng)
        a = thresholds.log_discrepancy(fan, val)
        s = thresholds.expected_vanishing_order(fan, pol, args.m, val)
        if s <= 0:
            continue
        ratio = a / s
        if worst is None or ratio < worst:
            worst = ratio
        if ratio < delta_t:
            _emit(args, {"command": "selftest", "ok": False, "counterexample": [str(c) for c in val.v]})
            return EXIT_NUMERIC
    _emit(
        args,
        {
            "command": "selftest",
            "input_sha256": problem.sha256,
            "ok": True,
            "cases": args.cases,
            "seed": args.seed,
            "delta_m_T": format_rational(delta_t),
            "worst_ratio": format_rational(worst) if worst is not None else None,
            "provenance": {"delta_m_T": "exact", "worst_ratio": "exact"},
        },
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="toricstab",
        description="Stability thresholds and balanced-metric probes for toric Fanos.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--compact", action="store_true", help="compact JSON output")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_parser(name: str, **kw):
        return sub.add_parser(name, parents=[common], **kw)

    p = add_parser("validate", help="validate a fan input file")
    p.add_argument("input")
    p.set_defaults(fn=cmd_validate)

    p = add_parser("delta", help="exact level-m threshold bracket")
    p.add_argument("input")
    p.add_argument("--m", type=int, required=True)
    p.set_defaults(fn=cmd_delta)

    p = add_parser("delta-sweep", help="threshold bracket over a range of m")
    p.add_argument("input")
    p.add_argument("--m", required=True, help="range a..b or comma list")
    p.add_argument("--format", choices=("tsv", "json"), default="tsv")
    p.set_defaults(fn=cmd_delta_sweep)

    p = add_parser("limit", help="exact large-m limit threshold")
    p.add_argument("input")
    p.set_defaults(fn=cmd_limit)

    p = add_parser("soliton", help="solve for the soliton weight vector")
    p.add_argument("input")
    p.add_argument("--mode", choices=("quantized", "continuous"), default="quantized")
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--sweep", help="comma list or a..b of quantized levels")
    p.add_argument("--format", choices=("json", "tsv"), default="json")
    p.set_defaults(fn=cmd_soliton)

    p = add_parser("coupled", help="coupled threshold for a decomposition")
    p.add_argument("input")
    p.add_argument("--m", required=True, help="one m or comma list, per bundle")
    p.set_defaults(fn=cmd_coupled)

    p = add_parser("balanced", help="balanced-metric iteration / threshold probe")
    p.add_argument("input")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--delta", type=float, default=1.0)
    p.add_argument("--threshold", action="store_true", help="bisect the coercivity threshold")
    p.add_argument("--threshold-width", type=float, default=0.02)
    p.add_argument("--f-bump", type=float, nargs=2, metavar=("HEIGHT", "WIDTH"))
    p.add_argument("--max-iter", type=int, default=60000)
    p.add_argument("--fp-tol", type=float, default=1e-10)
    p.add_argument("--quad-tol", type=float, default=1e-9)
    p.add_argument("--escape", type=float, default=1e3)
    p.add_argument("--trace-tsv", help="write the (j, d1m, F_m) trace to a TSV file")
    p.set_defaults(fn=cmd_balanced)

    p = add_parser("mt-threshold", help="Moser-Trudinger slope threshold per ray")
    p.add_argument("input")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--ray", type=int)
    p.add_argument("--t-max", type=float, default=None)
    p.add_argument("--quad-tol-delta", type=float, default=1e-3)
    p.add_argument("--slope-tsv", help="write (ray, t, log I) rows to a TSV file")
    p.set_defaults(fn=cmd_mt_threshold)

    p = add_parser("selftest", help="randomized mediant-bound property check")
    p.add_argument("input")
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--cases", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_selftest)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (FanInputError, PolarizationError, DivisibilityError, ValueError) as exc:
        sys.stdout.write(json.dumps({"error": str(exc), "exit": EXIT_VALIDATION}) + "\n")
        return EXIT_VALIDATION
    except (NumericError, QuadratureError, soliton.SolitonError) as exc:
        sys.stdout.write(json.dumps({"error": str(exc), "exit": EXIT_NUMERIC}) + "\n")
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
