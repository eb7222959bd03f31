"""Command-line front end.

Subcommands
    plan      print register choices and the constraint audit for the targets
    run       execute a configured experiment, write records + summary
    sweep     measure copies-vs-family-size scaling, write table + fit
    audit     run named analytical audits and report pass/fail
    compare   exact outcome law, brute force vs kick averaged, on one round
    dist      tabulate a protocol distribution to CSV

Output files land in --out, else $SHADOWLAB_OUT_DIR, else the working
directory; report-style subcommands also render a PNG next to each table
unless --no-plot is given.

Exit codes: 0 success, 1 invalid input or failed audit, 2 infeasible plan,
3 refused resource budget.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from shadowlab import distributions, harness, protocol
from shadowlab.audits import AUDIT_REGISTRY
from shadowlab.engines import kickback as engine_kickback
from shadowlab.errors import BudgetExceededError, InfeasiblePlanError
from shadowlab.harness import ExperimentConfig


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad flags; this project reserves 2 for infeasible
    plans, so usage errors are remapped to 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _parse_constants(pairs) -> dict:
    known = {f.name for f in fields(protocol.ProtocolConstants)}
    out = {}
    for pair in pairs or ():
        name, sep, value = pair.partition("=")
        if not sep or name not in known:
            raise ValueError(f"--const expects name=value with name in {sorted(known)}")
        out[name] = float(value)
    return out


def _add_config_flags(sub, include_engine: bool = True):
    sub.add_argument("--config", help="JSON experiment config to start from")
    sub.add_argument("--d", type=int, help="system dimension")
    sub.add_argument("--m", type=int, help="number of observables")
    sub.add_argument("--povm-kind", choices=harness.POVM_KINDS, dest="povm_kind")
    sub.add_argument("--povm-file", action="append", dest="povm_files",
                     help="matrix file; repeat m times with --povm-kind from-file")
    sub.add_argument("--state-kind", choices=harness.STATE_KINDS, dest="state_kind")
    sub.add_argument("--state-file", dest="state_file")
    sub.add_argument("--algorithm", choices=harness.ALGORITHMS)
    sub.add_argument("--epsilon", type=float)
    sub.add_argument("--delta", type=float)
    sub.add_argument("--n", type=int, help="override the planned copy count")
    sub.add_argument("--k", type=int, help="override the planned ancilla count")
    sub.add_argument("--p", type=int, help="override the planned counter width")
    sub.add_argument("--union-bound", action=argparse.BooleanOptionalAction,
                     default=None, dest="union_bound")
    sub.add_argument("--cmax-aware", action=argparse.BooleanOptionalAction,
                     default=None, dest="cmax_aware")
    sub.add_argument("--trials", type=int)
    sub.add_argument("--seed", type=int, dest="base_seed")
    sub.add_argument("--eta", type=float, help="readout flip rate in [0, 0.5)")
    sub.add_argument("--debias", action=argparse.BooleanOptionalAction, default=None)
    sub.add_argument("--const", action="append", metavar="NAME=VALUE",
                     help="override one protocol constant; repeatable")
    if include_engine:
        sub.add_argument("--engine", choices=harness.ENGINES)


_CONFIG_ATTRS = ("d", "m", "povm_kind", "povm_files", "state_kind", "state_file",
                 "algorithm", "epsilon", "delta", "n", "k", "p", "union_bound",
                 "cmax_aware", "engine", "trials", "base_seed", "eta", "debias")


def _config_from_args(args) -> ExperimentConfig:
    doc = json.loads(Path(args.config).read_text()) if args.config else {}
    for attr in _CONFIG_ATTRS:
        value = getattr(args, attr, None)
        if value is not None:
            doc[attr] = value
    consts = _parse_constants(getattr(args, "const", None))
    if consts:
        base = doc.get("constants") or {}
        if not isinstance(base, dict):
            base = dict(base)
        base.update(consts)
        doc["constants"] = base
    return ExperimentConfig.from_dict(doc)


def _out_dir(args) -> Path:
    out = getattr(args, "out", None) or os.environ.get("SHADOWLAB_OUT_DIR") or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _print_effective(config: ExperimentConfig) -> None:
    print("effective config: " + json.dumps(config.to_dict(), sort_keys=True))


def _wrote(path: Path) -> None:
    print(f"wrote {path}")


# ---------------------------------------------------------------------------
# subcommand bodies

def _cmd_plan(args) -> int:
    consts = protocol.DEFAULT_CONSTANTS.with_overrides(**_parse_constants(args.const))
    if args.algorithm == "alg1":
        plan = protocol.plan_alg1(args.m, args.epsilon, args.delta, consts,
                                  cmax=args.cmax, union_bound=args.union_bound)
    else:
        plan = protocol.plan_alg2(args.m, args.epsilon, args.delta, consts,
                                  union_bound=args.union_bound)
    print(plan.report())
    if not plan.feasible:
        return 2
    if args.resources:
        if args.algorithm != "alg1":
            raise ValueError("resource accounting is defined for the qubit protocol")
        sizes = ([int(s) for s in args.circuit_sizes.split(",")]
                 if args.circuit_sizes else [1] * args.m)
        est = protocol.estimate_resources(args.m, plan.k, plan.n, sizes, args.variant)
        print(est.report())
    return 0


def _cmd_run(args) -> int:
    config = _config_from_args(args)
    _print_effective(config)
    out = _out_dir(args)
    result = harness.run_experiment(config)
    _wrote(harness.write_records_csv(out / "records.csv", result))
    _wrote(harness.write_summary(out / "summary.json", result))
    s = result.summary
    print(f"pooled failure rate: {s['pooled_failure_rate']:.4f} "
          f"(target delta {config.delta:g})")
    print(f"simultaneous failure rate: {s['simultaneous_failure_rate']:.4f}")
    print(f"max abs error: {s['max_abs_error']:.4f} (tolerance {config.epsilon:g})")
    if s["marginal_only"]:
        print("note: sampler engines reproduce per-round marginals, not the joint law")
    if result.baseline_samples is not None:
        print(f"baseline samples per index: {result.baseline_samples}")
    if args.trajectory:
        if config.engine not in ("kickback", "marginal"):
            raise ValueError("--trajectory needs a kick-based engine")
        rho, ms, _ = harness.build_instance(config)
        plan = harness.build_plan(config, ms)
        traj = engine_kickback.trajectory_run(rho, ms, plan,
                                              np.random.default_rng(config.base_seed),
                                              eta=config.eta, debias=config.debias)
        rows = engine_kickback.trajectory_table(traj, ms, args.target,
                                                constants=config.constants)
        _wrote(harness.write_trajectory_csv(out / "trajectory.csv", rows))
        if not args.no_plot:
            from shadowlab import figures
            _wrote(figures.render_trajectory(rows, out / "trajectory.png"))
    if not args.no_plot:
        from shadowlab import figures
        _wrote(figures.render_records(result.records, config.epsilon,
                                      out / "errors.png"))
    return 0


def _cmd_sweep(args) -> int:
    config = _config_from_args(args)
    _print_effective(config)
    out = _out_dir(args)
    m_values = [int(v) for v in args.m_values.split(",")]
    sweep = harness.sweep_scaling(config, m_values, target_rate=args.target_rate,
                                  trials=args.probe_trials, n_floor=args.n_floor,
                                  n_ceiling=args.n_ceiling)
    for pt in sweep.points:
        if pt.converged:
            lo, hi = pt.band
            print(f"m={pt.m}: n={pt.n_required} rate={pt.rate:.4f} "
                  f"band=[{lo:.4f}, {hi:.4f}]")
        else:
            print(f"m={pt.m}: no n up to {args.n_ceiling} reached the target rate")
    if sweep.slope is not None:
        err = "" if sweep.slope_stderr is None else f" +- {sweep.slope_stderr:.3f}"
        print(f"log-log slope: {sweep.slope:.3f}{err} (k={sweep.k})")
    _wrote(harness.write_sweep_csv(out / "sweep.csv", sweep))
    if not args.no_plot and any(pt.converged for pt in sweep.points):
        from shadowlab import figures
        _wrote(figures.render_sweep(sweep, out / "sweep.png"))
    return 0


def _cmd_audit(args) -> int:
    kinds = sorted(AUDIT_REGISTRY) if args.kind == "all" else [args.kind]
    failed = 0
    for kind in kinds:
        report = AUDIT_REGISTRY[kind]()
        print(report.line())
        failed += not report.passed
    return 1 if failed else 0


def _cmd_compare(args) -> int:
    config = _config_from_args(args)
    _print_effective(config)
    out = _out_dir(args)
    rho, ms, _ = harness.build_instance(config)
    plan = harness.build_plan(config, ms)
    if not plan.feasible:
        raise InfeasiblePlanError("comparison needs a feasible plan; pass --n/--k")
    round_index = args.round or plan.m
    cmp = harness.engine_compare(rho, ms, plan, round_index)
    print(f"round {cmp.round_index}: tv distance = {cmp.tv:.6e}")
    path = out / "compare.csv"
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["value", "probability_full", "probability_kickback"])
        for v, a, b in zip(cmp.support, cmp.pmf_full, cmp.pmf_kickback):
            writer.writerow([v, repr(float(a)), repr(float(b))])
    _wrote(path)
    if not args.no_plot:
        from shadowlab import figures
        _wrote(figures.render_compare(cmp, out / "compare.png"))
    return 0


def _cmd_dist(args) -> int:
    out = _out_dir(args)
    if args.family == "kick-weight":
        if args.k is None:
            raise ValueError("kick-weight needs --k")
        dist = distributions.LambdaDist(args.k)
        name = f"kick_weight_k{args.k}"
    elif args.family == "counter-noise":
        if args.p is None:
            raise ValueError("counter-noise needs --p")
        dist = distributions.NoiseSDist(args.p)
        name = f"counter_noise_p{args.p}"
    else:
        if args.p is None or args.n is None:
            raise ValueError("fourier-kick needs --p and --n")
        dist = distributions.FourierLDist(args.p, args.n)
        name = f"fourier_kick_p{args.p}_n{args.n}"
    path = out / f"{name}.csv"
    dist.to_csv(path)
    _wrote(path)
    print(f"support size {len(dist.support)}, mean {dist.mean():.6g}")
    if not args.no_plot:
        from shadowlab import figures
        _wrote(figures.render_pmf(dist.support, dist.probs, name.replace("_", " "),
                                  out / f"{name}.png"))
    return 0


# ---------------------------------------------------------------------------
# parser assembly

def build_parser() -> _Parser:
    parser = _Parser(prog="shadowlab",
                     description="simulation laboratory for kickback-based "
                                 "expectation estimation")
    subs = parser.add_subparsers(dest="command", required=True)

    plan_p = subs.add_parser("plan", help="plan registers for given targets")
    plan_p.add_argument("--algorithm", choices=harness.ALGORITHMS, default="alg1")
    plan_p.add_argument("--m", type=int, required=True)
    plan_p.add_argument("--epsilon", type=float, required=True)
    plan_p.add_argument("--delta", type=float, required=True)
    plan_p.add_argument("--union-bound", action="store_true", dest="union_bound")
    plan_p.add_argument("--cmax", type=float, default=None,
                        help="largest commutator norm over the family (alg1)")
    plan_p.add_argument("--const", action="append", metavar="NAME=VALUE")
    plan_p.add_argument("--resources", action="store_true",
                        help="also print gate/ancilla accounting (alg1)")
    plan_p.add_argument("--circuit-sizes", dest="circuit_sizes",
                        help="comma-separated per-index circuit sizes")
    plan_p.add_argument("--variant", choices=protocol.RESOURCE_VARIANTS,
                        default="batch")
    plan_p.set_defaults(func=_cmd_plan)

    run_p = subs.add_parser("run", help="run a configured experiment")
    _add_config_flags(run_p)
    run_p.add_argument("--out", help="output directory")
    run_p.add_argument("--no-plot", action="store_true", dest="no_plot")
    run_p.add_argument("--trajectory", action="store_true",
                       help="also export one kick trajectory table")
    run_p.add_argument("--target", type=int, default=None,
                       help="trajectory audit target round (default: last)")
    run_p.set_defaults(func=_cmd_run)

    sweep_p = subs.add_parser("sweep", help="copies vs family size scaling")
    _add_config_flags(sweep_p, include_engine=False)
    sweep_p.add_argument("--m-values", required=True, dest="m_values",
                         help="comma-separated family sizes, e.g. 1,2,4,8")
    sweep_p.add_argument("--target-rate", type=float, default=None, dest="target_rate")
    sweep_p.add_argument("--probe-trials", type=int, default=200, dest="probe_trials")
    sweep_p.add_argument("--n-floor", type=int, default=4, dest="n_floor")
    sweep_p.add_argument("--n-ceiling", type=int, default=2**15, dest="n_ceiling")
    sweep_p.add_argument("--out", help="output directory")
    sweep_p.add_argument("--no-plot", action="store_true", dest="no_plot")
    sweep_p.set_defaults(func=_cmd_sweep)

    audit_p = subs.add_parser("audit", help="run analytical audits")
    audit_p.add_argument("--kind", choices=sorted(AUDIT_REGISTRY) + ["all"],
                         default="all")
    audit_p.set_defaults(func=_cmd_audit)

    cmp_p = subs.add_parser("compare", help="brute force vs kick-averaged law")
    _add_config_flags(cmp_p, include_engine=False)
    cmp_p.add_argument("--round", type=int, default=None,
                       help="1-based round to compare (default: last)")
    cmp_p.add_argument("--out", help="output directory")
    cmp_p.add_argument("--no-plot", action="store_true", dest="no_plot")
    cmp_p.set_defaults(func=_cmd_compare)

    dist_p = subs.add_parser("dist", help="tabulate a protocol distribution")
    dist_p.add_argument("--family", required=True,
                        choices=("kick-weight", "counter-noise", "fourier-kick"))
    dist_p.add_argument("--k", type=int)
    dist_p.add_argument("--p", type=int)
    dist_p.add_argument("--n", type=int)
    dist_p.add_argument("--out", help="output directory")
    dist_p.add_argument("--no-plot", action="store_true", dest="no_plot")
    dist_p.set_defaults(func=_cmd_dist)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:
        code = exc.code
        return code if isinstance(code, int) else 1
    except InfeasiblePlanError as exc:
        print(f"infeasible plan: {exc}", file=sys.stderr)
        return 2
    except BudgetExceededError as exc:
        print(f"budget refused: {exc}", file=sys.stderr)
        return 3
    except (ValueError, OSError, json.JSONDecodeError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
