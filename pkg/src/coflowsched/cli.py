"""Command-line front end.

Stages talk through files: instance -> solution -> assignment -> trace and
summary -> report.  Exit status is 0 on success, 1 for bad input (missing
file, invalid instance, bad flag values) and 2 when an internal invariant
check fails.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .instance import InstanceError, generate_random, random_batch
from .instance import load as load_instance
from .instance import save as save_instance
from .lp import LpError, audit, dump_solution, export_lp_text, load_solution
from .pipeline import RunConfig, bound_for, round_solution, run_pipeline, solve_lp
from .rounding import load_assignment, save_assignment
from .simplex import SimplexError
from .simulator import (
    ScheduleError,
    list_schedule,
    load_trace,
    save_schedule,
    schedule_from_trace,
    validate_schedule,
)

log = logging.getLogger("coflowsched")


class InvariantError(RuntimeError):
    """Raised when a produced artifact fails its own consistency checks."""


class _Parser(argparse.ArgumentParser):
    # usage errors are input errors (status 1); 2 is kept for invariant failures
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _config(args, **paths) -> RunConfig:
    return RunConfig(
        objective=getattr(args, "objective", "wct"),
        mode=getattr(args, "mode", "det"),
        epsilon=args.epsilon,
        seed=getattr(args, "seed", 0),
        arithmetic=getattr(args, "arithmetic", "float"),
        paths={k: str(v) for k, v in paths.items() if v is not None},
    )


def _existing(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"file not found: {path}")
    return p


def cmd_gen(args) -> int:
    speeds = [int(s) for s in args.speeds.split(",")]
    inst = generate_random(
        args.ports, args.cores, args.coflows, speeds, (args.size_min, args.size_max),
        (0, args.release_max), (1, args.weight_max), seed=args.seed, density=args.density,
    )
    save_instance(inst, args.output)
    print(f"wrote {args.output}: {len(inst.flows)} flows, {inst.n} coflows, speeds {[str(s) for s in inst.speeds]}")
    return 0


def cmd_lp(args) -> int:
    inst = load_instance(_existing(args.instance))
    config = _config(args, instance=args.instance, output=args.output)
    grid, sol = solve_lp(inst, config)
    report = audit(sol.model, sol.x)
    if not report.ok:
        raise InvariantError(f"LP audit failed: {report}")
    dump_solution(sol, args.output, {"config": config.to_record(), "iterations": sol.iterations})
    if args.export_lp:
        export_lp_text(sol.model, args.export_lp)
    print(f"LP ({config.objective}) optimum {float(sol.objective):.6g}; L={grid.L}, "
          f"{sol.model.n_vars} variables, {len(sol.model.rows)} rows, {sol.iterations} pivots")
    return 0


def cmd_schedule(args) -> int:
    inst = load_instance(_existing(args.instance))
    sol = load_solution(inst, _existing(args.solution))
    config = _config(args, instance=args.instance, solution=args.solution, output=args.output)
    if sol.model.kind != config.objective:
        config = RunConfig(sol.model.kind, config.mode, config.epsilon, config.seed, config.arithmetic, config.paths)
    if config.eta != sol.grid.eta:
        log.warning("solution grid eta=%s differs from eta=%s implied by --epsilon/--mode", sol.grid.eta, config.eta)
    assignment, est = round_solution(sol, config)
    save_assignment(assignment, args.output, {"config": config.to_record()})
    if est is not None:
        if est.max_greedy_excess() > 1e-9:
            raise InvariantError("a greedy step chose a child above the weighted average")
        if args.estimator_report:
            Path(args.estimator_report).write_text(est.to_jsonl(inst.N), encoding="utf-8")
        print(f"derandomized {len(assignment.choice)} flows; estimator {est.initial:.6g} -> {est.final:.6g}")
    else:
        print(f"sampled {len(assignment.choice)} flows with seed {config.seed}")
    return 0


def cmd_simulate(args) -> int:
    inst = load_instance(_existing(args.instance))
    assignment = load_assignment(inst, _existing(args.assignment))
    exact = args.arithmetic == "exact"
    sched = list_schedule(inst, assignment, exact=exact)
    problems = validate_schedule(sched, inst, assignment)
    if problems:
        raise InvariantError("simulated schedule failed validation:\n" + "\n".join(map(str, problems[:20])))
    rec = json.loads(Path(args.assignment).read_text(encoding="utf-8")).get("config", {})
    save_schedule(sched, inst, args.trace, args.output, {"arithmetic": args.arithmetic, "config": rec, "version": __version__})
    if args.figure:
        from .plotting import gantt_figure

        gantt_figure(sched, inst, args.figure)
    summary = sched.summary(inst)
    print(f"wct {summary['wct']:g}, makespan {summary['makespan']:g}")
    return 0


def cmd_verify(args) -> int:
    inst = load_instance(_existing(args.instance))
    assignment = load_assignment(inst, _existing(args.assignment))
    sched = schedule_from_trace(load_trace(_existing(args.trace), inst.N))
    problems = [str(v) for v in validate_schedule(sched, inst, assignment)]
    if args.solution:
        sol = load_solution(inst, _existing(args.solution))
        a = audit(sol.model, sol.x)
        if not a.ok:
            problems.append(f"LP audit failed: {a}")
    if problems:
        for p in problems[:50]:
            print(p)
        print(f"{len(problems)} violation(s)")
        return 2
    print("all checks passed")
    return 0


def cmd_report(args) -> int:
    from .oracle import ratio_report

    config = _config(args, out_dir=args.out_dir)
    batch = random_batch(args.n_instances, seed=args.seed, release_max=args.release_max)
    summary = ratio_report(batch, config, jobs=args.jobs, with_opt=args.opt)
    text = summary.to_csv() if args.format == "csv" else summary.to_json()
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.csv").write_text(summary.to_csv(), encoding="utf-8")
        (out / "report.json").write_text(summary.to_json(), encoding="utf-8")
        if not args.no_figures:
            from .plotting import ratio_figure

            ratio_figure(summary, out / "ratios.png")
    sys.stdout.write(text)
    log.info("max ratio %.4f, mean %.4f, %d failure(s)", summary.max_ratio, summary.mean_ratio, len(summary.failures))
    return 0


DEMO_INSTANCE = {
    "N": 1,
    "cores": [{"speed": 1}],
    "coflows": [{"weight": 1, "release": 0, "flows": [{"src": 1, "dst": 1, "size": 2}]}],
}


def cmd_demo(args) -> int:
    from .instance import validate

    inst = validate(DEMO_INSTANCE)
    config = RunConfig(objective="wct", mode="det", epsilon=args.epsilon, arithmetic="exact")
    res = run_pipeline(inst, config)
    (f, (p, l)), = res.assignment.choice.items()
    bound = bound_for("wct", config.epsilon, inst.has_releases)
    print(f"instance: one flow, d=2, s=1, w=1, r=0; epsilon={args.epsilon:g}, eta={float(config.eta):g}, L={res.grid.L}")
    print(f"LP value: {res.lp_value:g}")
    print(f"assignment: p={p}, l={l}, t={res.assignment.stamp[f]}")
    print(f"estimator: {res.estimator.initial:g} -> {res.estimator.final:g}")
    print(f"simulated completion: {res.alg_value:g}")
    print(f"ratio: {res.ratio:.3f} (bound {bound:g})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="coflowsched", description="Coflow scheduling on heterogeneous parallel network cores.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp, objective=True, mode=True):
        if objective:
            sp.add_argument("--objective", choices=("wct", "makespan"), default="wct")
        if mode:
            sp.add_argument("--mode", choices=("det", "rand"), default="det")
        sp.add_argument("--epsilon", type=float, default=1.0)

    g = sub.add_parser("gen", help="generate a random instance")
    g.add_argument("-o", "--output", required=True)
    g.add_argument("--ports", type=int, default=3)
    g.add_argument("--cores", type=int, default=2)
    g.add_argument("--coflows", type=int, default=3)
    g.add_argument("--speeds", default="1,2,3", help="comma-separated speed choices")
    g.add_argument("--size-min", type=int, default=3)
    g.add_argument("--size-max", type=int, default=30)
    g.add_argument("--release-max", type=int, default=0)
    g.add_argument("--weight-max", type=int, default=5)
    g.add_argument("--density", type=float, default=0.5)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_gen)

    lp = sub.add_parser("lp", help="build and solve the LP relaxation")
    lp.add_argument("instance")
    lp.add_argument("-o", "--output", default="solution.json")
    lp.add_argument("--export-lp", metavar="PATH", help="also write the model in CPLEX LP format")
    lp.add_argument("--arithmetic", choices=("float", "exact"), default="float")
    common(lp)
    lp.set_defaults(func=cmd_lp)

    sc = sub.add_parser("schedule", help="round an LP solution into an assignment")
    sc.add_argument("instance")
    sc.add_argument("solution")
    sc.add_argument("-o", "--output", default="assignment.json")
    sc.add_argument("--seed", type=int, default=0)
    sc.add_argument("--estimator-report", metavar="PATH", help="JSON lines, one record per greedy step")
    common(sc, objective=False)
    sc.set_defaults(func=cmd_schedule, objective="wct")

    si = sub.add_parser("simulate", help="execute an assignment")
    si.add_argument("instance")
    si.add_argument("assignment")
    si.add_argument("-o", "--output", default="schedule.json")
    si.add_argument("--trace", default="trace.jsonl")
    si.add_argument("--figure", metavar="PNG", help="write a Gantt chart")
    si.add_argument("--arithmetic", choices=("float", "exact"), default="exact")
    si.set_defaults(func=cmd_simulate)

    ve = sub.add_parser("verify", help="audit a trace (and optionally a solution)")
    ve.add_argument("instance")
    ve.add_argument("assignment")
    ve.add_argument("trace")
    ve.add_argument("--solution")
    ve.set_defaults(func=cmd_verify)

    rp = sub.add_parser("report", help="batch ratio harness on random instances")
    rp.add_argument("--n-instances", type=int, default=100)
    rp.add_argument("--seed", type=int, default=0)
    rp.add_argument("--release-max", type=int, default=0, help="0 gives zero releases")
    rp.add_argument("--jobs", type=int, default=1)
    rp.add_argument("--format", choices=("json", "csv"), default="csv")
    rp.add_argument("--out-dir", help="write report.csv, report.json and ratios.png here")
    rp.add_argument("--no-figures", action="store_true")
    rp.add_argument("--opt", action="store_true", help="add brute-force optima where tractable")
    common(rp)
    rp.set_defaults(func=cmd_report)

    de = sub.add_parser("demo", help="the single-flow example end to end")
    de.add_argument("--epsilon", type=float, default=2.0)
    de.set_defaults(func=cmd_demo)
    return ap


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("COFLOWSCHED_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        msg = str(exc) if str(exc).startswith("file not found") else f"file not found: {exc.filename}"
        print(f"error: {msg}", file=sys.stderr)
        return 1
    except InstanceError as exc:
        print("error: invalid instance:\n  " + "\n  ".join(exc.problems), file=sys.stderr)
        return 1
    except (InvariantError, ScheduleError, SimplexError, LpError, AssertionError) as exc:
        print(f"internal invariant violated: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
