"""Command-line front end: discrete planning, the TAMP solvers, and the
benchmark harness.

Exit codes: 0 success, 1 parse error, 2 unsolvable, 3 timeout.  All
randomness derives from --seed; traces and reports contain deterministic
effort counters only (enable --wall to add non-normative wall times to
bench reports).
"""

from __future__ import annotations

import argparse
import json
import os
import statistics
import sys
import time
from concurrent.futures import ProcessPoolExecutor

from . import ctree
from .manip.ground import ground_task
from .manip.scene import goal_from_json, scene_from_json
from .manip.svg import scene_svg, tree_svg
from .planning.search import Unsolvable, plan_search
from .planning.task import task_from_json, validate_plan
from .solvers.common import ProvablyUnsolvable, Timeout
from .solvers.diverse import diverse_lgp_solve
from .solvers.fnpp import fnpp_solve
from .solvers.trace import SolverTrace

SOLVERS = ("fnpp", "diverse", "meta", "opt", "sampling")


def _fail_parse(msg, exc=None):
    if isinstance(exc, json.JSONDecodeError):
        print(f"parse error: {msg}: line {exc.lineno} column {exc.colno}: "
              f"{exc.msg}", file=sys.stderr)
    else:
        print(f"parse error: {msg}: {exc}", file=sys.stderr)
    return 1


def cmd_plan(args) -> int:
    try:
        with open(args.task) as fh:
            task = task_from_json(fh.read())
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        return _fail_parse(args.task, exc)
    try:
        plan = plan_search(task, args.mode, seed=args.seed)
    except Unsolvable:
        print(json.dumps({"status": "unsolvable"}))
        return 2
    ok, _, _ = validate_plan(task, plan)
    print(json.dumps({"status": "solved", "plan": plan, "valid": ok},
                     sort_keys=True))
    return 0


def _load_problem(scene_path, goal_path):
    with open(scene_path) as fh:
        scene = scene_from_json(fh.read())
    with open(goal_path) as fh:
        goal = goal_from_json(fh.read(), scene)
    return scene, goal


def run_tamp(scene, goal, solver: str, seed: int, budget):
    """Returns (result dict, trace, tree dump or None); raises Timeout etc."""
    trace = SolverTrace()
    if solver == "fnpp":
        sol = fnpp_solve(scene, goal, seed=seed, budget=budget, trace=trace)
        return {"plan": sol.plan, "solves": sol.nlp_solves,
                "frames": _frames_doc(sol.keyframes(scene))}, trace, None
    if solver == "diverse":
        sol = diverse_lgp_solve(scene, goal, n_plans=4, mode="eager",
                                seed=seed, budget=budget, trace=trace)
        return {"plan": sol.plan, "solves": sol.nlp_solves,
                "frames": _frames_doc(sol.keyframes(scene))}, trace, None
    sol, dump = ctree.run(scene, goal, solver, budget=budget, seed=seed,
                          trace=trace)
    return {"plan": sol["plan"], "numeric_cost": sol["numeric_cost"],
            "residual_evals": sol["residual_evals"],
            "frames": _frames_doc(sol["frames"])}, trace, dump


def _frames_doc(frames):
    return [
        {k: [round(float(v[0]), 9), round(float(v[1]), 9)]
         for k, v in sorted(frame.items()) if v is not None}
        for frame in frames
    ]


def cmd_tamp(args) -> int:
    try:
        scene, goal = _load_problem(args.scene, args.goal)
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        return _fail_parse(f"{args.scene} / {args.goal}", exc)
    trace = None
    try:
        result, trace, dump = run_tamp(scene, goal, args.solver, args.seed,
                                       args.budget)
    except Timeout as exc:
        if args.trace and exc.trace is not None:
            exc.trace.save(args.trace)
        print(json.dumps({"status": "timeout"}))
        return 3
    except ProvablyUnsolvable:
        print(json.dumps({"status": "unsolvable"}))
        return 2
    if args.trace:
        result_trace = trace
        result_trace.save(args.trace)
    if args.svg:
        os.makedirs(args.svg, exist_ok=True)
        for k, frame in enumerate(result["frames"]):
            vec = {key: val for key, val in frame.items()}
            with open(os.path.join(args.svg, f"keyframe{k:03d}.svg"), "w") as fh:
                fh.write(scene_svg(scene, vec))
        if dump is not None:
            with open(os.path.join(args.svg, "tree.svg"), "w") as fh:
                fh.write(tree_svg(dump.to_doc()))
    print(json.dumps({"status": "solved", **result}, sort_keys=True))
    return 0


def _bench_one(payload):
    (name, scene_text, goal_text, solver, seed, budget, wall) = payload
    scene = scene_from_json(scene_text)
    goal = goal_from_json(goal_text, scene)
    t0 = time.perf_counter() if wall else None
    try:
        result, trace, _ = run_tamp(scene, goal, solver, seed, budget)
        effort = result.get("residual_evals")
        if effort is None:
            effort = sum(e.get("residual_evals", 0) for e in trace.events)
        row = {"problem": name, "solver": solver, "seed": seed, "ok": True,
               "effort": effort, "solves": result.get(
                   "solves", result.get("numeric_cost"))}
        if wall:
            row["wall_s"] = round(time.perf_counter() - t0, 4)
        return row
    except (Timeout, ProvablyUnsolvable) as exc:
        return {"problem": name, "solver": solver, "seed": seed, "ok": False,
                "error": type(exc).__name__}


def quartiles(values):
    q1, q2, q3 = statistics.quantiles(sorted(values), n=4) if len(values) > 1 \
        else (values[0], values[0], values[0])
    return q1, q2, q3


def cmd_bench(args) -> int:
    try:
        with open(args.suite) as fh:
            suite = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        return _fail_parse(args.suite, exc)
    jobs = []
    for prob in suite["problems"]:
        scene_text = open(prob["scene"]).read()
        goal_text = open(prob["goal"]).read()
        for solver in suite["solvers"]:
            for seed in suite.get("seeds", [0]):
                jobs.append((prob["name"], scene_text, goal_text, solver,
                             seed, suite.get("budget"), args.wall))
    workers = int(os.environ.get("TAMP_THREADS", "1"))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_bench_one, jobs))
    else:
        rows = [_bench_one(j) for j in jobs]

    report = {"runs": rows, "problems": {}}
    problems = sorted({r["problem"] for r in rows})
    for prob in problems:
        per_solver = {}
        for solver in suite["solvers"]:
            efforts = [r["effort"] for r in rows
                       if r["problem"] == prob and r["solver"] == solver and r["ok"]]
            fails = [r for r in rows
                     if r["problem"] == prob and r["solver"] == solver and not r["ok"]]
            if efforts:
                q1, q2, q3 = quartiles(efforts)
                per_solver[solver] = {"q1": q1, "q2": q2, "q3": q3,
                                      "n": len(efforts), "failures": len(fails)}
            else:
                per_solver[solver] = {"failures": len(fails), "n": 0}
        finished = {s: d for s, d in per_solver.items() if d.get("n")}
        if finished:
            best = min(d["q2"] for d in finished.values())
            for s, d in finished.items():
                d["normalized"] = {k: (d[k] / best if best > 0 else None)
                                   for k in ("q1", "q2", "q3")}
        report["problems"][prob] = per_solver
    out = json.dumps(report, indent=1, sort_keys=True)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(out)
    else:
        print(out)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="tampkit")
    sub = p.add_subparsers(dest="cmd", required=True)

    pp = sub.add_parser("plan", help="solve a discrete task file")
    pp.add_argument("task")
    pp.add_argument("--mode", choices=("greedy", "astar"), default="astar")
    pp.add_argument("--seed", type=int, default=0)
    pp.set_defaults(fn=cmd_plan)

    pt = sub.add_parser("tamp", help="solve a scene + goal")
    pt.add_argument("scene")
    pt.add_argument("goal")
    pt.add_argument("--solver", choices=SOLVERS, default="fnpp")
    pt.add_argument("--seed", type=int, default=0)
    pt.add_argument("--budget", type=int, default=None,
                    help="solver effort units (NLP solves / free slots)")
    pt.add_argument("--trace", default=None)
    pt.add_argument("--svg", default=None)
    pt.set_defaults(fn=cmd_tamp)

    pb = sub.add_parser("bench", help="run a benchmark suite file")
    pb.add_argument("suite")
    pb.add_argument("--out", default=None)
    pb.add_argument("--wall", action="store_true",
                    help="also record wall-clock seconds (non-reproducible)")
    pb.set_defaults(fn=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
