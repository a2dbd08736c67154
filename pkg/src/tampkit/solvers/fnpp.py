"""Factored-NLP planning loop: plan, build the keyframe graph, query the
subgraph database, solve, and on failure extract a small infeasible subgraph,
decode it to a partial-state window and forbid that window at any step.
"""

from __future__ import annotations

from ..conflicts import (
    NlpOracle,
    NoConflictFound,
    extract_conflict_escalating,
)
from ..manip.factored import CyclicAttachment, build_factored_nlp, decode_conflict
from ..manip.ground import ground_task
from ..nlp.graph import KNOWN_INFEASIBLE_SUPERSET, FeasibilityDb, db_query, embeds_in
from ..nlp.solver import SolveOptions, solve
from ..planning.search import Unsolvable, plan_search
from ..reformulation import forbid_state_sequence
from ..rng import child_seed
from .common import ProvablyUnsolvable, Solution, Timeout, plan_states
from .trace import SolverTrace


def fnpp_solve(scene, goal, seed: int = 0, budget: int | None = None,
               restarts: int = 4, trace: SolverTrace | None = None,
               db: FeasibilityDb | None = None) -> Solution:
    trace = trace if trace is not None else SolverTrace()
    base_task = ground_task(scene, goal)
    task = base_task
    db = db if db is not None else FeasibilityDb()
    solves = 0
    forbidden: list[tuple] = []

    def spend(n=1):
        nonlocal solves
        solves += n
        if budget is not None and solves > budget:
            raise Timeout(trace)

    def seq_key(seq):
        return tuple(tuple(sorted(p.items())) for p in seq)

    def forbid(seq):
        nonlocal task
        key = seq_key(seq)
        if key in forbidden:
            raise NoConflictFound("conflict repeats; solver is stuck")
        forbidden.append(key)
        task = forbid_state_sequence(task, seq)
        trace.emit("reformulated",
                   sequence=[dict(sorted(p.items())) for p in seq])

    iteration = 0
    while True:
        iteration += 1
        try:
            plan = plan_search(task, "greedy",
                               seed=child_seed(seed, f"fnpp{iteration}"))
        except Unsolvable:
            raise ProvablyUnsolvable("discrete task unsolvable")
        states = plan_states(task, plan)
        trace.emit("plan_proposed", plan=list(plan))
        try:
            g = build_factored_nlp(scene, states, pin_initial_robots=True)
        except CyclicAttachment as cyc:
            forbid([cyc.facts])
            trace.emit("conflict_found", kind="cycle", window=[cyc.facts])
            continue

        verdict = db_query(db, g)
        if verdict == KNOWN_INFEASIBLE_SUPERSET:
            stored = next((m for _, m in db.infeasible if embeds_in(m, g)), None)
            if stored is not None:
                seq = decode_conflict(stored)
                if seq_key(seq) not in forbidden:
                    trace.emit("db_shortcut", verdict=verdict)
                    forbid(seq)
                    continue
            # a stale shortcut falls through to a fresh solve

        spend()
        res = solve(g, opts=SolveOptions(
            seed=child_seed(seed, f"fnpp-nlp{iteration}"), restarts=restarts))
        trace.emit("nlp_solved", plan=list(plan), feasible=res.feasible,
                   residual_evals=res.stats.residual_evals)
        if res.feasible:
            db.add_feasible(g)
            trace.emit("solved", plan=list(plan))
            return Solution(plan, states, res.assignment, trace, solves)

        def on_solve(graph, result):
            spend()
            trace.emit("probe_solved", feasible=result.feasible,
                       vars=len(graph.vars),
                       residual_evals=result.stats.residual_evals)

        conflict, stats = extract_conflict_escalating(
            scene, g, db, seed=child_seed(seed, f"extract{iteration}"),
            on_solve=on_solve)
        trace.emit("conflict_found", kind="sequence",
                   window=[dict(sorted(p.items())) for p in conflict.sequence],
                   relaxation=conflict.relaxation)
        forbid(conflict.sequence)
