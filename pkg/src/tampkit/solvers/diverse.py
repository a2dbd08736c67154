"""Conflict-driven outer loop over plan-prefix conflicts, with lazy, eager
(binary search) and metareasoning-guided conflict extraction, plus the
novelty-based choice among candidate plans.
"""

from __future__ import annotations

import math

from ..manip.factored import build_factored_nlp
from ..manip.ground import ground_task
from ..nlp.solver import SolveOptions, solve
from ..planning.search import Unsolvable, plan_search
from ..reformulation import build_prefix_tree, forbid_prefixes, project_plan, select_plan
from ..rng import child_seed
from .common import ProvablyUnsolvable, Solution, Timeout, check_plan_nlp, plan_states
from .trace import SolverTrace


def estimators_update(checked_prefixes: dict, found_plans):
    """(p̂_f by prefix length, r̂ by prefix) from the solver's history.

    p̂_f(len) is the fraction of feasible checks at that length (0.5 prior);
    r̂(τ) is the +1-smoothed fraction of found plans with τ as a prefix.
    """
    by_len: dict[int, list[int]] = {}
    for prefix, feas in checked_prefixes.items():
        cell = by_len.setdefault(len(prefix), [0, 0])
        cell[1] += 1
        if feas:
            cell[0] += 1
    plans = [tuple(p) for p in found_plans]

    def p_f(length: int) -> float:
        cell = by_len.get(length)
        if not cell or cell[1] == 0:
            return 0.5
        return cell[0] / cell[1]

    def r_hat(prefix) -> float:
        prefix = tuple(prefix)
        matches = sum(1 for p in plans if p[: len(prefix)] == prefix)
        return (matches + 1) / (len(plans) + 1)

    return p_f, r_hat


def meta_mdp_policy(plan, p_f, r_hat, lam: float = 0.5):
    """Exact DP over the loop-free search-control MDP.

    States are (l, u) bounds with prefix l feasible and prefix u infeasible;
    actions are stop (commit the conflict of length u) or probe a strictly
    interior index.  Returns (policy, value) dicts keyed by (l, u).
    """
    n = len(plan)
    value: dict[tuple, float] = {}
    policy: dict[tuple, object] = {}
    for l in range(n + 1):
        value[(l, l)] = (1.0 - lam) * r_hat(plan[:l])
    for gap in range(1, n + 1):
        for l in range(0, n + 1 - gap):
            u = l + gap
            best_val = value[(u, u)]
            best_act = "stop"
            for m in range(l + 1, u):
                p = p_f(m)
                v = -lam + p * value[(m, u)] + (1.0 - p) * value[(l, m)]
                if v > best_val + 1e-12:
                    best_val, best_act = v, m
            value[(l, u)] = best_val
            policy[(l, u)] = best_act
    return policy, value


class _Budget:
    def __init__(self, limit, trace):
        self.limit = limit
        self.used = 0
        self.trace = trace

    def spend(self, n=1):
        self.used += n
        if self.limit is not None and self.used > self.limit:
            raise Timeout(self.trace)


def diverse_lgp_solve(scene, goal, n_plans: int = 1, mode: str = "lazy",
                      seed: int = 0, budget: int | None = None,
                      restarts: int = 4, lam: float = 0.5,
                      trace: SolverTrace | None = None) -> Solution:
    """Plan-forbid-test loop; conflicts are infeasible plan prefixes."""
    if mode not in ("lazy", "eager", "meta"):
        raise ValueError(f"unknown conflict mode {mode!r}")
    trace = trace if trace is not None else SolverTrace()
    task = ground_task(scene, goal)
    budget_ = _Budget(budget, trace)
    opts = SolveOptions(seed=child_seed(seed, "diverse-nlp"), restarts=restarts)

    found: list[tuple] = []      # LP: plans discovered so far
    tested: set[tuple] = set()   # T: plans already checked geometrically
    conflicts: list[tuple] = []  # MC: forbidden prefixes
    checked_prefixes: dict[tuple, bool] = {}   # feasibility cache

    def prefix_feasible(plan, k) -> bool:
        key = tuple(plan[:k])
        if key not in checked_prefixes:
            budget_.spend()
            states = plan_states(task, plan[:k])
            _, res = check_plan_nlp(scene, states, opts)
            checked_prefixes[key] = res.feasible
            trace.emit("nlp_solved", prefix=list(key), feasible=res.feasible,
                       residual_evals=res.stats.residual_evals)
        return checked_prefixes[key]

    iteration = 0
    while True:
        iteration += 1
        tree = build_prefix_tree([*map(tuple, found), *conflicts])
        reform = forbid_prefixes(task, tree)
        fresh = []
        for i in range(n_plans):
            try:
                raw = plan_search(reform, "greedy",
                                  seed=child_seed(seed, f"plan{iteration}.{i}"))
            except Unsolvable:
                break
            plan = tuple(project_plan(raw))
            fresh.append(plan)
            if i + 1 < n_plans:
                reform = forbid_prefixes(
                    reform, build_prefix_tree([tuple(raw)]))
        for plan in fresh:
            if plan not in found:
                found.append(plan)
        candidates = [p for p in found if p not in tested]
        if not candidates:
            raise ProvablyUnsolvable("no untested plans remain")
        plan = tuple(select_plan(candidates, tested, seed=seed,
                                 label=f"select{iteration}"))
        trace.emit("plan_proposed", plan=list(plan))

        budget_.spend()
        states = plan_states(task, plan)
        g, res = check_plan_nlp(scene, states, opts)
        checked_prefixes[plan] = res.feasible
        trace.emit("nlp_solved", prefix=list(plan), feasible=res.feasible,
                   residual_evals=res.stats.residual_evals)
        if res.feasible:
            trace.emit("solved", plan=list(plan))
            return Solution(plan, states, res.assignment, trace, budget_.used)

        tested.add(plan)
        conflict = _find_prefix_conflict(
            plan, mode, prefix_feasible, checked_prefixes, found, lam)
        conflicts.append(tuple(conflict))
        trace.emit("conflict_found", prefix=list(conflict), mode=mode)


def _find_prefix_conflict(plan, mode, prefix_feasible, checked, found, lam):
    n = len(plan)
    if mode == "lazy":
        return plan
    if mode == "eager":
        lo, hi = 0, n
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if prefix_feasible(plan, mid):
                lo = mid
            else:
                hi = mid
        return plan[:hi]
    # metareasoning: probe where the DP policy says, stop when it says stop
    l, u = 0, n
    while u - l > 1:
        p_f, r_hat = estimators_update(
            {k: v for k, v in checked.items() if k != tuple(plan)}, found)
        policy, _ = meta_mdp_policy(plan, p_f, r_hat, lam)
        action = policy.get((l, u), "stop")
        if action == "stop":
            break
        m = int(action)
        if prefix_feasible(plan, m):
            l = m
        else:
            u = m
    return plan[:u]
