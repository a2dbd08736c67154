"""Forward state-space search: greedy best-first on h_add, A* on h_max.

Action-merging style preprocessing is deliberately absent: actions with
identical discrete effects must stay distinct because they can imply
different geometry downstream.
"""

from __future__ import annotations

import heapq
import math

from ..rng import child_rng
from .task import PlanningTask

INF = math.inf


class Unsolvable(Exception):
    """Raised when the goal is unreachable (closed list exhausted)."""


def _relaxed_achievers(task: PlanningTask):
    """(requirement facts, cost, effect facts) triples of the delete relaxation.

    Each conditional effect becomes its own achiever gated on pre ∪ cond.
    """
    out = []
    for i, a in enumerate(task.actions):
        pre = task._pre[i]
        if task._eff[i]:
            out.append((pre, a.cost, task._eff[i]))
        for cond, eff in task._cond[i]:
            out.append((tuple(sorted(set(pre) | set(cond))), a.cost, eff))
    return out


def _fact_costs(task: PlanningTask, state, combine) -> dict:
    """Generalized Dijkstra over facts; combine is sum (h_add) or max (h_max)."""
    costs = {}
    for slot, val in enumerate(state):
        costs[(slot, val)] = 0.0
    achievers = _relaxed_achievers(task)
    changed = True
    while changed:
        changed = False
        for req, cost, eff in achievers:
            total = 0.0
            ok = True
            for fact in req:
                c = costs.get(fact)
                if c is None:
                    ok = False
                    break
                total = total + c if combine == "add" else max(total, c)
            if not ok:
                continue
            reach = total + cost
            for fact in eff:
                if costs.get(fact, INF) > reach:
                    costs[fact] = reach
                    changed = True
    return costs


def _heuristic(task: PlanningTask, state, combine) -> float:
    goal = task._goal_packed
    if task.holds(goal, state):
        return 0.0
    costs = _fact_costs(task, state, combine)
    value = 0.0
    for fact in goal:
        c = costs.get(fact)
        if c is None:
            return INF
        value = value + c if combine == "add" else max(value, c)
    return value


def heuristic_hadd(task: PlanningTask, state) -> float:
    return _heuristic(task, state, "add")


def heuristic_hmax(task: PlanningTask, state) -> float:
    return _heuristic(task, state, "max")


def plan_search(task: PlanningTask, mode: str = "greedy", seed: int = 0,
                max_expansions: int | None = None) -> list[str]:
    """Return a plan (list of action ids) or raise Unsolvable.

    greedy: best-first on h_add. astar: f = g + h_max, cost-optimal under
    unit costs. The seed shuffles successor order; remaining open-list ties
    break by insertion order.
    """
    if mode not in ("greedy", "astar"):
        raise ValueError(f"unknown mode {mode!r}")
    h = heuristic_hadd if mode == "greedy" else heuristic_hmax
    rng = child_rng(seed, "plan-search")

    start = task.init
    h0 = h(task, start)
    if h0 == INF:
        raise Unsolvable("goal unreachable in the delete relaxation")
    counter = 0
    open_list = [(h0 if mode == "greedy" else h0, counter, start)]
    g_best = {start: 0}
    parent: dict = {start: None}
    expanded = 0

    while open_list:
        _, _, state = heapq.heappop(open_list)
        g = g_best[state]
        if task.satisfies_goal(state):
            plan = []
            cur = state
            while parent[cur] is not None:
                prev, aid = parent[cur]
                plan.append(aid)
                cur = prev
            plan.reverse()
            return plan
        expanded += 1
        if max_expansions is not None and expanded > max_expansions:
            raise Unsolvable("expansion budget exhausted")
        succ_idx = task.applicable_indices(state)
        order = rng.permutation(len(succ_idx)) if len(succ_idx) > 1 else range(len(succ_idx))
        for k in order:
            i = succ_idx[k]
            nxt = task.apply(i, state)
            g2 = g + task.actions[i].cost
            if g2 >= g_best.get(nxt, INF):
                continue
            hv = h(task, nxt)
            if hv == INF:
                continue
            g_best[nxt] = g2
            parent[nxt] = (state, task.actions[i].id)
            counter += 1
            f = hv if mode == "greedy" else g2 + hv
            heapq.heappush(open_list, (f, counter, nxt))
    raise Unsolvable("open list exhausted")


def plan_length_or_inf(task: PlanningTask, state=None, seed: int = 0) -> float:
    """Greedy plan length from a given state (defaults to init); INF if unsolvable."""
    if state is not None and state != task.init:
        t2 = PlanningTask(task.variables, task.actions, task.unpack(state), task.goal)
    else:
        t2 = task
    try:
        return float(len(plan_search(t2, "greedy", seed=seed)))
    except Unsolvable:
        return INF
