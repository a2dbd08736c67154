"""Best-first search over computational states: a discrete state, the last
fixed keyframe, a chain of pending free keyframes, and an attempt counter
(level) that widens repeated stochastic solves.

Three strategies share one loop: the meta strategy may numeric-expand and
discrete-expand anywhere; the optimization strategy numeric-expands only
goal-reaching candidates; the sampling strategy keeps at most one free
keyframe and discrete-expands only fully-computed nodes.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .manip.factored import InvalidSequence, build_factored_nlp, initial_keyframe
from .manip.ground import ground_task
from .nlp.graph import condition
from .nlp.solver import SolveOptions, solve
from .planning.search import plan_length_or_inf
from .planning.task import PlanningTask
from .rng import child_rng, child_seed
from .solvers.common import ProvablyUnsolvable, Timeout
from .solvers.trace import SolverTrace

STRATEGIES = ("meta", "opt", "sampling")


@dataclass
class CNode:
    idx: int
    parent: int | None
    s: tuple                     # packed discrete state
    depth: int                   # g_tamp: actions from the root
    fixed_slice: int             # plan depth at which x was computed
    frames: tuple                # entity->pose dicts for slices 0..fixed_slice
    free_states: tuple           # unpacked states of slices fixed_slice+1..depth
    level: int = 0
    g_c: int = 0
    action: str | None = None    # edge label from the parent
    expanded_discrete: bool = False

    @property
    def n_free(self) -> int:
        return len(self.free_states)


@dataclass
class TreeDump:
    nodes: list = field(default_factory=list)
    edges: list = field(default_factory=list)

    def node(self, n: CNode, kind: str):
        self.nodes.append({
            "id": n.idx, "parent": n.parent, "kind": kind, "depth": n.depth,
            "free": n.n_free, "level": n.level, "action": n.action})

    def edge(self, a: int, b: int, kind: str):
        self.edges.append({"from": a, "to": b, "kind": kind})

    def to_doc(self):
        return {"nodes": self.nodes, "edges": self.edges}


class CTree:
    """Owns the task grounding, node storage and the memoized task heuristic."""

    def __init__(self, scene, goal, seed: int = 0, restarts: int = 1):
        self.scene = scene
        self.goal = goal
        self.task: PlanningTask = ground_task(scene, goal)
        self.seed = seed
        self.restarts = restarts
        self.nodes: list[CNode] = []
        self._ctask_cache: dict = {}
        self.numeric_cost = 0            # total free slots attempted
        self.numeric_wall = 0.0
        self.residual_evals = 0
        x0 = initial_keyframe(scene)
        root = CNode(0, None, self.task.init, 0, 0, (x0,), ())
        self.nodes.append(root)
        self.rng = child_rng(seed, "ctree-ties")

    # -- scoring ---------------------------------------------------------------

    def c_task(self, s) -> float:
        if s not in self._ctask_cache:
            self._ctask_cache[s] = plan_length_or_inf(
                self.task, s, seed=child_seed(self.seed, "ctask"))
        return self._ctask_cache[s]

    def score(self, n: CNode):
        return (self.c_task(n.s) + n.depth + n.level, -n.g_c)

    def is_goal(self, n: CNode) -> bool:
        return n.n_free == 0 and self.task.satisfies_goal(n.s)

    # -- expansions --------------------------------------------------------------

    def discrete_expansion(self, n: CNode, action_idx: int) -> CNode:
        a = self.task.actions[action_idx]
        s2 = self.task.apply(action_idx, n.s)
        child = CNode(
            len(self.nodes), n.idx, s2, n.depth + 1, n.fixed_slice,
            n.frames, n.free_states + (self.task.unpack(s2),),
            level=n.level, g_c=n.g_c, action=a.id)
        self.nodes.append(child)
        return child

    def pending_graph(self, n: CNode):
        """Window NLP over [fixed_slice .. depth] conditioned on the fixed
        keyframe; None when there is nothing pending."""
        if n.n_free == 0:
            return None
        window = [self._state_at(n, n.fixed_slice), *n.free_states]
        g = build_factored_nlp(self.scene, window)
        fixed_vals = {}
        x = n.frames[-1]
        for v in g.vars:
            if v.t == 0 and v.entity in x:
                fixed_vals[v.id] = x[v.entity]
        return condition(g, fixed_vals)

    def _state_at(self, n: CNode, slice_idx: int) -> dict:
        cur = n
        while cur.depth > slice_idx:
            cur = self.nodes[cur.parent]
        return self.task.unpack(cur.s)

    def numeric_expansion(self, n: CNode, attempt: int):
        """Joint solve of all pending keyframes; returns the new node or None
        (FAIL).  The caller bumps ``n.level`` and re-queues either way."""
        assert n.n_free > 0
        self.numeric_cost += n.n_free
        g = self.pending_graph(n)
        t0 = time.perf_counter()
        res = solve(g, opts=SolveOptions(
            seed=child_seed(self.seed, f"num{n.idx}.{attempt}"),
            restarts=self.restarts))
        self.numeric_wall += time.perf_counter() - t0
        self.residual_evals += res.stats.residual_evals
        if not res.feasible:
            return None
        new_frames = list(n.frames)
        for j, state in enumerate(n.free_states, start=1):
            frame = {}
            for e in list(self.scene.object_by_id) + list(self.scene.robot_by_id):
                vid = f"{e}@{j}"
                if vid in res.assignment:
                    frame[e] = np.array(res.assignment[vid])
            new_frames.append(frame)
        child = CNode(
            len(self.nodes), n.idx, n.s, n.depth, n.depth,
            tuple(new_frames), (), level=n.level, g_c=n.g_c + n.n_free,
            action=None)
        self.nodes.append(child)
        return child


def run(scene, goal, strategy: str = "meta", budget: int | None = 400,
        seed: int = 0, restarts: int = 1, trace: SolverTrace | None = None):
    """Best-first loop on the two-part score; returns (solution-node info,
    tree dump).  The budget counts numeric-expansion cost units (= free
    keyframes attempted)."""
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    trace = trace if trace is not None else SolverTrace()
    tree = CTree(scene, goal, seed=seed, restarts=restarts)
    dump = TreeDump()
    root = tree.nodes[0]
    if tree.c_task(root.s) == math.inf:
        raise ProvablyUnsolvable("discrete goal unreachable")
    dump.node(root, "fixed")

    counter = 0
    heap = []

    def push(n: CNode):
        nonlocal counter
        counter += 1
        p, q = tree.score(n)
        if p == math.inf:
            return
        heapq.heappush(heap, (p, q, float(tree.rng.random()), counter, n.idx))

    push(root)
    attempts: dict[int, int] = {}

    while heap:
        _, _, _, _, idx = heapq.heappop(heap)
        n = tree.nodes[idx]
        if tree.is_goal(n):
            trace.emit("solved", depth=n.depth, cost=tree.numeric_cost)
            for rec in dump.nodes:
                if rec["id"] == n.idx:
                    rec["kind"] = "solution"
            return _solution(tree, n), dump
        if n.n_free > 0 and (strategy != "opt" or tree.task.satisfies_goal(n.s)):
            if budget is not None and tree.numeric_cost + n.n_free > budget:
                raise Timeout(trace)
            attempts[n.idx] = attempts.get(n.idx, 0) + 1
            child = tree.numeric_expansion(n, attempts[n.idx])
            trace.emit("numeric_expansion", node=n.idx, slots=n.n_free,
                       ok=child is not None)
            if child is not None:
                dump.node(child, "fixed")
                dump.edge(n.idx, child.idx, "numeric")
                push(child)
                n.level += 1
                push(n)
            else:
                dump.nodes.append({"id": -len(dump.nodes) - 1, "parent": n.idx,
                                   "kind": "failed", "depth": n.depth,
                                   "free": 0, "level": n.level, "action": None})
                n.level += 1
                push(n)
                continue
        if strategy == "sampling" and n.n_free > 0:
            continue
        if not n.expanded_discrete:
            n.expanded_discrete = True
            order = tree.task.applicable_indices(n.s)
            for i in order:
                child = tree.discrete_expansion(n, i)
                kind = "goal-free" if (tree.task.satisfies_goal(child.s)
                                       and child.n_free) else "free"
                dump.node(child, kind)
                dump.edge(n.idx, child.idx, "discrete")
                push(child)
    raise ProvablyUnsolvable("open list exhausted")


def _solution(tree: CTree, n: CNode):
    actions = []
    cur = n
    while cur.parent is not None:
        if cur.action is not None:
            actions.append(cur.action)
        cur = tree.nodes[cur.parent]
    actions.reverse()
    return {
        "plan": actions,
        "frames": list(n.frames),
        "numeric_cost": tree.numeric_cost,
        "numeric_wall": tree.numeric_wall,
        "residual_evals": tree.residual_evals,
    }
