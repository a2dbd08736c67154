"""Task rewrites that make forbidden prefixes or forbidden partial-state
sequences unreachable, plus novelty scoring over candidate plans.

Two compilations:

* ``forbid_prefixes``: a prefix tree is tracked with a ternary mode variable
  (follow / off / dead) and one binary flag per tree node.  Completing a
  forbidden prefix is the only way to reach the dead mode, which no action
  copy can leave and which clears a persistent ``alive`` flag required by
  the goal.  Every other plan keeps ``alive`` and is preserved verbatim.
* ``forbid_state_sequence``: a window automaton over bits b_0..b_L, updated
  synchronously through conditional effects, detects an occurrence of the
  partial-state sequence starting at any step.  b_L = 1 is a dead end
  (precondition on every action) and the goal gains b_L = 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .planning.task import Action, PlanningTask, StateVariable, UnknownAction, UnknownVariable
from .rng import child_rng

PROJ_SEP = "~~"

FOLLOW, OFF, DEAD = "follow", "off", "dead"


class EmptyCandidates(Exception):
    pass


class UnsupportedConditionalEffect(Exception):
    """An action's own conditional effects touch the forbidden sequence."""


# --- prefix trees ---------------------------------------------------------

@dataclass
class PrefixTree:
    """Trie of action-id edges; ``forbidden`` nodes form an antichain."""

    nodes: set[tuple[str, ...]] = field(default_factory=lambda: {()})
    forbidden: set[tuple[str, ...]] = field(default_factory=set)

    def edges(self):
        for node in self.nodes:
            if node:
                yield node[:-1], node, node[-1]

    def actions(self) -> set[str]:
        return {node[-1] for node in self.nodes if node}

    def is_empty(self) -> bool:
        return not self.forbidden

    def insert(self, prefix) -> None:
        prefix = tuple(prefix)
        # Dominated by an already-forbidden ancestor: nothing to do.
        for k in range(len(prefix) + 1):
            if prefix[:k] in self.forbidden and k < len(prefix):
                return
        if prefix in self.forbidden:
            return
        # The new prefix dominates any forbidden descendant.
        dominated = {n for n in self.nodes if len(n) > len(prefix) and n[: len(prefix)] == prefix}
        self.nodes -= dominated
        self.forbidden -= dominated
        for k in range(len(prefix) + 1):
            self.nodes.add(prefix[:k])
        self.forbidden.add(prefix)


def build_prefix_tree(prefixes) -> PrefixTree:
    tree = PrefixTree()
    for p in prefixes:
        tree.insert(p)
    return tree


# --- prefix forbidding -----------------------------------------------------

def _fresh(task: PlanningTask, stem: str) -> str:
    existing = set(task.var_index)
    n = 0
    while any(v.startswith(f"__{stem}{n}_") for v in existing):
        n += 1
    return f"__{stem}{n}_"


def forbid_prefixes(task: PlanningTask, tree: PrefixTree) -> PlanningTask:
    """Solutions of the result = solutions of ``task`` minus plans that start
    with a forbidden prefix.  Action ids gain a ``~~``-separated suffix; use
    :func:`project_plan` to map plans back.
    """
    for aid in tree.actions():
        if aid not in task.action_index:
            raise UnknownAction(aid)
    if tree.is_empty():
        return task
    if () in tree.forbidden:
        # Forbidding the empty prefix forbids every plan.
        p = _fresh(task, "forbid")
        blocked = StateVariable(p + "blocked", ("0", "1"))
        variables = (*task.variables, blocked)
        init = task.unpack(task.init) | {blocked.id: "0"}
        goal = dict(task.goal) | {blocked.id: "1"}
        return PlanningTask(variables, task.actions, init, goal)

    p = _fresh(task, "forbid")
    node_ids = {n: i for i, n in enumerate(sorted(tree.nodes))}
    track = p + "track"
    alive = p + "alive"
    # Forbidden nodes are leaves and their flag is never read: edges into them
    # switch to the dead mode instead.
    flagged = sorted(n for n in tree.nodes if n not in tree.forbidden)
    at = {n: f"{p}at{node_ids[n]}" for n in flagged}

    variables = [*task.variables, StateVariable(track, (FOLLOW, OFF, DEAD)),
                 StateVariable(alive, ("0", "1"))]
    variables += [StateVariable(at[n], ("0", "1")) for n in flagged]

    tracked = tree.actions()
    edges_by_action: dict[str, list] = {}
    for src, dst, aid in tree.edges():
        edges_by_action.setdefault(aid, []).append((src, dst))

    actions: list[Action] = []
    for a in task.actions:
        if a.id not in tracked:
            actions.append(Action(
                f"{a.id}{PROJ_SEP}leave",
                a.pre | {track: FOLLOW}, a.eff | {track: OFF}, a.cond, a.cost))
        else:
            cut_pre = {at[src]: "0" for src, _ in edges_by_action[a.id]}
            actions.append(Action(
                f"{a.id}{PROJ_SEP}cut",
                a.pre | {track: FOLLOW} | cut_pre, a.eff | {track: OFF}, a.cond, a.cost))
            for src, dst in edges_by_action[a.id]:
                if dst in tree.forbidden:
                    eff = {track: DEAD, alive: "0"}
                else:
                    eff = a.eff | {at[src]: "0", at[dst]: "1"}
                actions.append(Action(
                    f"{a.id}{PROJ_SEP}edge{node_ids[dst]}",
                    a.pre | {track: FOLLOW, at[src]: "1"}, eff,
                    a.cond if dst not in tree.forbidden else (), a.cost))
        actions.append(Action(
            f"{a.id}{PROJ_SEP}free", a.pre | {track: OFF}, dict(a.eff), a.cond, a.cost))

    init = task.unpack(task.init) | {track: FOLLOW, alive: "1"}
    for n in flagged:
        init[at[n]] = "1" if n == () else "0"
    goal = dict(task.goal) | {alive: "1"}
    return PlanningTask(variables, actions, init, goal)


def project_plan(plan) -> list[str]:
    """Strip compilation suffixes from action ids."""
    return [aid.split(PROJ_SEP, 1)[0] for aid in plan]


# --- state-sequence forbidding ----------------------------------------------

def forbid_state_sequence(task: PlanningTask, seq) -> PlanningTask:
    """Eliminate every plan whose state trace contains the window
    ⟨p_0 … p_L⟩ (p_l ⊆ s_{k+l} for all l) starting at any index k.
    """
    seq = [dict(p) for p in seq]
    if not seq or any(not p for p in seq):
        raise ValueError("sequence must be non-empty with non-empty partial states")
    seq_vars = set()
    for part in seq:
        for var, val in part.items():
            if var not in task.var_index:
                raise UnknownVariable(var)
            if val not in task.value_index[var]:
                raise ValueError(f"{var!r} has no value {val!r}")
            seq_vars.add(var)

    L = len(seq) - 1
    p = _fresh(task, "seq")
    bits = [f"{p}b{l}" for l in range(L + 1)]
    variables = [*task.variables] + [StateVariable(b, ("0", "1")) for b in bits]

    init = task.unpack(task.init)
    s0_matches = all(init.get(v) == val for v, val in seq[0].items())
    init |= {bits[0]: "1" if s0_matches else "0"}
    init |= {bits[l]: "0" for l in range(1, L + 1)}
    goal = dict(task.goal) | {bits[L]: "0"}

    actions = [_window_mod(task, a, seq, bits, seq_vars) for a in task.actions]
    return PlanningTask(variables, actions, init, goal)


def _window_mod(task: PlanningTask, a: Action, seq, bits, seq_vars) -> Action:
    for cond, eff in a.cond:
        if seq_vars & set(eff):
            raise UnsupportedConditionalEffect(
                f"action {a.id!r} conditionally assigns a sequence variable")

    L = len(seq) - 1
    cond_effects = list(a.cond)

    def match_parts(part):
        """None when the partial state cannot hold after ``a``; otherwise the
        residual facts that must already hold before ``a``."""
        residual = {}
        for var, val in part.items():
            if var in a.eff:
                if a.eff[var] != val:
                    return None
            else:
                residual[var] = val
        return residual

    for l in range(L + 1):
        residual = match_parts(seq[l])
        gate = {} if l == 0 else {bits[l - 1]: "1"}
        if residual is None:
            set_cond = None          # p_l can never hold right after a
        else:
            set_cond = gate | residual
        # Complement disjuncts all assign "0"; they are disjoint from set_cond.
        clear_conds = []
        if l > 0:
            clear_conds.append({bits[l - 1]: "0"})
        if residual:
            for var, val in residual.items():
                for other in task.variables[task.var_index[var]].domain:
                    if other != val:
                        clear_conds.append(gate | {var: other} if l > 0 else {var: other})

        if l == L:
            # b_L only ever rises: pre b_L=0 on every action makes 1 a dead end.
            if set_cond is not None:
                if set_cond:
                    cond_effects.append((set_cond, {bits[l]: "1"}))
                else:
                    return Action(a.id, a.pre | {bits[L]: "0"},
                                  a.eff | {bits[l]: "1"}, tuple(cond_effects), a.cost)
            continue
        if set_cond is None:
            # Unconditionally cleared; no conditional writer exists for this bit.
            a = Action(a.id, a.pre, a.eff | {bits[l]: "0"}, a.cond, a.cost)
            continue
        if not set_cond:
            a = Action(a.id, a.pre, a.eff | {bits[l]: "1"}, a.cond, a.cost)
            continue
        cond_effects.append((set_cond, {bits[l]: "1"}))
        for c in clear_conds:
            cond_effects.append((c, {bits[l]: "0"}))

    return Action(a.id, a.pre | {bits[L]: "0"}, dict(a.eff), tuple(cond_effects), a.cost)


# --- novelty ---------------------------------------------------------------

def _prefix_equal(p1, p2, k: int) -> bool:
    # Prefixes past a plan's end are sentinels that match nothing.
    return k <= len(p1) and k <= len(p2) and tuple(p1[:k]) == tuple(p2[:k])


def plan_novelty(plan, tested) -> int:
    """-(length of the longest shared prefix + 1); 0 when ``tested`` is empty."""
    plan = tuple(plan)
    k = 0
    while True:
        if all(not _prefix_equal(other, plan, k) for other in tested):
            return -k
        k += 1


def select_plan(candidates, tested, seed: int = 0, label: str = "select-plan"):
    """Most novel candidate; ties broken by seeded RNG over a canonical order."""
    candidates = [tuple(c) for c in candidates]
    if not candidates:
        raise EmptyCandidates()
    scores = [plan_novelty(c, tested) for c in candidates]
    best = max(scores)
    tied = sorted({c for c, s in zip(candidates, scores) if s == best})
    if len(tied) == 1:
        return list(tied[0])
    rng = child_rng(seed, label)
    return list(tied[int(rng.integers(len(tied)))])
