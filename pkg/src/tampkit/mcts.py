"""UCT over sequences of assignment states of a factored NLP: learn which
order of conditional solves yields the most full samples per unit budget.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .nlp.graph import FactoredNlp, condition, connected_components, induced_subgraph
from .nlp.solver import SolveOptions, project
from .rng import child_rng, child_seed


class TooManyVariables(Exception):
    pass


def complete_transition_count(n: int) -> int:
    return 3 ** n - 2 ** n


def enumerate_transitions(g: FactoredNlp, max_vars: int = 12):
    """All strict-subset pairs minus the two pruning rules.

    Rule 1 removes transitions whose newly active equality rows exceed the
    newly added degrees of freedom (zero success probability).  Rule 2
    removes joint sampling of variables that are conditionally independent
    given the already-assigned set.
    Returns {frozenset: [frozenset, ...]} over variable ids.
    """
    ids = sorted(v.id for v in g.vars)
    n = len(ids)
    if n > max_vars:
        raise TooManyVariables(f"{n} variables")
    dims = {v.id: v.dim for v in g.vars}
    eq_cons = [(set(c.scope), c.residual_dim) for c in g.cons if c.relation == "eq"]

    out: dict[frozenset, list] = {}
    all_subsets = []
    for mask in range(2 ** n):
        all_subsets.append(frozenset(ids[i] for i in range(n) if mask >> i & 1))
    for w_i in all_subsets:
        targets = []
        for w_j in all_subsets:
            if not (w_i < w_j):
                continue
            new = w_j - w_i
            new_dof = sum(dims[v] for v in new)
            new_eq_rows = sum(r for scope, r in eq_cons
                              if scope <= w_j and not scope <= w_i)
            if new_eq_rows > new_dof:
                continue
            if len(new) > 1 and _conditionally_independent(g, w_i, new):
                continue
            targets.append(w_j)
        out[w_i] = sorted(targets, key=sorted)
    return out


def _conditionally_independent(g: FactoredNlp, assigned: frozenset, new: frozenset) -> bool:
    sub = drop_scope_vars(g, assigned)
    comps = connected_components(sub)
    comp_of = {}
    for i, comp in enumerate(comps):
        for v in comp.vars:
            comp_of[v.id] = i
    groups = {comp_of[v] for v in new}
    return len(groups) > 1


def drop_scope_vars(g: FactoredNlp, removed: frozenset) -> FactoredNlp:
    """Remove the variables but keep constraints alive on their remaining
    scope (paths through assigned variables are cut, per rule 2)."""
    vars_ = [v for v in g.vars if v.id not in removed]
    keep = {v.id for v in vars_}
    cons = []
    for c in g.cons:
        signs = c.signs if c.signs else (1.0,) * len(c.scope)
        kept = [(v, s) for v, s in zip(c.scope, signs) if v in keep]
        if kept:
            cons.append(type(c)(c.id, c.kind, c.relation,
                                tuple(v for v, _ in kept), c.form,
                                tuple(s for _, s in kept), c.const,
                                dict(c.params)))
    return FactoredNlp(vars_, cons)


# --- UCT tree -----------------------------------------------------------------

@dataclass
class UctNode:
    state: frozenset
    q: float = 0.0
    m: int = 0
    children: dict = field(default_factory=dict)   # frozenset -> UctNode

    def signature(self):
        return tuple(sorted(self.state))


def uct_score(q: float, parent_visits: int, visits: int, c: float) -> float:
    return q + c * math.sqrt(math.log(parent_visits) / visits)


def uct_select(node: UctNode, options, c: float, rng) -> frozenset:
    """Unvisited options first (fixed order), then the UCB argmax."""
    for w in options:
        if w not in node.children or node.children[w].m == 0:
            return w
    parent_visits = max(1, node.m)
    scores = [(uct_score(node.children[w].q, parent_visits, node.children[w].m, c), w)
              for w in options]
    best = max(s for s, _ in scores)
    tied = sorted([w for s, w in scores if s >= best - 1e-12], key=sorted)
    if len(tied) == 1:
        return tied[0]
    return tied[int(rng.integers(len(tied)))]


def default_executor(g: FactoredNlp, seed: int):
    """Transition execution: project randomized references onto the new
    variables with the assigned ones frozen; cost is the wall time spent."""
    counter = [0]

    def run(w_from: frozenset, w_to: frozenset, values: dict):
        counter[0] += 1
        fixed = {vid: values[vid] for vid in w_from}
        sub = induced_subgraph(g, w_to)
        conditioned = condition(sub, fixed)
        rng = child_rng(seed, f"exec{counter[0]}")
        x_ref = {}
        for v in conditioned.vars:
            lo, hi = conditioned.ranges.get(v.id, (-2.0, 2.0))
            lo = np.broadcast_to(np.asarray(lo, float), (v.dim,))
            hi = np.broadcast_to(np.asarray(hi, float), (v.dim,))
            x_ref[v.id] = lo + (hi - lo) * rng.random(v.dim)
        t0 = time.perf_counter()
        res = project(conditioned, x_ref, SolveOptions(
            seed=child_seed(seed, f"exec{counter[0]}"), restarts=1))
        cost = time.perf_counter() - t0
        if not res.feasible:
            return False, {}, cost
        return True, dict(res.assignment), cost

    return run


@dataclass
class SamplerReport:
    samples: list
    sample_times: list
    episodes: int
    root: UctNode


def generate_solutions(g: FactoredNlp, budget_s: float, lam: float | None = None,
                       c: float = 0.5, seed: int = 0, executor=None,
                       transitions=None, warm_root: UctNode | None = None,
                       max_episodes: int | None = None) -> SamplerReport:
    """UCT episodes until the wall budget runs out; rewards mix the negated
    episode cost with the goal indicator, lam auto-set to 1/(mean cost + 1)
    and re-estimated every 50 episodes when not given."""
    transitions = transitions if transitions is not None else enumerate_transitions(g)
    executor = executor if executor is not None else default_executor(g, seed)
    goal = frozenset(v.id for v in g.vars)
    root = warm_root if warm_root is not None else UctNode(frozenset())
    rng = child_rng(seed, "uct")

    samples, sample_times = [], []
    costs = []
    lam_eff = lam if lam is not None else 0.5
    t_start = time.perf_counter()
    episodes = 0
    while True:
        elapsed = time.perf_counter() - t_start
        if elapsed >= budget_s:
            break
        if max_episodes is not None and episodes >= max_episodes:
            break
        episodes += 1
        node = root
        path = [root]
        values: dict = {}
        episode_cost = 0.0
        success = True
        while node.state != goal:
            options = transitions.get(node.state, [])
            if not options:
                success = False
                break
            nxt = uct_select(node, options, c, rng)
            child = node.children.get(nxt)
            if child is None:
                child = UctNode(nxt)
                node.children[nxt] = child
            ok, new_values, cost = executor(node.state, nxt, values)
            episode_cost += cost
            if not ok:
                path.append(child)
                success = False
                break
            values.update(new_values)
            node = child
            path.append(node)
        if success and node.state == goal:
            samples.append(dict(values))
            sample_times.append(time.perf_counter() - t_start)
        costs.append(episode_cost)
        if lam is None and episodes % 50 == 0:
            c_hat = sum(costs) / len(costs)
            lam_eff = 1.0 / (c_hat + 1.0)
        reward = lam_eff * (-episode_cost) + (1.0 - lam_eff) * (1.0 if success else 0.0)
        for nd in path:
            nd.m += 1
            nd.q += (reward - nd.q) / nd.m
    return SamplerReport(samples, sample_times, episodes, root)


def run_fixed_order(g: FactoredNlp, order, budget_s: float, seed: int = 0,
                    executor=None, max_episodes: int | None = None) -> SamplerReport:
    """Expert baseline: repeatedly execute one fixed sampling order."""
    executor = executor if executor is not None else default_executor(g, seed)
    goal = frozenset(v.id for v in g.vars)
    states = [frozenset()]
    acc = set()
    for group in order:
        acc |= set(group)
        states.append(frozenset(acc))
    assert states[-1] == goal, "order must cover all variables"
    samples, sample_times = [], []
    t_start = time.perf_counter()
    episodes = 0
    while time.perf_counter() - t_start < budget_s:
        if max_episodes is not None and episodes >= max_episodes:
            break
        episodes += 1
        values: dict = {}
        ok = True
        for a, b in zip(states, states[1:]):
            ok, new_values, _ = executor(a, b, values)
            if not ok:
                break
            values.update(new_values)
        if ok:
            samples.append(dict(values))
            sample_times.append(time.perf_counter() - t_start)
    return SamplerReport(samples, sample_times, episodes, UctNode(frozenset()))


def warm_start(root: UctNode, prior_q: dict, m_equiv: int) -> UctNode:
    """Initialize matching nodes with prior means at an equivalent visit
    count; unmatched nodes are untouched."""
    if m_equiv < 0:
        raise ValueError("m_equiv must be >= 0")

    def visit(node: UctNode):
        sig = node.signature()
        if sig in prior_q and m_equiv > 0:
            node.q = float(prior_q[sig])
            node.m = m_equiv
        for child in node.children.values():
            visit(child)
    visit(root)
    return root


def projected_coverage(samples, resolution: float) -> dict:
    """Distinct occupied grid cells per variable across the sample set."""
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    cells: dict[str, set] = {}
    for sample in samples:
        for vid, val in sample.items():
            cell = tuple(int(math.floor(x / resolution)) for x in np.atleast_1d(val))
            cells.setdefault(vid, set()).add(cell)
    return {vid: len(s) for vid, s in cells.items()}
