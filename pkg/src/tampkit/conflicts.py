"""Finding small infeasible subgraphs: time-window binary search, semantic
relaxations, the optimizer's convergence point, and deletion-filter /
divide-and-conquer reduction, glued together behind a feasibility oracle
with restart escalation and the subgraph database.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

from .manip.factored import build_factored_nlp, decode_conflict
from .nlp.graph import (
    KNOWN_FEASIBLE,
    KNOWN_INFEASIBLE_SUPERSET,
    ROBOT,
    FactoredNlp,
    FeasibilityDb,
    connected_components,
    db_query,
    drop_constraints,
    induced_subgraph,
    time_slice,
)
from .nlp.solver import SolveOptions, SolveResult, solve

log = logging.getLogger(__name__)

RELAXATIONS = ("objects-only", "drop-time-consistency", "drop-collisions", "none")


class OracleInconsistent(Exception):
    pass


class EmptyViolationSet(Exception):
    pass


class NoConflictFound(Exception):
    """Every probe solved feasible although the full graph reports
    infeasible: a solver miss; callers escalate restarts."""


@dataclass
class ExtractedConflict:
    sequence: list            # partial states
    subgraph: FactoredNlp
    window: tuple[int, int] | None = None
    relaxation: str = "none"


class NlpOracle:
    """Counts solver decisions, stores results in the feasibility database,
    and answers embeds-in shortcuts before spending solver time."""

    def __init__(self, db: FeasibilityDb | None = None, restarts: int = 4,
                 seed: int = 0, opts: SolveOptions | None = None,
                 on_solve=None):
        self.db = db if db is not None else FeasibilityDb()
        self.restarts = restarts
        self.seed = seed
        self.base = opts or SolveOptions()
        self.solve_count = 0
        self.residual_evals = 0
        self.db_hits = 0
        self.on_solve = on_solve

    def _opts(self, restarts):
        return SolveOptions(
            rho0=self.base.rho0, rho_growth=self.base.rho_growth,
            max_outer=self.base.max_outer, max_inner=self.base.max_inner,
            tol_constraint=self.base.tol_constraint, tol_step=self.base.tol_step,
            seed=self.seed, restarts=restarts)

    def result(self, graph: FactoredNlp, restarts=None, store=True) -> SolveResult:
        r = solve(graph, opts=self._opts(restarts or self.restarts))
        self.solve_count += 1
        self.residual_evals += r.stats.residual_evals
        if self.on_solve is not None:
            self.on_solve(graph, r)
        if store and r.feasible:
            try:
                self.db.add_feasible(graph)
            except ValueError:
                raise OracleInconsistent(
                    "graph solved feasible but is stored infeasible")
        return r

    def feasible(self, graph: FactoredNlp, restarts=None, use_db=True) -> bool:
        if not graph.cons:
            return True
        if use_db:
            verdict = db_query(self.db, graph)
            if verdict == KNOWN_FEASIBLE:
                self.db_hits += 1
                return True
            if verdict == KNOWN_INFEASIBLE_SUPERSET:
                self.db_hits += 1
                return False
        return self.result(graph, restarts).feasible

    def record_infeasible(self, graph: FactoredNlp):
        try:
            self.db.add_infeasible(graph)
        except ValueError:
            raise OracleInconsistent("graph verified infeasible but stored feasible")


# --- binary searches ---------------------------------------------------------

def binary_search_prefix(plan_len: int, feasible_at, cache: dict | None = None):
    """Shortest k with Feas(prefix of length k) = 0.

    ``feasible_at(k)`` is consulted only on cache misses; the empty prefix is
    assumed feasible and the full plan infeasible (caller established it).
    Returns (k, oracle_calls).
    """
    cache = cache if cache is not None else {}
    cache.setdefault(0, True)
    cache.setdefault(plan_len, False)
    calls = 0

    def probe(k):
        nonlocal calls
        if k not in cache:
            cache[k] = bool(feasible_at(k))
            calls += 1
        return cache[k]

    lo, hi = 0, plan_len
    # tighten using anything already cached
    for k, feas in sorted(cache.items()):
        if feas and lo < k < hi:
            lo = k
        if not feas and lo < k < hi:
            hi = k
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if probe(mid):
            lo = mid
        else:
            hi = mid
    for k, feas in cache.items():
        for k2, feas2 in cache.items():
            if k < k2 and (not feas) and feas2:
                raise OracleInconsistent(f"Feas({k})=0 but Feas({k2})=1")
    return hi, calls


def double_binary_search_window(max_index: int, infeasible_window):
    """Window-minimal (f, l): first the minimum upper index with [0, l]
    infeasible, then the maximum lower index with [f, l] infeasible.
    ``infeasible_window(f, l)`` must be monotone in window containment.
    Returns ((f, l), calls)."""
    calls = 0

    def probe(f, l):
        nonlocal calls
        calls += 1
        return bool(infeasible_window(f, l))

    lo, hi = -1, max_index    # invariant: [0, lo] feasible, [0, hi] infeasible
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if probe(0, mid):
            hi = mid
        else:
            lo = mid
    l = hi
    lo2, hi2 = 0, l + 1       # invariant: [lo2, l] infeasible, [hi2, l] feasible
    while hi2 - lo2 > 1:
        mid = (lo2 + hi2) // 2
        if probe(mid, l):
            lo2 = mid
        else:
            hi2 = mid
    return (lo2, l), calls


# --- relaxations and candidates -----------------------------------------------

def apply_relaxation(g: FactoredNlp, kind: str) -> FactoredNlp:
    if kind == "drop-collisions":
        return drop_constraints(g, lambda c: c.kind == "Collision")
    if kind == "drop-time-consistency":
        return drop_constraints(g, lambda c: c.kind == "Equal")
    if kind == "objects-only":
        return induced_subgraph(g, [v.id for v in g.vars if v.klass != ROBOT])
    if kind == "none":
        return g
    raise ValueError(f"unknown relaxation {kind!r}")


def convergence_candidate(g: FactoredNlp, result: SolveResult) -> FactoredNlp:
    if result.feasible:
        raise ValueError("result is feasible")
    if not result.violated:
        raise EmptyViolationSet()
    cons = [c for c in g.cons if c.id in result.violated]
    varset = {vid for c in cons for vid in c.scope}
    vars_ = [v for v in g.vars if v.id in varset]
    prov = {c.id: g.provenance[c.id] for c in cons if c.id in g.provenance}
    ranges = {v.id: g.ranges[v.id] for v in vars_ if v.id in g.ranges}
    return FactoredNlp(vars_, cons, prov, ranges)


def reduce_minimal(g: FactoredNlp, oracle: NlpOracle, mode: str = "linear") -> FactoredNlp:
    """Variable-induced minimal infeasible subgraph of infeasible ``g``."""
    if mode == "linear":
        current = g
        for vid in sorted(v.id for v in g.vars):
            if len(current.vars) <= 1 or vid not in current.var_by_id:
                continue
            cand = induced_subgraph(
                current, [v.id for v in current.vars if v.id != vid])
            if cand.cons and not oracle.feasible(cand):
                current = cand
        return current
    if mode == "dc":
        universe = sorted(v.id for v in g.vars)

        def pred(varset):
            sub = induced_subgraph(g, varset)
            return bool(sub.cons) and not oracle.feasible(sub)

        def qx(background, has_delta, universe):
            if has_delta and pred(background):
                return []
            if len(universe) == 1:
                return list(universe)
            half = len(universe) // 2
            u1, u2 = universe[:half], universe[half:]
            m2 = qx(background + u1, bool(u1), u2)
            m1 = qx(background + m2, bool(m2), u1)
            return m1 + m2
        keep = qx([], False, universe)
        return induced_subgraph(g, keep)
    raise ValueError(f"unknown mode {mode!r}")


# --- the composite extractor ----------------------------------------------------

VERIFY_RESTARTS = 16


def _finish(scene, oracle: NlpOracle, sub: FactoredNlp, window, relaxation):
    """Reduce, re-verify at full restarts, decode, and re-verify the decoded
    window rebuilt standalone.  Returns None when verification fails."""
    sub = reduce_minimal(sub, oracle)
    comps = connected_components(sub)
    if len(comps) > 1:
        for comp in comps:
            if comp.cons and not oracle.feasible(comp):
                sub = comp
                break
    if oracle.feasible(sub, restarts=VERIFY_RESTARTS, use_db=False):
        return None
    try:
        seq = decode_conflict(sub)
    except Exception:
        return None
    rebuilt = build_factored_nlp(scene, seq)
    if oracle.feasible(rebuilt, restarts=VERIFY_RESTARTS, use_db=False):
        return None
    oracle.record_infeasible(sub)
    return ExtractedConflict(seq, sub, window, relaxation)


def extract_conflict(scene, g: FactoredNlp, oracle: NlpOracle,
                     result: SolveResult | None = None) -> ExtractedConflict:
    """Small verified-infeasible subgraph of infeasible ``g`` plus its decoded
    partial-state sequence.  Raises NoConflictFound on a (suspected) solver
    miss."""
    # the convergence point of the failed full solve, tried first
    if result is not None and not result.feasible and result.violated:
        cand = convergence_candidate(g, result)
        if cand.cons and not oracle.feasible(cand):
            out = _finish(scene, oracle, cand, None, "convergence")
            if out is not None:
                return out

    for relaxation in RELAXATIONS:
        relaxed = apply_relaxation(g, relaxation)
        comps = [c for c in connected_components(relaxed) if c.cons]
        comps.sort(key=lambda m: (len(m.vars), min(v.id for v in m.vars)))
        for comp in comps:
            if oracle.feasible(comp):
                continue
            k0, k1 = comp.mintime(), comp.maxtime()

            def infeasible_window(f, l):
                return not oracle.feasible(time_slice(comp, k0 + f, k0 + l))

            (f, l), _ = double_binary_search_window(k1 - k0, infeasible_window)
            window = time_slice(comp, k0 + f, k0 + l)
            res = oracle.result(window, store=False)
            sub = window
            if not res.feasible and res.violated:
                cand = convergence_candidate(window, res)
                if cand.cons and not oracle.feasible(cand):
                    sub = cand
            out = _finish(scene, oracle, sub, (k0 + f, k0 + l), relaxation)
            if out is not None:
                return out
    raise NoConflictFound("all probes feasible; escalate restarts")


def extract_conflict_escalating(scene, g, db, seed=0,
                                ladder=(1, 4, VERIFY_RESTARTS),
                                on_solve=None):
    """Restart-escalation wrapper; returns (conflict, oracle_stats)."""
    last = None
    total = {"solves": 0, "residual_evals": 0, "db_hits": 0}
    for restarts in ladder:
        oracle = NlpOracle(db, restarts=restarts, seed=seed, on_solve=on_solve)
        try:
            out = extract_conflict(scene, g, oracle, result=last)
            total["solves"] += oracle.solve_count
            total["residual_evals"] += oracle.residual_evals
            total["db_hits"] += oracle.db_hits
            return out, total
        except NoConflictFound:
            total["solves"] += oracle.solve_count
            total["residual_evals"] += oracle.residual_evals
            total["db_hits"] += oracle.db_hits
            continue
    raise NoConflictFound("conflict extraction failed at every restart level")


# --- conflict serialization -------------------------------------------------------

def conflict_to_doc(conflict) -> dict:
    if isinstance(conflict, ExtractedConflict):
        return {"kind": "sequence",
                "partial_states": [dict(sorted(p.items())) for p in conflict.sequence]}
    if isinstance(conflict, (list, tuple)) and conflict and isinstance(conflict[0], dict):
        return {"kind": "sequence",
                "partial_states": [dict(sorted(p.items())) for p in conflict]}
    return {"kind": "prefix", "actions": list(conflict)}


def conflict_from_doc(doc: dict):
    if doc["kind"] == "prefix":
        return list(doc["actions"])
    return [dict(p) for p in doc["partial_states"]]


def conflicts_to_json(conflicts) -> str:
    return json.dumps([conflict_to_doc(c) for c in conflicts], indent=1)
