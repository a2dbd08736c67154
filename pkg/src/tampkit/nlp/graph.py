"""Bipartite graph model of factored nonlinear programs.

Variables are small vectors tagged with a semantic class, an owning entity
and a time index.  Constraints reference an ordered scope of variables and
carry one of a few closed-form residual shapes (linear combination, norm
ball, separation, box) or a custom callback pair.  The closed forms are what
the packed kernel evaluators understand.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np

ROBOT = "robot-config"
REL_POSE = "object-relative-pose"
ABS_POSE = "object-absolute-pose"
GENERIC = "generic"

# residual shapes
LIN = "lin"          # sum_i s_i * v_i + c  (rows = len(c))
NORM = "norm"        # ||sum_i s_i v_i + c|| - r        (1 row, ineq)
SEP = "sep"          # r - ||sum_i s_i v_i + c||        (1 row, ineq)
BOX = "box"          # lo <= sum_i s_i v_i + c <= hi    (2*dim rows, ineq)
CUSTOM = "custom"    # params["fn"], params["jac"]


class UnknownVariable(Exception):
    pass


class BadWindow(Exception):
    pass


@dataclass(frozen=True)
class VarNode:
    id: str
    klass: str
    entity: str
    t: int
    dim: int

    def __post_init__(self):
        if self.t < 0 or self.dim <= 0:
            raise ValueError(f"bad var node {self.id!r}")
        if self.klass in (ROBOT, REL_POSE, ABS_POSE) and self.dim != 2:
            raise ValueError(f"{self.klass} variables are planar (dim 2)")

    @property
    def label(self):
        return (self.klass, self.entity, self.dim)


@dataclass(frozen=True)
class ConstraintNode:
    id: str
    kind: str                       # Ref | Equal | Kin | Grasp | Pose | Collision | Reach | ...
    relation: str                   # "eq" | "ineq"
    scope: tuple[str, ...]
    form: str = LIN
    signs: tuple[float, ...] = ()
    const: tuple[float, ...] = ()
    params: dict = field(default_factory=dict)

    @property
    def residual_dim(self) -> int:
        if self.form == LIN:
            return len(self.const)
        if self.form in (NORM, SEP):
            return 1
        if self.form == BOX:
            return 2 * len(self.params["lo"])
        return int(self.params["dim"])

    def param_label(self):
        items = []
        for key in sorted(self.params):
            val = self.params[key]
            if callable(val):
                items.append((key, "<fn>"))
            else:
                items.append((key, tuple(np.round(np.atleast_1d(val), 9).tolist())))
        return (
            tuple(np.round(self.signs, 9).tolist()),
            tuple(np.round(self.const, 9).tolist()),
            tuple(items),
        )


class FactoredNlp:
    """Immutable after construction; use ``replace`` helpers to derive."""

    def __init__(self, vars_, cons, provenance=None, ranges=None):
        self.vars: tuple[VarNode, ...] = tuple(vars_)
        self.cons: tuple[ConstraintNode, ...] = tuple(cons)
        self.var_by_id = {v.id: v for v in self.vars}
        if len(self.var_by_id) != len(self.vars):
            raise ValueError("duplicate variable ids")
        for c in self.cons:
            for vid in c.scope:
                if vid not in self.var_by_id:
                    raise UnknownVariable(f"constraint {c.id!r} references {vid!r}")
        self.provenance = dict(provenance or {})
        # per-variable sampling boxes for random initialization
        self.ranges = dict(ranges or {})

    # -- basic queries ------------------------------------------------------

    def var_ids(self):
        return [v.id for v in self.vars]

    def maxtime(self) -> int:
        return max((v.t for v in self.vars), default=0)

    def mintime(self) -> int:
        return min((v.t for v in self.vars), default=0)

    def total_dim(self) -> int:
        return sum(v.dim for v in self.vars)

    def neighbors(self):
        adj = {v.id: set() for v in self.vars}
        for c in self.cons:
            for vid in c.scope:
                adj[vid].add(c.id)
        return adj

    def _derive(self, vars_, cons):
        keep = {v.id for v in vars_}
        prov = {c.id: self.provenance[c.id] for c in cons if c.id in self.provenance}
        rng = {vid: box for vid, box in self.ranges.items() if vid in keep}
        return FactoredNlp(vars_, cons, prov, rng)


def induced_subgraph(g: FactoredNlp, varset) -> FactoredNlp:
    varset = set(varset)
    for vid in varset:
        if vid not in g.var_by_id:
            raise UnknownVariable(vid)
    vars_ = [v for v in g.vars if v.id in varset]
    cons = [c for c in g.cons if set(c.scope) <= varset]
    return g._derive(vars_, cons)


def drop_constraints(g: FactoredNlp, predicate) -> FactoredNlp:
    cons = [c for c in g.cons if not predicate(c)]
    return g._derive(list(g.vars), cons)


def connected_components(g: FactoredNlp) -> list[FactoredNlp]:
    parent = {v.id: v.id for v in g.vars}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb

    for c in g.cons:
        for vid in c.scope[1:]:
            union(c.scope[0], vid)
    groups: dict[str, set] = {}
    for v in g.vars:
        groups.setdefault(find(v.id), set()).add(v.id)
    comps = [induced_subgraph(g, grp) for grp in groups.values()]
    comps.sort(key=lambda m: min(v.id for v in m.vars))
    return comps


def time_slice(g: FactoredNlp, f: int, l: int) -> FactoredNlp:
    if not (0 <= f <= l <= g.maxtime()):
        raise BadWindow(f"[{f},{l}] outside [0,{g.maxtime()}]")
    return induced_subgraph(g, [v.id for v in g.vars if f <= v.t <= l])


def condition(g: FactoredNlp, values: dict) -> FactoredNlp:
    """Freeze the variables in ``values`` by folding them into constants.

    Constraints fully inside the frozen set disappear (they are assumed to
    hold at the given values); all residual shapes here are affine in each
    scoped variable, so folding is exact.
    """
    import numpy as np

    fixed = {k: np.asarray(v, dtype=float) for k, v in values.items()}
    vars_ = [v for v in g.vars if v.id not in fixed]
    keep = {v.id for v in vars_}
    cons = []
    for c in g.cons:
        free = [vid for vid in c.scope if vid in keep]
        if not free:
            continue
        if len(free) == len(c.scope):
            cons.append(c)
            continue
        if c.form == CUSTOM:
            raise ValueError(f"cannot condition custom constraint {c.id!r}")
        signs = c.signs if c.signs else (1.0,) * len(c.scope)
        const = np.zeros(max(len(c.const), 2))
        const[: len(c.const)] = c.const
        new_scope, new_signs = [], []
        for vid, s in zip(c.scope, signs):
            if vid in fixed:
                const[: fixed[vid].shape[0]] += s * fixed[vid]
            else:
                new_scope.append(vid)
                new_signs.append(s)
        dim = len(c.const) if c.form == LIN else const.shape[0]
        cons.append(ConstraintNode(
            c.id, c.kind, c.relation, tuple(new_scope), c.form,
            tuple(new_signs), tuple(const[:dim].tolist()), dict(c.params)))
    prov = {c.id: g.provenance[c.id] for c in cons if c.id in g.provenance}
    rng = {vid: box for vid, box in g.ranges.items() if vid in keep}
    return FactoredNlp(vars_, cons, prov, rng)


# --- semantic isomorphism ----------------------------------------------------

def _var_keys(g: FactoredNlp):
    t0 = g.mintime()
    return {v.id: (v.klass, v.entity, v.dim, v.t - t0) for v in g.vars}


def semantic_signature(g: FactoredNlp):
    """Canonical form invariant under time shifts and renaming.

    Exact for graphs whose (class, entity, relative-time) triples are unique,
    which holds for every graph the manipulation domain builds.
    """
    keys = _var_keys(g)
    con_labels = sorted(
        (c.kind, c.relation, c.form, c.param_label(), tuple(keys[v] for v in c.scope))
        for c in g.cons
    )
    return (tuple(sorted(keys.values())), tuple(con_labels))


def _unique_labels(g: FactoredNlp) -> bool:
    keys = list(_var_keys(g).values())
    return len(set(keys)) == len(keys)


def _match_backtracking(small: FactoredNlp, big: FactoredNlp, *, exact: bool):
    """Injective map vars(small)→vars(big) preserving labels, a global time
    shift, and every constraint of ``small``; ``exact`` also demands equal
    sizes (full isomorphism).
    """
    if exact and (len(small.vars) != len(big.vars) or len(small.cons) != len(big.cons)):
        return None
    if not small.vars:
        return {} if (not exact or not big.vars) else None

    def con_tuple(c, scope):
        return (c.kind, c.relation, c.form, c.param_label(), scope)

    big_cons = set()
    big_multiset = sorted(con_tuple(c, c.scope) for c in big.cons)
    for c in big.cons:
        big_cons.add(con_tuple(c, c.scope))

    small_vars = sorted(small.vars, key=lambda v: v.id)
    t0s = small.mintime()

    def candidates(v, delta):
        for w in big.vars:
            if w.label == v.label and w.t - (v.t - t0s) == delta:
                yield w.id

    cons_by_var: dict[str, list[ConstraintNode]] = {v.id: [] for v in small.vars}
    for c in small.cons:
        for vid in c.scope:
            cons_by_var[vid].append(c)

    def consistent(mapping, c):
        if not all(v in mapping for v in c.scope):
            return True
        return (c.kind, c.relation, c.form, c.param_label(),
                tuple(mapping[v] for v in c.scope)) in big_cons

    def rec(i, mapping, used, delta):
        if i == len(small_vars):
            if exact:
                mapped = sorted(
                    con_tuple(c, tuple(mapping[v] for v in c.scope)) for c in small.cons
                )
                if mapped != big_multiset:
                    return None
            return dict(mapping)
        v = small_vars[i]
        for wid in candidates(v, delta):
            if wid in used:
                continue
            mapping[v.id] = wid
            used.add(wid)
            if all(consistent(mapping, c) for c in cons_by_var[v.id]):
                out = rec(i + 1, mapping, used, delta)
                if out is not None:
                    return out
            del mapping[v.id]
            used.discard(wid)
        return None

    deltas = sorted({w.t for w in big.vars}) or [0]
    for delta_base in deltas:
        out = rec(0, {}, set(), delta_base)
        if out is not None:
            return out
    return None


def semantic_isomorphic(g1: FactoredNlp, g2: FactoredNlp) -> bool:
    s1, s2 = semantic_signature(g1), semantic_signature(g2)
    if s1 != s2:
        return False
    if _unique_labels(g1) and _unique_labels(g2):
        return True
    return _match_backtracking(g1, g2, exact=True) is not None


def embeds_in(small: FactoredNlp, big: FactoredNlp) -> bool:
    """True when ``small`` is isomorphic to a subgraph of ``big`` (variables
    and constraints subsets, labels and relative time preserved)."""
    if len(small.vars) > len(big.vars) or len(small.cons) > len(big.cons):
        return False
    return _match_backtracking(small, big, exact=False) is not None


# --- feasibility database ----------------------------------------------------

KNOWN_FEASIBLE = "KnownFeasible"
KNOWN_INFEASIBLE_SUPERSET = "KnownInfeasibleSuperset"
UNKNOWN = "Unknown"


class FeasibilityDb:
    """Two stores of solved subgraphs; inserts serialized, reads lock-free."""

    def __init__(self):
        self.feasible: list[tuple] = []
        self.infeasible: list[tuple] = []
        self._sigs_feasible: set = set()
        self._sigs_infeasible: set = set()
        self._lock = threading.Lock()

    def add_feasible(self, g: FactoredNlp):
        sig = semantic_signature(g)
        with self._lock:
            if sig in self._sigs_infeasible:
                raise ValueError("graph already stored as infeasible")
            if sig not in self._sigs_feasible:
                self._sigs_feasible.add(sig)
                self.feasible.append((sig, g))

    def add_infeasible(self, g: FactoredNlp):
        sig = semantic_signature(g)
        with self._lock:
            if sig in self._sigs_feasible:
                raise ValueError("graph already stored as feasible")
            if sig not in self._sigs_infeasible:
                self._sigs_infeasible.add(sig)
                self.infeasible.append((sig, g))

    def __len__(self):
        return len(self.feasible) + len(self.infeasible)


def db_query(db: FeasibilityDb, g: FactoredNlp) -> str:
    sig = semantic_signature(g)
    if sig in db._sigs_feasible:
        return KNOWN_FEASIBLE
    if sig in db._sigs_infeasible:
        return KNOWN_INFEASIBLE_SUPERSET
    for _, m in db.infeasible:
        if embeds_in(m, g):
            return KNOWN_INFEASIBLE_SUPERSET
    for _, f in db.feasible:
        if embeds_in(g, f):
            return KNOWN_FEASIBLE
    return UNKNOWN


# --- JSON dump ---------------------------------------------------------------

def graph_to_doc(g: FactoredNlp) -> dict:
    return {
        "vars": [
            {"id": v.id, "class": v.klass, "entity": v.entity, "t": v.t, "dim": v.dim}
            for v in sorted(g.vars, key=lambda v: (v.t, v.id))
        ],
        "cons": [
            {
                "id": c.id, "kind": c.kind, "rel": c.relation, "scope": list(c.scope),
                "params": {
                    "form": c.form,
                    "signs": list(c.signs),
                    "const": list(c.const),
                    **{k: (np.atleast_1d(v).tolist() if not callable(v) else "<fn>")
                       for k, v in sorted(c.params.items())},
                },
            }
            for c in sorted(g.cons, key=lambda c: c.id)
        ],
    }
