import itertools

import numpy as np
import pytest

from tampkit.nlp.graph import (
    ABS_POSE,
    KNOWN_FEASIBLE,
    KNOWN_INFEASIBLE_SUPERSET,
    LIN,
    REL_POSE,
    ROBOT,
    UNKNOWN,
    BadWindow,
    ConstraintNode,
    FactoredNlp,
    FeasibilityDb,
    UnknownVariable,
    VarNode,
    connected_components,
    db_query,
    embeds_in,
    induced_subgraph,
    semantic_isomorphic,
    semantic_signature,
    time_slice,
)


def pick_graph(obj="b", robot="q", t0=0, suffix=""):
    """Minimal pick structure: Ref(b0), Kin(b0,q1,b1), Grasp(b1)."""
    b0 = VarNode(f"{obj}{t0}{suffix}", ABS_POSE, obj, t0, 2)
    q1 = VarNode(f"{robot}{t0+1}{suffix}", ROBOT, robot, t0 + 1, 2)
    b1 = VarNode(f"{obj}{t0+1}{suffix}", REL_POSE, obj, t0 + 1, 2)
    cons = [
        ConstraintNode(f"ref{suffix}@{t0}", "Ref", "eq", (b0.id,), LIN, (1.0,), (-1.0, 0.0)),
        ConstraintNode(f"kin{suffix}@{t0}", "Kin", "eq", (b0.id, q1.id, b1.id),
                       LIN, (1.0, -1.0, -1.0), (0.0, 0.0)),
        ConstraintNode(f"grasp{suffix}@{t0}", "Grasp", "ineq", (b1.id,), "norm",
                       (1.0,), (0.0, 0.0), {"radius": 0.2}),
    ]
    return FactoredNlp([b0, q1, b1], cons)


def test_induced_subgraph_full_and_empty():
    g = pick_graph()
    assert induced_subgraph(g, g.var_ids()).cons == g.cons
    empty = induced_subgraph(g, [])
    assert not empty.vars and not empty.cons


def test_induced_subgraph_scope_filter_oracle():
    g = pick_graph()
    for r in range(len(g.vars) + 1):
        for combo in itertools.combinations(g.var_ids(), r):
            sub = induced_subgraph(g, combo)
            expect = {c.id for c in g.cons if set(c.scope) <= set(combo)}
            assert {c.id for c in sub.cons} == expect


def test_induced_subgraph_unknown_var():
    with pytest.raises(UnknownVariable):
        induced_subgraph(pick_graph(), ["nope"])


def union_find_components(g):
    parent = {v.id: v.id for v in g.vars}

    def find(a):
        while parent[a] != a:
            a = parent[a]
        return a

    for c in g.cons:
        for v in c.scope[1:]:
            parent[find(v)] = find(c.scope[0])
    groups = {}
    for v in g.vars:
        groups.setdefault(find(v.id), set()).add(v.id)
    return {frozenset(s) for s in groups.values()}


def test_components_simple():
    g = pick_graph()
    assert len(connected_components(g)) == 1
    g2 = pick_graph(suffix="x")
    both = FactoredNlp(list(g.vars) + list(g2.vars), list(g.cons) + list(g2.cons))
    assert len(connected_components(both)) == 2


def test_components_random_vs_union_find():
    rng = np.random.default_rng(0)
    for trial in range(10):
        n = 30
        vars_ = [VarNode(f"v{i}", ABS_POSE, f"e{i}", 0, 2) for i in range(n)]
        cons = []
        for k in range(rng.integers(5, 25)):
            scope = tuple(f"v{i}" for i in rng.choice(n, size=rng.integers(1, 4), replace=False))
            cons.append(ConstraintNode(f"c{k}", "Lin", "eq", scope, LIN,
                                       (1.0,) * len(scope), (0.0, 0.0)))
        g = FactoredNlp(vars_, cons)
        got = {frozenset(v.id for v in comp.vars) for comp in connected_components(g)}
        assert got == union_find_components(g)


def test_time_slice_bounds_and_containment():
    g = pick_graph()
    assert time_slice(g, 0, g.maxtime()).cons == g.cons
    with pytest.raises(BadWindow):
        time_slice(g, 1, 0)
    with pytest.raises(BadWindow):
        time_slice(g, 0, 99)
    s11 = time_slice(g, 1, 1)
    assert {v.id for v in s11.vars} == {"q1", "b1"}
    assert {c.id for c in s11.cons} == {"grasp@0"}
    # nesting
    inner = time_slice(g, 1, 1)
    outer = time_slice(g, 0, 1)
    assert {v.id for v in inner.vars} <= {v.id for v in outer.vars}
    assert {c.id for c in inner.cons} <= {c.id for c in outer.cons}


def test_signature_time_shift_invariant():
    g1 = pick_graph(t0=0)
    g2 = pick_graph(t0=3)
    assert semantic_signature(g1) == semantic_signature(g2)
    assert semantic_isomorphic(g1, g2)


def test_signature_distinguishes_entities():
    assert not semantic_isomorphic(pick_graph(obj="a"), pick_graph(obj="b"))


def brute_force_isomorphic(g1, g2):
    """Permutation matcher over <= 8 variables, label- and shift-aware."""
    if len(g1.vars) != len(g2.vars) or len(g1.cons) != len(g2.cons):
        return False
    t0a, t0b = g1.mintime(), g2.mintime()

    def labels(g, t0):
        return {v.id: (v.klass, v.entity, v.dim, v.t - t0) for v in g.vars}

    la, lb = labels(g1, t0a), labels(g2, t0b)

    def con_set(g, mapping, lab):
        out = set()
        for c in g.cons:
            out.add((c.kind, c.relation, c.form, c.param_label(),
                     tuple(mapping.get(v, v) for v in c.scope)))
        return out

    ids2 = [v.id for v in g2.vars]
    for perm in itertools.permutations(ids2):
        mapping = dict(zip((v.id for v in g1.vars), perm))
        if any(la[a] != lb[b] for a, b in mapping.items()):
            continue
        c1 = sorted((c.kind, c.relation, c.form, c.param_label(),
                     tuple(mapping[v] for v in c.scope)) for c in g1.cons)
        c2 = sorted((c.kind, c.relation, c.form, c.param_label(), c.scope)
                    for c in g2.cons)
        if c1 == c2:
            return True
    return False


def test_isomorphism_vs_brute_force_random():
    rng = np.random.default_rng(42)
    for trial in range(25):
        n = int(rng.integers(2, 6))
        def rand_graph(shift, shuffle_seed):
            vs = [VarNode(f"v{i}_{shuffle_seed}", ABS_POSE, f"e{i % 3}",
                          int(rng.integers(0, 2)) + shift, 2) for i in range(n)]
            cs = []
            for k in range(int(rng.integers(1, 5))):
                m = int(rng.integers(1, min(3, n) + 1))
                scope = tuple(v.id for v in rng.choice(vs, size=m, replace=False))
                cs.append(ConstraintNode(f"c{k}_{shuffle_seed}", "Lin", "eq", scope,
                                         LIN, (1.0,) * m, (0.0, 0.0)))
            return FactoredNlp(vs, cs)
        g1 = rand_graph(0, "a")
        state = rng.bit_generator.state
        g2 = rand_graph(2, "b")
        rng.bit_generator.state = state
        g2_copy = rand_graph(2, "b")
        for other in (g2, g2_copy):
            assert semantic_isomorphic(g1, other) == brute_force_isomorphic(g1, other)


def test_iso_equivalence_relation_on_samples():
    gs = [pick_graph(t0=0), pick_graph(t0=2), pick_graph(obj="c")]
    for g in gs:
        assert semantic_isomorphic(g, g)
    for a in gs:
        for b in gs:
            assert semantic_isomorphic(a, b) == semantic_isomorphic(b, a)
    for a in gs:
        for b in gs:
            for c in gs:
                if semantic_isomorphic(a, b) and semantic_isomorphic(b, c):
                    assert semantic_isomorphic(a, c)


def test_db_query_states():
    db = FeasibilityDb()
    g = pick_graph()
    assert db_query(db, g) == UNKNOWN
    db.add_feasible(g)
    assert db_query(db, g) == KNOWN_FEASIBLE
    # a subgraph of a stored feasible graph is known feasible
    sub = induced_subgraph(g, ["b0", "q1", "b1"])
    assert db_query(db, sub) == KNOWN_FEASIBLE

    db2 = FeasibilityDb()
    small = induced_subgraph(g, ["b0"])
    db2.add_infeasible(small)
    shifted = pick_graph(t0=5)
    assert embeds_in(small, shifted)
    assert db_query(db2, shifted) == KNOWN_INFEASIBLE_SUPERSET


def test_db_rejects_double_booking():
    db = FeasibilityDb()
    g = pick_graph()
    db.add_feasible(g)
    with pytest.raises(ValueError):
        db.add_infeasible(pick_graph(t0=4))   # same signature, time-shifted
