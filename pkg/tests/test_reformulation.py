import numpy as np
import pytest

from tampkit.planning import Action, PlanningTask, StateVariable, state_trace
from tampkit.reformulation import (
    EmptyCandidates,
    build_prefix_tree,
    forbid_prefixes,
    forbid_state_sequence,
    plan_novelty,
    project_plan,
    select_plan,
)

from conftest import enumerate_plans, random_task


def projected_plans(task2, max_len):
    return {tuple(project_plan(p)) for p in enumerate_plans(task2, max_len)}


def has_forbidden_prefix(plan, prefixes):
    return any(tuple(plan[: len(p)]) == tuple(p) for p in prefixes)


def trace_contains_window(task, plan, seq):
    states = [task.unpack(s) for s in state_trace(task, plan)]
    L = len(seq) - 1
    for k in range(len(states) - L):
        if all(
            all(states[k + l].get(v) == val for v, val in seq[l].items())
            for l in range(L + 1)
        ):
            return True
    return False


# --- prefix trees ---------------------------------------------------------

def test_tree_dominance_single_leaf():
    tree = build_prefix_tree([("a",), ("a", "b")])
    assert tree.forbidden == {("a",)}
    tree2 = build_prefix_tree([("a", "b"), ("a",)])
    assert tree2.forbidden == {("a",)}


def test_tree_empty():
    assert build_prefix_tree([]).is_empty()


def test_tree_two_children():
    tree = build_prefix_tree([("a", "b"), ("a", "c")])
    assert tree.forbidden == {("a", "b"), ("a", "c")}
    assert tree.nodes == {(), ("a",), ("a", "b"), ("a", "c")}
    # oracle: no forbidden node is an ancestor of another
    for p in tree.forbidden:
        for q in tree.forbidden:
            if p != q:
                assert q[: len(p)] != p


# --- prefix forbidding ------------------------------------------------------

def two_action_task():
    return PlanningTask(
        [StateVariable("v", ("0", "1", "2"))],
        [Action("a", {}, {"v": "1"}), Action("b", {}, {"v": "2"}),
         Action("r", {}, {"v": "0"})],
        {"v": "0"}, {"v": "2"})


def test_forbid_single_prefix_example():
    task = two_action_task()
    tree = build_prefix_tree([("a",)])
    task2 = forbid_prefixes(task, tree)
    max_len = 3
    expected = {p for p in enumerate_plans(task, max_len)
                if not has_forbidden_prefix(p, [("a",)])}
    assert projected_plans(task2, max_len) == expected
    assert all(not p or p[0] != "a" for p in expected)


def test_forbid_empty_tree_identity():
    task = two_action_task()
    task2 = forbid_prefixes(task, build_prefix_tree([]))
    assert task2 is task


def test_forbid_all_initial_actions_unsolvable():
    task = two_action_task()
    tree = build_prefix_tree([("a",), ("b",), ("r",)])
    task2 = forbid_prefixes(task, tree)
    assert projected_plans(task2, 4) == set()


def test_forbid_keeps_pure_follow_survivors():
    # A plan that is a proper ancestor of a forbidden leaf must survive.
    task = two_action_task()
    task2 = forbid_prefixes(task, build_prefix_tree([("b", "a")]))
    plans2 = projected_plans(task2, 2)
    assert ("b",) in plans2
    assert ("b", "a") not in plans2


def test_forbid_keeps_empty_plan():
    task = PlanningTask(
        [StateVariable("v", ("0", "1"))],
        [Action("a", {}, {"v": "1"})],
        {"v": "0"}, {"v": "0"})
    task2 = forbid_prefixes(task, build_prefix_tree([("a",)]))
    assert () in projected_plans(task2, 2)


def random_prefixes(task, rng, max_len=3):
    """Action sequences applicable from init, to use as forbidden prefixes."""
    prefixes = []
    for _ in range(rng.integers(1, 4)):
        state = task.init
        prefix = []
        for _ in range(rng.integers(1, max_len + 1)):
            idx = task.applicable_indices(state)
            if not idx:
                break
            i = idx[int(rng.integers(len(idx)))]
            prefix.append(task.actions[i].id)
            state = task.apply(i, state)
        if prefix:
            prefixes.append(tuple(prefix))
    return prefixes


@pytest.mark.parametrize("seed", range(6))
def test_forbid_prefixes_exact_semantics_random(seed):
    rng = np.random.default_rng(seed)
    for trial in range(9):
        task = random_task(rng)
        prefixes = random_prefixes(task, rng)
        if not prefixes:
            continue
        tree = build_prefix_tree(prefixes)
        task2 = forbid_prefixes(task, tree)
        max_len = 5
        expected = {p for p in enumerate_plans(task, max_len)
                    if not has_forbidden_prefix(p, prefixes)}
        assert projected_plans(task2, max_len) == expected


def lifted_variants(task2, prefix):
    """All action-id sequences of task2 whose projection equals ``prefix``."""
    variants = [()]
    for orig in prefix:
        copies = [a.id for a in task2.actions if project_plan([a.id])[0] == orig]
        variants = [v + (c,) for v in variants for c in copies]
    return variants


def test_forbid_prefixes_idempotent_on_plan_sets():
    # Re-forbidding already-forbidden prefixes (lifted to the compiled action
    # names) leaves the projected plan set unchanged.
    task = two_action_task()
    prefixes = [("a",), ("b", "a")]
    once = forbid_prefixes(task, build_prefix_tree(prefixes))
    lifted = [v for p in prefixes for v in lifted_variants(once, p)]
    twice = forbid_prefixes(once, build_prefix_tree(lifted))
    max_len = 3
    plans_once = projected_plans(once, max_len)
    plans_twice = {tuple(project_plan(project_plan(p)))
                   for p in enumerate_plans(twice, max_len)}
    assert plans_twice == plans_once


# --- state-sequence forbidding ----------------------------------------------

def test_forbid_sequence_l0_initial_match_unsolvable_when_invariant():
    # p0 holds initially and no action can falsify it -> unsolvable
    task = PlanningTask(
        [StateVariable("u", ("0", "1")), StateVariable("v", ("0", "1"))],
        [Action("a", {}, {"v": "1"})],
        {"u": "0", "v": "0"}, {"v": "1"})
    task2 = forbid_state_sequence(task, [{"u": "0"}])
    assert enumerate_plans(task2, 4) == set()


def test_forbid_sequence_l0_initial_match_unsolvable_even_if_falsifiable():
    # The window ⟨p0⟩ occurs at k=0, so every trace contains it.
    task = PlanningTask(
        [StateVariable("u", ("0", "1"))],
        [Action("flip", {}, {"u": "1"})],
        {"u": "0"}, {"u": "1"})
    task2 = forbid_state_sequence(task, [{"u": "0"}])
    assert enumerate_plans(task2, 4) == set()


def test_forbid_sequence_unmatched_is_identity_on_plans():
    rng = np.random.default_rng(3)
    found = 0
    for trial in range(30):
        task = random_task(rng)
        seq = [{f"v{int(rng.integers(len(task.variables)))}": str(rng.integers(2))}
               for _ in range(2)]
        max_len = 4
        base = enumerate_plans(task, max_len)
        if not base:
            continue
        unmatched = all(not trace_contains_window(task, p, seq) for p in base)
        if not unmatched:
            continue
        found += 1
        task2 = forbid_state_sequence(task, seq)
        assert enumerate_plans(task2, max_len) == base
        if found >= 3:
            break
    assert found >= 1


@pytest.mark.parametrize("seed", range(6))
def test_forbid_sequence_exact_window_semantics_random(seed):
    rng = np.random.default_rng(100 + seed)
    for trial in range(9):
        task = random_task(rng)
        length = int(rng.integers(1, 3))
        seq = []
        for _ in range(length):
            n = int(rng.integers(1, min(2, len(task.variables)) + 1))
            vars_ = rng.choice(len(task.variables), size=n, replace=False)
            seq.append({f"v{i}": str(rng.integers(2)) for i in vars_})
        task2 = forbid_state_sequence(task, seq)
        max_len = 5
        expected = {p for p in enumerate_plans(task, max_len)
                    if not trace_contains_window(task, p, seq)}
        assert enumerate_plans(task2, max_len) == expected


def test_forbid_sequence_composition_commutes():
    rng = np.random.default_rng(17)
    task = random_task(rng)
    seq_a = [{"v0": "0"}, {"v0": "1"}]
    seq_b = [{"v1": "1"}]
    ab = forbid_state_sequence(forbid_state_sequence(task, seq_a), seq_b)
    ba = forbid_state_sequence(forbid_state_sequence(task, seq_b), seq_a)
    assert enumerate_plans(ab, 5) == enumerate_plans(ba, 5)


def test_forbid_sequence_handover_example():
    # Forbidding ⟨{parent_B=B_init}, {parent_B=Q}⟩ removes exactly the plans
    # where Q picks B from its start.
    variables = [StateVariable("parent_B", ("B_init", "Q", "W", "table")),
                 StateVariable("robot_Q", ("free", "full")),
                 StateVariable("robot_W", ("free", "full"))]
    actions = []
    for robot in ("Q", "W"):
        actions.append(Action(
            f"pick B {robot} B_init",
            {"parent_B": "B_init", f"robot_{robot}": "free"},
            {"parent_B": robot, f"robot_{robot}": "full"}))
        actions.append(Action(
            f"place B {robot} table",
            {"parent_B": robot, f"robot_{robot}": "full"},
            {"parent_B": "table", f"robot_{robot}": "free"}))
    other = {"Q": "W", "W": "Q"}
    for robot in ("Q", "W"):
        actions.append(Action(
            f"pick B {robot} {other[robot]}",
            {"parent_B": other[robot], f"robot_{robot}": "free"},
            {"parent_B": robot, f"robot_{robot}": "full",
             f"robot_{other[robot]}": "free"}))
    task = PlanningTask(
        variables, actions,
        {"parent_B": "B_init", "robot_Q": "free", "robot_W": "free"},
        {"parent_B": "table"})
    seq = [{"parent_B": "B_init"}, {"parent_B": "Q"}]
    task2 = forbid_state_sequence(task, seq)
    max_len = 4
    base = enumerate_plans(task, max_len)
    got = enumerate_plans(task2, max_len)
    assert got == {p for p in base if not trace_contains_window(task, p, seq)}
    assert ("pick B W B_init", "place B W table") in got
    assert all(p[0] != "pick B Q B_init" for p in got)
    # W picking from start then handover to Q is still allowed
    assert any("pick B Q W" in p for p in got)


# --- novelty ---------------------------------------------------------------

def test_novelty_examples():
    assert plan_novelty(("a", "b", "c"), {("a", "b", "d")}) == -3
    assert plan_novelty(("a", "b"), set()) == 0
    assert plan_novelty(("x", "y"), {("y", "z"), ("z", "x")}) == -1


def test_novelty_monotone_as_tested_grows():
    rng = np.random.default_rng(0)
    plans = [tuple(rng.choice(["a", "b", "c"], size=rng.integers(1, 5)))
             for _ in range(12)]
    target = tuple(rng.choice(["a", "b", "c"], size=4))
    tested = set()
    prev = 0
    for p in plans:
        tested.add(p)
        np_now = plan_novelty(target, tested)
        assert np_now <= prev or prev == 0
        prev = min(prev, np_now)


def test_novelty_member_of_tested():
    p = ("a", "b")
    assert plan_novelty(p, {p}) <= -len(p)


def test_select_plan_basics():
    assert select_plan([("a",)], set()) == ["a"]
    got = select_plan([("a", "b"), ("c", "d")], {("a", "x")})
    assert got == ["c", "d"]
    with pytest.raises(EmptyCandidates):
        select_plan([], set())


def test_select_plan_permutation_invariant():
    rng = np.random.default_rng(11)
    cands = [tuple(rng.choice(["a", "b", "c"], size=3)) for _ in range(10)]
    tested = {tuple(rng.choice(["a", "b", "c"], size=3)) for _ in range(4)}
    ref = select_plan(cands, tested, seed=5)
    for perm_seed in range(6):
        perm = np.random.default_rng(perm_seed).permutation(len(cands))
        shuffled = [cands[i] for i in perm]
        assert select_plan(shuffled, tested, seed=5) == ref
