import math
from collections import deque

import numpy as np
import pytest

from tampkit.planning import (
    Action,
    NotApplicable,
    PlanningTask,
    StateVariable,
    Unsolvable,
    applicable,
    heuristic_hadd,
    plan_search,
    successor,
    task_from_json,
    task_to_json,
    validate_plan,
)

from conftest import blocksworld, random_task


def test_successor_blocksworld_pickup(bw_task):
    s1 = successor(bw_task, bw_task.init, "pick-up a")
    d = bw_task.unpack(s1)
    assert d["pos_a"] == "hand"
    assert d["clear_a"] == "no"
    assert d["hand"] == "a"


def test_successor_empty_effects_is_identity():
    task = PlanningTask(
        [StateVariable("v", ("0", "1"))],
        [Action("noop", {}, {})],
        {"v": "0"}, {"v": "0"})
    assert successor(task, task.init, "noop") == task.init


def test_successor_conditional_effect_false_condition():
    task = PlanningTask(
        [StateVariable("b0", ("0", "1")), StateVariable("b1", ("0", "1"))],
        [Action("flip", {}, {}, (({"b0": "1"}, {"b0": "0"}),))],
        {"b0": "0", "b1": "0"}, {"b1": "1"})
    out = successor(task, task.init, "flip")
    assert task.unpack(out)["b0"] == "0"


def test_successor_conditional_effect_fires_on_input_state():
    # Condition is read from the input state even if an unconditional effect
    # changes the same variable first.
    task = PlanningTask(
        [StateVariable("v", ("0", "1")), StateVariable("w", ("0", "1"))],
        [Action("a", {}, {"v": "1"}, (({"v": "0"}, {"w": "1"}),))],
        {"v": "0", "w": "0"}, {"w": "1"})
    out = task.unpack(successor(task, task.init, "a"))
    assert out == {"v": "1", "w": "1"}


def test_successor_not_applicable(bw_task):
    s1 = successor(bw_task, bw_task.init, "pick-up a")
    with pytest.raises(NotApplicable):
        successor(bw_task, s1, "pick-up b")


def test_applicable_initial_blocksworld(bw_task):
    ids = {a.id for a in applicable(bw_task, bw_task.init)}
    assert ids == {"pick-up a", "pick-up b", "pick-up c"}


def test_applicable_empty_and_precondition_free():
    task = PlanningTask(
        [StateVariable("v", ("0", "1"))],
        [Action("always", {}, {"v": "1"}), Action("never", {"v": "1"}, {"v": "0"})],
        {"v": "0"}, {"v": "1"})
    assert [a.id for a in applicable(task, task.init)] == ["always"]


def bfs_optimal_length(task):
    if task.satisfies_goal(task.init):
        return 0
    seen = {task.init}
    frontier = deque([(task.init, 0)])
    while frontier:
        state, depth = frontier.popleft()
        for i in task.applicable_indices(state):
            nxt = task.apply(i, state)
            if nxt in seen:
                continue
            if task.satisfies_goal(nxt):
                return depth + 1
            seen.add(nxt)
            frontier.append((nxt, depth + 1))
    return None


def test_astar_blocksworld_four_actions(bw_task):
    plan = plan_search(bw_task, "astar")
    assert len(plan) == 4
    ok, _, idx = validate_plan(bw_task, plan)
    assert ok and idx == -1


def test_goal_in_init_gives_empty_plan():
    task = PlanningTask(
        [StateVariable("v", ("0", "1"))], [Action("a", {}, {"v": "1"})],
        {"v": "0"}, {"v": "0"})
    assert plan_search(task, "greedy") == []
    assert plan_search(task, "astar") == []


def test_unreachable_goal_raises():
    task = PlanningTask(
        [StateVariable("v", ("0", "1", "2"))],
        [Action("a", {"v": "0"}, {"v": "1"})],
        {"v": "0"}, {"v": "2"})
    with pytest.raises(Unsolvable):
        plan_search(task, "greedy")


def hadd_fixed_point(task, state):
    """Independent Bellman fixed-point oracle over fact costs."""
    inf = math.inf
    cost = {}
    for slot, val in enumerate(state):
        cost[(slot, val)] = 0.0
    cases = []
    for i, a in enumerate(task.actions):
        if task._eff[i]:
            cases.append((task._pre[i], a.cost, task._eff[i]))
        for c, e in task._cond[i]:
            cases.append((tuple(set(task._pre[i]) | set(c)), a.cost, e))
    for _ in range(10_000):
        new = dict(cost)
        for req, c, eff in cases:
            tot = 0.0
            for f in req:
                tot += cost.get(f, inf)
            for f in eff:
                if tot + c < new.get(f, inf):
                    new[f] = tot + c
        if new == cost:
            break
        cost = new
    total = 0.0
    for f in task._goal_packed:
        total += cost.get(f, inf)
    return total


def test_hadd_zero_iff_goal(bw_task):
    goal_state = bw_task.init
    # run the found plan to a goal state
    plan = plan_search(bw_task, "astar")
    ok, final, _ = validate_plan(bw_task, plan)
    assert ok
    assert heuristic_hadd(bw_task, final) == 0
    assert heuristic_hadd(bw_task, goal_state) > 0


def test_hadd_matches_fixed_point_oracle(bw_task):
    assert heuristic_hadd(bw_task, bw_task.init) == hadd_fixed_point(bw_task, bw_task.init)
    rng = np.random.default_rng(7)
    for trial in range(20):
        task = random_task(rng)
        assert heuristic_hadd(task, task.init) == hadd_fixed_point(task, task.init)


def test_hadd_infinite_on_unreachable():
    task = PlanningTask(
        [StateVariable("v", ("0", "1", "2"))],
        [Action("a", {"v": "0"}, {"v": "1"})],
        {"v": "0"}, {"v": "2"})
    assert heuristic_hadd(task, task.init) == math.inf


def test_astar_matches_bfs_on_random_tasks():
    rng = np.random.default_rng(123)
    checked = 0
    for trial in range(40):
        task = random_task(rng)
        opt = bfs_optimal_length(task)
        if opt is None:
            with pytest.raises(Unsolvable):
                plan_search(task, "astar")
        else:
            plan = plan_search(task, "astar")
            assert len(plan) == opt
            checked += 1
    assert checked >= 10


def test_greedy_plans_always_validate():
    rng = np.random.default_rng(5)
    for trial in range(30):
        task = random_task(rng)
        try:
            plan = plan_search(task, "greedy", seed=trial)
        except Unsolvable:
            continue
        ok, _, idx = validate_plan(task, plan)
        assert ok and idx == -1


def test_search_deterministic(bw_task):
    p1 = plan_search(bw_task, "greedy", seed=42)
    p2 = plan_search(bw_task, "greedy", seed=42)
    assert p1 == p2


def test_validate_reports_first_failure(bw_task):
    ok, _, idx = validate_plan(bw_task, ["pick-up a", "pick-up b"])
    assert not ok and idx == 1


def test_validate_empty_plan_goal_in_init():
    task = PlanningTask(
        [StateVariable("v", ("0", "1"))], [Action("a", {}, {"v": "1"})],
        {"v": "0"}, {"v": "0"})
    ok, final, idx = validate_plan(task, [])
    assert ok and final == task.init and idx == -1


def test_json_roundtrip(bw_task):
    text = task_to_json(bw_task)
    back = task_from_json(text)
    assert task_to_json(back) == text
    assert back.init == bw_task.init
    assert plan_search(back, "astar") == plan_search(bw_task, "astar")
