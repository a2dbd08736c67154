import numpy as np
import pytest

from tampkit.planning import Action, PlanningTask, StateVariable


def blocksworld(blocks=("a", "b", "c"), goal=None):
    """SAS+ encoding of the three-block stacking problem."""
    variables = [StateVariable("hand", ("empty", *blocks))]
    for x in blocks:
        others = tuple(f"on_{y}" for y in blocks if y != x)
        variables.append(StateVariable(f"pos_{x}", ("table", "hand", *others)))
        variables.append(StateVariable(f"clear_{x}", ("no", "yes")))

    actions = []
    for x in blocks:
        actions.append(Action(
            f"pick-up {x}",
            {f"pos_{x}": "table", f"clear_{x}": "yes", "hand": "empty"},
            {f"pos_{x}": "hand", f"clear_{x}": "no", "hand": x}))
        actions.append(Action(
            f"put-down {x}",
            {"hand": x},
            {f"pos_{x}": "table", f"clear_{x}": "yes", "hand": "empty"}))
        for y in blocks:
            if y == x:
                continue
            actions.append(Action(
                f"stack {x} {y}",
                {"hand": x, f"clear_{y}": "yes"},
                {f"pos_{x}": f"on_{y}", f"clear_{x}": "yes",
                 f"clear_{y}": "no", "hand": "empty"}))
            actions.append(Action(
                f"unstack {x} {y}",
                {f"pos_{x}": f"on_{y}", f"clear_{x}": "yes", "hand": "empty"},
                {f"pos_{x}": "hand", f"clear_{x}": "no",
                 f"clear_{y}": "yes", "hand": x}))

    init = {"hand": "empty"}
    for x in blocks:
        init[f"pos_{x}"] = "table"
        init[f"clear_{x}"] = "yes"
    if goal is None:
        goal = {"clear_c": "yes", "pos_b": "table", "pos_c": "on_a", "pos_a": "on_b"}
    return PlanningTask(variables, actions, init, goal)


@pytest.fixture
def bw_task():
    return blocksworld()


def enumerate_plans(task, max_len):
    """All plans (action-id sequences) up to max_len, by exhaustive DFS."""
    plans = []

    def rec(state, prefix):
        if task.satisfies_goal(state):
            plans.append(tuple(prefix))
        if len(prefix) == max_len:
            return
        for i in task.applicable_indices(state):
            prefix.append(task.actions[i].id)
            rec(task.apply(i, state), prefix)
            prefix.pop()

    rec(task.init, [])
    return set(plans)


def reachable_states(task, cap=1_000_000):
    seen = {task.init}
    frontier = [task.init]
    while frontier:
        state = frontier.pop()
        for i in task.applicable_indices(state):
            nxt = task.apply(i, state)
            if nxt not in seen:
                seen.add(nxt)
                frontier.append(nxt)
                if len(seen) > cap:
                    return seen
    return seen


def random_task(rng: np.random.Generator, n_vars=3, dom=2, n_actions=6,
                max_reachable=200):
    """Small random SAS+ task whose reachable state count stays bounded."""
    while True:
        variables = [
            StateVariable(f"v{i}", tuple(str(d) for d in range(dom)))
            for i in range(n_vars)
        ]
        actions = []
        for k in range(n_actions):
            pre_vars = rng.choice(n_vars, size=rng.integers(1, n_vars + 1), replace=False)
            eff_vars = rng.choice(n_vars, size=rng.integers(1, n_vars + 1), replace=False)
            pre = {f"v{i}": str(rng.integers(dom)) for i in pre_vars}
            eff = {f"v{i}": str(rng.integers(dom)) for i in eff_vars}
            actions.append(Action(f"a{k}", pre, eff))
        init = {f"v{i}": str(rng.integers(dom)) for i in range(n_vars)}
        n_goal = rng.integers(1, n_vars + 1)
        goal_vars = rng.choice(n_vars, size=n_goal, replace=False)
        goal = {f"v{i}": str(rng.integers(dom)) for i in goal_vars}
        task = PlanningTask(variables, actions, init, goal)
        if len(reachable_states(task, cap=max_reachable)) <= max_reachable:
            return task
