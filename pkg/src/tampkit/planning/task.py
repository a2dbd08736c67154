"""SAS+ planning tasks: multi-valued variables, actions with conditional
effects, successor generation and plan validation.

States are plain tuples of value indices (one slot per variable), so they
hash cheaply and tasks stay immutable after construction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field


class PlanningError(Exception):
    pass


class NotApplicable(PlanningError):
    pass


class UnknownVariable(PlanningError):
    pass


class UnknownAction(PlanningError):
    pass


class EffectConflict(PlanningError):
    """Two effects assign different values to one variable in one step."""


@dataclass(frozen=True)
class StateVariable:
    id: str
    domain: tuple[str, ...]

    def __post_init__(self):
        if not self.domain:
            raise ValueError(f"variable {self.id!r} has an empty domain")
        if len(set(self.domain)) != len(self.domain):
            raise ValueError(f"variable {self.id!r} has duplicate values")


@dataclass(frozen=True)
class Action:
    """Precondition/effect pair plus optional conditional effects.

    Conditional effect conditions are evaluated on the state the action is
    applied in, before any effect lands.
    """

    id: str
    pre: dict[str, str] = field(default_factory=dict)
    eff: dict[str, str] = field(default_factory=dict)
    cond: tuple[tuple[dict[str, str], dict[str, str]], ...] = ()
    cost: int = 1

    def __post_init__(self):
        if self.cost < 0:
            raise ValueError(f"action {self.id!r} has negative cost")


class PlanningTask:
    """Immutable SAS+ task ⟨variables, actions, init, goal⟩."""

    def __init__(self, variables, actions, init: dict[str, str], goal: dict[str, str]):
        self.variables: tuple[StateVariable, ...] = tuple(variables)
        self.actions: tuple[Action, ...] = tuple(actions)
        self.var_index = {v.id: i for i, v in enumerate(self.variables)}
        if len(self.var_index) != len(self.variables):
            raise ValueError("duplicate variable ids")
        self.value_index = {
            v.id: {val: j for j, val in enumerate(v.domain)} for v in self.variables
        }
        self.action_index = {a.id: i for i, a in enumerate(self.actions)}
        if len(self.action_index) != len(self.actions):
            raise ValueError("duplicate action ids")

        for a in self.actions:
            for part in (a.pre, a.eff, *(c | e for c, e in a.cond)):
                for var, val in part.items():
                    if var not in self.var_index:
                        raise UnknownVariable(f"action {a.id!r} references {var!r}")
                    if val not in self.value_index[var]:
                        raise ValueError(f"action {a.id!r}: {var!r} has no value {val!r}")
        if set(init) != set(self.var_index):
            raise ValueError("initial state must assign every variable")
        for var, val in goal.items():
            if var not in self.var_index:
                raise UnknownVariable(f"goal references {var!r}")

        self.init = self.pack(init)
        self.goal = dict(goal)
        # Packed (slot, value-index) forms, precomputed for the search loops.
        self._pre = [self._pack_partial(a.pre) for a in self.actions]
        self._eff = [self._pack_partial(a.eff) for a in self.actions]
        self._cond = [
            tuple((self._pack_partial(c), self._pack_partial(e)) for c, e in a.cond)
            for a in self.actions
        ]
        self._goal_packed = self._pack_partial(goal)

    def _pack_partial(self, part: dict[str, str]):
        return tuple(
            (self.var_index[var], self.value_index[var][val])
            for var, val in sorted(part.items())
        )

    def pack(self, full: dict[str, str]) -> tuple[int, ...]:
        return tuple(
            self.value_index[v.id][full[v.id]] for v in self.variables
        )

    def unpack(self, state: tuple[int, ...]) -> dict[str, str]:
        return {v.id: v.domain[state[i]] for i, v in enumerate(self.variables)}

    def holds(self, packed_partial, state) -> bool:
        return all(state[i] == j for i, j in packed_partial)

    def satisfies_goal(self, state) -> bool:
        return self.holds(self._goal_packed, state)

    def applicable_indices(self, state):
        return [
            i for i, pre in enumerate(self._pre) if self.holds(pre, state)
        ]

    def apply(self, action_idx: int, state):
        """Successor of ``state`` under the action at ``action_idx``.

        Unconditional effects land first; conditional effects whose condition
        held in the input state are applied afterwards and may not clash.
        """
        if not self.holds(self._pre[action_idx], state):
            raise NotApplicable(
                f"action {self.actions[action_idx].id!r} not applicable"
            )
        out = list(state)
        assigned: dict[int, int] = {}
        for slot, val in self._eff[action_idx]:
            assigned[slot] = val
            out[slot] = val
        for cond, eff in self._cond[action_idx]:
            if self.holds(cond, state):
                for slot, val in eff:
                    if slot in assigned and assigned[slot] != val:
                        raise EffectConflict(
                            f"action {self.actions[action_idx].id!r} assigns two "
                            f"values to {self.variables[slot].id!r}"
                        )
                    assigned[slot] = val
                    out[slot] = val
        return tuple(out)


def successor(task: PlanningTask, state, action: Action | str):
    aid = action.id if isinstance(action, Action) else action
    if aid not in task.action_index:
        raise UnknownAction(aid)
    return task.apply(task.action_index[aid], state)


def applicable(task: PlanningTask, state) -> list[Action]:
    return [task.actions[i] for i in task.applicable_indices(state)]


def validate_plan(task: PlanningTask, plan) -> tuple[bool, tuple[int, ...], int]:
    """Replay ``plan`` (action ids) from the initial state.

    Returns (ok, final_state, failing_index); failing_index is -1 when the
    plan is valid, the index of the first inapplicable action otherwise, or
    len(plan) when all actions apply but the goal is unmet.
    """
    state = task.init
    for k, aid in enumerate(plan):
        if aid not in task.action_index:
            return False, state, k
        idx = task.action_index[aid]
        if not task.holds(task._pre[idx], state):
            return False, state, k
        state = task.apply(idx, state)
    if task.satisfies_goal(state):
        return True, state, -1
    return False, state, len(plan)


def state_trace(task: PlanningTask, plan) -> list[tuple[int, ...]]:
    """States visited by ``plan`` starting at init; raises if inapplicable."""
    states = [task.init]
    for aid in plan:
        states.append(successor(task, states[-1], aid))
    return states


# --- JSON serialization -------------------------------------------------

def task_to_json(task: PlanningTask) -> str:
    doc = {
        "variables": [
            {"id": v.id, "domain": list(v.domain)} for v in task.variables
        ],
        "actions": [
            _action_doc(a) for a in task.actions
        ],
        "init": {v.id: val for v, val in zip(task.variables, (
            task.variables[i].domain[task.init[i]] for i in range(len(task.variables))
        ))},
        "goal": dict(sorted(task.goal.items())),
    }
    return json.dumps(doc, indent=1, sort_keys=False)


def _action_doc(a: Action) -> dict:
    doc = {
        "id": a.id,
        "pre": dict(sorted(a.pre.items())),
        "eff": dict(sorted(a.eff.items())),
        "cond": [
            {"if": dict(sorted(c.items())), "then": dict(sorted(e.items()))}
            for c, e in a.cond
        ],
    }
    if a.cost != 1:
        doc["cost"] = a.cost
    return doc


def task_from_json(text: str) -> PlanningTask:
    doc = json.loads(text)
    variables = [StateVariable(v["id"], tuple(v["domain"])) for v in doc["variables"]]
    actions = [
        Action(
            a["id"],
            dict(a.get("pre", {})),
            dict(a.get("eff", {})),
            tuple((dict(c["if"]), dict(c["then"])) for c in a.get("cond", [])),
            int(a.get("cost", 1)),
        )
        for a in doc["actions"]
    ]
    return PlanningTask(variables, actions, dict(doc["init"]), dict(doc["goal"]))
