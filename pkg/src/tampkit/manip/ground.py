"""Grounding a scene plus goal facts into a SAS+ task.

One parent variable per object (start symbol, regions, other objects,
robots) and one free/full flag per robot.  Handover takes arise as picks
whose source is the other robot.
"""

from __future__ import annotations

from ..planning.task import Action, PlanningTask, StateVariable
from .scene import Scene, UnknownEntity


def parent_var(obj_id: str) -> str:
    return f"parent_{obj_id}"


def robot_var(robot_id: str) -> str:
    return f"robot_{robot_id}"


def init_symbol(obj_id: str) -> str:
    return f"{obj_id}_init"


def ground_task(scene: Scene, goal: dict[str, str]) -> PlanningTask:
    objects = [o.id for o in scene.objects]
    robots = [r.id for r in scene.robots]
    regions = [g.id for g in scene.regions]

    variables = []
    for x in objects:
        domain = [init_symbol(x), *regions, *[y for y in objects if y != x], *robots]
        variables.append(StateVariable(parent_var(x), tuple(domain)))
    for r in robots:
        variables.append(StateVariable(robot_var(r), ("free", "full")))

    actions = []
    for x in objects:
        for r in robots:
            sources = [init_symbol(x), *regions, *[y for y in objects if y != x],
                       *[w for w in robots if w != r]]
            for src in sources:
                pre = {parent_var(x): src, robot_var(r): "free"}
                eff = {parent_var(x): r, robot_var(r): "full"}
                if src in robots:
                    eff[robot_var(src)] = "free"
                actions.append(Action(f"pick {x} {r} {src}", pre, eff))
            for dst in [*regions, *[y for y in objects if y != x]]:
                actions.append(Action(
                    f"place {x} {r} {dst}",
                    {parent_var(x): r, robot_var(r): "full"},
                    {parent_var(x): dst, robot_var(r): "free"}))

    init = {parent_var(x): init_symbol(x) for x in objects}
    init |= {robot_var(r): "free" for r in robots}

    valid_targets = set(regions) | set(objects) | set(robots)
    for var, val in goal.items():
        if not var.startswith("parent_") or var[len("parent_"):] not in scene.object_by_id:
            raise UnknownEntity(var)
        obj = var[len("parent_"):]
        if val != init_symbol(obj) and val not in valid_targets:
            raise UnknownEntity(val)
    return PlanningTask(variables, actions, init, dict(goal))
