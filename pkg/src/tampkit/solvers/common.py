"""Shared pieces of the conflict-driven outer loops."""

from __future__ import annotations

import numpy as np

from ..manip.factored import build_factored_nlp
from ..manip.ground import parent_var
from ..manip.scene import Scene
from ..nlp.solver import SolveOptions, solve
from ..planning.task import PlanningTask, state_trace


class Timeout(Exception):
    def __init__(self, trace=None):
        super().__init__("budget exhausted")
        self.trace = trace


class ProvablyUnsolvable(Exception):
    pass


class Solution:
    def __init__(self, plan, states, assignment, trace, nlp_solves):
        self.plan = list(plan)
        self.states = states
        self.assignment = assignment
        self.trace = trace
        self.nlp_solves = nlp_solves

    def keyframes(self, scene: Scene):
        """Per-slice absolute entity poses, for rendering and validation."""
        frames = []
        for k, state in enumerate(self.states):
            frame = {}
            for r in scene.robots:
                vid = f"{r.id}@{k}"
                if vid in self.assignment:
                    frame[r.id] = np.array(self.assignment[vid])
            for o in scene.objects:
                frame[o.id] = _abs_pose(scene, self.assignment, state, o.id, k)
            frames.append(frame)
        return frames


def _abs_pose(scene, assignment, state, obj, k):
    parent = state.get(parent_var(obj))
    vid = f"{obj}@{k}"
    if parent is None or vid not in assignment:
        return None
    if parent == f"{obj}_init" or parent in scene.region_by_id:
        return np.array(assignment[vid])
    if parent in scene.robot_by_id:
        return np.array(assignment[f"{parent}@{k}"]) + np.array(assignment[vid])
    base = _abs_pose(scene, assignment, state, parent, k)
    return None if base is None else base + np.array(assignment[vid])


def plan_states(task: PlanningTask, plan):
    return [task.unpack(s) for s in state_trace(task, plan)]


def check_plan_nlp(scene, states, opts: SolveOptions):
    """Build + solve the keyframe NLP of a full candidate plan."""
    g = build_factored_nlp(scene, states, pin_initial_robots=True)
    return g, solve(g, opts=opts)
