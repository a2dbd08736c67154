from .task import (
    Action,
    EffectConflict,
    NotApplicable,
    PlanningTask,
    StateVariable,
    UnknownAction,
    UnknownVariable,
    applicable,
    state_trace,
    successor,
    task_from_json,
    task_to_json,
    validate_plan,
)
from .search import (
    Unsolvable,
    heuristic_hadd,
    heuristic_hmax,
    plan_length_or_inf,
    plan_search,
)

__all__ = [
    "Action",
    "EffectConflict",
    "NotApplicable",
    "PlanningTask",
    "StateVariable",
    "UnknownAction",
    "UnknownVariable",
    "Unsolvable",
    "applicable",
    "heuristic_hadd",
    "heuristic_hmax",
    "plan_length_or_inf",
    "plan_search",
    "state_trace",
    "successor",
    "task_from_json",
    "task_to_json",
    "validate_plan",
]
