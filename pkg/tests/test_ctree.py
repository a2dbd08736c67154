import math

import numpy as np
import pytest

from tampkit.ctree import CNode, CTree, run
from tampkit.manip.factored import build_factored_nlp
from tampkit.manip.scene import Disk, ObjectSpec, RegionSpec, RobotSpec, Scene
from tampkit.planning import validate_plan
from tampkit.solvers.common import Timeout


def easy_scene():
    return Scene(
        robots=[RobotSpec("Q", (0.0, 0.0), 1.5)],
        objects=[ObjectSpec("A", Disk(0.1), (0.6, 0.0))],
        regions=[RegionSpec("R", (-1.0, -0.5, -0.3, 0.5))],
    )


def test_discrete_expansion_adds_slot_and_constraints():
    scene = easy_scene()
    tree = CTree(scene, {"parent_A": "R"})
    root = tree.nodes[0]
    idx = tree.task.action_index["pick A Q A_init"]
    child = tree.discrete_expansion(root, idx)
    assert child.n_free == 1
    assert child.depth == 1
    assert root.n_free == 0           # parent untouched
    assert child.frames == root.frames
    pending = tree.pending_graph(child)
    kinds = {c.kind for c in pending.cons}
    assert kinds == {"Kin", "Grasp", "Reach"}
    # conditioned on the fixed keyframe, the window matches the 2-state build
    full = build_factored_nlp(scene, [tree.task.unpack(root.s),
                                      tree.task.unpack(child.s)])
    cross = {c.id for c in full.cons
             if any(v.endswith("@1") for v in c.scope)}
    assert {c.id for c in pending.cons} <= cross


def test_worked_tree_first_nodes():
    scene = easy_scene()
    tree = CTree(scene, {"parent_A": "R"})
    root = tree.nodes[0]
    n1 = tree.discrete_expansion(root, tree.task.action_index["pick A Q A_init"])
    assert n1.s != root.s
    assert n1.frames == root.frames     # fixed continuous state unchanged
    assert n1.n_free == 1 and n1.level == 0
    n3 = tree.numeric_expansion(n1, attempt=0)
    assert n3 is not None
    assert n3.n_free == 0 and n3.g_c == 1
    assert len(n3.frames) == 2


def test_numeric_expansion_fail_is_value():
    scene = Scene(
        robots=[RobotSpec("Q", (0.0, 0.0), 0.3)],
        objects=[ObjectSpec("A", Disk(0.1), (1.5, 0.0))],
        regions=[RegionSpec("R", (-1.0, -0.5, -0.3, 0.5))],
    )
    tree = CTree(scene, {"parent_A": "R"})
    root = tree.nodes[0]
    n1 = tree.discrete_expansion(root, tree.task.action_index["pick A Q A_init"])
    for attempt in range(8):
        assert tree.numeric_expansion(n1, attempt) is None


def test_score_formula():
    scene = easy_scene()
    tree = CTree(scene, {"parent_A": "R"})
    n = CNode(99, 0, tree.nodes[0].s, depth=1, fixed_slice=0,
              frames=tree.nodes[0].frames, free_states=({},), level=0, g_c=3)
    c_task = tree.c_task(n.s)
    assert tree.score(n) == (c_task + 1 + 0, -3)
    n.level += 1
    assert tree.score(n)[0] == c_task + 2


def test_run_meta_solves_easy():
    scene = easy_scene()
    sol, dump = run(scene, {"parent_A": "R"}, "meta", budget=200, seed=0)
    assert sol["plan"] == ["pick A Q A_init", "place A Q R"]
    assert len(sol["frames"]) == 3
    assert dump.nodes and dump.edges


@pytest.mark.parametrize("strategy", ["opt", "sampling"])
def test_run_other_strategies_solve(strategy):
    scene = easy_scene()
    sol, _ = run(scene, {"parent_A": "R"}, strategy, budget=300, seed=1)
    assert sol["plan"][-1] == "place A Q R"


def test_budget_zero_times_out():
    scene = easy_scene()
    with pytest.raises(Timeout):
        run(scene, {"parent_A": "R"}, "meta", budget=0, seed=0)


def test_opt_property_no_numeric_before_goal(monkeypatch):
    scene = easy_scene()
    seen = []
    orig = CTree.numeric_expansion

    def spy(self, n, attempt):
        seen.append(self.task.satisfies_goal(n.s))
        return orig(self, n, attempt)

    monkeypatch.setattr(CTree, "numeric_expansion", spy)
    run(scene, {"parent_A": "R"}, "opt", budget=300, seed=0)
    assert seen and all(seen)


def test_sampling_property_single_slot(monkeypatch):
    scene = easy_scene()
    slots = []
    orig = CTree.numeric_expansion

    def spy(self, n, attempt):
        slots.append(n.n_free)
        return orig(self, n, attempt)

    monkeypatch.setattr(CTree, "numeric_expansion", spy)
    run(scene, {"parent_A": "R"}, "sampling", budget=300, seed=0)
    assert slots and max(slots) == 1


def stub_numeric(success_every=2):
    """Deterministic numeric stub: succeeds on every Nth attempt."""
    calls = {}

    def stub(self, n, attempt):
        calls[n.idx] = calls.get(n.idx, 0) + 1
        self.numeric_cost += n.n_free
        if calls[n.idx] % success_every != 0:
            return None
        child = CNode(len(self.nodes), n.idx, n.s, n.depth, n.depth,
                      n.frames + tuple({} for _ in n.free_states), (),
                      level=n.level, g_c=n.g_c + n.n_free)
        self.nodes.append(child)
        return child

    return stub


def test_meta_reaches_all_opt_and_sampling_expansions(monkeypatch):
    # with a deterministic numeric stub, every (discrete state, action) pair
    # expanded by opt or sampling also appears in the meta tree
    scene = easy_scene()

    def collect(strategy):
        pairs = set()
        orig = CTree.discrete_expansion

        def spy(self, n, idx):
            pairs.add((n.s, self.task.actions[idx].id))
            return orig(self, n, idx)

        monkeypatch.setattr(CTree, "discrete_expansion", spy)
        monkeypatch.setattr(CTree, "numeric_expansion", stub_numeric())
        try:
            run(scene, {"parent_A": "R"}, strategy, budget=40, seed=0)
        except Timeout:
            pass
        return pairs

    meta = collect("meta")
    for strategy in ("opt", "sampling"):
        other = collect(strategy)
        assert other <= meta, strategy


def test_requeued_node_scores_one_higher():
    scene = easy_scene()
    tree = CTree(scene, {"parent_A": "R"})
    root = tree.nodes[0]
    n1 = tree.discrete_expansion(root, tree.task.action_index["pick A Q A_init"])
    before = tree.score(n1)[0]
    n1.level += 1
    assert tree.score(n1)[0] == before + 1
