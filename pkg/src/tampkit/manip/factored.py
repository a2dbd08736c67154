"""Mapping between discrete state sequences and factored NLPs over keyframes.

Rules fire on the facts of single states (attachment constraints) and on
pairs of consecutive states (pose continuity through a parent switch, or
stillness when the parent is unchanged).  They are deliberately indifferent
to the absolute time index, so a window of partial states generates the same
structure wherever it sits in a plan; conflict decoding relies on that.

Variable convention: objects attached to a start symbol or region carry an
absolute pose; objects attached to a robot or another object carry the pose
relative to the parent.  Grippers are point frames tied to their base disk.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..nlp.graph import (
    ABS_POSE,
    BOX,
    LIN,
    NORM,
    REL_POSE,
    ROBOT,
    SEP,
    ConstraintNode,
    FactoredNlp,
    VarNode,
)
from .ground import init_symbol, parent_var, robot_var
from .scene import (
    COLLISION_MARGIN,
    GRIPPER_RADIUS,
    Scene,
    collision_radius,
    grasp_radius,
)


class InvalidSequence(Exception):
    pass


class CyclicAttachment(InvalidSequence):
    """Objects attached in a parent cycle at one keyframe."""

    def __init__(self, slice_index: int, facts: dict):
        super().__init__(f"kinematic cycle at slice {slice_index}: {facts}")
        self.slice_index = slice_index
        self.facts = facts


class MissingProvenance(Exception):
    pass


@dataclass(frozen=True)
class Provenance:
    """Which facts generated a constraint: a single partial state at offset
    ``k`` or a pair at offsets (k, k+1)."""

    k: int
    p: tuple
    p2: tuple | None = None

    @property
    def is_pair(self) -> bool:
        return self.p2 is not None


def _facts(d: dict) -> tuple:
    return tuple(sorted(d.items()))


@dataclass(frozen=True)
class PiRule:
    name: str
    arity: str          # "single" | "pair"
    emit: object        # callable(builder, k, ...)


class _Builder:
    def __init__(self, scene: Scene, states):
        self.scene = scene
        self.states = states
        self.vars: dict[str, VarNode] = {}
        self.cons: list[ConstraintNode] = []
        self.prov: dict[str, Provenance] = {}
        self.ranges: dict[str, tuple] = {}
        x0, y0, x1, y1 = scene.bbox()
        self._abs_lo = np.array([x0, y0])
        self._abs_hi = np.array([x1, y1])

    # -- variables -----------------------------------------------------------

    def var(self, entity: str, k: int, klass: str) -> str:
        vid = f"{entity}@{k}"
        if vid in self.vars:
            if self.vars[vid].klass != klass:
                raise InvalidSequence(
                    f"{vid} requested as {klass} but exists as {self.vars[vid].klass}")
            return vid
        self.vars[vid] = VarNode(vid, klass, entity, k, 2)
        if klass == REL_POSE:
            r = grasp_radius(self.scene.object_by_id[entity].shape) \
                if entity in self.scene.object_by_id else 0.5
            self.ranges[vid] = (np.array([-r, -r]), np.array([r, r]))
        else:
            self.ranges[vid] = (self._abs_lo, self._abs_hi)
        return vid

    def gripper(self, robot: str, k: int) -> str:
        return self.var(robot, k, ROBOT)

    # -- attachment chains ----------------------------------------------------

    def parent_of(self, obj: str, state: dict):
        return state.get(parent_var(obj))

    def abs_chain(self, obj: str, k: int, state: dict, _seen=()):
        """Absolute pose of ``obj`` at slice ``k`` as [(var_id, sign)], or
        None when a needed attachment fact is absent."""
        if obj in _seen:
            raise CyclicAttachment(k, {parent_var(o): self.parent_of(o, state)
                                       for o in _seen})
        parent = self.parent_of(obj, state)
        if parent is None:
            return None
        if parent == init_symbol(obj) or parent in self.scene.region_by_id:
            return [(self.var(obj, k, ABS_POSE), 1.0)]
        if parent in self.scene.robot_by_id:
            return [(self.gripper(parent, k), 1.0),
                    (self.var(obj, k, REL_POSE), 1.0)]
        if parent in self.scene.object_by_id:
            base = self.abs_chain(parent, k, state, _seen=_seen + (obj,))
            if base is None:
                return None
            return base + [(self.var(obj, k, REL_POSE), 1.0)]
        raise InvalidSequence(f"unknown parent {parent!r} for {obj!r}")

    def chain_facts(self, obj: str, state: dict) -> dict:
        """Facts pinning the attachment chain of ``obj`` in ``state``."""
        facts = {}
        cur = obj
        while True:
            parent = self.parent_of(cur, state)
            if parent is None or parent_var(cur) in facts:
                break
            facts[parent_var(cur)] = parent
            if parent in self.scene.object_by_id:
                cur = parent
            else:
                break
        return facts

    # -- constraint emission ---------------------------------------------------

    def add(self, con: ConstraintNode, prov: Provenance):
        self.cons.append(con)
        self.prov[con.id] = prov

    def lin(self, cid, kind, terms, const, prov):
        coeff: dict[str, float] = {}
        for vid, s in terms:
            coeff[vid] = coeff.get(vid, 0.0) + s
        scope = tuple(vid for vid in coeff if coeff[vid] != 0.0)
        signs = tuple(coeff[vid] for vid in scope)
        self.add(ConstraintNode(cid, kind, "eq", scope, LIN, signs, tuple(const)),
                 prov)


# --- rule emitters -----------------------------------------------------------

def _rule_ref(b: _Builder, k: int, state: dict):
    for o in b.scene.objects:
        if b.parent_of(o.id, state) == init_symbol(o.id):
            vid = b.var(o.id, k, ABS_POSE)
            b.lin(f"Ref:{o.id}@{k}", "Ref", [(vid, 1.0)],
                  (-o.start[0], -o.start[1]),
                  Provenance(k, _facts({parent_var(o.id): init_symbol(o.id)})))


def _rule_grasp(b: _Builder, k: int, state: dict):
    for o in b.scene.objects:
        parent = b.parent_of(o.id, state)
        if parent in b.scene.robot_by_id:
            vid = b.var(o.id, k, REL_POSE)
            b.add(ConstraintNode(
                f"Grasp:{o.id}@{k}", "Grasp", "ineq", (vid,), NORM, (1.0,),
                (0.0, 0.0), {"radius": grasp_radius(o.shape)}),
                Provenance(k, _facts({parent_var(o.id): parent})))


def _rule_pose(b: _Builder, k: int, state: dict):
    for o in b.scene.objects:
        parent = b.parent_of(o.id, state)
        if parent in b.scene.region_by_id:
            vid = b.var(o.id, k, ABS_POSE)
            x0, y0, x1, y1 = b.scene.region_by_id[parent].rect
            b.add(ConstraintNode(
                f"Pose:{o.id}@{k}", "Pose", "ineq", (vid,), BOX, (1.0,),
                (0.0, 0.0), {"lo": np.array([x0, y0]), "hi": np.array([x1, y1])}),
                Provenance(k, _facts({parent_var(o.id): parent})))
        elif parent in b.scene.object_by_id:
            vid = b.var(o.id, k, REL_POSE)
            b.lin(f"Pose:{o.id}@{k}", "Pose", [(vid, 1.0)], (0.0, 0.0),
                  Provenance(k, _facts({parent_var(o.id): parent})))


def _rule_continuity(b: _Builder, k: int, state: dict, nxt: dict):
    """Pair rules: Equal when the parent is unchanged, Kin through a switch."""
    for o in b.scene.objects:
        before = b.parent_of(o.id, state)
        after = b.parent_of(o.id, nxt)
        if before is None or after is None:
            continue
        prov_p = {parent_var(o.id): before}
        prov_p2 = {parent_var(o.id): after}
        if before == after:
            klass = ABS_POSE if (before == init_symbol(o.id)
                                 or before in b.scene.region_by_id) else REL_POSE
            v0 = b.var(o.id, k, klass)
            v1 = b.var(o.id, k + 1, klass)
            b.lin(f"Equal:{o.id}@{k}", "Equal", [(v1, 1.0), (v0, -1.0)],
                  (0.0, 0.0), Provenance(k, _facts(prov_p), _facts(prov_p2)))
            continue
        # pose continuity at the switch keyframe k+1: the old attachment keeps
        # its k-slice leaf variable, its moving frames are taken at k+1
        if before == init_symbol(o.id) or before in b.scene.region_by_id:
            old = [(b.var(o.id, k, ABS_POSE), 1.0)]
        elif before in b.scene.robot_by_id:
            old = [(b.gripper(before, k + 1), 1.0), (b.var(o.id, k, REL_POSE), 1.0)]
        elif before in b.scene.object_by_id:
            base = b.abs_chain(before, k + 1, nxt)
            if base is None:
                continue
            old = base + [(b.var(o.id, k, REL_POSE), 1.0)]
            prov_p2 |= b.chain_facts(before, nxt)
        else:
            raise InvalidSequence(f"unknown parent {before!r} for {o.id!r}")
        new = b.abs_chain(o.id, k + 1, nxt)
        if new is None:
            continue
        if after in b.scene.object_by_id:
            prov_p2 |= b.chain_facts(after, nxt)
        terms = [(vid, s) for vid, s in old] + [(vid, -s) for vid, s in new]
        b.lin(f"Kin:{o.id}@{k}", "Kin", terms, (0.0, 0.0),
              Provenance(k, _facts(prov_p), _facts(prov_p2)))


def _rule_robot_frames(b: _Builder, k: int, state: dict):
    # a robot whose flag is part of the state owns a gripper frame that slice
    for r in b.scene.robots:
        if robot_var(r.id) in state:
            b.gripper(r.id, k)


PI_RULES = (
    PiRule("robot-frames", "single", _rule_robot_frames),
    PiRule("ref", "single", _rule_ref),
    PiRule("grasp", "single", _rule_grasp),
    PiRule("pose", "single", _rule_pose),
    PiRule("continuity", "pair", _rule_continuity),
)


def _add_reach(b: _Builder):
    for vid, v in sorted(b.vars.items()):
        if v.klass == ROBOT:
            r = b.scene.robot_by_id[v.entity]
            state = b.states[v.t] if v.t < len(b.states) else {}
            fact = {robot_var(v.entity): state[robot_var(v.entity)]} \
                if robot_var(v.entity) in state else {}
            b.add(ConstraintNode(
                f"Reach:{v.entity}@{v.t}", "Reach", "ineq", (vid,), NORM, (1.0,),
                (-r.base[0], -r.base[1]), {"radius": r.reach}),
                Provenance(v.t, _facts(fact)))


def _slice_entities(b: _Builder, k: int):
    """(id, chain terms, radius, frame-ancestor set, facts) for objects whose
    attachment resolves at slice k.  Grippers carry no collision body (they
    act from above the plane); they still enter collision scopes through the
    chains of held objects."""
    entities = []
    state = b.states[k]
    for o in b.scene.objects:
        chain = b.abs_chain(o.id, k, state)
        if chain is None:
            continue
        members = {vid.split("@")[0] for vid, _ in chain}
        entities.append((o.id, chain, collision_radius(o.shape), members,
                         b.chain_facts(o.id, state)))
    entities.sort(key=lambda e: e[0])
    return entities


def _emit_pair_collision(b: _Builder, k, a, ca, ra, bb, cb, rb, prov):
    terms = [(vid, s) for vid, s in ca] + [(vid, -s) for vid, s in cb]
    coeff: dict[str, float] = {}
    for vid, s in terms:
        coeff[vid] = coeff.get(vid, 0.0) + s
    scope = tuple(v for v in coeff if coeff[v] != 0.0)
    if not scope:
        return
    b.add(ConstraintNode(
        f"Coll:{a}|{bb}@{k}", "Collision", "ineq", scope,
        SEP, tuple(coeff[v] for v in scope), (0.0, 0.0),
        {"radius": ra + rb + COLLISION_MARGIN}), prov)


def _add_collisions(b: _Builder):
    """Separation factors between objects are generated by state PAIRS: a
    pair is active at slice k+1 when neither frame rides on the other at k+1
    nor did at k (a just-released or just-stacked pair is legitimately in
    contact at the switch keyframe).  The leading slice of a window therefore
    carries no object-object separation; plan-initial collisions are re-added
    by the ``pin_initial_robots`` path from the validated scene.
    Static-obstacle separation is single-state."""
    infos = [_slice_entities(b, k) for k in range(len(b.states))]
    for k in range(1, len(b.states)):
        prev = {e[0]: e for e in infos[k - 1]}
        cur = infos[k]
        for i in range(len(cur)):
            for j in range(i + 1, len(cur)):
                a, ca, ra, ma, fa = cur[i]
                bb, cb, rb, mb, fb = cur[j]
                if a not in prev or bb not in prev:
                    continue
                if a in mb or bb in ma:
                    continue
                _, _, _, pma, pfa = prev[a]
                _, _, _, pmb, pfb = prev[bb]
                if a in pmb or bb in pma:
                    continue
                _emit_pair_collision(
                    b, k, a, ca, ra, bb, cb, rb,
                    Provenance(k - 1, _facts(pfa | pfb), _facts(fa | fb)))
    for k in range(len(b.states)):
        for eid, chain, re_, _, facts in infos[k]:
            for n_ob, ob in enumerate(b.scene.obstacles):
                b.add(ConstraintNode(
                    f"Coll:{eid}|obst{n_ob}@{k}", "Collision", "ineq",
                    tuple(vid for vid, _ in chain), SEP,
                    tuple(s for _, s in chain),
                    (-ob.pose[0], -ob.pose[1]),
                    {"radius": re_ + collision_radius(ob.shape) + COLLISION_MARGIN}),
                    Provenance(k, _facts(facts)))


def _add_initial_collisions(b: _Builder):
    entities = _slice_entities(b, 0)
    for i in range(len(entities)):
        for j in range(i + 1, len(entities)):
            a, ca, ra, ma, fa = entities[i]
            bb, cb, rb, mb, fb = entities[j]
            if a in mb or bb in ma:
                continue
            if f"Coll:{a}|{bb}@0" in b.prov:
                continue
            _emit_pair_collision(b, 0, a, ca, ra, bb, cb, rb, Provenance(0, ()))


def _check_full_sequence(scene: Scene, states):
    needed = {parent_var(o.id) for o in scene.objects} \
        | {robot_var(r.id) for r in scene.robots}
    full = all(needed <= set(s) for s in states)
    if not full:
        return
    for k in range(len(states) - 1):
        changed = [o.id for o in scene.objects
                   if states[k][parent_var(o.id)] != states[k + 1][parent_var(o.id)]]
        if len(changed) > 1:
            raise InvalidSequence(
                f"slice {k}->{k + 1} changes {len(changed)} parents at once")


def build_factored_nlp(scene: Scene, states, pin_initial_robots=False) -> FactoredNlp:
    """Keyframe NLP of a discrete state sequence (full or partial states).

    ``pin_initial_robots`` fixes slice-0 grippers to their bases; it is set
    when slice 0 really is the plan's initial state.  Those pins carry no
    discrete facts (they cannot appear inside decoded conflict windows): the
    scene validation guarantees they can never be the cause of infeasibility,
    because slice-0 grippers take part in no switch constraint.
    """
    states = [dict(s) for s in states]
    if not states:
        raise InvalidSequence("empty state sequence")
    _check_full_sequence(scene, states)
    b = _Builder(scene, states)
    for rule in PI_RULES:
        if rule.arity == "single":
            for k, s in enumerate(states):
                rule.emit(b, k, s)
        else:
            for k in range(len(states) - 1):
                rule.emit(b, k, states[k], states[k + 1])
    _add_collisions(b)
    if pin_initial_robots:
        _add_initial_collisions(b)
        for r in scene.robots:
            if f"{r.id}@0" in b.vars:
                b.lin(f"Ref:{r.id}@0", "Ref", [(b.gripper(r.id, 0), 1.0)],
                      (-r.base[0], -r.base[1]), Provenance(0, ()))
    _add_reach(b)    # after collisions: chains may introduce gripper frames
    vars_sorted = sorted(b.vars.values(), key=lambda v: (v.t, v.id))
    return FactoredNlp(vars_sorted, b.cons, b.prov, b.ranges)


def decode_conflict(m: FactoredNlp) -> list[dict[str, str]]:
    """Partial-state sequence whose rule image regenerates ``m``."""
    if not m.cons:
        raise MissingProvenance("empty conflict graph")
    slots: dict[int, dict] = {}
    for c in m.cons:
        prov = m.provenance.get(c.id)
        if prov is None:
            raise MissingProvenance(c.id)
        for off, facts in ((prov.k, prov.p), (prov.k + 1, prov.p2)):
            if not facts:
                continue
            slot = slots.setdefault(off, {})
            for var, val in facts:
                if slot.get(var, val) != val:
                    raise MissingProvenance(
                        f"contradictory facts for {var} at slice {off}")
                slot[var] = val
    if not slots:
        raise MissingProvenance("no slice facts recorded")
    k0, k1 = min(slots), max(slots)
    seq = [dict(sorted(slots.get(k, {}).items())) for k in range(k0, k1 + 1)]
    if any(not p for p in seq):
        raise MissingProvenance("conflict decodes to an empty partial state")
    return seq


def initial_keyframe(scene: Scene) -> dict[str, np.ndarray]:
    """Entity poses of the start configuration (grippers at their bases)."""
    out = {o.id: np.asarray(o.start, float) for o in scene.objects}
    out |= {r.id: np.asarray(r.base, float) for r in scene.robots}
    return out
