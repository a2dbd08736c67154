"""Planar scenes: disk/square objects, point grippers with reach disks,
rectangular target regions, static obstacles."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

GRIPPER_RADIUS = 0.05
COLLISION_MARGIN = 0.01


class SceneError(Exception):
    pass


class UnknownEntity(SceneError):
    pass


@dataclass(frozen=True)
class Disk:
    radius: float


@dataclass(frozen=True)
class Square:
    side: float


def collision_radius(shape) -> float:
    """Circumscribed disk; squares are only approximated for collisions."""
    if isinstance(shape, Disk):
        return shape.radius
    return shape.side * math.sqrt(2.0) / 2.0


def grasp_radius(shape) -> float:
    if isinstance(shape, Disk):
        return shape.radius
    return shape.side / 2.0


@dataclass(frozen=True)
class RobotSpec:
    id: str
    base: tuple[float, float]
    reach: float


@dataclass(frozen=True)
class ObjectSpec:
    id: str
    shape: object
    start: tuple[float, float]


@dataclass(frozen=True)
class RegionSpec:
    id: str
    rect: tuple[float, float, float, float]   # xmin, ymin, xmax, ymax


@dataclass(frozen=True)
class ObstacleSpec:
    shape: object
    pose: tuple[float, float]


@dataclass
class Scene:
    robots: list[RobotSpec] = field(default_factory=list)
    objects: list[ObjectSpec] = field(default_factory=list)
    regions: list[RegionSpec] = field(default_factory=list)
    obstacles: list[ObstacleSpec] = field(default_factory=list)

    def __post_init__(self):
        ids = [r.id for r in self.robots] + [o.id for o in self.objects] \
            + [g.id for g in self.regions]
        if len(set(ids)) != len(ids):
            raise SceneError("entity ids must be unique across the scene")
        for o in self.objects:
            if isinstance(o.shape, Disk) and o.shape.radius <= 0:
                raise SceneError(f"object {o.id!r} has non-positive radius")
            if isinstance(o.shape, Square) and o.shape.side <= 0:
                raise SceneError(f"object {o.id!r} has non-positive side")
        for r in self.robots:
            if r.reach <= 0:
                raise SceneError(f"robot {r.id!r} has non-positive reach")
        for g in self.regions:
            x0, y0, x1, y1 = g.rect
            if x1 <= x0 or y1 <= y0:
                raise SceneError(f"region {g.id!r} rect is empty")
        self._check_start_collisions()
        self.object_by_id = {o.id: o for o in self.objects}
        self.robot_by_id = {r.id: r for r in self.robots}
        self.region_by_id = {g.id: g for g in self.regions}

    def _check_start_collisions(self):
        placed = [(o.id, np.asarray(o.start, float), collision_radius(o.shape))
                  for o in self.objects]
        placed += [(f"obstacle{i}", np.asarray(b.pose, float), collision_radius(b.shape))
                   for i, b in enumerate(self.obstacles)]
        for i in range(len(placed)):
            for j in range(i + 1, len(placed)):
                a, pa, ra = placed[i]
                b, pb, rb = placed[j]
                if float(np.linalg.norm(pa - pb)) < ra + rb + COLLISION_MARGIN:
                    raise SceneError(f"start poses of {a!r} and {b!r} collide")

    def bbox(self, pad: float = 0.5):
        xs, ys = [], []
        for r in self.robots:
            xs += [r.base[0] - r.reach, r.base[0] + r.reach]
            ys += [r.base[1] - r.reach, r.base[1] + r.reach]
        for o in self.objects:
            xs.append(o.start[0])
            ys.append(o.start[1])
        for g in self.regions:
            xs += [g.rect[0], g.rect[2]]
            ys += [g.rect[1], g.rect[3]]
        for b in self.obstacles:
            xs.append(b.pose[0])
            ys.append(b.pose[1])
        if not xs:
            xs = ys = [0.0]
        return (min(xs) - pad, min(ys) - pad, max(xs) + pad, max(ys) + pad)


def _shape_to_doc(shape) -> dict:
    if isinstance(shape, Disk):
        return {"disk": shape.radius}
    return {"square": shape.side}


def _shape_from_doc(doc) -> object:
    if "disk" in doc:
        return Disk(float(doc["disk"]))
    if "square" in doc:
        return Square(float(doc["square"]))
    raise SceneError(f"unknown shape {doc!r}")


def scene_to_json(scene: Scene) -> str:
    doc = {
        "robots": [
            {"id": r.id, "base": list(r.base), "reach": r.reach}
            for r in scene.robots
        ],
        "objects": [
            {"id": o.id, "shape": _shape_to_doc(o.shape), "start": list(o.start)}
            for o in scene.objects
        ],
        "regions": [
            {"id": g.id, "rect": list(g.rect)} for g in scene.regions
        ],
        "static_obstacles": [
            {"shape": _shape_to_doc(b.shape), "pose": list(b.pose)}
            for b in scene.obstacles
        ],
    }
    return json.dumps(doc, indent=1)


def scene_from_json(text: str) -> Scene:
    doc = json.loads(text)
    return Scene(
        robots=[RobotSpec(r["id"], tuple(r["base"]), float(r["reach"]))
                for r in doc.get("robots", [])],
        objects=[ObjectSpec(o["id"], _shape_from_doc(o["shape"]), tuple(o["start"]))
                 for o in doc.get("objects", [])],
        regions=[RegionSpec(g["id"], tuple(g["rect"])) for g in doc.get("regions", [])],
        obstacles=[ObstacleSpec(_shape_from_doc(b["shape"]), tuple(b["pose"]))
                   for b in doc.get("static_obstacles", [])],
    )


def goal_from_json(text: str, scene: Scene) -> dict[str, str]:
    """Goal files are lists of {"on": [object, target]} facts."""
    doc = json.loads(text)
    goal = {}
    for item in doc:
        obj, target = item["on"]
        if obj not in scene.object_by_id:
            raise UnknownEntity(obj)
        if (target not in scene.region_by_id and target not in scene.object_by_id
                and target not in scene.robot_by_id):
            raise UnknownEntity(target)
        goal[f"parent_{obj}"] = target
    return goal
