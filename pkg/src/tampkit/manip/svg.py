"""Write-only SVG snapshots: scenes at a keyframe, and computation trees.

Fixed 100 px/m, deterministic element order (regions, obstacles, objects,
robots, sorted by id) so identical inputs give identical bytes.
"""

from __future__ import annotations

from .scene import GRIPPER_RADIUS, Disk, Scene, collision_radius

SCALE = 100.0

TREE_COLORS = {
    "fixed": "#b0b0b0",       # no free states
    "free": "#ffffff",        # pending free states
    "goal-free": "#7aa6ff",   # discrete goal reached, values pending
    "failed": "#e06060",      # numeric expansion failed
    "solution": "#5fbf5f",
}


def _pt(x, y, x0, y1):
    return (x - x0) * SCALE, (y1 - y) * SCALE


def scene_svg(scene: Scene, frame: dict | None = None) -> str:
    x0, y0, x1, y1 = scene.bbox()
    w, h = (x1 - x0) * SCALE, (y1 - y0) * SCALE
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0f}" '
        f'height="{h:.0f}" viewBox="0 0 {w:.2f} {h:.2f}">',
        f'<rect width="{w:.2f}" height="{h:.2f}" fill="#f8f8f5"/>',
    ]
    for g in sorted(scene.regions, key=lambda r: r.id):
        ax, ay = _pt(g.rect[0], g.rect[3], x0, y1)
        parts.append(
            f'<rect x="{ax:.1f}" y="{ay:.1f}" '
            f'width="{(g.rect[2] - g.rect[0]) * SCALE:.1f}" '
            f'height="{(g.rect[3] - g.rect[1]) * SCALE:.1f}" '
            f'fill="#f3c6c6" stroke="#c86060"/>')
        parts.append(f'<text x="{ax + 3:.1f}" y="{ay + 12:.1f}" '
                     f'font-size="10">{g.id}</text>')
    for i, ob in enumerate(scene.obstacles):
        cx, cy = _pt(ob.pose[0], ob.pose[1], x0, y1)
        r = collision_radius(ob.shape) * SCALE
        parts.append(f'<circle cx="{cx:.1f}" cy="{cy:.1f}" r="{r:.1f}" '
                     f'fill="#8d8d8d"/>')
    for o in sorted(scene.objects, key=lambda o: o.id):
        pose = frame.get(o.id) if frame else None
        px, py = pose if pose is not None else o.start
        cx, cy = _pt(float(px), float(py), x0, y1)
        if isinstance(o.shape, Disk):
            parts.append(f'<circle cx="{cx:.1f}" cy="{cy:.1f}" '
                         f'r="{o.shape.radius * SCALE:.1f}" '
                         f'fill="#e8b34b" stroke="#9a7420"/>')
        else:
            s = o.shape.side * SCALE
            parts.append(f'<rect x="{cx - s / 2:.1f}" y="{cy - s / 2:.1f}" '
                         f'width="{s:.1f}" height="{s:.1f}" '
                         f'fill="#e8b34b" stroke="#9a7420"/>')
        parts.append(f'<text x="{cx:.1f}" y="{cy:.1f}" font-size="10" '
                     f'text-anchor="middle">{o.id}</text>')
    for r in sorted(scene.robots, key=lambda r: r.id):
        bx, by = _pt(r.base[0], r.base[1], x0, y1)
        parts.append(f'<circle cx="{bx:.1f}" cy="{by:.1f}" '
                     f'r="{r.reach * SCALE:.1f}" fill="none" '
                     f'stroke="#6a8fc0" stroke-dasharray="4 4"/>')
        parts.append(f'<rect x="{bx - 6:.1f}" y="{by - 6:.1f}" width="12" '
                     f'height="12" fill="#456a9d"/>')
        pose = frame.get(r.id) if frame else None
        if pose is not None:
            gx, gy = _pt(float(pose[0]), float(pose[1]), x0, y1)
            parts.append(f'<line x1="{bx:.1f}" y1="{by:.1f}" x2="{gx:.1f}" '
                         f'y2="{gy:.1f}" stroke="#456a9d" stroke-width="2"/>')
            parts.append(f'<circle cx="{gx:.1f}" cy="{gy:.1f}" '
                         f'r="{GRIPPER_RADIUS * SCALE:.1f}" fill="#2c4870"/>')
        parts.append(f'<text x="{bx + 8:.1f}" y="{by - 8:.1f}" '
                     f'font-size="10">{r.id}</text>')
    parts.append("</svg>")
    return "\n".join(parts)


def tree_svg(dump: dict) -> str:
    """Layered rendering of a computation-tree dump."""
    nodes = {n["id"]: dict(n) for n in dump["nodes"]}
    children: dict = {}
    for n in dump["nodes"]:
        if n["parent"] is not None and n["parent"] in nodes:
            children.setdefault(n["parent"], []).append(n["id"])

    depth = {}
    roots = [nid for nid, n in nodes.items() if n["parent"] is None
             or n["parent"] not in nodes]
    order = []
    stack = [(r, 0) for r in sorted(roots)]
    xpos = {}
    next_x = [0]

    def layout(nid, d):
        depth[nid] = d
        kids = sorted(children.get(nid, []))
        if not kids:
            xpos[nid] = next_x[0]
            next_x[0] += 1
        else:
            for k in kids:
                layout(k, d + 1)
            xpos[nid] = sum(xpos[k] for k in kids) / len(kids)
        order.append(nid)

    for r in sorted(roots):
        layout(r, 0)

    dx, dy, r = 34, 48, 9
    w = (max(xpos.values(), default=0) + 1) * dx + 20
    h = (max(depth.values(), default=0) + 1) * dy + 20
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}">']
    for e in dump["edges"]:
        if e["from"] not in xpos or e["to"] not in xpos:
            continue
        x1, y1 = xpos[e["from"]] * dx + 20, depth[e["from"]] * dy + 20
        x2, y2 = xpos[e["to"]] * dx + 20, depth[e["to"]] * dy + 20
        color = "#999999" if e["kind"] == "numeric" else "#333333"
        parts.append(f'<line x1="{x1:.1f}" y1="{y1}" x2="{x2:.1f}" y2="{y2}" '
                     f'stroke="{color}"/>')
    for nid in order:
        n = nodes[nid]
        x, y = xpos[nid] * dx + 20, depth[nid] * dy + 20
        fill = TREE_COLORS.get(n["kind"], "#ffffff")
        if n["kind"] in ("fixed", "failed", "solution"):
            parts.append(f'<rect x="{x - r:.1f}" y="{y - r}" width="{2 * r}" '
                         f'height="{2 * r}" fill="{fill}" stroke="#222222"/>')
        else:
            parts.append(f'<circle cx="{x:.1f}" cy="{y}" r="{r}" '
                         f'fill="{fill}" stroke="#222222"/>')
    parts.append("</svg>")
    return "\n".join(parts)
