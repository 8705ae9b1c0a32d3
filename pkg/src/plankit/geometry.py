"""Planar geometry primitives for the 2.5D world.

Poses are (x, y, z, yaw) in meters/radians.  Footprints and support surfaces
are convex polygons given as vertex lists in counterclockwise order.
Obstacles are line segments with a height, so visibility and reach reduce to
segment-vs-segment tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .sexpr import Symbol


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    z: float = 0.0
    yaw: float = 0.0

    def xy(self) -> tuple[float, float]:
        return (self.x, self.y)

    def planar_distance(self, other: "Pose") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)

    def moved(self, dx=0.0, dy=0.0, dz=0.0, dyaw=0.0) -> "Pose":
        return Pose(self.x + dx, self.y + dy, self.z + dz, self.yaw + dyaw)

    def to_form(self) -> list:
        return [Symbol("pose"), self.x, self.y, self.z, self.yaw]

    @staticmethod
    def from_form(form) -> "Pose":
        if (not isinstance(form, list) or len(form) != 5
                or form[0] != Symbol("pose")):
            raise ValueError(f"not a pose form: {form!r}")
        x, y, z, yaw = (float(v) for v in form[1:])
        return Pose(x, y, z, yaw)


Segment = tuple[float, float, float, float]  # x1, y1, x2, y2


def seg_orientation(ax, ay, bx, by, cx, cy) -> int:
    v = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
    if v > 1e-12:
        return 1
    if v < -1e-12:
        return -1
    return 0


def segments_intersect(s1: Segment, s2: Segment) -> bool:
    ax, ay, bx, by = s1
    cx, cy, dx, dy = s2
    o1 = seg_orientation(ax, ay, bx, by, cx, cy)
    o2 = seg_orientation(ax, ay, bx, by, dx, dy)
    o3 = seg_orientation(cx, cy, dx, dy, ax, ay)
    o4 = seg_orientation(cx, cy, dx, dy, bx, by)
    if o1 != o2 and o3 != o4:
        return True
    if o1 == 0 and _on_segment(ax, ay, bx, by, cx, cy):
        return True
    if o2 == 0 and _on_segment(ax, ay, bx, by, dx, dy):
        return True
    if o3 == 0 and _on_segment(cx, cy, dx, dy, ax, ay):
        return True
    if o4 == 0 and _on_segment(cx, cy, dx, dy, bx, by):
        return True
    return False


def _on_segment(ax, ay, bx, by, px, py) -> bool:
    return (min(ax, bx) - 1e-12 <= px <= max(ax, bx) + 1e-12
            and min(ay, by) - 1e-12 <= py <= max(ay, by) + 1e-12)


def point_segment_distance(px, py, seg: Segment) -> float:
    ax, ay, bx, by = seg
    vx, vy = bx - ax, by - ay
    L2 = vx * vx + vy * vy
    if L2 == 0:
        return math.hypot(px - ax, py - ay)
    t = max(0.0, min(1.0, ((px - ax) * vx + (py - ay) * vy) / L2))
    return math.hypot(px - (ax + t * vx), py - (ay + t * vy))


def segment_segment_distance(s1: Segment, s2: Segment) -> float:
    if segments_intersect(s1, s2):
        return 0.0
    ax, ay, bx, by = s1
    cx, cy, dx, dy = s2
    return min(point_segment_distance(ax, ay, s2),
               point_segment_distance(bx, by, s2),
               point_segment_distance(cx, cy, s1),
               point_segment_distance(dx, dy, s1))


Polygon = list[tuple[float, float]]


def polygon_centroid(poly: Polygon) -> tuple[float, float]:
    xs = sum(p[0] for p in poly)
    ys = sum(p[1] for p in poly)
    return (xs / len(poly), ys / len(poly))


def point_in_convex_polygon(px: float, py: float, poly: Polygon) -> bool:
    """Inside-or-on test for a convex CCW polygon."""
    n = len(poly)
    for i in range(n):
        ax, ay = poly[i]
        bx, by = poly[(i + 1) % n]
        if (bx - ax) * (py - ay) - (by - ay) * (px - ax) < -1e-9:
            return False
    return True


def erode_convex_polygon(poly: Polygon, margin: float) -> Polygon | None:
    """Inset each edge of a convex CCW polygon by ``margin``.

    Returns None when the inset polygon degenerates (margin too large).
    """
    n = len(poly)
    lines = []
    for i in range(n):
        ax, ay = poly[i]
        bx, by = poly[(i + 1) % n]
        ex, ey = bx - ax, by - ay
        L = math.hypot(ex, ey)
        if L == 0:
            continue
        # inward normal for a CCW polygon
        nx, ny = -ey / L, ex / L
        lines.append((ax + nx * margin, ay + ny * margin,
                      bx + nx * margin, by + ny * margin))
    out: Polygon = []
    m = len(lines)
    for i in range(m):
        p = _line_intersection(lines[i - 1], lines[i])
        if p is None:
            return None
        out.append(p)
    # degenerate if the inset flipped orientation anywhere
    for i in range(len(out)):
        ax, ay = out[i]
        bx, by = out[(i + 1) % len(out)]
        cx, cy = out[(i + 2) % len(out)]
        if seg_orientation(ax, ay, bx, by, cx, cy) < 0:
            return None
    return out


def _line_intersection(l1, l2):
    x1, y1, x2, y2 = l1
    x3, y3, x4, y4 = l2
    d = (x1 - x2) * (y3 - y4) - (y1 - y2) * (x3 - x4)
    if abs(d) < 1e-12:
        return None
    px = ((x1 * y2 - y1 * x2) * (x3 - x4) - (x1 - x2) * (x3 * y4 - y3 * x4)) / d
    py = ((x1 * y2 - y1 * x2) * (y3 - y4) - (y1 - y2) * (x3 * y4 - y3 * x4)) / d
    return (px, py)


def rotate_polygon(poly: Polygon, yaw: float, cx: float, cy: float) -> Polygon:
    c, s = math.cos(yaw), math.sin(yaw)
    return [(cx + px * c - py * s, cy + px * s + py * c) for px, py in poly]


def polygons_overlap(a: Polygon, b: Polygon) -> bool:
    """Convex-convex overlap via separating axes."""
    for poly1, poly2 in ((a, b), (b, a)):
        n = len(poly1)
        for i in range(n):
            ax, ay = poly1[i]
            bx, by = poly1[(i + 1) % n]
            nx, ny = ay - by, bx - ax
            amin = min(nx * px + ny * py for px, py in poly1)
            amax = max(nx * px + ny * py for px, py in poly1)
            bmin = min(nx * px + ny * py for px, py in poly2)
            bmax = max(nx * px + ny * py for px, py in poly2)
            if amax < bmin - 1e-12 or bmax < amin - 1e-12:
                return False
    return True


def polygon_edges(poly: Polygon) -> list[Segment]:
    n = len(poly)
    return [(poly[i][0], poly[i][1], poly[(i + 1) % n][0], poly[(i + 1) % n][1])
            for i in range(n)]
