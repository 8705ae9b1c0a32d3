"""The 2.5D kitchen digital twin.

One ``WorldState`` instance serves as ground truth; clones of it serve as
belief state and as projection sandboxes.  Geometry is planar: furniture is a
set of wall segments with heights, support surfaces are convex polygons at a
height, containers contribute a moving door segment driven by their joint.

Sight and reach both reduce to a segment test against the obstacle segments,
with a height rule: a segment blocks a line from height z1 to height z2 iff
the segment's height exceeds the interpolated line height at the crossing
point.  Base navigation ignores heights (the robot cannot drive through a
table).
"""

from __future__ import annotations

import copy
import hashlib
import math
from dataclasses import dataclass, field

from . import sexpr
from .config import DEFAULT, Config
from .geometry import (Polygon, Pose, Segment, erode_convex_polygon,
                       point_in_convex_polygon, point_segment_distance,
                       polygon_centroid, polygons_overlap, rotate_polygon,
                       segment_segment_distance, segments_intersect)
from .plan_lang import Designator
from .sexpr import Symbol, Variable


class SchemaError(Exception):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


class UnknownObject(KeyError):
    pass


class UnknownToken(KeyError):
    pass


class PerceptionFailure(Exception):
    """No ground-truth object matches the detect query."""


@dataclass
class ObjectInstance:
    id: str
    category: str
    pose: Pose
    footprint: Polygon                  # local convex CCW polygon
    height: float
    cog_offset: tuple[float, float] = (0.0, 0.0)
    color: str = ""
    shape: str = ""
    flags: frozenset[str] = frozenset()
    part_of: str | None = None
    on_surface: str | None = None
    in_container: str | None = None
    held_by: str | None = None          # left | right | both
    toppled: bool = False
    tilt: float = 0.0                   # roll/pitch proxy while carried
    pose_known: bool = True             # meaningful on belief worlds

    def world_footprint(self, pose: Pose | None = None) -> Polygon:
        p = pose or self.pose
        return rotate_polygon(self.footprint, p.yaw, p.x, p.y)

    def cog_point(self, pose: Pose | None = None) -> tuple[float, float]:
        p = pose or self.pose
        ox, oy = self.cog_offset
        c, s = math.cos(p.yaw), math.sin(p.yaw)
        return (p.x + ox * c - oy * s, p.y + ox * s + oy * c)


@dataclass
class Surface:
    name: str
    cls: str
    height: float
    polygon: Polygon
    furniture: str


@dataclass
class Furniture:
    id: str
    segments: list[tuple[Segment, float]]  # (segment, height)


@dataclass
class ContainerState:
    id: str
    furniture: str
    articulation: str                    # prismatic | revolute
    axis_or_hinge: tuple[float, float]   # unit axis (prismatic) or hinge point (revolute)
    joint_range: float                   # meters or radians
    joint: float
    door: Segment                        # door segment in the closed position
    door_height: float
    handle: Pose                         # handle pose in the closed position
    surface: str                         # interior surface name

    def open_fraction(self) -> float:
        return self.joint / self.joint_range if self.joint_range else 0.0

    def door_segment(self) -> tuple[Segment, float]:
        x1, y1, x2, y2 = self.door
        if self.articulation == "prismatic":
            dx, dy = self.axis_or_hinge
            j = self.joint
            return ((x1 + dx * j, y1 + dy * j, x2 + dx * j, y2 + dy * j),
                    self.door_height)
        hx, hy = self.axis_or_hinge
        c, s = math.cos(self.joint), math.sin(self.joint)

        def rot(px, py):
            rx, ry = px - hx, py - hy
            return (hx + rx * c - ry * s, hy + rx * s + ry * c)

        a = rot(x1, y1)
        b = rot(x2, y2)
        return ((a[0], a[1], b[0], b[1]), self.door_height)

    def handle_pose(self) -> Pose:
        h = self.handle
        if self.articulation == "prismatic":
            dx, dy = self.axis_or_hinge
            return Pose(h.x + dx * self.joint, h.y + dy * self.joint, h.z, h.yaw)
        hx, hy = self.axis_or_hinge
        c, s = math.cos(self.joint), math.sin(self.joint)
        rx, ry = h.x - hx, h.y - hy
        return Pose(hx + rx * c - ry * s, hy + rx * s + ry * c, h.z, h.yaw + self.joint)


@dataclass
class ArmState:
    tool: Pose
    gripper_open: bool = True
    held: str | None = None


@dataclass
class RobotState:
    base: Pose
    torso: float = 0.1
    arms: dict[str, ArmState] = field(default_factory=dict)
    gaze: Pose | None = None

    def arm(self, name: str) -> ArmState:
        return self.arms[name]


@dataclass
class WorldState:
    bounds: tuple[float, float, float, float]
    robot: RobotState
    furniture: dict[str, Furniture] = field(default_factory=dict)
    surfaces: dict[str, Surface] = field(default_factory=dict)
    containers: dict[str, ContainerState] = field(default_factory=dict)
    objects: dict[str, ObjectInstance] = field(default_factory=dict)
    clock: int = 0

    def object(self, oid: str) -> ObjectInstance:
        try:
            return self.objects[oid]
        except KeyError:
            raise UnknownObject(oid) from None

    def contents(self, container_id: str) -> list[ObjectInstance]:
        return [o for o in self.objects.values() if o.in_container == container_id]


# ---------------------------------------------------------------------------
# geometry queries


def obstacle_segments(world: WorldState,
                      ignore_container: str | None = None) -> list[tuple[Segment, float]]:
    segs: list[tuple[Segment, float]] = []
    for f in world.furniture.values():
        segs.extend(f.segments)
    for c in world.containers.values():
        if c.id == ignore_container:
            continue
        segs.append(c.door_segment())
    return segs


def _crossing_fraction(p1, p2, seg: Segment) -> float | None:
    x1, y1 = p1
    x2, y2 = p2
    x3, y3, x4, y4 = seg
    d = (x2 - x1) * (y4 - y3) - (y2 - y1) * (x4 - x3)
    if abs(d) < 1e-12:
        return 0.0 if segments_intersect((x1, y1, x2, y2), seg) else None
    t = ((x3 - x1) * (y4 - y3) - (y3 - y1) * (x4 - x3)) / d
    u = ((x3 - x1) * (y2 - y1) - (y3 - y1) * (x2 - x1)) / d
    if -1e-9 <= t <= 1 + 1e-9 and -1e-9 <= u <= 1 + 1e-9:
        return min(max(t, 0.0), 1.0)
    return None


def sight_blocked(world: WorldState, p1, z1: float, p2, z2: float,
                  ignore_container: str | None = None) -> bool:
    """True when some obstacle segment rises above the p1->p2 line of sight."""
    for seg, h in obstacle_segments(world, ignore_container):
        t = _crossing_fraction(p1, p2, seg)
        if t is None:
            continue
        if h >= z1 + t * (z2 - z1) - 1e-9:
            return True
    return False


def visible_from(pose: Pose, object_id: str, world: WorldState,
                 cfg: Config = DEFAULT) -> bool:
    obj = world.object(object_id)
    if obj.in_container is not None:
        c = world.containers[obj.in_container]
        if c.open_fraction() < cfg.occlusion_open_fraction:
            return False
    return not sight_blocked(world, pose.xy(), cfg.camera_height,
                             obj.pose.xy(), obj.pose.z)


def shoulder_point(base: Pose, arm: str, cfg: Config = DEFAULT) -> tuple[float, float]:
    side = {"left": 1.0, "right": -1.0, "both": 0.0}[arm]
    nx = -math.sin(base.yaw) * side * cfg.shoulder_offset
    ny = math.cos(base.yaw) * side * cfg.shoulder_offset
    return (base.x + nx, base.y + ny)


def reachable_from(base: Pose, target: Pose, arm: str, world: WorldState,
                   cfg: Config = DEFAULT, ignore_container: str | None = None) -> bool:
    """Planar distance in the reach annulus, height in the torso-adjustable
    band, and an unobstructed arm line sloping from shoulder height down to
    the target."""
    dist = base.planar_distance(target)
    if not (cfg.reach_min <= dist <= cfg.reach_max):
        return False
    if not (cfg.arm_z_lo + cfg.torso_min <= target.z <= cfg.arm_z_hi + cfg.torso_max):
        return False
    arms = ("left", "right") if arm == "both" else (arm,)
    for a in arms:
        sp = shoulder_point(base, a, cfg)
        if sight_blocked(world, sp, cfg.shoulder_height, target.xy(), target.z,
                         ignore_container=ignore_container):
            return False
    return True


def base_pose_free(world: WorldState, pose: Pose, cfg: Config = DEFAULT) -> bool:
    x0, y0, x1, y1 = world.bounds
    r = cfg.robot_radius
    if not (x0 + r <= pose.x <= x1 - r and y0 + r <= pose.y <= y1 - r):
        return False
    for seg, _h in obstacle_segments(world):
        if point_segment_distance(pose.x, pose.y, seg) < r:
            return False
    return True


def path_clear(world: WorldState, start, goal, cfg: Config = DEFAULT) -> bool:
    path: Segment = (start[0], start[1], goal[0], goal[1])
    for seg, _h in obstacle_segments(world):
        if segment_segment_distance(path, seg) < cfg.robot_radius:
            return False
    return True


def effective_surface_polygon(world: WorldState, surf: Surface) -> Polygon:
    """Support polygon in world coordinates right now: the interior surface
    of a prismatic container slides with its joint (contents ride along)."""
    for c in world.containers.values():
        if c.surface == surf.name and c.articulation == "prismatic" and c.joint:
            dx, dy = c.axis_or_hinge
            return [(x + dx * c.joint, y + dy * c.joint) for x, y in surf.polygon]
    return surf.polygon


def stable_at(obj: ObjectInstance, pose: Pose, support: str, world: WorldState,
              cfg: Config = DEFAULT) -> bool:
    surf = world.surfaces.get(support)
    if surf is None:
        return False
    eroded = erode_convex_polygon(effective_surface_polygon(world, surf),
                                  cfg.stability_margin)
    if eroded is None:
        return False
    cx, cy = obj.cog_point(pose)
    return point_in_convex_polygon(cx, cy, eroded)


def surface_under(world: WorldState, pose: Pose, tol: float = 0.06) -> Surface | None:
    for s in world.surfaces.values():
        if abs(s.height - pose.z) <= tol and point_in_convex_polygon(
                pose.x, pose.y, effective_surface_polygon(world, s)):
            return s
    return None


def placement_blocked(world: WorldState, obj: ObjectInstance, pose: Pose,
                      surface: str) -> bool:
    fp = obj.world_footprint(pose)
    for other in world.objects.values():
        if other.id == obj.id or other.held_by is not None:
            continue
        if other.on_surface != surface and other.in_container != obj.in_container:
            continue
        if other.on_surface is None and obj.in_container is None:
            continue
        if polygons_overlap(fp, other.world_footprint()):
            return True
    return False


# ---------------------------------------------------------------------------
# perception


_DETECT_KEYS = ("category", "type", "color", "shape", "name", "location",
                "pose", "part-of")


def _matches(obj: ObjectInstance, key: str, value, world: WorldState) -> bool:
    if key in ("category", "type"):
        return obj.category == str(value)
    if key == "color":
        return obj.color == str(value)
    if key == "shape":
        return obj.shape == str(value)
    if key == "name":
        return obj.id == str(value)
    if key == "part-of":
        return obj.part_of == str(value)
    if key == "pose":
        return isinstance(value, Pose) and obj.pose.planar_distance(value) <= 0.15
    if key == "location":
        if isinstance(value, Designator) and value.kind == "location":
            for lk, lv in value.props:
                if lk == "on" and obj.on_surface != str(lv):
                    return False
                if lk == "in" and obj.in_container != str(lv):
                    return False
                if lk == "next-to":
                    other = world.objects.get(str(lv))
                    if other is None or obj.pose.planar_distance(other.pose) > 0.5:
                        return False
            return True
        return False
    return False


def object_designator(obj: ObjectInstance) -> Designator:
    props = [("name", Symbol(obj.id)), ("category", Symbol(obj.category)),
             ("pose", obj.pose)]
    if obj.color:
        props.append(("color", Symbol(obj.color)))
    if obj.shape:
        props.append(("shape", Symbol(obj.shape)))
    return Designator("object", tuple(props))


def perceive_detect(query: Designator, world: WorldState, belief: WorldState,
                    base_pose: Pose, cfg: Config = DEFAULT) -> list[Designator]:
    """Resolve a detect query against ground truth; mirror hits into belief."""
    if query.kind != "object":
        raise SchemaError("detect", f"detect needs an object designator, got {query.kind}")
    constraints = [(k, v) for k, v in query.props if v is not None
                   and not isinstance(v, Variable)]
    for k, _ in constraints:
        if k not in _DETECT_KEYS:
            raise SchemaError("detect", f"unsupported detect attribute '{k}'")
    hits = []
    for obj in world.objects.values():
        if obj.held_by is not None:
            continue
        if not visible_from(base_pose, obj.id, world, cfg):
            continue
        if all(_matches(obj, k, v, world) for k, v in constraints):
            hits.append(obj)
    if not hits:
        raise PerceptionFailure(f"nothing visible matches {query}")
    for obj in hits:
        if obj.id in belief.objects:
            b = belief.objects[obj.id]
            b.pose = obj.pose
            b.pose_known = True
            b.on_surface = obj.on_surface
            b.in_container = obj.in_container
        else:
            b = copy.deepcopy(obj)
            b.pose_known = True
            belief.objects[obj.id] = b
    return [object_designator(o) for o in hits]


def examine(object_id: str, attributes: list[str], belief: WorldState) -> dict:
    obj = belief.objects.get(object_id)
    if obj is None or not obj.pose_known:
        raise PerceptionFailure(f"no hypothesis for '{object_id}'")
    out = {}
    for a in attributes:
        if a == "pose":
            out["pose"] = obj.pose
        elif a == "size":
            xs = [p[0] for p in obj.footprint]
            ys = [p[1] for p in obj.footprint]
            out["size"] = (max(xs) - min(xs), max(ys) - min(ys), obj.height)
        elif a == "category":
            out["category"] = obj.category
        elif a == "color":
            out["color"] = obj.color
        elif a == "shape":
            out["shape"] = obj.shape
        else:
            raise SchemaError("examine", f"unsupported attribute '{a}'")
    return out


def update_belief_from_event(belief: WorldState, event) -> WorldState:
    """Mirror a simulator event into the belief state.

    Only events the robot itself caused are mirrored; third-party changes
    stay invisible, so the belief can go stale by design.
    """
    kind = event.kind
    payload = event.payload
    if kind == "contact" and "object" in payload:
        obj = belief.objects.get(payload["object"])
        if obj is not None:
            obj.held_by = payload.get("arm")
            obj.on_surface = None
            obj.in_container = None
    elif kind in ("placed", "release") and "object" in payload:
        obj = belief.objects.get(payload["object"])
        if obj is not None:
            obj.held_by = None
            if "pose" in payload:
                obj.pose = payload["pose"]
                obj.pose_known = True
            obj.on_surface = payload.get("surface")
            obj.in_container = payload.get("container")
    elif kind == "door-open":
        c = belief.containers.get(payload.get("container", ""))
        if c is not None:
            c.joint = payload["joint"]
            for oid, pose in payload.get("content_poses", {}).items():
                if oid in belief.objects:
                    belief.objects[oid].pose = pose
    elif kind == "pose-reached" and payload.get("actuator") == "base":
        belief.robot.base = payload["pose"]
    elif kind == "toppled" and "object" in payload:
        obj = belief.objects.get(payload["object"])
        if obj is not None:
            obj.toppled = True
    return belief


def initial_belief(world: WorldState, cfg: Config = DEFAULT) -> WorldState:
    """Belief at episode start: all objects known, contained poses imprecise."""
    belief = copy.deepcopy(world)
    for obj in belief.objects.values():
        if obj.in_container is not None:
            c = belief.containers[obj.in_container]
            surf = belief.surfaces[c.surface]
            cx, cy = polygon_centroid(surf.polygon)
            obj.pose = Pose(cx, cy, surf.height + 1e-9, 0.0)
            obj.pose_known = False
    return belief


# ---------------------------------------------------------------------------
# snapshots

_snapshots: dict[int, WorldState] = {}
_next_token = 0


def snapshot(world: WorldState) -> int:
    global _next_token
    _next_token += 1
    _snapshots[_next_token] = copy.deepcopy(world)
    return _next_token


def restore(token: int) -> WorldState:
    try:
        return copy.deepcopy(_snapshots[token])
    except KeyError:
        raise UnknownToken(token) from None


def discard_snapshot(token: int):
    _snapshots.pop(token, None)


def clone(world: WorldState) -> WorldState:
    return copy.deepcopy(world)


# ---------------------------------------------------------------------------
# serialization


def _num(v: float):
    f = float(v)
    return int(f) if f == int(f) and abs(f) < 1e15 else f


def _poly_form(poly: Polygon) -> list:
    out: list = [Symbol("polygon")]
    for x, y in poly:
        out.extend([_num(x), _num(y)])
    return out


def serialize_world(world: WorldState) -> str:
    w: list = [Symbol("world")]
    w.append([Symbol("bounds")] + [_num(v) for v in world.bounds])
    r = world.robot
    robot_form: list = [Symbol("robot"),
                        [Symbol("pose"), _num(r.base.x), _num(r.base.y),
                         _num(r.base.z), _num(r.base.yaw)],
                        [Symbol("torso"), _num(r.torso)]]
    w.append(robot_form)
    for f in world.furniture.values():
        form: list = [Symbol("furniture"), [Symbol("id"), Symbol(f.id)]]
        for (x1, y1, x2, y2), h in f.segments:
            form.append([Symbol("segment"), _num(x1), _num(y1), _num(x2), _num(y2), _num(h)])
        for s in world.surfaces.values():
            if s.furniture == f.id:
                form.append([Symbol("surface"), [Symbol("name"), Symbol(s.name)],
                             [Symbol("class"), Symbol(s.cls)],
                             [Symbol("height"), _num(s.height)],
                             _poly_form(s.polygon)])
        w.append(form)
    for c in world.containers.values():
        x1, y1, x2, y2 = c.door
        form = [Symbol("container"), [Symbol("id"), Symbol(c.id)],
                [Symbol("furniture"), Symbol(c.furniture)],
                [Symbol("articulation"), Symbol(c.articulation),
                 _num(c.axis_or_hinge[0]), _num(c.axis_or_hinge[1]), _num(c.joint_range)],
                [Symbol("joint"), _num(c.joint)],
                [Symbol("door"), _num(x1), _num(y1), _num(x2), _num(y2), _num(c.door_height)],
                [Symbol("handle"), c.handle.to_form()],
                [Symbol("interior-surface"), Symbol(c.surface)]]
        w.append(form)
    for o in world.objects.values():
        form = [Symbol("object"), [Symbol("id"), Symbol(o.id)],
                [Symbol("category"), Symbol(o.category)],
                o.pose.to_form(),
                _poly_form(o.footprint),
                [Symbol("height"), _num(o.height)],
                [Symbol("cog"), _num(o.cog_offset[0]), _num(o.cog_offset[1])]]
        if o.color:
            form.append([Symbol("color"), Symbol(o.color)])
        if o.shape:
            form.append([Symbol("shape"), Symbol(o.shape)])
        if o.flags:
            form.append([Symbol("flags")] + [Symbol(fl) for fl in sorted(o.flags)])
        if o.part_of:
            form.append([Symbol("part-of"), Symbol(o.part_of)])
        if o.in_container:
            form.append([Symbol("in"), Symbol(o.in_container)])
        elif o.on_surface:
            form.append([Symbol("on"), Symbol(o.on_surface)])
        if o.held_by:
            form.append([Symbol("held-by"), Symbol(o.held_by)])
        if o.toppled:
            form.append([Symbol("toppled")])
        w.append(form)
    return sexpr.write_form(w) + "\n"


def world_hash(world: WorldState) -> str:
    digest = hashlib.sha256(serialize_world(world).encode("utf-8"))
    return digest.hexdigest()


def _expect(cond: bool, path: str, message: str):
    if not cond:
        raise SchemaError(path, message)


def _section(form, name):
    return [f for f in form if isinstance(f, list) and f and f[0] == Symbol(name)]


def _prop(form, name, path, required=True):
    for f in form:
        if isinstance(f, list) and f and f[0] == Symbol(name):
            return f
    _expect(not required, path, f"missing ({name} ...)")
    return None


def _read_poly(form, path) -> Polygon:
    vals = form[1:]
    _expect(len(vals) >= 6 and len(vals) % 2 == 0, path, "polygon needs >= 3 x,y pairs")
    return [(float(vals[i]), float(vals[i + 1])) for i in range(0, len(vals), 2)]


def load_world(text: str) -> WorldState:
    forms = sexpr.read_forms(text)
    _expect(len(forms) == 1 and isinstance(forms[0], list) and forms[0]
            and forms[0][0] == Symbol("world"), "world", "expected a single (world ...) form")
    w = forms[0]
    b = _prop(w, "bounds", "world")
    _expect(len(b) == 5, "world.bounds", "bounds needs x0 y0 x1 y1")
    bounds = tuple(float(v) for v in b[1:])

    rform = _prop(w, "robot", "world")
    rpose = Pose.from_form(_prop(rform, "pose", "world.robot"))
    torso_form = _prop(rform, "torso", "world.robot", required=False)
    torso = float(torso_form[1]) if torso_form else 0.1
    park = Pose(rpose.x, rpose.y, 0.9, rpose.yaw)
    robot = RobotState(base=rpose, torso=torso,
                       arms={"left": ArmState(tool=park), "right": ArmState(tool=park)})

    world = WorldState(bounds=bounds, robot=robot)

    for fform in _section(w, "furniture"):
        fid = str(_prop(fform, "id", "world.furniture")[1])
        path = f"world.furniture[{fid}]"
        segs = []
        for s in _section(fform, "segment"):
            _expect(len(s) == 6, path, "segment needs x1 y1 x2 y2 height")
            segs.append(((float(s[1]), float(s[2]), float(s[3]), float(s[4])),
                         float(s[5])))
        world.furniture[fid] = Furniture(fid, segs)
        for sform in _section(fform, "surface"):
            name = str(_prop(sform, "name", path)[1])
            cls = str(_prop(sform, "class", path)[1])
            height = float(_prop(sform, "height", path)[1])
            poly = _read_poly(_prop(sform, "polygon", path), f"{path}.{name}")
            world.surfaces[name] = Surface(name, cls, height, poly, fid)

    for cform in _section(w, "container"):
        cid = str(_prop(cform, "id", "world.container")[1])
        path = f"world.container[{cid}]"
        art = _prop(cform, "articulation", path)
        _expect(len(art) == 5 and str(art[1]) in ("prismatic", "revolute"),
                path, "articulation needs kind, axis/hinge x y, range")
        door = _prop(cform, "door", path)
        _expect(len(door) == 6, path, "door needs x1 y1 x2 y2 height")
        handle = Pose.from_form(_prop(cform, "handle", path)[1])
        surface = str(_prop(cform, "interior-surface", path)[1])
        _expect(surface in world.surfaces, path, f"unknown interior surface '{surface}'")
        joint_form = _prop(cform, "joint", path, required=False)
        world.containers[cid] = ContainerState(
            id=cid, furniture=str(_prop(cform, "furniture", path)[1]),
            articulation=str(art[1]),
            axis_or_hinge=(float(art[2]), float(art[3])),
            joint_range=float(art[4]),
            joint=float(joint_form[1]) if joint_form else 0.0,
            door=(float(door[1]), float(door[2]), float(door[3]), float(door[4])),
            door_height=float(door[5]),
            handle=handle, surface=surface)

    for oform in _section(w, "object"):
        oid = str(_prop(oform, "id", "world.object")[1])
        path = f"world.object[{oid}]"
        _expect(oid not in world.objects, path, "duplicate object id")
        pose = Pose.from_form(_prop(oform, "pose", path))
        poly = _read_poly(_prop(oform, "polygon", path), path)
        height = float(_prop(oform, "height", path)[1])
        _expect(height > 0, path, "height must be positive")
        cog = _prop(oform, "cog", path, required=False)
        flags_form = _prop(oform, "flags", path, required=False)
        color = _prop(oform, "color", path, required=False)
        shape = _prop(oform, "shape", path, required=False)
        part_of = _prop(oform, "part-of", path, required=False)
        in_form = _prop(oform, "in", path, required=False)
        on_form = _prop(oform, "on", path, required=False)
        _expect(bool(in_form) != bool(on_form), path,
                "object needs exactly one of (in container) or (on surface)")
        obj = ObjectInstance(
            id=oid, category=str(_prop(oform, "category", path)[1]), pose=pose,
            footprint=poly, height=height,
            cog_offset=(float(cog[1]), float(cog[2])) if cog else (0.0, 0.0),
            color=str(color[1]) if color else "",
            shape=str(shape[1]) if shape else "",
            flags=frozenset(str(f) for f in flags_form[1:]) if flags_form else frozenset(),
            part_of=str(part_of[1]) if part_of else None)
        if in_form:
            cid = str(in_form[1])
            _expect(cid in world.containers, path, f"unknown container '{cid}'")
            obj.in_container = cid
            surf = world.surfaces[world.containers[cid].surface]
        else:
            sname = str(on_form[1])
            _expect(sname in world.surfaces, path, f"unknown surface '{sname}'")
            obj.on_surface = sname
            surf = world.surfaces[sname]
        # normalize the height so the object actually sits on its support
        obj.pose = Pose(pose.x, pose.y, surf.height, pose.yaw)
        world.objects[oid] = obj

    _check_consistency(world)
    return world


def _check_consistency(world: WorldState):
    placed = [o for o in world.objects.values() if o.held_by is None]
    for i, a in enumerate(placed):
        for b in placed[i + 1:]:
            if (a.on_surface == b.on_surface and a.in_container == b.in_container
                    and polygons_overlap(a.world_footprint(), b.world_footprint())):
                raise SchemaError(f"world.object[{b.id}]",
                                  f"overlaps '{a.id}' on the same support")


def load_world_file(path) -> WorldState:
    with open(path, "r", encoding="utf-8") as fh:
        return load_world(fh.read())
