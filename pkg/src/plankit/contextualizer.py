"""Turning underdetermined action descriptions into executable structure.

Three steps: instantiate a plan schema with its arguments, expand action
designators through the hierarchy down to atomic actions (each of which maps
to exactly one motion designator), and formulate the parameter query whose
answer grounds the remaining free variables.

Also hosts the lazy candidate-pose streams behind location designators and
the two shipped plan-transformation rules.
"""

from __future__ import annotations

import functools
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

from . import world as worldmod
from .config import DEFAULT, Config
from .geometry import Pose, erode_convex_polygon, point_in_convex_polygon, polygon_centroid
from .plan_lang import (Atom, Designator, Node, Perform, PlanAst, Seq,
                        When, WithRobotAtLocation, free_variables,
                        substitute_bindings, Bindings)
from .sexpr import Symbol, Variable, read_forms
from .vocab import ATOMIC_TO_MOTION, CATEGORY_GRASPS, is_atomic_action, motion_for_atomic

DATA_DIR = Path(__file__).parent / "data"

# props a child action designator inherits from its parent during expansion
INHERITED_PROPS = ("object", "arm", "grasp", "lift-pose", "lower-pose",
                   "target", "container", "purpose", "carry")


class UnknownActionType(KeyError):
    pass


class UnknownSchema(KeyError):
    pass


class MissingArgument(KeyError):
    pass


class NoSolution(Exception):
    """A candidate stream or parameter search ran dry."""


# ---------------------------------------------------------------------------
# action hierarchy


@dataclass(frozen=True)
class ChildSpec:
    action_type: str
    condition: tuple | None = None     # ("has-prop", key) | ("prop-equals", key, value)

    def applies(self, d: Designator) -> bool:
        if self.condition is None:
            return True
        if self.condition[0] == "has-prop":
            return d.get(self.condition[1]) is not None
        if self.condition[0] == "prop-equals":
            v = d.get(self.condition[1])
            return v is not None and str(v) == str(self.condition[2])
        return False


@dataclass
class ActionHierarchy:
    composites: dict[str, tuple[ChildSpec, ...]] = field(default_factory=dict)

    def known(self, action_type: str) -> bool:
        return action_type in self.composites or is_atomic_action(action_type)

    def check(self):
        """Every composite is acyclic and bottoms out in atomic action types."""
        for name in self.composites:
            seen: list[str] = []

            def visit(t: str):
                if is_atomic_action(t):
                    return
                if t in seen:
                    raise ValueError(f"hierarchy cycle through '{t}'")
                if t not in self.composites:
                    raise ValueError(f"'{t}' is neither composite nor atomic")
                seen.append(t)
                for c in self.composites[t]:
                    visit(c.action_type)
                seen.pop()

            visit(name)


def load_hierarchy(text: str) -> ActionHierarchy:
    forms = read_forms(text)
    if len(forms) != 1 or forms[0][0] != Symbol("hierarchy"):
        raise ValueError("expected a single (hierarchy ...) form")
    h = ActionHierarchy()
    for entry in forms[0][1:]:
        if not isinstance(entry, list) or entry[0] != Symbol("composite"):
            raise ValueError(f"expected (composite name children...), got {entry!r}")
        name = str(entry[1])
        children = []
        for c in entry[2:]:
            if not isinstance(c, list) or c[0] != Symbol("child"):
                raise ValueError(f"expected (child type [condition]), got {c!r}")
            cond = None
            if len(c) == 3:
                cform = c[2]
                if cform[0] == Symbol("has-prop"):
                    cond = ("has-prop", str(cform[1]))
                elif cform[0] == Symbol("prop-equals"):
                    cond = ("prop-equals", str(cform[1]), str(cform[2]))
                else:
                    raise ValueError(f"unknown child condition {cform!r}")
            children.append(ChildSpec(str(c[1]), cond))
        h.composites[name] = tuple(children)
    h.check()
    return h


@functools.cache
def default_hierarchy() -> ActionHierarchy:
    return load_hierarchy((DATA_DIR / "hierarchy.sexp").read_text())


@dataclass
class Expansion:
    designator: Designator
    children: list["Expansion"]

    def leaves(self) -> list[Designator]:
        if not self.children:
            return [self.designator]
        out = []
        for c in self.children:
            out.extend(c.leaves())
        return out


def expand_action_designator(d: Designator,
                             hierarchy: ActionHierarchy | None = None) -> Expansion:
    """Expand a composite action designator into a finite tree whose leaves
    are all atomic; children inherit the relevant parent props."""
    hierarchy = hierarchy or default_hierarchy()
    t = str(d.type) if d.type is not None else ""
    if is_atomic_action(t):
        return Expansion(d, [])
    if t not in hierarchy.composites:
        raise UnknownActionType(t)
    inherited = tuple((k, v) for k, v in d.props if k in INHERITED_PROPS)
    children = []
    for spec in hierarchy.composites[t]:
        if not spec.applies(d):
            continue
        child = Designator("action", (("type", Symbol(spec.action_type)),) + inherited)
        children.append(expand_action_designator(child, hierarchy))
    return Expansion(d, children)


def resolve_atomic_to_motion(d: Designator) -> Designator:
    """Map an atomic action designator to its motion designator, forwarding
    all props except the action type."""
    t = str(d.type) if d.type is not None else ""
    motion_type = motion_for_atomic(t)  # raises UnknownAtomicAction
    props = (("type", Symbol(motion_type)),)
    props += tuple((k, v) for k, v in d.props if k != "type")
    return Designator("motion", props)


# ---------------------------------------------------------------------------
# instantiation and query formulation


def instantiate_plan(ast: PlanAst, schema_name: str, args: Bindings) -> PlanAst:
    """Instantiate a schema; the result's top is the substituted body and the
    remaining free variables are exactly the parameters left to query."""
    schema = ast.definitions.get(schema_name)
    if schema is None:
        raise UnknownSchema(schema_name)
    for p in schema.params:
        if p.name not in args:
            raise MissingArgument(p.name)
    inst = PlanAst(dict(ast.definitions), dict(ast.fluents), schema.body)
    return substitute_bindings(inst, args)


@dataclass
class ResolutionContext:
    belief: "worldmod.WorldState"
    kb: object = None
    hierarchy: ActionHierarchy | None = None
    schemas: PlanAst | None = None
    cfg: Config = DEFAULT


@dataclass
class ParamQuery:
    variables: tuple[str, ...]
    to_succeed: tuple[Node, ...]
    context: ResolutionContext | None = None


def formulate_parameter_query(plan: PlanAst,
                              context: ResolutionContext | None = None) -> ParamQuery:
    """The query's variables are the plan's free variables and its constraint
    body is the instantiated plan body itself, verbatim."""
    return ParamQuery(tuple(free_variables(plan.top)), plan.top, context)


# ---------------------------------------------------------------------------
# location designator resolution


def sector_of(center: tuple[float, float], pose: Pose, cfg: Config = DEFAULT) -> int:
    theta = math.atan2(pose.y - center[1], pose.x - center[0]) % (2 * math.pi)
    return int(theta / (2 * math.pi / cfg.heading_sectors)) % cfg.heading_sectors


def ring_candidates(center: tuple[float, float], seed: int,
                    cfg: Config = DEFAULT) -> list[Pose]:
    """Base-pose candidates on rings around a target, facing it, in seeded
    shuffled order."""
    poses = []
    for r in cfg.ring_radii:
        for i in range(cfg.ring_headings):
            theta = 2 * math.pi * i / cfg.ring_headings
            x = center[0] + r * math.cos(theta)
            y = center[1] + r * math.sin(theta)
            yaw = (theta + math.pi) % (2 * math.pi)
            poses.append(Pose(x, y, 0.0, yaw))
    rng = random.Random(seed)
    rng.shuffle(poses)
    return poses


def surface_grid(belief: "worldmod.WorldState", surf: "worldmod.Surface", seed: int,
                 cfg: Config = DEFAULT, margin: float | None = None) -> list[Pose]:
    margin = cfg.stability_margin if margin is None else margin
    poly = worldmod.effective_surface_polygon(belief, surf)
    eroded = erode_convex_polygon(poly, margin) or poly
    xs = [p[0] for p in poly]
    ys = [p[1] for p in poly]
    step = cfg.surface_grid_step
    poses = []
    nx = int((max(xs) - min(xs)) / step) + 1
    ny = int((max(ys) - min(ys)) / step) + 1
    for i in range(nx + 1):
        for j in range(ny + 1):
            x = min(xs) + i * step
            y = min(ys) + j * step
            if point_in_convex_polygon(x, y, eroded):
                poses.append(Pose(x, y, surf.height, 0.0))
    rng = random.Random(seed)
    rng.shuffle(poses)
    return poses


def _believed_pose(belief: "worldmod.WorldState", oid: str) -> Pose:
    return belief.object(oid).pose


def location_satisfied(d: Designator, belief: "worldmod.WorldState", pose: Pose,
                       cfg: Config = DEFAULT) -> bool:
    """The designator's feasibility test: do all its predicates hold at
    ``pose``?  A bare pinned pose with no predicates means "be at that pose"."""
    surface_pred = d.get("on")
    container_pred = d.get("in")
    next_to = d.get("next-to")
    visible_for = d.get("visible-for")
    reachable_for = d.get("reachable-for")
    arm_prop = d.get("arm")
    has_predicate = any(p is not None for p in
                        (surface_pred, container_pred, next_to, visible_for, reachable_for))
    if not has_predicate:
        pin = d.get("pose")
        return isinstance(pin, Pose) and pose.planar_distance(pin) <= 0.15

    if surface_pred is not None:
        surf = belief.surfaces.get(str(surface_pred))
        if surf is None or abs(pose.z - surf.height) > 0.06:
            return False
        poly = worldmod.effective_surface_polygon(belief, surf)
        eroded = erode_convex_polygon(poly, cfg.stability_margin) or poly
        if not point_in_convex_polygon(pose.x, pose.y, eroded):
            return False
    if container_pred is not None:
        c = belief.containers.get(str(container_pred))
        if c is None:
            return False
        surf = belief.surfaces[c.surface]
        if abs(pose.z - surf.height) > 0.06:
            return False
        if not point_in_convex_polygon(
                pose.x, pose.y, worldmod.effective_surface_polygon(belief, surf)):
            return False
    if next_to is not None:
        other = belief.objects.get(str(next_to))
        if other is None or not 0.0 < pose.planar_distance(other.pose) <= 0.5:
            return False
    if visible_for is not None:
        if not worldmod.base_pose_free(belief, pose, cfg):
            return False
        if not worldmod.visible_from(pose, str(visible_for), belief, cfg):
            return False
    if reachable_for is not None:
        if not worldmod.base_pose_free(belief, pose, cfg):
            return False
        target = reachable_for
        if isinstance(target, Symbol):
            target = _believed_pose(belief, str(target))
        arms = (str(arm_prop),) if arm_prop is not None else ("left", "right")
        if not any(worldmod.reachable_from(pose, target, a, belief, cfg)
                   for a in arms):
            return False
    return True


def resolve_location_designator(d: Designator, belief: "worldmod.WorldState",
                                seed: int, cfg: Config = DEFAULT) -> Iterator[Pose]:
    """Lazy stream of candidate poses satisfying all of the designator's
    predicates, in seeded deterministic order; finite."""
    pinned: list[Pose] = []
    pin = d.get("pose")
    if isinstance(pin, Pose):
        pinned.append(pin)

    surface_pred = d.get("on")
    container_pred = d.get("in")
    next_to = d.get("next-to")
    visible_for = d.get("visible-for")
    reachable_for = d.get("reachable-for")
    prefer_sector = d.get("sector")

    def passes(pose: Pose) -> bool:
        return location_satisfied(d, belief, pose, cfg)

    candidates: list[Pose]
    if surface_pred is not None or container_pred is not None:
        if surface_pred is not None:
            surf = belief.surfaces.get(str(surface_pred))
        else:
            c = belief.containers.get(str(container_pred))
            surf = belief.surfaces[c.surface] if c else None
        candidates = surface_grid(belief, surf, seed, cfg) if surf else []
    elif next_to is not None and str(next_to) in belief.objects:
        other = belief.objects[str(next_to)]
        surf = belief.surfaces.get(other.on_surface) if other.on_surface else None
        candidates = surface_grid(belief, surf, seed, cfg) if surf else []
    else:
        anchor = visible_for if visible_for is not None else reachable_for
        if anchor is None:
            candidates = []
        else:
            target = anchor
            if isinstance(target, Symbol):
                target = _believed_pose(belief, str(target))
            candidates = ring_candidates(target.xy(), seed, cfg)
            if prefer_sector is not None:
                k = int(prefer_sector)
                first = [p for p in candidates if sector_of(target.xy(), p, cfg) == k]
                rest = [p for p in candidates if sector_of(target.xy(), p, cfg) != k]
                candidates = first + rest

    emitted = set()
    for pose in pinned + candidates:
        key = (round(pose.x, 6), round(pose.y, 6), round(pose.z, 6))
        if key in emitted:
            continue
        if passes(pose):
            emitted.add(key)
            yield pose


def first_pose(d: Designator, belief, seed: int, cfg: Config = DEFAULT) -> Pose:
    for p in resolve_location_designator(d, belief, seed, cfg):
        return p
    raise NoSolution(f"no pose satisfies {d}")


# ---------------------------------------------------------------------------
# plan transformations


T1 = "drop-redundant-navigation"
T2 = "batch-transport"
SHIPPED_TRANSFORMATIONS = (T1, T2)


def load_transformations(text: str) -> tuple[str, ...]:
    forms = read_forms(text)
    if len(forms) != 1 or forms[0][0] != Symbol("transformations"):
        raise ValueError("expected a single (transformations ...) form")
    rules = []
    for entry in forms[0][1:]:
        if not isinstance(entry, list) or entry[0] != Symbol("rule"):
            raise ValueError(f"expected (rule name), got {entry!r}")
        name = str(entry[1])
        if name not in SHIPPED_TRANSFORMATIONS:
            raise ValueError(f"unknown transformation rule '{name}'")
        rules.append(name)
    return tuple(rules)


@functools.cache
def default_transformations() -> tuple[str, ...]:
    return load_transformations((DATA_DIR / "transforms.sexp").read_text())


def _source_surface(belief, oid: str) -> str | None:
    obj = belief.objects.get(oid)
    if obj is None:
        return None
    if obj.on_surface:
        return obj.on_surface
    if obj.in_container:
        return belief.containers[obj.in_container].surface
    return None


def _merge_adjacent_navigation(nodes: tuple[Node, ...]) -> tuple[tuple[Node, ...], int]:
    out: list[Node] = []
    merged = 0
    for n in nodes:
        n = _t1_node(n)[0]
        if (out and isinstance(n, WithRobotAtLocation)
                and isinstance(out[-1], WithRobotAtLocation)
                and out[-1].location == n.location):
            out[-1] = WithRobotAtLocation(out[-1].location, out[-1].body + n.body)
            merged += 1
        else:
            out.append(n)
    return tuple(out), merged


def _t1_node(node: Node) -> tuple[Node, int]:
    if isinstance(node, Seq):
        children, merged = _merge_adjacent_navigation(node.children)
        return Seq(children), merged
    if isinstance(node, WithRobotAtLocation):
        body, merged = _merge_adjacent_navigation(node.body)
        return WithRobotAtLocation(node.location, body), merged
    if isinstance(node, When):
        body, merged = _merge_adjacent_navigation(node.body)
        return When(node.condition, body), merged
    return node, 0


def _is_single_transport(node: Node) -> tuple[str, Pose] | None:
    if not isinstance(node, Perform) or node.designator.kind != "action":
        return None
    if str(node.designator.type) != "fetch&place":
        return None
    oid = node.designator.get("object-to-be-fetched")
    dest = node.designator.get("destination")
    if isinstance(oid, Symbol) and isinstance(dest, Pose):
        return (str(oid), dest)
    return None


def _two_hand_only(belief, oid: str) -> bool:
    obj = belief.objects.get(oid)
    if obj is None:
        return False
    grasps = CATEGORY_GRASPS.get(obj.category, ())
    return grasps == ("two-hand",)


def _t2_batch(nodes: tuple[Node, ...], belief, cfg) -> tuple[tuple[Node, ...], int]:
    out: list[Node] = []
    batched = 0
    i = 0
    while i < len(nodes):
        a = _is_single_transport(nodes[i])
        b = _is_single_transport(nodes[i + 1]) if i + 1 < len(nodes) else None
        if a and b and belief is not None:
            src_a = _source_surface(belief, a[0])
            src_b = _source_surface(belief, b[0])
            dst_a = worldmod.surface_under(belief, a[1])
            dst_b = worldmod.surface_under(belief, b[1])
            if (src_a is not None and src_a == src_b and dst_a is not None
                    and dst_b is not None and dst_a.name == dst_b.name
                    and not _two_hand_only(belief, a[0])
                    and not _two_hand_only(belief, b[0])):
                d = Designator("action", (
                    ("type", Symbol("fetch&place-pair")),
                    ("object-a", Symbol(a[0])), ("object-b", Symbol(b[0])),
                    ("destination-a", a[1]), ("destination-b", b[1])))
                out.append(Perform(d))
                batched += 1
                i += 2
                continue
        out.append(nodes[i])
        i += 1
    return tuple(out), batched


def apply_plan_transformations(plan: PlanAst, rules: tuple[str, ...] | None = None,
                               belief=None, cfg: Config = DEFAULT
                               ) -> tuple[PlanAst, list[str]]:
    """Apply the fixed transformation rules; non-matching rules are no-ops.

    Returns the transformed plan and the names of rules that actually fired
    (repeated once per application) for the episode narrative.
    """
    rules = rules if rules is not None else default_transformations()
    applied: list[str] = []
    top = plan.top
    if T2 in rules:
        top, n = _t2_batch(top, belief, cfg)
        applied.extend([T2] * n)
    if T1 in rules:
        top, n = _merge_adjacent_navigation(top)
        applied.extend([T1] * n)
    defs = dict(plan.definitions)
    return PlanAst(defs, dict(plan.fluents), top), applied
