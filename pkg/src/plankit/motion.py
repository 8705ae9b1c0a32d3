"""Motion designator execution against the world.

Motions are kinematic teleport-with-checks sequences: each simulator step
advances the clock and moves one actuator increment, feasibility checks carry
the decision content.  A failed motion is transactional: the world is
restored to its pre-motion state (the clock keeps running; state hashes
exclude it).
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

from . import world as worldmod
from .config import DEFAULT, Config
from .geometry import Pose, polygon_edges, segment_segment_distance
from .plan_lang import Designator
from .sexpr import Symbol
from .vocab import MOTION_TYPES
from .world import WorldState


@dataclass
class MotionEvent:
    step: int
    kind: str           # contact | release | pose-reached | door-open | placed | toppled | collision | detected
    payload: dict = field(default_factory=dict)


@dataclass
class FailureSignal:
    kind: str           # see vocab.FAILURE_KINDS
    origin: int = -1    # task tree node id, filled in by the executive
    context: dict = field(default_factory=dict)
    children: tuple = ()


class MotionFailure(Exception):
    def __init__(self, signal: FailureSignal):
        super().__init__(signal.kind)
        self.signal = signal


@dataclass
class MotionParams:
    arm: str = "right"               # left | right | both
    grasp: str = "top"
    lift_height: float = 0.2
    target: Pose | None = None
    carry: str = "upright"           # upright | free
    base_target: Pose | None = None
    object: str | None = None
    container: str | None = None
    query: Designator | None = None  # detect query
    gripper_open: bool | None = None
    torso: float | None = None
    park: bool = False               # arm fold, exempt from reach checks
    purpose: str | None = None


@dataclass
class MotionPhase:
    name: str
    designator: Designator
    params: MotionParams
    goal_event: str


@dataclass
class MotionPlan:
    phases: tuple[MotionPhase, ...]


def check_grasp_compatibility(obj: "worldmod.ObjectInstance", grasp: str,
                              purpose: str | None = None,
                              cfg: Config = DEFAULT) -> bool:
    """Category-level grasp admissibility rules."""
    if "flat" in obj.flags:
        return grasp == "top"
    if math.hypot(*obj.cog_offset) > cfg.single_hand_cog:
        return grasp == "two-hand"
    if obj.category in ("mug", "cup") and purpose == "pouring":
        return grasp == "side"
    return True


def _grasp_height(obj, grasp: str) -> float:
    if grasp == "top":
        return obj.pose.z + obj.height
    if grasp == "handle":
        return obj.pose.z + obj.height * 0.6
    return obj.pose.z + obj.height * 0.5


def grasp_target(obj, grasp: str) -> Pose:
    return Pose(obj.pose.x, obj.pose.y, _grasp_height(obj, grasp), obj.pose.yaw)


class _Exec:
    def __init__(self, world: WorldState, belief: WorldState | None, cfg: Config):
        self.world = world
        self.belief = belief if belief is not None else world
        self.cfg = cfg
        self.events: list[MotionEvent] = []

    def step(self):
        self.world.clock += 1

    def emit(self, kind: str, **payload):
        self.events.append(MotionEvent(self.world.clock, kind, payload))

    def fail(self, kind: str, **context):
        raise MotionFailure(FailureSignal(kind, context=context))

    # -- per-motion-type handlers -----------------------------------------

    def going(self, p: MotionParams):
        target = p.base_target or p.target
        if target is None:
            self.fail("no-solution", reason="going without a target pose")
        robot = self.world.robot
        start = robot.base
        dist = start.planar_distance(target)
        if not worldmod.base_pose_free(self.world, target, self.cfg) or \
                not worldmod.path_clear(self.world, start.xy(), target.xy(), self.cfg):
            self.step()
            self.emit("collision", actuator="base", pose=target)
            self.fail("collision", target=target)
        steps = max(1, math.ceil(dist / self.cfg.base_step))
        for i in range(1, steps + 1):
            t = i / steps
            nb = Pose(start.x + (target.x - start.x) * t,
                      start.y + (target.y - start.y) * t, 0.0, target.yaw)
            self._move_base(nb)
            self.step()
        self.emit("pose-reached", actuator="base", pose=robot.base)

    def _move_base(self, new_base: Pose):
        robot = self.world.robot
        dx = new_base.x - robot.base.x
        dy = new_base.y - robot.base.y
        robot.base = new_base
        for name, arm in robot.arms.items():
            arm.tool = arm.tool.moved(dx=dx, dy=dy)
            if arm.held:
                self._slave_held(name)

    def _slave_held(self, arm_name: str):
        arm = self.world.robot.arms[arm_name]
        if arm.held:
            obj = self.world.object(arm.held)
            obj.pose = Pose(arm.tool.x, arm.tool.y, arm.tool.z, obj.pose.yaw)

    def looking(self, p: MotionParams):
        target = p.target
        if target is None and p.object:
            target = self.belief.object(p.object).pose
        self.world.robot.gaze = target
        self.step()
        self.emit("pose-reached", actuator="gaze", pose=target)

    def detecting(self, p: MotionParams):
        if p.query is None:
            self.fail("perception-failure", reason="detect without a query")
        self.step()
        try:
            hits = worldmod.perceive_detect(p.query, self.world, self.belief,
                                            self.world.robot.base, self.cfg)
        except worldmod.PerceptionFailure:
            self.emit("detected", objects=[])
            self.fail("perception-failure", query=str(p.query.props))
        self.emit("detected",
                  objects=[str(d.get("name")) for d in hits],
                  poses={str(d.get("name")): d.get("pose") for d in hits})

    def moving_tcp(self, p: MotionParams):
        arms = ("left", "right") if p.arm == "both" else (p.arm,)
        robot = self.world.robot
        if p.park:
            for a in arms:
                base = robot.base
                robot.arms[a].tool = Pose(base.x + 0.4 * math.cos(base.yaw),
                                          base.y + 0.4 * math.sin(base.yaw),
                                          0.85 + robot.torso, base.yaw)
                self._slave_held(a)
            self.step()
            self.emit("pose-reached", actuator="arm", arm=p.arm,
                      pose=robot.arms[arms[0]].tool)
            return
        target = p.target
        if target is None:
            self.fail("no-solution", reason="moving-tcp without a target pose")
        # auto-adjust the torso into the band that makes the height reachable
        lo = target.z - self.cfg.arm_z_hi
        hi = target.z - self.cfg.arm_z_lo
        torso = min(max(robot.torso, lo, self.cfg.torso_min), self.cfg.torso_max)
        if torso <= hi:
            robot.torso = max(torso, self.cfg.torso_min)
        if not worldmod.reachable_from(robot.base, target, p.arm, self.world,
                                       self.cfg, ignore_container=p.container):
            self.fail("unreachable", target=target, arm=p.arm)
        tool = robot.arms[arms[0]].tool
        dist = math.hypot(target.x - tool.x, target.y - tool.y) + abs(target.z - tool.z)
        steps = max(1, math.ceil(dist / self.cfg.arm_step))
        held = [robot.arms[a].held for a in arms]
        for i in range(1, steps + 1):
            t = i / steps
            pose = Pose(tool.x + (target.x - tool.x) * t,
                        tool.y + (target.y - tool.y) * t,
                        tool.z + (target.z - tool.z) * t, target.yaw)
            for a in arms:
                robot.arms[a].tool = pose
            for a, h in zip(arms, held):
                if h:
                    obj = self.world.object(h)
                    obj.tilt = 0.0 if p.carry == "upright" else 0.35
                    self._slave_held(a)
            self.step()
        payload = {"actuator": "arm", "arm": p.arm, "pose": target}
        for h in held:
            if h:
                payload["held"] = h
                payload["tilt"] = self.world.object(h).tilt
        self.emit("pose-reached", **payload)

    def _approach_blocked(self, obj) -> bool:
        """A crowded approach corridor makes the grasp slip."""
        sp = self.world.robot.base.xy()
        corridor = (sp[0], sp[1], obj.pose.x, obj.pose.y)
        for other in self.world.objects.values():
            if other.id == obj.id or other.held_by is not None:
                continue
            if (other.on_surface, other.in_container) != (obj.on_surface, obj.in_container):
                continue
            for edge in polygon_edges(other.world_footprint()):
                if segment_segment_distance(corridor, edge) < self.cfg.approach_clearance:
                    return True
        return False

    def gripping(self, p: MotionParams):
        robot = self.world.robot
        arms = ("left", "right") if p.arm == "both" else (p.arm,)
        for a in arms:
            if robot.arms[a].held:
                self.fail("object-slipped", reason=f"{a} gripper already holding")
        tool = robot.arms[arms[0]].tool
        # the intended object must be in range; otherwise the nearest one is
        candidate = None
        if p.object:
            candidate = self.world.objects.get(p.object)
        else:
            best = None
            for o in self.world.objects.values():
                if o.held_by:
                    continue
                d = math.hypot(o.pose.x - tool.x, o.pose.y - tool.y)
                if best is None or d < best[0]:
                    best = (d, o)
            candidate = best[1] if best else None
        if candidate is None:
            self.fail("object-slipped", reason="nothing to grip")
        planar = math.hypot(candidate.pose.x - tool.x, candidate.pose.y - tool.y)
        vertical = abs(_grasp_height(candidate, p.grasp) - tool.z)
        self.step()
        if (p.grasp == "two-hand") != (p.arm == "both"):
            self.fail("object-slipped", object=candidate.id,
                      reason="two-hand grasps need both arms and vice versa")
        if planar > self.cfg.grasp_radius or vertical > 0.15:
            self.fail("object-slipped", object=candidate.id, reason="out of grasp range")
        if not check_grasp_compatibility(candidate, p.grasp, p.purpose, self.cfg):
            self.fail("object-slipped", object=candidate.id,
                      reason=f"grasp '{p.grasp}' incompatible with {candidate.category}")
        if p.grasp == "top" and candidate.height > self.cfg.tall_object_top_limit:
            self.fail("object-slipped", object=candidate.id, reason="object too tall for a top grasp")
        if self._approach_blocked(candidate):
            self.fail("object-slipped", object=candidate.id, reason="approach corridor crowded")
        candidate.held_by = p.arm
        candidate.on_surface = None
        candidate.in_container = None
        candidate.tilt = 0.0
        for a in arms:
            robot.arms[a].gripper_open = False
            robot.arms[a].held = candidate.id
            self._slave_held(a)
        self.emit("contact", object=candidate.id, arm=p.arm, grasp=p.grasp)

    def _release(self, p: MotionParams):
        robot = self.world.robot
        arms = ("left", "right") if p.arm == "both" else (p.arm,)
        held = robot.arms[arms[0]].held
        self.step()
        if held is None:
            for a in arms:
                robot.arms[a].gripper_open = True
            self.emit("release", arm=p.arm)
            return
        obj = self.world.object(held)
        drop = robot.arms[arms[0]].tool
        surf = None
        container = None
        for c in self.world.containers.values():
            isurf = self.world.surfaces[c.surface]
            if (abs(isurf.height - (drop.z - 0.02)) < 0.25
                    and worldmod.point_in_convex_polygon(drop.x, drop.y, isurf.polygon)):
                surf = isurf
                container = c.id
                break
        if surf is None:
            surf = worldmod.surface_under(self.world, Pose(drop.x, drop.y, drop.z - 0.05, 0), tol=0.3)
        if surf is None:
            self.emit("toppled", object=obj.id, reason="no support below")
            self.fail("object-slipped", object=obj.id, reason="released over nothing")
        pose = Pose(drop.x, drop.y, surf.height, obj.pose.yaw)
        if not worldmod.stable_at(obj, pose, surf.name, self.world, self.cfg):
            self.emit("toppled", object=obj.id, pose=pose)
            self.fail("object-slipped", object=obj.id, reason="unstable placement")
        if worldmod.placement_blocked(self.world, obj, pose, surf.name):
            self.emit("collision", object=obj.id, pose=pose)
            self.fail("collision", object=obj.id, reason="placement overlaps another object")
        obj.pose = pose
        obj.held_by = None
        obj.tilt = 0.0
        obj.on_surface = None if container else surf.name
        obj.in_container = container
        for a in arms:
            robot.arms[a].gripper_open = True
            robot.arms[a].held = None
        self.emit("release", object=obj.id, arm=p.arm, pose=pose,
                  surface=None if container else surf.name, container=container)
        self.emit("placed", object=obj.id, pose=pose,
                  surface=surf.name, container=container)

    def opening(self, p: MotionParams):
        if p.container is None:
            self._release(p)
            return
        self._drive_container(p, opening=True)

    def closing(self, p: MotionParams):
        if p.container is None:
            self.fail("no-solution", reason="closing without a container")
        self._drive_container(p, opening=False)

    def _drive_container(self, p: MotionParams, opening: bool):
        c = self.world.containers.get(p.container)
        if c is None:
            self.fail("no-solution", reason=f"unknown container '{p.container}'")
        handle = c.handle_pose()
        arm = p.arm if p.arm != "both" else "right"
        if not worldmod.reachable_from(self.world.robot.base, handle, arm,
                                       self.world, self.cfg, ignore_container=c.id):
            self.fail("unreachable", target=handle, arm=arm)
        target = c.joint_range if opening else 0.0
        delta = (target - c.joint) / self.cfg.joint_steps
        for _ in range(self.cfg.joint_steps):
            c.joint += delta
            if c.articulation == "prismatic":
                ax, ay = c.axis_or_hinge
                for obj in self.world.contents(c.id):
                    obj.pose = obj.pose.moved(dx=ax * delta, dy=ay * delta)
            self.step()
        c.joint = target
        self.emit("door-open", container=c.id, joint=c.joint,
                  content_poses={o.id: o.pose for o in self.world.contents(c.id)})

    def moving_torso(self, p: MotionParams):
        if p.torso is not None:
            self.world.robot.torso = min(max(p.torso, self.cfg.torso_min),
                                         self.cfg.torso_max)
        self.step()
        self.emit("pose-reached", actuator="torso", height=self.world.robot.torso)

    def moving_arm_joints(self, p: MotionParams):
        self.moving_tcp(MotionParams(arm=p.arm, park=True))

    def moving_gripper_joint(self, p: MotionParams):
        if p.gripper_open is False:
            arms = ("left", "right") if p.arm == "both" else (p.arm,)
            for a in arms:
                self.world.robot.arms[a].gripper_open = False
            self.step()
            self.emit("pose-reached", actuator="gripper", arm=p.arm, open=False)
        else:
            self._release(p)


_DISPATCH = {
    "going": _Exec.going,
    "looking": _Exec.looking,
    "detecting": _Exec.detecting,
    "moving-tcp": _Exec.moving_tcp,
    "gripping": _Exec.gripping,
    "opening": _Exec.opening,
    "closing": _Exec.closing,
    "moving-torso": _Exec.moving_torso,
    "moving-arm-joints": _Exec.moving_arm_joints,
    "moving-gripper-joint": _Exec.moving_gripper_joint,
}


def execute_motion(d: Designator, params: MotionParams, world: WorldState,
                   belief: WorldState | None = None, cfg: Config = DEFAULT
                   ) -> tuple[list[MotionEvent], FailureSignal | None]:
    """Execute one motion designator; on failure the world state is restored
    to its pre-motion value (the clock still advances)."""
    mtype = str(d.type) if d.type is not None else ""
    if mtype not in MOTION_TYPES:
        return [], FailureSignal("no-solution", context={"reason": f"unknown motion '{mtype}'"})
    saved_objects = copy.deepcopy(world.objects)
    saved_robot = copy.deepcopy(world.robot)
    saved_containers = copy.deepcopy(world.containers)
    ex = _Exec(world, belief, cfg)
    try:
        _DISPATCH[mtype](ex, params)
        return ex.events, None
    except MotionFailure as f:
        world.objects = saved_objects
        world.robot = saved_robot
        world.containers = saved_containers
        return ex.events, f.signal


def execute_motion_plan(plan: MotionPlan, world: WorldState,
                        belief: WorldState | None = None, cfg: Config = DEFAULT
                        ) -> tuple[list[MotionEvent], FailureSignal | None]:
    """Run phases in order; a phase ends when its goal event fires; any
    failure aborts the remaining phases."""
    events: list[MotionEvent] = []
    for phase in plan.phases:
        phase_events, failure = execute_motion(phase.designator, phase.params,
                                               world, belief, cfg)
        events.extend(phase_events)
        if failure is not None:
            failure.context.setdefault("phase", phase.name)
            return events, failure
        if not any(e.kind == phase.goal_event for e in phase_events):
            return events, FailureSignal("timeout",
                                         context={"phase": phase.name,
                                                  "missing": phase.goal_event})
    return events, None
