"""The plan interpreter.

Deterministic cooperative scheduling: every concurrent construct spawns
branches that a single round-robin scheduler advances in creation order, one
yield per branch step.  Motions execute atomically within one branch step;
the world clock still advances per simulator step inside them, so event
timestamps stay fine-grained.  Failures travel as exceptions carrying typed
``FailureSignal`` values; ``handle-failure`` nodes catch and retry them, and
``with-robot-at-location`` turns unreachable-manipulation failures into base
repositioning against a lazy candidate-pose stream.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from . import contextualizer as ctx
from . import models as modelsmod
from . import world as worldmod
from .config import DEFAULT, Config
from .geometry import Pose
from .knowledge import KnowledgeBase, default_kb, query_first
from .motion import FailureSignal, MotionParams, execute_motion, grasp_target
from .neem import Neem, NeemRecorder
from .plan_lang import (Atom, Designator, HandleFailure, Node, Par, Perform,
                        PlanAst, Pulse, Pursue, Seq, TryAll, TryInOrder,
                        WaitFor, When, WithRobotAtLocation, parse_plan,
                        substitute_node)
from .sexpr import Symbol, Variable
from .vocab import is_atomic_action


class PlanFailure(Exception):
    def __init__(self, signal: FailureSignal):
        super().__init__(signal.kind)
        self.signal = signal


@dataclass
class Fluent:
    name: str
    value: object = None
    pulse_count: int = 0
    buffer_mode: str = "latest"      # latest | all | none


@dataclass
class TaskNode:
    id: int
    parent: int | None
    label: str
    status: str = "Pending"          # Pending Running Suspended Succeeded Failed Cancelled
    failure: FailureSignal | None = None
    retries: int = 0
    action_type: str | None = None
    params: dict = field(default_factory=dict)
    context_key: tuple | None = None
    combo: tuple | None = None
    support: bool = False


@dataclass
class _Frame:
    """Per-branch state: pulse cursors for fluent waits."""
    cursors: dict[str, int] = field(default_factory=dict)


class _Branch:
    def __init__(self, bid: int, gen, node_id: int):
        self.id = bid
        self.gen = gen
        self.node_id = node_id
        self.status = "Running"      # Running | Done | Failed | Cancelled
        self.failure: FailureSignal | None = None

    def cancel(self):
        if self.status == "Running":
            self.status = "Cancelled"
            self.gen.close()


class _NullRecorder:
    def begin(self, *a, **k): pass
    def record_event(self, *a, **k): pass
    def record_state_sample(self, *a, **k): pass
    def record_command(self, *a, **k): pass
    def annotate(self, *a, **k): pass
    def record_transformations(self, *a, **k): pass
    def end(self, *a, **k): return None


@dataclass
class EpisodeOutcome:
    tree: list[TaskNode]
    world: "worldmod.WorldState"
    belief: "worldmod.WorldState"
    neem: Neem | None
    metrics: dict
    ensure_choices: list

    @property
    def success(self) -> bool:
        return self.metrics.get("outcome") == "succeeded"


def params_to_dict(p: MotionParams) -> dict:
    out = {"arm": p.arm, "grasp": p.grasp, "lift_height": p.lift_height,
           "carry": p.carry, "park": p.park}
    if p.target is not None:
        out["target"] = p.target
    if p.base_target is not None:
        out["base_target"] = p.base_target
    if p.object is not None:
        out["object"] = p.object
    if p.container is not None:
        out["container"] = p.container
    if p.gripper_open is not None:
        out["gripper_open"] = p.gripper_open
    if p.torso is not None:
        out["torso"] = p.torso
    if p.purpose is not None:
        out["purpose"] = p.purpose
    if p.query is not None:
        from .plan_lang import designator_to_form
        from .sexpr import write_form
        out["query"] = write_form(designator_to_form(p.query))
    return out


def params_from_dict(d: dict) -> MotionParams:
    query = None
    if "query" in d:
        ast = parse_plan(d["query"])
        query = ast.top[0].value if ast.top else None
    return MotionParams(
        arm=d.get("arm", "right"), grasp=d.get("grasp", "top"),
        lift_height=d.get("lift_height", 0.2), target=d.get("target"),
        carry=d.get("carry", "upright"), base_target=d.get("base_target"),
        object=d.get("object"), container=d.get("container"),
        query=query, gripper_open=d.get("gripper_open"),
        torso=d.get("torso"), park=d.get("park", False),
        purpose=d.get("purpose"))


class Interpreter:
    def __init__(self, ast: PlanAst, world, kb: KnowledgeBase, gm, seed: int,
                 cfg: Config = DEFAULT, hierarchy=None, belief=None,
                 recorder=None, max_retries: int | None = None):
        self.ast = ast
        self.world = world
        self.belief = belief if belief is not None else worldmod.initial_belief(world, cfg)
        self.kb = kb.clone()
        self.gm = gm
        self.seed = seed
        self.cfg = cfg
        self.hierarchy = hierarchy or ctx.default_hierarchy()
        self.recorder = recorder or _NullRecorder()
        self.max_retries = max_retries if max_retries is not None else cfg.default_max_retries
        self.nodes: list[TaskNode] = []
        self.branches: list[_Branch] = []
        self.fluents: dict[str, Fluent] = {}
        self.metrics = {"repositions": 0, "retries": 0, "projections": 0}
        self.ensure_choices: list = []
        self.sched_steps = 0
        self._query_counter = 0
        self._support_next = False

    # -- bookkeeping -------------------------------------------------------

    def _new_node(self, label: str, parent: int | None) -> TaskNode:
        node = TaskNode(len(self.nodes), parent, label)
        if self._support_next:
            node.support = True
            self._support_next = False
        self.nodes.append(node)
        return node

    def _subseed(self) -> int:
        self._query_counter += 1
        return self.seed * 1_000_003 + self._query_counter

    def _spawn(self, gen, node_id: int) -> _Branch:
        br = _Branch(len(self.branches), gen, node_id)
        self.branches.append(br)
        return br

    def _context(self) -> ctx.ResolutionContext:
        return ctx.ResolutionContext(self.belief, self.kb, self.hierarchy,
                                     self.ast, self.cfg)

    # -- scheduler ---------------------------------------------------------

    def run(self) -> EpisodeOutcome:
        for name, mode in self.ast.fluents.items():
            self.fluents[name] = Fluent(name, buffer_mode=mode)
        root = self._new_node("episode", None)
        root.status = "Running"
        rootbr = self._spawn(self._body(self.ast.top, root.id, _Frame()), root.id)
        timed_out = False
        while rootbr.status == "Running":
            runnable = [b for b in self.branches if b.status == "Running"]
            if not runnable:
                break
            for br in runnable:
                if br.status != "Running":
                    continue
                self.sched_steps += 1
                if self.sched_steps > self.cfg.scheduler_step_budget:
                    timed_out = True
                    break
                try:
                    next(br.gen)
                except StopIteration:
                    br.status = "Done"
                except PlanFailure as f:
                    br.status = "Failed"
                    br.failure = f.signal
            if timed_out:
                break
        if timed_out:
            for br in self.branches:
                br.cancel()
            root.status = "Failed"
            root.failure = FailureSignal("timeout", origin=root.id,
                                         context={"budget": self.cfg.scheduler_step_budget})
        elif rootbr.status == "Failed":
            root.status = "Failed"
            root.failure = rootbr.failure
        else:
            root.status = "Succeeded"
        self.metrics["outcome"] = "succeeded" if root.status == "Succeeded" else "failed"
        self.metrics["steps"] = self.world.clock
        self.metrics["sched_steps"] = self.sched_steps
        if root.failure is not None:
            self.metrics["failure_kind"] = root.failure.kind
        neem = self.recorder.end(self.nodes, self.world, self.metrics)
        return EpisodeOutcome(self.nodes, self.world, self.belief, neem,
                              self.metrics, self.ensure_choices)

    # -- interpretation ----------------------------------------------------

    def _body(self, nodes, parent: int, frame: _Frame):
        for n in nodes:
            yield from self._interp(n, parent, frame)

    def _interp(self, node: Node, parent: int, frame: _Frame):
        label = type(node).__name__.lower()
        if isinstance(node, Perform):
            t = node.designator.type
            label = f"perform:{t}" if t is not None else "perform"
        tn = self._new_node(label, parent)
        tn.status = "Running"
        try:
            yield from self._dispatch(node, tn, frame)
        except PlanFailure as f:
            tn.status = "Failed"
            tn.failure = f.signal
            if f.signal.origin < 0:
                f.signal.origin = tn.id
            raise
        except GeneratorExit:
            tn.status = "Cancelled"
            raise
        tn.status = "Succeeded"

    def _dispatch(self, node: Node, tn: TaskNode, frame: _Frame):
        if isinstance(node, Atom):
            return
        if isinstance(node, Seq):
            yield from self._body(node.children, tn.id, frame)
        elif isinstance(node, TryInOrder):
            yield from self._try_in_order(node, tn, frame)
        elif isinstance(node, (Par, Pursue, TryAll)):
            yield from self._parallel(node, tn, frame)
        elif isinstance(node, Perform):
            yield from self._perform(node.designator, tn, frame)
        elif isinstance(node, WithRobotAtLocation):
            yield from self._ensure(node, tn, frame)
        elif isinstance(node, HandleFailure):
            yield from self._handle_failure(node, tn, frame)
        elif isinstance(node, When):
            yield from self._when(node, tn, frame)
        elif isinstance(node, WaitFor):
            yield from self._wait_for(node, tn, frame)
        elif isinstance(node, Pulse):
            yield from self._pulse(node, tn)
        else:
            raise PlanFailure(FailureSignal(
                "no-solution", context={"reason": f"cannot interpret {type(node).__name__}"}))

    def _try_in_order(self, node: TryInOrder, tn: TaskNode, frame: _Frame):
        last: FailureSignal | None = None
        for c in node.children:
            try:
                yield from self._interp(c, tn.id, frame)
                return
            except PlanFailure as f:
                last = f.signal
        if last is not None:
            raise PlanFailure(last)

    def _parallel(self, node, tn: TaskNode, frame: _Frame):
        kind = type(node).__name__.lower()
        brs = [self._spawn(self._interp(c, tn.id, _Frame()), tn.id)
               for c in node.children]
        while True:
            done = [b for b in brs if b.status == "Done"]
            failed = [b for b in brs if b.status == "Failed"]
            running = [b for b in brs if b.status == "Running"]
            if kind == "par":
                if failed:
                    for b in running:
                        b.cancel()
                    raise PlanFailure(failed[0].failure)
                if not running:
                    return
            elif kind == "pursue":
                if done:
                    for b in running:
                        b.cancel()
                    return
                if failed:
                    for b in running:
                        b.cancel()
                    raise PlanFailure(failed[0].failure)
            else:  # try-all
                if done:
                    for b in running:
                        b.cancel()
                    return
                if not running:
                    first = failed[0].failure
                    raise PlanFailure(FailureSignal(
                        first.kind, context={"reason": "all alternatives failed"},
                        children=tuple(b.failure for b in failed)))
            yield

    def _handle_failure(self, node: HandleFailure, tn: TaskNode, frame: _Frame):
        attempts = 0
        while True:
            try:
                yield from self._interp(node.body, tn.id, frame)
                return
            except PlanFailure as f:
                handler = next((h for k, h in node.handlers if k == f.signal.kind), None)
                if handler is None or attempts >= node.max_retries:
                    raise
                attempts += 1
                tn.retries = attempts
                self.metrics["retries"] += 1
                self.recorder.annotate(tn.id, "handled-failure",
                                       {"kind": f.signal.kind, "attempt": attempts})
                yield from self._body(handler, tn.id, frame)

    def _when(self, node: When, tn: TaskNode, frame: _Frame):
        yield
        if not node.condition or not isinstance(node.condition[0], Symbol):
            raise PlanFailure(FailureSignal(
                "no-solution", context={"reason": "malformed when condition"}))
        clause = (str(node.condition[0]),) + tuple(node.condition[1:])
        solution = query_first(self.kb, clause, self.belief, cfg=self.cfg)
        self.recorder.annotate(tn.id, "condition",
                               {"clause": " ".join(str(t) for t in clause),
                                "holds": solution is not None})
        if solution is None:
            return
        body = [substitute_node(n, solution) for n in node.body]
        yield from self._body(body, tn.id, frame)

    def _wait_for(self, node: WaitFor, tn: TaskNode, frame: _Frame):
        fl = self.fluents.get(node.fluent)
        if fl is None:
            raise PlanFailure(FailureSignal(
                "no-solution", context={"reason": f"fluent '{node.fluent}' not registered"}))
        tn.status = "Suspended"
        if node.mode == "value":
            while fl.value is None:
                yield
        else:
            cursor = frame.cursors.get(node.fluent, 0)
            if fl.buffer_mode == "latest":
                while fl.pulse_count <= cursor:
                    yield
                frame.cursors[node.fluent] = fl.pulse_count
            elif fl.buffer_mode == "all":
                target = cursor + 1
                while fl.pulse_count < target:
                    yield
                frame.cursors[node.fluent] = target
            else:  # none: only pulses arriving after the wait started count
                snap = fl.pulse_count
                while fl.pulse_count <= snap:
                    yield
                frame.cursors[node.fluent] = fl.pulse_count
        tn.status = "Running"

    def _pulse(self, node: Pulse, tn: TaskNode):
        fl = self.fluents.get(node.fluent)
        if fl is None:
            raise PlanFailure(FailureSignal(
                "no-solution", context={"reason": f"fluent '{node.fluent}' not registered"}))
        fl.value = node.value
        fl.pulse_count += 1
        yield

    # -- perform -----------------------------------------------------------

    def _perform(self, d: Designator, tn: TaskNode, frame: _Frame):
        if d.kind != "action" or d.type is None:
            raise PlanFailure(FailureSignal(
                "no-solution", context={"reason": "perform needs an action designator with a type"}))
        t = str(d.type)
        tn.action_type = t
        if t in self.ast.definitions:
            yield from self._perform_schema(d, t, tn, frame)
        elif t in self.hierarchy.composites:
            yield from self._perform_composite(d, tn, frame)
        elif is_atomic_action(t):
            yield from self._execute_atomic(d, tn)
        else:
            raise PlanFailure(FailureSignal(
                "no-solution", context={"reason": f"unknown action type '{t}'"}))

    def _perform_schema(self, d: Designator, name: str, tn: TaskNode, frame: _Frame):
        schema = self.ast.definitions[name]
        args = {}
        for formal in schema.params:
            v = d.get(formal.name)
            if v is None:
                raise PlanFailure(FailureSignal(
                    "no-solution", context={"reason": f"missing argument '{formal.name}'"}))
            args[formal.name] = v
        inst = ctx.instantiate_plan(self.ast, name, args)
        query = ctx.formulate_parameter_query(inst, self._context())
        tn.context_key = self._context_key(args)
        self.recorder.annotate(tn.id, "query",
                               {"schema": name, "variables": list(query.variables)})
        shape = modelsmod.analyze_query(query, self.belief)
        stream = modelsmod.candidate_stream(
            query, self.gm, self._subseed(), self.cfg, self.metrics,
            action_type=name, context_key=tn.context_key)
        attempt = 0
        last: FailureSignal | None = None
        while True:
            bindings = next(stream, None)
            if bindings is None:
                raise PlanFailure(last or FailureSignal(
                    "no-solution", context={"reason": "parameter candidates exhausted"}))
            at = self._new_node("attempt", tn.id)
            at.action_type = name
            at.context_key = tn.context_key
            if query.variables:
                at.combo = modelsmod.combo_of(bindings)
                at.params = modelsmod.params_of(bindings, shape)
            at.status = "Running"
            self.recorder.annotate(
                tn.id, "answer",
                {"attempt": attempt,
                 "bindings": {k: str(v) for k, v in sorted(bindings.items())}})
            ground = [substitute_node(n, bindings) for n in inst.top]
            try:
                yield from self._body(ground, at.id, frame)
                at.status = "Succeeded"
                return
            except PlanFailure as f:
                at.status = "Failed"
                at.failure = f.signal
                last = f.signal
                attempt += 1
                if attempt > self.max_retries:
                    raise
                tn.retries = attempt
                self.metrics["retries"] += 1
            except GeneratorExit:
                at.status = "Cancelled"
                raise

    def _context_key(self, args: dict) -> tuple:
        category = source = dest = "-"
        for v in args.values():
            oid = None
            if isinstance(v, Symbol) and str(v) in self.belief.objects:
                oid = str(v)
            elif isinstance(v, Designator) and v.kind == "object":
                n = v.get("name")
                if isinstance(n, Symbol) and str(n) in self.belief.objects:
                    oid = str(n)
            if oid and category == "-":
                obj = self.belief.objects[oid]
                category = obj.category
                if obj.on_surface:
                    source = self.belief.surfaces[obj.on_surface].cls
                elif obj.in_container:
                    source = self.belief.surfaces[
                        self.belief.containers[obj.in_container].surface].cls
            if isinstance(v, Pose) and dest == "-":
                surf = worldmod.surface_under(self.belief, v)
                if surf is not None:
                    dest = surf.cls
        return (category, source, dest)

    def _perform_composite(self, d: Designator, tn: TaskNode, frame: _Frame):
        t = str(d.type)
        oid = modelsmod._object_id_of(d, self.belief)
        if t in ("picking-up", "fetching") and oid is not None:
            bobj = self.belief.objects.get(oid)
            if bobj is not None and not bobj.pose_known:
                search = Designator("action", (
                    ("type", Symbol("searching")),
                    ("object", Designator("object", (("name", Symbol(oid)),)))))
                self._support_next = True
                yield from self._interp(Perform(search), tn.id, frame)
        expansion = self._expand_one(d)
        for child in expansion:
            yield from self._interp(Perform(child), tn.id, frame)

    def _expand_one(self, d: Designator) -> list[Designator]:
        t = str(d.type)
        try:
            specs = self.hierarchy.composites[t]
        except KeyError:
            raise PlanFailure(FailureSignal(
                "no-solution", context={"reason": f"unknown action type '{t}'"})) from None
        inherited = tuple((k, v) for k, v in d.props if k in ctx.INHERITED_PROPS)
        out = []
        for spec in specs:
            if spec.applies(d):
                out.append(Designator("action",
                                      (("type", Symbol(spec.action_type)),) + inherited))
        return out

    # -- atomic motions ----------------------------------------------------

    def _execute_atomic(self, d: Designator, tn: TaskNode):
        motion_d, params, _goal = self._atomic_motion(d)
        self.recorder.record_command(str(motion_d.type), params_to_dict(params), tn.id)
        events, failure = execute_motion(motion_d, params, self.world,
                                         self.belief, self.cfg)
        for e in events:
            self.recorder.record_event(e, tn.id)
        if failure is None:
            for e in events:
                worldmod.update_belief_from_event(self.belief, e)
                if e.kind == "door-open":
                    self._note_door(e)
            self.recorder.record_state_sample(self.world, tn.id)
        yield
        if failure is not None:
            failure.origin = tn.id
            raise PlanFailure(failure)

    def _note_door(self, event):
        cid = event.payload["container"]
        c = self.world.containers[cid]
        fact = ("opened-by-robot", Symbol(cid))
        if c.open_fraction() >= self.cfg.occlusion_open_fraction:
            self.kb.assert_fact(fact)
        else:
            self.kb.retract_fact(fact)

    def _believed_object(self, d: Designator):
        oid = modelsmod._object_id_of(d, self.belief)
        if oid is None or oid not in self.belief.objects:
            raise PlanFailure(FailureSignal(
                "no-solution", context={"reason": "action needs a resolvable object"}))
        return self.belief.objects[oid]

    def _atomic_motion(self, d: Designator) -> tuple[Designator, MotionParams, str]:
        t = str(d.type)
        motion_d = ctx.resolve_atomic_to_motion(d)
        arm = str(d.get("arm") or "right")
        grasp = str(d.get("grasp") or "top")
        purpose = d.get("purpose")
        purpose = str(purpose) if purpose is not None else None
        lift_key = str(d.get("lift-pose") or "mid")
        lower_key = str(d.get("lower-pose") or "low")
        lift_h = self.cfg.lift_heights.get(lift_key, 0.2)
        lower_h = self.cfg.lower_heights.get(lower_key, 0.03)

        def carry_for(obj) -> str:
            c = d.get("carry")
            if c is not None:
                return str(c)
            return "upright" if "open-container" in obj.flags else "free"

        def target_pose() -> Pose | None:
            tgt = d.get("target")
            if isinstance(tgt, Designator):
                tgt = tgt.get("pose")
            return tgt if isinstance(tgt, Pose) else None

        if t in ("reaching", "grasping"):
            container = d.get("container")
            if container is not None:
                c = self.belief.containers.get(str(container))
                if c is None:
                    raise PlanFailure(FailureSignal(
                        "no-solution", context={"reason": f"unknown container '{container}'"}))
                return motion_d, MotionParams(arm=arm, target=c.handle_pose(),
                                              container=str(container)), "pose-reached"
            tgt = target_pose()
            if tgt is None:
                obj = self._believed_object(d)
                tgt = grasp_target(obj, grasp)
            return motion_d, MotionParams(arm=arm, grasp=grasp, target=tgt), "pose-reached"
        if t == "gripping":
            obj = self._believed_object(d)
            return motion_d, MotionParams(arm=arm, grasp=grasp, object=obj.id,
                                          purpose=purpose), "contact"
        if t == "lifting":
            tool = self.world.robot.arms["left" if arm == "left" else
                                         ("left" if arm == "both" else "right")].tool
            obj = None
            held = self.world.robot.arms["left" if arm in ("left", "both") else "right"].held
            if held and held in self.belief.objects:
                obj = self.belief.objects[held]
            carry = carry_for(obj) if obj is not None else "free"
            tgt = tool.moved(dz=lift_h)
            return motion_d, MotionParams(arm=arm, target=tgt, carry=carry,
                                          lift_height=lift_h), "pose-reached"
        if t == "putting":
            tgt = target_pose()
            if tgt is None:
                raise PlanFailure(FailureSignal(
                    "no-solution", context={"reason": "putting needs a target pose"}))
            held = self.world.robot.arms["left" if arm in ("left", "both") else "right"].held
            obj = self.belief.objects.get(held) if held else None
            carry = carry_for(obj) if obj is not None else "free"
            return motion_d, MotionParams(arm=arm, target=tgt.moved(dz=lower_h),
                                          carry=carry), "pose-reached"
        if t == "releasing":
            return motion_d, MotionParams(arm=arm), "release"
        if t == "retracting":
            return motion_d, MotionParams(arm=arm, park=True), "pose-reached"
        if t == "going":
            tgt = target_pose()
            if tgt is None:
                raise PlanFailure(FailureSignal(
                    "no-solution", context={"reason": "going needs a target pose"}))
            return motion_d, MotionParams(base_target=tgt), "pose-reached"
        if t == "looking":
            tgt = target_pose()
            if tgt is None:
                obj = self._believed_object(d)
                tgt = obj.pose
            return motion_d, MotionParams(target=tgt), "pose-reached"
        if t == "detecting":
            q = d.get("object")
            if not isinstance(q, Designator):
                raise PlanFailure(FailureSignal(
                    "perception-failure", context={"reason": "detecting needs an object designator"}))
            return motion_d, MotionParams(query=q), "detected"
        if t in ("opening", "closing"):
            container = d.get("container")
            if container is None:
                raise PlanFailure(FailureSignal(
                    "no-solution", context={"reason": f"{t} needs a container"}))
            return motion_d, MotionParams(arm=arm, container=str(container)), "door-open"
        if t in ("pushing", "pulling"):
            tgt = target_pose()
            if tgt is None:
                raise PlanFailure(FailureSignal(
                    "no-solution", context={"reason": f"{t} needs a target pose"}))
            return motion_d, MotionParams(arm=arm, target=tgt), "pose-reached"
        if t == "setting-gripper":
            state = str(d.get("gripper") or "open")
            return motion_d, MotionParams(arm=arm, gripper_open=(state == "open")), \
                ("release" if state == "open" else "pose-reached")
        raise PlanFailure(FailureSignal(
            "no-solution", context={"reason": f"unmapped atomic action '{t}'"}))

    # -- with-robot-at-location --------------------------------------------

    def _go_to(self, pose: Pose, parent: int, frame: _Frame):
        going = Designator("action", (("type", Symbol("going")),
                                      ("target", pose)))
        self._support_next = True
        yield from self._interp(Perform(going), parent, frame)

    def _ensure(self, node: WithRobotAtLocation, tn: TaskNode, frame: _Frame):
        loc = node.location
        if isinstance(loc, Variable):
            raise PlanFailure(FailureSignal(
                "no-solution", context={"reason": f"location ?{loc.name} is unbound"}))
        if isinstance(loc, Pose):
            loc_d = Designator("location", (("pose", loc),))
        elif isinstance(loc, Designator) and loc.kind == "location":
            loc_d = loc
        else:
            raise PlanFailure(FailureSignal(
                "no-solution", context={"reason": f"not a location: {loc!r}"}))
        last: FailureSignal | None = None
        stream = None
        if ctx.location_satisfied(loc_d, self.belief, self.world.robot.base, self.cfg):
            try:
                yield from self._body(node.body, tn.id, frame)
                self.ensure_choices.append((loc_d, self.world.robot.base))
                return
            except PlanFailure as f:
                if f.signal.kind != "unreachable":
                    raise
                last = f.signal
                self.metrics["repositions"] += 1
                tn.retries += 1
                self.recorder.annotate(tn.id, "reposition", {"count": tn.retries})
        if stream is None:
            stream = ctx.resolve_location_designator(loc_d, self.belief,
                                                     self._subseed(), self.cfg)
        while True:
            candidate = next(stream, None)
            if candidate is None:
                raise PlanFailure(last or FailureSignal(
                    "no-solution", context={"reason": "location candidates exhausted"}))
            try:
                yield from self._go_to(candidate, tn.id, frame)
            except PlanFailure as f:
                if f.signal.kind not in ("collision", "unreachable"):
                    raise
                last = f.signal
                continue
            try:
                yield from self._body(node.body, tn.id, frame)
                self.ensure_choices.append((loc_d, self.world.robot.base))
                return
            except PlanFailure as f:
                if f.signal.kind != "unreachable":
                    raise
                last = f.signal
                self.metrics["repositions"] += 1
                tn.retries += 1
                self.recorder.annotate(tn.id, "reposition", {"count": tn.retries})


def interpret_plan(ast: PlanAst, world, kb: KnowledgeBase | None = None,
                   gm=None, seed: int = 0, *, cfg: Config = DEFAULT,
                   hierarchy=None, belief=None, record: bool = True,
                   max_retries: int | None = None,
                   transformations: tuple[str, ...] | None = None) -> EpisodeOutcome:
    """Interpret a plan deterministically: same (ast, world, kb, gm, seed)
    always produces the same task tree, final world, and episode record."""
    kb = kb if kb is not None else default_kb()
    gm = gm if gm is not None else modelsmod.Epl()
    live = worldmod.clone(world)
    live_belief = worldmod.clone(belief) if belief is not None \
        else worldmod.initial_belief(live, cfg)
    applied: list[str] = []
    if transformations:
        ast, applied = ctx.apply_plan_transformations(ast, transformations,
                                                      live_belief, cfg)
    recorder = NeemRecorder() if record else _NullRecorder()
    recorder.begin(live, seed, modelsmod.gm_name(gm))
    if applied:
        recorder.record_transformations(applied)
    interp = Interpreter(ast, live, kb, gm, seed, cfg, hierarchy,
                         live_belief, recorder, max_retries)
    return interp.run()


def project_plan(query: "ctx.ParamQuery", bindings: dict, seed: int,
                 cfg: Config = DEFAULT) -> EpisodeOutcome | None:
    """Temporal projection: run the query's constraint body, grounded with a
    candidate answer, on a sandbox cloned from the belief world."""
    context = query.context
    if context is None:
        return None
    sandbox = worldmod.clone(context.belief)
    sandbox_belief = worldmod.clone(context.belief)
    ground = tuple(substitute_node(n, bindings) for n in query.to_succeed)
    defs = context.schemas.definitions if context.schemas is not None else {}
    fluents = context.schemas.fluents if context.schemas is not None else {}
    ast = PlanAst(dict(defs), dict(fluents), ground)
    kb = context.kb.clone() if context.kb is not None else default_kb()
    return interpret_plan(ast, sandbox, kb, modelsmod.Epl(), seed, cfg=cfg,
                          hierarchy=context.hierarchy, belief=sandbox_belief,
                          record=False)


def replay_commands(neem: Neem, cfg: Config | None = None):
    """Re-execute an episode's recorded motion commands on a fresh world
    loaded from the episode's initial document."""
    cfg = cfg or DEFAULT
    w = worldmod.load_world(neem.initial_world)
    belief = worldmod.clone(w)
    for c in neem.commands:
        d = Designator("motion", (("type", Symbol(c["motion"])),))
        execute_motion(d, params_from_dict(c["params"]), w, belief, cfg)
    return w
