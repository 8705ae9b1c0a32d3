"""Generative models: the strategies that answer parameter queries.

Four strategies share one candidate vocabulary (arm, grasp, lift/lower
heights, and a base-pose heading sector around the target):

* uninformed — uniform seeded sampling over the discretized product space,
  locations included, with no knowledge checks; capped by a sample budget.
* epl — the heuristic-rule baseline: stand where the object is visible,
  search where you believe things to be, pick grasps by category rules,
  choose the arm by proximity, keep open containers upright, place with the
  center of gravity over the support; returns the first candidate passing
  the static checks.
* prospective — runs the first k epl candidates through temporal projection
  on a snapshot of the belief world and returns the first predicted success,
  with the concrete poses that worked pinned into the answer.
* experience — ranks epl candidates by smoothed empirical success rate
  learned from recorded episodes; deterministic tie-break by candidate index.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from typing import Iterator, Union

from . import contextualizer as ctx
from . import world as worldmod
from .config import DEFAULT, Config
from .geometry import Pose
from .motion import check_grasp_compatibility
from .plan_lang import (Designator, Node, Perform, Seq, TryAll, TryInOrder,
                        Par, Pursue, HandleFailure, When, WithRobotAtLocation)
from .sexpr import Symbol, Variable
from .vocab import CATEGORY_GRASPS, DEFAULT_GRASPS, GRASPS


@dataclass(frozen=True)
class Uninformed:
    sample_budget: int = 500


@dataclass(frozen=True)
class Epl:
    pass


@dataclass(frozen=True)
class Prospective:
    budget: int = 5


@dataclass
class Experience:
    model: "ExperienceModel"


GenerativeModelKind = Union[Uninformed, Epl, Prospective, Experience]


def gm_name(gm: GenerativeModelKind) -> str:
    return {"Uninformed": "uninformed", "Epl": "epl",
            "Prospective": "prospective", "Experience": "experience"}[type(gm).__name__]


# ---------------------------------------------------------------------------
# experience model


@dataclass
class ExperienceModel:
    alpha: float = 1.0
    counts: dict[tuple, list[int]] = field(default_factory=dict)  # key -> [successes, trials]

    def record(self, action_type: str, context_key: tuple, combo: tuple, success: bool):
        key = (action_type, tuple(context_key), tuple(combo))
        cell = self.counts.setdefault(key, [0, 0])
        cell[1] += 1
        if success:
            cell[0] += 1

    def rate(self, action_type: str, context_key: tuple, combo: tuple) -> float:
        """Laplace-smoothed success rate; (0 + a) / (0 + 2a) = 1/2 for unseen."""
        key = (action_type, tuple(context_key), tuple(combo))
        s, t = self.counts.get(key, (0, 0))
        return (s + self.alpha) / (t + 2 * self.alpha)


def train_experience_model(store, alpha: float = 1.0) -> ExperienceModel:
    """Aggregate (action type, context key, combo) outcome counts by scanning
    every stored episode's narrative attempts."""
    model = ExperienceModel(alpha=alpha)
    for neem in store.load_all():
        for node in neem.narrative:
            if node.combo is None or node.action_type is None:
                continue
            model.record(node.action_type, tuple(node.context_key or ()),
                         tuple(node.combo), node.outcome == "succeeded")
    return model


# ---------------------------------------------------------------------------
# query analysis


@dataclass
class VarRole:
    name: str
    role: str                    # fetch-location | place-location | container-location
    #                            # | arm | grasp | lift | lower
    object: str | None = None
    category: str | None = None
    purpose: str | None = None
    target: Pose | None = None
    container: str | None = None


@dataclass
class QueryShape:
    roles: dict[str, VarRole] = field(default_factory=dict)

    def by_role(self, role: str) -> list[VarRole]:
        return [r for r in self.roles.values() if r.role == role]


def _object_id_of(d: Designator, belief) -> str | None:
    obj = d.get("object")
    if isinstance(obj, Designator):
        name = obj.get("name")
        if isinstance(name, Symbol):
            return str(name)
        cat = obj.get("category") or obj.get("type")
        if isinstance(cat, Symbol) and belief is not None:
            for oid in sorted(belief.objects):
                if belief.objects[oid].category == str(cat):
                    return oid
    elif isinstance(obj, Symbol):
        return str(obj)
    return None


def _scan_designator(d: Designator, shape: QueryShape, belief):
    oid = _object_id_of(d, belief)
    category = None
    if oid and belief is not None and oid in belief.objects:
        category = belief.objects[oid].category
    purpose = d.get("purpose")
    purpose = str(purpose) if isinstance(purpose, Symbol) else None
    for key, value in d.props:
        if isinstance(value, Designator):
            _scan_designator(value, shape, belief)
            continue
        if not isinstance(value, Variable) or value.name in shape.roles:
            continue
        if key == "arm":
            shape.roles[value.name] = VarRole(value.name, "arm", object=oid,
                                              category=category)
        elif key == "grasp":
            shape.roles[value.name] = VarRole(value.name, "grasp", object=oid,
                                              category=category, purpose=purpose)
        elif key == "lift-pose":
            shape.roles[value.name] = VarRole(value.name, "lift")
        elif key == "lower-pose":
            shape.roles[value.name] = VarRole(value.name, "lower")


def _first_perform(nodes) -> Perform | None:
    for n in nodes:
        if isinstance(n, Perform):
            return n
        if isinstance(n, (Seq, Par, Pursue, TryAll, TryInOrder)):
            p = _first_perform(n.children)
            if p:
                return p
        if isinstance(n, (When, WithRobotAtLocation)):
            p = _first_perform(n.body)
            if p:
                return p
        if isinstance(n, HandleFailure):
            p = _first_perform([n.body])
            if p:
                return p
    return None


def _scan_node(node: Node, shape: QueryShape, belief):
    if isinstance(node, Perform):
        _scan_designator(node.designator, shape, belief)
    elif isinstance(node, (Seq, Par, Pursue, TryAll, TryInOrder)):
        for c in node.children:
            _scan_node(c, shape, belief)
    elif isinstance(node, HandleFailure):
        _scan_node(node.body, shape, belief)
        for _, h in node.handlers:
            for c in h:
                _scan_node(c, shape, belief)
    elif isinstance(node, When):
        for c in node.body:
            _scan_node(c, shape, belief)
    elif isinstance(node, WithRobotAtLocation):
        if isinstance(node.location, Variable) and node.location.name not in shape.roles:
            p = _first_perform(node.body)
            if p is not None:
                d = p.designator
                t = str(d.type) if d.type is not None else ""
                target = d.get("target")
                if isinstance(target, Designator):
                    target = target.get("pose")
                container = d.get("container")
                if t in ("opening-container", "closing-container",
                         "open-container", "close-container") and container is not None:
                    shape.roles[node.location.name] = VarRole(
                        node.location.name, "container-location",
                        container=str(container))
                elif isinstance(target, Pose) or t in ("placing", "placing-down", "putting"):
                    shape.roles[node.location.name] = VarRole(
                        node.location.name, "place-location",
                        object=_object_id_of(d, belief),
                        target=target if isinstance(target, Pose) else None)
                else:
                    shape.roles[node.location.name] = VarRole(
                        node.location.name, "fetch-location",
                        object=_object_id_of(d, belief))
        for c in node.body:
            _scan_node(c, shape, belief)


def analyze_query(query: "ctx.ParamQuery", belief) -> QueryShape:
    shape = QueryShape()
    for n in query.to_succeed:
        _scan_node(n, shape, belief)
    return shape


# ---------------------------------------------------------------------------
# candidate enumeration


class ResolutionError(ctx.NoSolution):
    pass


def _grasp_domain(role: VarRole, belief, cfg: Config) -> list[str]:
    obj = belief.objects.get(role.object) if role.object else None
    prefs = CATEGORY_GRASPS.get(role.category or "", DEFAULT_GRASPS)
    if obj is None:
        return list(prefs)
    out = [g for g in prefs if check_grasp_compatibility(obj, g, role.purpose, cfg)]
    if not out:
        out = [g for g in GRASPS if check_grasp_compatibility(obj, g, role.purpose, cfg)]
    return out or list(prefs)


def _combo_consistent(choice: dict, shape: QueryShape) -> bool:
    # a two-hand grasp requires arm=both for the same object, and vice versa
    for grole in shape.by_role("grasp"):
        for arole in shape.by_role("arm"):
            if grole.object == arole.object:
                g = choice.get(grole.name)
                a = choice.get(arole.name)
                if g is not None and a is not None and (g == "two-hand") != (a == "both"):
                    return False
    return True


def _epl_bindings(choice: dict, shape: QueryShape, belief, cfg: Config) -> dict:
    bindings: dict = {}
    for name, role in shape.roles.items():
        if role.role in ("arm", "grasp", "lift", "lower"):
            bindings[name] = Symbol(choice[name])
        elif role.role == "fetch-location":
            props = []
            if role.object:
                props.append(("visible-for", Symbol(role.object)))
            props.append(("sector", choice[name]))
            bindings[name] = Designator("location", tuple(props))
        elif role.role == "place-location":
            props = []
            if role.target is not None:
                props.append(("reachable-for", role.target))
            arm = _arm_for(role.object, choice, shape)
            if arm:
                props.append(("arm", Symbol(arm)))
            bindings[name] = Designator("location", tuple(props))
        elif role.role == "container-location":
            c = belief.containers.get(role.container or "")
            props = []
            if c is not None:
                props.append(("reachable-for", c.handle_pose()))
            arm = _arm_for(None, choice, shape)
            if arm:
                props.append(("arm", Symbol(arm)))
            bindings[name] = Designator("location", tuple(props))
    return bindings


def _arm_for(oid: str | None, choice: dict, shape: QueryShape) -> str | None:
    for arole in shape.by_role("arm"):
        if arole.object == oid or oid is None:
            v = choice.get(arole.name)
            if v == "both":
                return None  # reach is checked per arm; both arms must work anyway
            return v
    return None


def _static_ok(choice: dict, shape: QueryShape, belief, cfg: Config) -> bool:
    for role in shape.by_role("place-location"):
        if role.target is not None and role.object:
            obj = belief.objects.get(role.object)
            surf = worldmod.surface_under(belief, role.target)
            if obj is None or surf is None:
                return False
            if not worldmod.stable_at(obj, role.target, surf.name, belief, cfg):
                return False
    return True


def epl_candidates(query: "ctx.ParamQuery", belief, seed: int,
                   cfg: Config = DEFAULT) -> Iterator[dict]:
    """Seeded-shuffled product of the per-variable domains, filtered by the
    static knowledge checks; yields Bindings."""
    shape = analyze_query(query, belief)
    names = []
    domains = []
    for name in query.variables:
        role = shape.roles.get(name)
        if role is None:
            raise ResolutionError(f"no resolution strategy for variable ?{name}")
        if role.role == "grasp":
            dom = _grasp_domain(role, belief, cfg)
        elif role.role == "arm":
            has_two_hand = any("two-hand" in _grasp_domain(g, belief, cfg)
                               for g in shape.by_role("grasp") if g.object == role.object)
            dom = ["left", "right"] + (["both"] if has_two_hand else [])
        elif role.role == "lift":
            dom = list(cfg.lift_heights)
        elif role.role == "lower":
            dom = list(cfg.lower_heights)
        elif role.role == "fetch-location":
            dom = list(range(cfg.heading_sectors))
        else:
            dom = [None]
        names.append(name)
        domains.append(dom)
    combos = [dict(zip(names, c)) for c in itertools.product(*domains)]
    combos = [c for c in combos if _combo_consistent(c, shape)]
    rng = random.Random(seed)
    rng.shuffle(combos)
    emitted = 0
    for choice in combos:
        if emitted >= cfg.epl_candidate_cap:
            return
        if not _static_ok(choice, shape, belief, cfg):
            continue
        emitted += 1
        yield _epl_bindings(choice, shape, belief, cfg)


def uninformed_candidates(query: "ctx.ParamQuery", belief, seed: int,
                          budget: int, cfg: Config = DEFAULT) -> Iterator[dict]:
    """Uniform random samples over the discretized space; no knowledge used."""
    shape = analyze_query(query, belief)
    rng = random.Random(seed)
    x0, y0, x1, y1 = belief.bounds
    for _ in range(budget):
        bindings: dict = {}
        for name in query.variables:
            role = shape.roles.get(name)
            if role is None:
                raise ResolutionError(f"no resolution strategy for variable ?{name}")
            if role.role == "grasp":
                bindings[name] = Symbol(rng.choice(GRASPS))
            elif role.role == "arm":
                bindings[name] = Symbol(rng.choice(("left", "right", "both")))
            elif role.role == "lift":
                bindings[name] = Symbol(rng.choice(list(cfg.lift_heights)))
            elif role.role == "lower":
                bindings[name] = Symbol(rng.choice(list(cfg.lower_heights)))
            else:
                pose = Pose(x0 + rng.random() * (x1 - x0),
                            y0 + rng.random() * (y1 - y0), 0.0,
                            rng.random() * 6.283185307179586)
                bindings[name] = Designator("location", (("pose", pose),))
        yield bindings


def _pin_locations(bindings: dict, choices: list) -> dict:
    """Pin the concrete poses a successful projection used into the location
    designators of the answer."""
    pinned = dict(bindings)
    for name, value in bindings.items():
        if not isinstance(value, Designator) or value.kind != "location":
            continue
        for d, pose in choices:
            if d == value or (d.get("sector") == value.get("sector")
                              and d.get("visible-for") == value.get("visible-for")
                              and d.get("reachable-for") == value.get("reachable-for")):
                pinned[name] = value.with_prop("pose", pose)
                break
    return pinned


def prospective_candidates(query: "ctx.ParamQuery", belief, seed: int, budget: int,
                           cfg: Config = DEFAULT, metrics: dict | None = None
                           ) -> Iterator[dict]:
    """Project the first k epl candidates on a snapshot; yield the ones whose
    projected episode succeeds, with the poses that worked pinned in."""
    from .executive import project_plan  # deferred: the executive imports this module
    for i, bindings in enumerate(epl_candidates(query, belief, seed, cfg)):
        if i >= budget:
            return
        if metrics is not None:
            metrics["projections"] = metrics.get("projections", 0) + 1
        outcome = project_plan(query, bindings, seed=seed * 31 + i + 1, cfg=cfg)
        if outcome is not None and outcome.success:
            yield _pin_locations(bindings, outcome.ensure_choices)


def experience_candidates(query: "ctx.ParamQuery", belief, seed: int,
                          model: ExperienceModel, action_type: str,
                          context_key: tuple, cfg: Config = DEFAULT) -> Iterator[dict]:
    pool = list(epl_candidates(query, belief, seed, cfg))
    scored = []
    for idx, bindings in enumerate(pool):
        combo = combo_of(bindings)
        scored.append((-model.rate(action_type, context_key, combo), idx, bindings))
    scored.sort(key=lambda t: (t[0], t[1]))
    for _, _, bindings in scored:
        yield bindings


def candidate_stream(query: "ctx.ParamQuery", gm: GenerativeModelKind, seed: int,
                     cfg: Config = DEFAULT, metrics: dict | None = None,
                     action_type: str = "", context_key: tuple = ()
                     ) -> Iterator[dict]:
    belief = query.context.belief if query.context else None
    if not query.variables:
        return iter([{}])
    if isinstance(gm, Uninformed):
        return uninformed_candidates(query, belief, seed, gm.sample_budget, cfg)
    if isinstance(gm, Epl):
        return epl_candidates(query, belief, seed, cfg)
    if isinstance(gm, Prospective):
        return prospective_candidates(query, belief, seed, gm.budget, cfg, metrics)
    if isinstance(gm, Experience):
        return experience_candidates(query, belief, seed, gm.model,
                                     action_type, context_key, cfg)
    raise TypeError(f"unknown generative model {gm!r}")


def resolve_designator_parameters(q: "ctx.ParamQuery", gm: GenerativeModelKind,
                                  world, neems=None, seed: int = 0,
                                  cfg: Config = DEFAULT) -> dict:
    """First candidate of the model's stream, or NoSolution.

    ``world`` is the belief state; when the query carries no context it is
    wrapped into one.  ``neems`` can supply the training data for an
    Experience model handed in without one.
    """
    if q.context is None:
        q = ctx.ParamQuery(q.variables, q.to_succeed, ctx.ResolutionContext(world, cfg=cfg))
    if isinstance(gm, Experience) and gm.model is None and neems is not None:
        gm = Experience(train_experience_model(neems, cfg.laplace_alpha))
    action_type, context_key = "", ()
    if isinstance(gm, Experience):
        action_type, context_key = derive_context(q, q.context.belief)
    for bindings in candidate_stream(q, gm, seed, cfg,
                                     action_type=action_type, context_key=context_key):
        return bindings
    raise ctx.NoSolution("candidate space exhausted")


def derive_context(query: "ctx.ParamQuery", belief) -> tuple[str, tuple]:
    """(action type, context key) of the primary manipulation in a query."""
    shape = analyze_query(query, belief)
    action_type = ""
    p = _first_perform(query.to_succeed)
    if p is not None and p.designator.type is not None:
        action_type = str(p.designator.type)
    category = source = dest = "-"
    for role in shape.roles.values():
        if role.object and belief is not None and role.object in belief.objects:
            obj = belief.objects[role.object]
            category = obj.category
            if obj.on_surface:
                source = belief.surfaces[obj.on_surface].cls
            elif obj.in_container:
                source = belief.surfaces[belief.containers[obj.in_container].surface].cls
            break
    for role in shape.by_role("place-location"):
        if role.target is not None and belief is not None:
            surf = worldmod.surface_under(belief, role.target)
            if surf is not None:
                dest = surf.cls
            break
    return action_type, (category, source, dest)


# ---------------------------------------------------------------------------
# combo extraction (the learnable fingerprint of an answer)


def combo_of(bindings: dict) -> tuple[str, ...]:
    out = []
    for name in sorted(bindings):
        v = bindings[name]
        if isinstance(v, Designator):
            sector = v.get("sector")
            out.append(f"{name}=sector:{sector if sector is not None else '-'}")
        elif isinstance(v, Pose):
            out.append(f"{name}=pose:{v.x:.2f},{v.y:.2f}")
        else:
            out.append(f"{name}={v}")
    return tuple(out)


def params_of(bindings: dict, shape: QueryShape) -> dict:
    """Human-facing parameter summary keyed by semantic role."""
    params: dict = {}
    for name, v in bindings.items():
        role = shape.roles.get(name)
        if role is None:
            continue
        if role.role in ("arm", "grasp"):
            params.setdefault(role.role, str(v))
        elif role.role == "lift":
            params.setdefault("lift", str(v))
        elif role.role == "lower":
            params.setdefault("lower", str(v))
        elif role.role == "fetch-location" and isinstance(v, Designator):
            sector = v.get("sector")
            if sector is not None:
                params.setdefault("sector", int(sector))
    return params
