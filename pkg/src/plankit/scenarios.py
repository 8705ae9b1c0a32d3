"""Scenario harness: batch runs, model comparisons, metric reports.

A scenario couples a world file, a plan library, a task context (which
objects go where), a generative model, and a seed list.  Each seed runs one
episode; per-run metrics aggregate into a report whose machine-readable form
is deterministic (wall time appears only in the human table).
"""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path

from scipy import stats as scipy_stats

from . import contextualizer as ctx
from . import models as modelsmod
from . import world as worldmod
from .config import DEFAULT, Config
from .executive import EpisodeOutcome, interpret_plan
from .geometry import Pose
from .knowledge import default_kb, load_kb_file
from .neem import NeemStore
from .plan_lang import Designator, Perform, PlanAst, load_plan_file
from .sexpr import Symbol

DATA = ctx.DATA_DIR

TASKS = ("set-table", "clean-table", "load-dishwasher", "milk-from-fridge")

# table layout slots by category, offsets from the table surface centroid
TABLE_SLOTS = {
    "spoon": (0.45, -0.05), "bowl": (0.0, -0.15), "mug": (0.45, 0.3),
    "cereal-box": (-0.45, 0.25), "milk-box": (-0.45, -0.2), "plate": (0.0, 0.25),
}


class InsufficientSeeds(ValueError):
    pass


class ScenarioError(ValueError):
    pass


@dataclass
class ScenarioSpec:
    task: str
    world_file: Path
    plan_file: Path
    gm: str = "epl"
    seeds: tuple[int, ...] = (0,)
    retry_budget: int = 10
    neem_dir: Path | None = None
    train_from: Path | None = None
    kb_file: Path | None = None
    cfg: Config = field(default_factory=lambda: DEFAULT)

    def __post_init__(self):
        if self.task not in TASKS:
            raise ScenarioError(f"unknown task '{self.task}' (choose from {TASKS})")
        if not self.seeds:
            raise ScenarioError("seed list must be nonempty")
        for p in (self.world_file, self.plan_file):
            if not Path(p).exists():
                raise ScenarioError(f"missing file: {p}")


def default_world_for(task: str) -> Path:
    if task == "milk-from-fridge":
        return DATA / "worlds" / "kitchen_fridge.world"
    if task in ("clean-table", "load-dishwasher"):
        return DATA / "worlds" / "kitchen_cleanup.world"
    return DATA / "worlds" / "kitchen.world"


def default_plan_file() -> Path:
    return DATA / "plans" / "stdlib.cpl"


def default_kb_file() -> Path:
    return DATA / "kb" / "kitchen.kb"


@dataclass
class TaskItem:
    object_id: str
    destination: Pose
    purpose: str | None = None


def _slot_pose(world, surface: str, dx: float, dy: float) -> Pose:
    surf = world.surfaces[surface]
    cx = sum(p[0] for p in surf.polygon) / len(surf.polygon)
    cy = sum(p[1] for p in surf.polygon) / len(surf.polygon)
    return Pose(cx + dx, cy + dy, surf.height, 0.0)


def task_items(world: "worldmod.WorldState", task: str) -> list[TaskItem]:
    """Which objects move where for a task context, in deterministic order."""
    items: list[TaskItem] = []
    if task == "set-table":
        for oid in sorted(world.objects):
            obj = world.objects[oid]
            if obj.category in TABLE_SLOTS and obj.on_surface != "table-top":
                dx, dy = TABLE_SLOTS[obj.category]
                items.append(TaskItem(oid, _slot_pose(world, "table-top", dx, dy),
                                      "pouring" if obj.category in ("mug", "cup") else None))
    elif task == "milk-from-fridge":
        for oid in sorted(world.objects):
            if world.objects[oid].category == "milk-box":
                dx, dy = TABLE_SLOTS["milk-box"]
                items.append(TaskItem(oid, _slot_pose(world, "table-top", dx, dy)))
                break
    elif task == "clean-table":
        i = 0
        for oid in sorted(world.objects):
            obj = world.objects[oid]
            if obj.on_surface == "table-top":
                items.append(TaskItem(oid, _slot_pose(world, "counter-top",
                                                      -1.0 + 0.5 * i, 0.0)))
                i += 1
    elif task == "load-dishwasher":
        i = 0
        for oid in sorted(world.objects):
            obj = world.objects[oid]
            if obj.on_surface == "table-top":
                items.append(TaskItem(oid, _slot_pose(world, "dishwasher-rack",
                                                      0.0, -0.25 + 0.17 * i)))
                i += 1
    return items


def build_task_plan(library: PlanAst, world, task: str) -> tuple[PlanAst, list[TaskItem]]:
    """Top-level performs of the fetch-and-place schema, one per task item."""
    items = task_items(world, task)
    if not items:
        raise ScenarioError(f"no applicable objects for task '{task}'")
    top = []
    if task == "load-dishwasher":
        top.append(Perform(Designator("action", (
            ("type", Symbol("open-container")), ("container", Symbol("dishwasher"))))))
    for item in items:
        props = [("type", Symbol("fetch&place")),
                 ("object-to-be-fetched", Symbol(item.object_id)),
                 ("destination", item.destination)]
        if item.purpose:
            props.append(("purpose", Symbol(item.purpose)))
        top.append(Perform(Designator("action", tuple(props))))
    if task == "load-dishwasher":
        top.append(Perform(Designator("action", (
            ("type", Symbol("close-container")), ("container", Symbol("dishwasher"))))))
    return PlanAst(dict(library.definitions), dict(library.fluents), tuple(top)), items


def goal_reached(world, items: list[TaskItem], cfg: Config = DEFAULT) -> bool:
    """All task objects at their destinations, settled, and nothing toppled."""
    for item in items:
        obj = world.objects.get(item.object_id)
        if obj is None or obj.held_by is not None or obj.toppled:
            return False
        if obj.pose.planar_distance(item.destination) > cfg.placement_tol:
            return False
    return True


def make_gm(name: str, train_from: Path | None = None, cfg: Config = DEFAULT,
            budget_override: int | None = None):
    if name == "uninformed":
        return modelsmod.Uninformed(budget_override or cfg.uninformed_sample_budget)
    if name == "epl":
        return modelsmod.Epl()
    if name == "prospective":
        return modelsmod.Prospective(budget_override or cfg.projection_budget)
    if name == "experience":
        if train_from is None:
            raise ScenarioError("gm 'experience' needs --train-from NEEM_DIR")
        store = NeemStore(train_from)
        model = modelsmod.train_experience_model(store, cfg.laplace_alpha)
        return modelsmod.Experience(model)
    raise ScenarioError(f"unknown generative model '{name}'")


def run_episode(spec: ScenarioSpec, seed: int, gm=None, store: NeemStore | None = None
                ) -> tuple[EpisodeOutcome, dict, float]:
    world = worldmod.load_world_file(spec.world_file)
    library = load_plan_file(spec.plan_file)
    kb = load_kb_file(spec.kb_file or default_kb_file())
    plan, items = build_task_plan(library, world, spec.task)
    gm = gm if gm is not None else make_gm(spec.gm, spec.train_from, spec.cfg)
    t0 = time.perf_counter()
    outcome = interpret_plan(plan, world, kb, gm, seed, cfg=spec.cfg,
                             max_retries=spec.retry_budget)
    wall_ms = (time.perf_counter() - t0) * 1000.0
    ok = outcome.success and goal_reached(outcome.world, items, spec.cfg)
    row = {
        "task": spec.task, "gm": modelsmod.gm_name(gm), "seed": seed,
        "outcome": "succeeded" if ok else "failed",
        "repositions": outcome.metrics["repositions"],
        "retries": outcome.metrics["retries"],
        "projections": outcome.metrics["projections"],
        "steps": outcome.metrics["steps"],
    }
    if store is not None and outcome.neem is not None:
        store.add(outcome.neem)
    return outcome, row, wall_ms


@dataclass
class MetricsReport:
    rows: list[dict]
    aggregates: dict
    wall_ms: list[float] = field(default_factory=list)


def _aggregate(rows: list[dict]) -> dict:
    out: dict = {"runs": len(rows)}
    ok = [r for r in rows if r["outcome"] == "succeeded"]
    out["succeeded"] = len(ok)
    out["success_rate"] = len(ok) / len(rows) if rows else None
    for key in ("repositions", "retries", "projections", "steps"):
        vals = [r[key] for r in rows]
        if not vals:
            continue
        mean = sum(vals) / len(vals)
        out[f"mean_{key}"] = mean
        out[f"median_{key}"] = statistics.median(vals)
        if len(vals) > 1:
            sd = statistics.stdev(vals)
            half = 1.96 * sd / (len(vals) ** 0.5)
            out[f"ci95_{key}"] = [mean - half, mean + half]
    return out


def run_scenario(spec: ScenarioSpec) -> MetricsReport:
    """One episode per seed; per-run failures land in the report, never abort
    the batch."""
    store = NeemStore(spec.neem_dir) if spec.neem_dir else None
    gm = make_gm(spec.gm, spec.train_from, spec.cfg)
    rows, walls = [], []
    for seed in spec.seeds:
        try:
            _outcome, row, wall = run_episode(spec, seed, gm=gm, store=store)
        except Exception as e:  # a crashed run is a failed row, not an abort
            row = {"task": spec.task, "gm": spec.gm, "seed": seed,
                   "outcome": "failed", "error": f"{type(e).__name__}: {e}",
                   "repositions": 0, "retries": 0, "projections": 0, "steps": 0}
            wall = 0.0
        rows.append(row)
        walls.append(wall)
    return MetricsReport(rows, _aggregate(rows), walls)


@dataclass
class ComparisonReport:
    per_gm: dict[str, MetricsReport]
    tests: dict
    ordering: list[tuple[str, float]]


def compare_models(spec: ScenarioSpec, gm_names: list[str],
                   seeds: tuple[int, ...] | None = None,
                   min_seeds_for_test: int = 30) -> ComparisonReport:
    """Paired per-seed metrics across models, with Mann-Whitney U tests on
    repositions and retries for every model pair."""
    if len(gm_names) < 2:
        raise ScenarioError("compare needs at least two generative models")
    seeds = seeds if seeds is not None else spec.seeds
    if len(seeds) < min_seeds_for_test:
        raise InsufficientSeeds(
            f"need >= {min_seeds_for_test} seeds for the statistical test, got {len(seeds)}")
    per_gm: dict[str, MetricsReport] = {}
    for name in gm_names:
        sub = ScenarioSpec(spec.task, spec.world_file, spec.plan_file, name,
                           tuple(seeds), spec.retry_budget, spec.neem_dir,
                           spec.train_from, spec.kb_file, spec.cfg)
        per_gm[name] = run_scenario(sub)
    tests: dict = {}
    for i, a in enumerate(gm_names):
        for b in gm_names[i + 1:]:
            for metric in ("repositions", "retries"):
                xs = [r[metric] for r in per_gm[a].rows]
                ys = [r[metric] for r in per_gm[b].rows]
                if all(x == y for x, y in zip(xs, ys)):
                    tests[f"{a}-vs-{b}/{metric}"] = {"U": None, "p": 1.0,
                                                     "note": "identical samples"}
                    continue
                res = scipy_stats.mannwhitneyu(xs, ys, alternative="two-sided")
                tests[f"{a}-vs-{b}/{metric}"] = {"U": float(res.statistic),
                                                 "p": float(res.pvalue)}
    ordering = sorted(((name, rep.aggregates["mean_repositions"])
                       for name, rep in per_gm.items()), key=lambda kv: kv[1])
    return ComparisonReport(per_gm, tests, ordering)
