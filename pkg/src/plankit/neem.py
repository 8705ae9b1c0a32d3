"""Narrative-enabled episodic memories: recording, storage, query, replay.

A ``Neem`` couples a low-level experience (timestamped motion events plus
state samples) with a symbolic narrative (a mirror of the task tree carrying
resolved parameters, outcomes, and links into the experience), plus enough
context (initial world document, seed, model kind, motion command log) to
replay the episode exactly.

Storage is one JSON-lines file per episode inside a store directory with an
append-only index file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .geometry import Pose
from .world import load_world, serialize_world, world_hash


class LifecycleViolation(Exception):
    pass


class FormatError(Exception):
    def __init__(self, record_number: int, message: str):
        super().__init__(f"record {record_number}: {message}")
        self.record_number = record_number


class ReplayDivergence(Exception):
    pass


class UnknownField(KeyError):
    pass


def _encode(value):
    if isinstance(value, Pose):
        return {"__pose__": [value.x, value.y, value.z, value.yaw]}
    if isinstance(value, dict):
        return {str(k): _encode(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_encode(v) for v in value]
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    return str(value)


def _decode(value):
    if isinstance(value, dict):
        if set(value.keys()) == {"__pose__"}:
            return Pose(*value["__pose__"])
        return {k: _decode(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_decode(v) for v in value]
    return value


@dataclass
class ExperienceRecord:
    step: int
    kind: str
    payload: dict
    node: int = -1


@dataclass
class NarrativeNode:
    id: int
    parent: int | None
    label: str
    outcome: str                       # succeeded | failed | cancelled | pending
    action_type: str | None = None
    failure_kind: str | None = None
    params: dict = field(default_factory=dict)
    context_key: list | None = None    # [category, source class, destination class]
    combo: list | None = None          # learnable parameter combo
    retries: int = 0
    support: bool = False
    annotations: list = field(default_factory=list)
    event_indices: list[int] = field(default_factory=list)


@dataclass
class Neem:
    seed: int
    gm: str
    initial_world: str
    final_world: str = ""
    experience: list[ExperienceRecord] = field(default_factory=list)
    narrative: list[NarrativeNode] = field(default_factory=list)
    commands: list[dict] = field(default_factory=list)
    transformations: list[str] = field(default_factory=list)
    metrics: dict = field(default_factory=dict)


class NeemRecorder:
    """Collects the experience while an episode runs; the narrative is built
    from the finished task tree at ``end``."""

    def __init__(self):
        self._begun = False
        self._ended = False
        self.neem: Neem | None = None
        self._annotations: dict[int, list] = {}
        self._node_events: dict[int, list[int]] = {}

    def begin(self, world, seed: int, gm: str):
        if self._begun:
            raise LifecycleViolation("begin called twice")
        self._begun = True
        self.neem = Neem(seed=seed, gm=gm, initial_world=serialize_world(world))

    def _check_active(self):
        if not self._begun:
            raise LifecycleViolation("record before begin")
        if self._ended:
            raise LifecycleViolation("record after end")

    def record_event(self, event, node_id: int):
        self._check_active()
        idx = len(self.neem.experience)
        self.neem.experience.append(
            ExperienceRecord(event.step, event.kind, event.payload, node_id))
        self._node_events.setdefault(node_id, []).append(idx)

    def record_state_sample(self, world, node_id: int):
        self._check_active()
        idx = len(self.neem.experience)
        self.neem.experience.append(ExperienceRecord(
            world.clock, "state-sample",
            {"hash": world_hash(world), "base": world.robot.base}, node_id))
        self._node_events.setdefault(node_id, []).append(idx)

    def record_command(self, motion_type: str, params: dict, node_id: int):
        self._check_active()
        self.neem.commands.append(
            {"motion": motion_type, "params": params, "node": node_id})

    def annotate(self, node_id: int, kind: str, data: dict):
        self._check_active()
        self._annotations.setdefault(node_id, []).append(
            {"kind": kind, "data": _encode(data)})

    def record_transformations(self, applied: list[str]):
        self._check_active()
        self.neem.transformations.extend(applied)

    def end(self, task_tree_nodes, final_world, metrics: dict) -> Neem:
        if not self._begun:
            raise LifecycleViolation("end before begin")
        if self._ended:
            raise LifecycleViolation("end called twice")
        self._ended = True
        for tn in task_tree_nodes:
            node = NarrativeNode(
                id=tn.id, parent=tn.parent, label=tn.label,
                outcome=tn.status.lower(),
                action_type=tn.action_type,
                failure_kind=(tn.failure.kind if tn.failure else None),
                params=_encode(tn.params or {}),
                context_key=list(tn.context_key) if tn.context_key else None,
                combo=list(tn.combo) if tn.combo else None,
                retries=tn.retries, support=tn.support,
                annotations=self._annotations.get(tn.id, []),
                event_indices=self._node_events.get(tn.id, []))
            self.neem.narrative.append(node)
        self.neem.final_world = serialize_world(final_world)
        self.neem.metrics = dict(metrics)
        return self.neem


# ---------------------------------------------------------------------------
# export / import


def export_neem(neem: Neem) -> str:
    lines = []
    lines.append(json.dumps({
        "record": "header", "seed": neem.seed, "gm": neem.gm,
        "transformations": neem.transformations, "world": neem.initial_world}))
    for e in neem.experience:
        lines.append(json.dumps({
            "record": "event", "step": e.step, "kind": e.kind,
            "node": e.node, "payload": _encode(e.payload)}))
    for c in neem.commands:
        lines.append(json.dumps({
            "record": "command", "motion": c["motion"],
            "params": _encode(c["params"]), "node": c["node"]}))
    for n in neem.narrative:
        lines.append(json.dumps({
            "record": "node", "id": n.id, "parent": n.parent, "label": n.label,
            "outcome": n.outcome, "action_type": n.action_type,
            "failure_kind": n.failure_kind, "params": _encode(n.params),
            "context_key": n.context_key, "combo": n.combo,
            "retries": n.retries, "support": n.support,
            "annotations": n.annotations, "events": n.event_indices}))
    lines.append(json.dumps({
        "record": "final", "world": neem.final_world,
        "metrics": _encode(neem.metrics)}))
    return "\n".join(lines) + "\n"


def import_neem(text: str) -> Neem:
    neem = None
    closed = False
    for i, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as e:
            raise FormatError(i, f"bad JSON: {e}") from None
        kind = rec.get("record")
        if kind == "header":
            neem = Neem(seed=rec["seed"], gm=rec["gm"], initial_world=rec["world"],
                        transformations=list(rec.get("transformations", [])))
        elif neem is None:
            raise FormatError(i, "first record must be the header")
        elif kind == "event":
            neem.experience.append(ExperienceRecord(
                rec["step"], rec["kind"], _decode(rec["payload"]), rec["node"]))
        elif kind == "command":
            neem.commands.append({"motion": rec["motion"],
                                  "params": _decode(rec["params"]),
                                  "node": rec["node"]})
        elif kind == "node":
            neem.narrative.append(NarrativeNode(
                id=rec["id"], parent=rec["parent"], label=rec["label"],
                outcome=rec["outcome"], action_type=rec["action_type"],
                failure_kind=rec["failure_kind"], params=_decode(rec["params"]),
                context_key=rec["context_key"], combo=rec["combo"],
                retries=rec["retries"], support=rec["support"],
                annotations=rec["annotations"], event_indices=rec["events"]))
        elif kind == "final":
            neem.final_world = rec["world"]
            neem.metrics = _decode(rec["metrics"])
            closed = True
        else:
            raise FormatError(i, f"unknown record kind {kind!r}")
    if neem is None:
        raise FormatError(0, "empty document")
    if not closed:
        raise FormatError(len(text.splitlines()), "missing final record")
    return neem


# ---------------------------------------------------------------------------
# store


class NeemStore:
    """Append-only directory of episode files plus an index file."""

    def __init__(self, directory: str | Path):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.index_path = self.dir / "index.jsonl"

    def add(self, neem: Neem) -> Path:
        n = len(list(self.dir.glob("neem-*.jsonl"))) + 1
        path = self.dir / f"neem-{n:06d}.jsonl"
        while path.exists():
            n += 1
            path = self.dir / f"neem-{n:06d}.jsonl"
        path.write_text(export_neem(neem), encoding="utf-8")
        entries = []
        for node in neem.narrative:
            if node.combo is not None:
                entries.append({"action_type": node.action_type,
                                "context_key": node.context_key,
                                "outcome": node.outcome})
        with open(self.index_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps({"file": path.name, "seed": neem.seed,
                                 "gm": neem.gm, "entries": entries}) + "\n")
        return path

    def files(self) -> list[Path]:
        return sorted(self.dir.glob("neem-*.jsonl"))

    def __len__(self) -> int:
        return len(self.files())

    def load_all(self) -> list[Neem]:
        return [import_neem(p.read_text(encoding="utf-8")) for p in self.files()]


# ---------------------------------------------------------------------------
# query


_NODE_FIELDS = ("action-type", "category", "source", "destination", "outcome",
                "failure-kind", "grasp", "arm", "sector", "lift", "lower",
                "retries", "support")


def _node_field(node: NarrativeNode, name: str):
    if name == "action-type":
        return node.action_type
    if name == "category":
        return node.context_key[0] if node.context_key else None
    if name == "source":
        return node.context_key[1] if node.context_key else None
    if name == "destination":
        return node.context_key[2] if node.context_key else None
    if name == "outcome":
        return node.outcome
    if name == "failure-kind":
        return node.failure_kind
    if name == "retries":
        return node.retries
    if name == "support":
        return node.support
    if name in ("grasp", "arm", "sector", "lift", "lower"):
        return node.params.get(name)
    raise UnknownField(name)


def query_neems(store: NeemStore, pattern: dict) -> dict:
    """Aggregate over narrative nodes that carry resolved parameters.

    ``pattern`` holds an ``aggregate`` ({count, success-rate, mean,
    most-common}), an optional ``field`` for mean/most-common, and field=value
    filters.  Success-rate over no data reports None, not zero.
    """
    aggregate = pattern.get("aggregate", "count")
    target_field = pattern.get("field")
    filters = {k: v for k, v in pattern.items() if k not in ("aggregate", "field")}
    for f in filters:
        if f not in _NODE_FIELDS:
            raise UnknownField(f)
    if target_field is not None and target_field not in _NODE_FIELDS:
        raise UnknownField(target_field)

    rows = []
    for neem in store.load_all():
        for node in neem.narrative:
            if node.combo is None and node.action_type is None:
                continue
            if all(str(_node_field(node, k)) == str(v) for k, v in filters.items()):
                rows.append(node)

    if aggregate == "count":
        return {"aggregate": "count", "value": len(rows), "n": len(rows)}
    if aggregate == "success-rate":
        if not rows:
            return {"aggregate": "success-rate", "value": None, "n": 0}
        ok = sum(1 for r in rows if r.outcome == "succeeded")
        return {"aggregate": "success-rate", "value": ok / len(rows), "n": len(rows)}
    if aggregate == "mean":
        if target_field is None:
            raise UnknownField("mean needs a field")
        vals = [_node_field(r, target_field) for r in rows]
        vals = [v for v in vals if isinstance(v, (int, float))]
        if not vals:
            return {"aggregate": "mean", "field": target_field, "value": None, "n": 0}
        return {"aggregate": "mean", "field": target_field,
                "value": sum(vals) / len(vals), "n": len(vals)}
    if aggregate == "most-common":
        if target_field is None:
            raise UnknownField("most-common needs a field")
        counts: dict[str, int] = {}
        for r in rows:
            v = _node_field(r, target_field)
            if v is not None:
                counts[str(v)] = counts.get(str(v), 0) + 1
        if not counts:
            return {"aggregate": "most-common", "field": target_field,
                    "value": None, "n": 0}
        best = max(counts.items(), key=lambda kv: (kv[1], kv[0]))
        return {"aggregate": "most-common", "field": target_field,
                "value": best[0], "n": sum(counts.values())}
    raise UnknownField(f"unknown aggregate '{aggregate}'")


def parse_query(text: str) -> dict:
    """Parse CLI query syntax: ``<aggregate> [field] key=value ...``."""
    parts = text.split()
    if not parts:
        raise UnknownField("empty query")
    pattern: dict = {"aggregate": parts[0]}
    rest = parts[1:]
    if parts[0] in ("mean", "most-common"):
        if not rest or "=" in rest[0]:
            raise UnknownField(f"{parts[0]} needs a field")
        pattern["field"] = rest[0]
        rest = rest[1:]
    for tok in rest:
        if "=" not in tok:
            raise UnknownField(f"expected key=value, got '{tok}'")
        k, v = tok.split("=", 1)
        pattern[k] = v
    return pattern


# ---------------------------------------------------------------------------
# replay


def replay_neem(neem: Neem, cfg=None) -> "object":
    """Re-execute the recorded motion commands from the recorded initial
    world; raises ReplayDivergence when the final world differs."""
    from .executive import replay_commands  # deferred: executive imports this module
    final = replay_commands(neem, cfg=cfg)
    if serialize_world(final) != neem.final_world:
        raise ReplayDivergence("replayed final world differs from the recording")
    return final


def check_causal_links(neem: Neem) -> bool:
    """Structural validity: every linked index in range, every event linked
    to exactly one node."""
    seen: set[int] = set()
    for node in neem.narrative:
        for idx in node.event_indices:
            if not 0 <= idx < len(neem.experience):
                return False
            if idx in seen:
                return False
            seen.add(idx)
    return len(seen) == len(neem.experience)
