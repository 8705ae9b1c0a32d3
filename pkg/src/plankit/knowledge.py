"""Horn-clause knowledge base with computable predicates.

Inference is SLD resolution: leftmost goal selection, clause order equals
assertion order, chronological backtracking, and a depth limit that surfaces
as a flag on the result stream rather than an exception.  Computable
predicates route specific predicate names to evaluators that answer from a
belief ``WorldState``; they never mutate it.

Facts and rules load from s-expression files::

    (fact (stored-in spoon drawer-3))
    (rule (likely-location ?x ?l) (category ?x ?c) (stored-in ?c ?l))
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator

from . import world as worldmod
from .config import DEFAULT, Config
from .geometry import Pose
from .plan_lang import Designator
from .sexpr import Symbol, Variable, read_forms

Term = object  # Symbol | int | float | str | Pose | Variable | Designator
Clause = tuple  # (name: str, arg, arg, ...)


class KbError(Exception):
    pass


class DuplicateRegistration(KbError):
    pass


def clause_name(clause: Clause) -> str:
    return str(clause[0])


def clause_args(clause: Clause) -> tuple:
    return tuple(clause[1:])


def form_to_clause(form) -> Clause:
    if not isinstance(form, (list, tuple)) or not form or not isinstance(form[0], Symbol):
        raise KbError(f"not a clause: {form!r}")
    out = [str(form[0])]
    for arg in form[1:]:
        if isinstance(arg, list):
            if arg and arg[0] == Symbol("pose"):
                out.append(Pose.from_form(arg))
            else:
                raise KbError(f"unsupported compound term: {arg!r}")
        else:
            out.append(arg)
    return tuple(out)


# ---------------------------------------------------------------------------
# unification


def walk(term: Term, theta: dict) -> Term:
    while isinstance(term, Variable) and term.name in theta:
        term = theta[term.name]
    return term


def unify(a: Term, b: Term, theta: dict) -> dict | None:
    a = walk(a, theta)
    b = walk(b, theta)
    if isinstance(a, Variable):
        out = dict(theta)
        out[a.name] = b
        return out
    if isinstance(b, Variable):
        out = dict(theta)
        out[b.name] = a
        return out
    if isinstance(a, Symbol) != isinstance(b, Symbol):
        # a Symbol never unifies with a quoted string of the same spelling
        return None
    if isinstance(a, (Pose, Designator)) or isinstance(b, (Pose, Designator)):
        return theta if a == b else None
    if type(a) in (int, float) and type(b) in (int, float):
        return theta if float(a) == float(b) else None
    return theta if a == b else None


def resolve_term(term: Term, theta: dict) -> Term:
    t = walk(term, theta)
    return t


def ground_clause(clause: Clause, theta: dict) -> Clause:
    return tuple([clause[0]] + [resolve_term(t, theta) for t in clause[1:]])


# ---------------------------------------------------------------------------
# knowledge base


Evaluator = Callable[[tuple, "worldmod.WorldState"], Iterable[tuple]]


@dataclass
class QueryResults:
    """Iterator over solution bindings; ``depth_limited`` is set when the
    depth limit pruned at least one branch."""

    _gen: Iterator[dict]
    depth_limited: bool = False

    def __iter__(self):
        return self._gen

    def first(self) -> dict | None:
        return next(self._gen, None)

    def all(self) -> list[dict]:
        return list(self._gen)


@dataclass
class KnowledgeBase:
    rules: dict[tuple[str, int], list[tuple[Clause, tuple[Clause, ...]]]] = \
        field(default_factory=dict)
    computables: dict[tuple[str, int], Evaluator] = field(default_factory=dict)

    def _key(self, clause: Clause) -> tuple[str, int]:
        return (clause_name(clause), len(clause) - 1)

    def assert_fact(self, fact: Clause):
        self.assert_rule(fact, ())

    def assert_rule(self, head: Clause, body: tuple[Clause, ...]):
        key = self._key(head)
        if key in self.computables:
            raise DuplicateRegistration(f"{key[0]}/{key[1]} is a computable predicate")
        bucket = self.rules.setdefault(key, [])
        entry = (tuple(head), tuple(tuple(b) for b in body))
        if entry not in bucket:
            bucket.append(entry)

    def retract_fact(self, fact: Clause):
        key = self._key(fact)
        bucket = self.rules.get(key)
        if not bucket:
            return
        entry = (tuple(fact), ())
        if entry in bucket:
            bucket.remove(entry)
        if not bucket:
            del self.rules[key]

    def register_computable(self, name: str, arity: int, evaluator: Evaluator):
        key = (name, arity)
        if key in self.rules or key in self.computables:
            raise DuplicateRegistration(f"{name}/{arity} already registered")
        self.computables[key] = evaluator

    def load(self, text: str):
        for form in read_forms(text):
            if not isinstance(form, list) or not form:
                raise KbError(f"expected (fact ...) or (rule ...), got {form!r}")
            head = form[0]
            if head == Symbol("fact") and len(form) == 2:
                self.assert_fact(form_to_clause(form[1]))
            elif head == Symbol("rule") and len(form) >= 2:
                self.assert_rule(form_to_clause(form[1]),
                                 tuple(form_to_clause(b) for b in form[2:]))
            else:
                raise KbError(f"expected (fact ...) or (rule ...), got {form!r}")

    def clone(self) -> "KnowledgeBase":
        kb = KnowledgeBase()
        kb.rules = {k: list(v) for k, v in self.rules.items()}
        kb.computables = dict(self.computables)
        return kb


_rename_counter = 0


def _rename(head: Clause, body: tuple[Clause, ...]):
    global _rename_counter
    _rename_counter += 1
    suffix = f"#{_rename_counter}"
    mapping: dict[str, Variable] = {}

    def rn(term):
        if isinstance(term, Variable):
            if term.name not in mapping:
                mapping[term.name] = Variable(term.name + suffix)
            return mapping[term.name]
        return term

    new_head = tuple([head[0]] + [rn(t) for t in head[1:]])
    new_body = tuple(tuple([b[0]] + [rn(t) for t in b[1:]]) for b in body)
    return new_head, new_body


def query_kb(kb: KnowledgeBase, goal: Clause, belief=None,
             depth_limit: int | None = None, cfg: Config = DEFAULT) -> QueryResults:
    """SLD resolution producing a deterministic stream of bindings for the
    goal's variables."""
    limit = depth_limit if depth_limit is not None else cfg.kb_depth_limit
    goal = tuple(goal)
    goal_vars = [t.name for t in goal[1:] if isinstance(t, Variable)]
    results = QueryResults(_gen=iter(()))

    def solve(goals, theta, depth):
        if not goals:
            yield theta
            return
        if depth > limit:
            results.depth_limited = True
            return
        current = ground_clause(goals[0], theta)
        rest = goals[1:]
        key = (clause_name(current), len(current) - 1)
        if key in kb.computables:
            if belief is None:
                raise KbError(f"computable {key[0]}/{key[1]} needs a belief world")
            for answer in kb.computables[key](clause_args(current), belief):
                theta2 = theta
                ok = True
                for garg, aarg in zip(clause_args(current), answer):
                    theta2 = unify(garg, aarg, theta2)
                    if theta2 is None:
                        ok = False
                        break
                if ok:
                    yield from solve(rest, theta2, depth)
            return
        for head, body in kb.rules.get(key, []):
            rhead, rbody = _rename(head, body)
            theta2 = theta
            for garg, harg in zip(clause_args(current), clause_args(rhead)):
                theta2 = unify(garg, harg, theta2)
                if theta2 is None:
                    break
            else:
                yield from solve(tuple(rbody) + tuple(rest), theta2, depth + 1)

    def gen():
        seen = set()
        for theta in solve((goal,), {}, 0):
            binding = {}
            for name in goal_vars:
                binding[name] = resolve_term(Variable(name), theta)
            key = tuple(repr(binding[n]) for n in goal_vars)
            if key in seen:
                continue
            seen.add(key)
            yield binding

    results._gen = gen()
    return results


def query_first(kb: KnowledgeBase, goal: Clause, belief=None, **kw) -> dict | None:
    return query_kb(kb, goal, belief, **kw).first()


def query_truth(kb: KnowledgeBase, goal: Clause, belief=None, **kw) -> bool:
    return query_first(kb, goal, belief, **kw) is not None


# ---------------------------------------------------------------------------
# shipped computable predicates


def _as_pose(term) -> Pose:
    if not isinstance(term, Pose):
        raise KbError(f"expected a pose, got {term!r}")
    return term


def _object_id(term) -> str:
    if isinstance(term, Symbol):
        return str(term)
    raise KbError(f"expected an object id, got {term!r}")


def _eval_visible_from(args, belief):
    pose, obj = args
    if worldmod.visible_from(_as_pose(pose), _object_id(obj), belief):
        yield args


def _eval_reachable_from(args, belief):
    base, target, arm = args
    if isinstance(target, Symbol):
        target_pose = belief.object(str(target)).pose
    else:
        target_pose = _as_pose(target)
    if worldmod.reachable_from(_as_pose(base), target_pose, str(arm), belief):
        yield args


def _eval_stable_at(args, belief):
    obj_id, pose = args
    obj = belief.object(_object_id(obj_id))
    pose = _as_pose(pose)
    surf = worldmod.surface_under(belief, pose)
    if surf is not None and worldmod.stable_at(obj, pose, surf.name, belief):
        yield args


def _eval_inside(args, belief):
    x, c = args
    for obj in belief.objects.values():
        if obj.in_container is None:
            continue
        if isinstance(x, Symbol) and str(x) != obj.id:
            continue
        if isinstance(c, Symbol) and str(c) != obj.in_container:
            continue
        yield (Symbol(obj.id), Symbol(obj.in_container))


def _eval_on(args, belief):
    x, s = args
    for obj in belief.objects.values():
        if obj.on_surface is None:
            continue
        if isinstance(x, Symbol) and str(x) != obj.id:
            continue
        if isinstance(s, Symbol) and str(s) != obj.on_surface:
            continue
        yield (Symbol(obj.id), Symbol(obj.on_surface))


def _eval_inside_closed(args, belief, cfg: Config = DEFAULT):
    x, c = args
    for oid, cid in _eval_inside((x, c), belief):
        container = belief.containers[str(cid)]
        if container.open_fraction() < cfg.occlusion_open_fraction:
            yield (oid, cid)


def _eval_category_of(args, belief):
    x, c = args
    for obj in belief.objects.values():
        if isinstance(x, Symbol) and str(x) != obj.id:
            continue
        if isinstance(c, Symbol) and str(c) != obj.category:
            continue
        yield (Symbol(obj.id), Symbol(obj.category))


def register_default_computables(kb: KnowledgeBase):
    kb.register_computable("visible-from", 2, _eval_visible_from)
    kb.register_computable("reachable-from", 3, _eval_reachable_from)
    kb.register_computable("stable-at", 2, _eval_stable_at)
    kb.register_computable("inside", 2, _eval_inside)
    kb.register_computable("on", 2, _eval_on)
    kb.register_computable("inside-closed", 2, _eval_inside_closed)
    kb.register_computable("category-of", 2, _eval_category_of)


def default_kb() -> KnowledgeBase:
    kb = KnowledgeBase()
    register_default_computables(kb)
    return kb


def load_kb_file(path, kb: KnowledgeBase | None = None) -> KnowledgeBase:
    kb = kb or default_kb()
    with open(path, "r", encoding="utf-8") as fh:
        kb.load(fh.read())
    return kb
