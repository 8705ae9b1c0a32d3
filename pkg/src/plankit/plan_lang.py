"""The plan language: parser, printer, validator, and substitution.

Plans are s-expressions.  A plan file holds ``def-plan`` schemas, optional
``def-fluent`` declarations, and top-level forms to run.  Designators are
kind-tagged ordered key-value descriptions and may nest::

    (def-plan fetch&place (?object-to-be-fetched ?destination)
      (with-robot-at-location (?location-at-which-to-fetch)
        (perform (an action (type picking-up)
                            (object (an object (name ?object-to-be-fetched)))
                            (arm ?arm-to-be-used)))))

Control constructs: seq, par, pursue, try-all, try-in-order, perform,
with-robot-at-location, handle-failure, when, wait-for, pulse.  Comments run
from ``;`` to end of line.  Poses are written ``(pose x y z yaw)`` in meters
and radians.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

from . import sexpr
from .geometry import Pose
from .sexpr import ReadError, Symbol, Variable
from .vocab import ATOMIC_TO_MOTION, DESIGNATOR_KINDS, FAILURE_KINDS


class PlanSyntaxError(Exception):
    def __init__(self, message: str, line: int = 0, column: int = 0, expected: str = ""):
        loc = f"{line}:{column}: " if line else ""
        super().__init__(f"{loc}{message}")
        self.message = message
        self.line = line
        self.column = column
        self.expected = expected


class UnknownConstruct(PlanSyntaxError):
    def __init__(self, token: str, line: int = 0, column: int = 0):
        super().__init__(f"unknown construct '{token}'", line, column, expected="construct")
        self.token = token


class TypeMismatch(Exception):
    def __init__(self, key: str, expected: str, got):
        super().__init__(f"key '{key}' expects {expected}, got {got!r}")
        self.key = key
        self.expected = expected
        self.got = got


Literal = Union[Symbol, int, float, str, Pose]
Value = Union[Literal, Variable, "Designator"]
Bindings = dict[str, Value]  # variable name (without '?') -> value

# designator keys whose values must belong to a specific class when ground
KEY_VALUE_CLASSES: dict[str, type] = {"pose": Pose}


@dataclass(eq=True)
class Designator:
    kind: str                      # action | motion | location | object
    props: tuple[tuple[str, Value], ...]
    resolved: Bindings | None = field(default=None, compare=False)

    def get(self, key: str, default=None):
        for k, v in self.props:
            if k == key:
                return v
        return default

    @property
    def type(self):
        return self.get("type")

    def with_prop(self, key: str, value: Value) -> "Designator":
        """Copy with ``key`` set (replacing any existing entry)."""
        if any(k == key for k, _ in self.props):
            props = tuple((k, value if k == key else v) for k, v in self.props)
        else:
            props = self.props + ((key, value),)
        return Designator(self.kind, props)

    def without_prop(self, key: str) -> "Designator":
        return Designator(self.kind, tuple((k, v) for k, v in self.props if k != key))


@dataclass(frozen=True)
class Atom:
    """A bare literal, variable, or designator in node position; a no-op."""
    value: Value


@dataclass(frozen=True)
class Seq:
    children: tuple["Node", ...]


@dataclass(frozen=True)
class Par:
    children: tuple["Node", ...]


@dataclass(frozen=True)
class Pursue:
    children: tuple["Node", ...]


@dataclass(frozen=True)
class TryAll:
    children: tuple["Node", ...]


@dataclass(frozen=True)
class TryInOrder:
    children: tuple["Node", ...]


@dataclass(frozen=True)
class Perform:
    designator: Designator


@dataclass(frozen=True)
class WithRobotAtLocation:
    location: Value
    body: tuple["Node", ...]


@dataclass(frozen=True)
class HandleFailure:
    max_retries: int
    body: "Node"
    handlers: tuple[tuple[str, tuple["Node", ...]], ...]  # (failure kind, handler body)


@dataclass(frozen=True)
class When:
    condition: tuple[Value, ...]   # (predicate arg ...) queried against the KB
    body: tuple["Node", ...]


@dataclass(frozen=True)
class WaitFor:
    fluent: str
    mode: str                      # "value" | "pulsed"


@dataclass(frozen=True)
class Pulse:
    fluent: str
    value: Value


Node = Union[Atom, Seq, Par, Pursue, TryAll, TryInOrder, Perform,
             WithRobotAtLocation, HandleFailure, When, WaitFor, Pulse]


@dataclass(eq=True)
class DefPlan:
    name: str
    params: tuple[Variable, ...]
    body: tuple[Node, ...]


@dataclass(eq=True)
class PlanAst:
    definitions: dict[str, DefPlan]
    fluents: dict[str, str]        # name -> buffer mode (latest | all | none)
    top: tuple[Node, ...]


_SEQ_HEADS = {
    "seq": Seq, "par": Par, "pursue": Pursue,
    "try-all": TryAll, "try-in-order": TryInOrder,
}
_ARTICLES = ("an", "a")
_BUFFER_MODES = ("latest", "all", "none")


class _Parser:
    def __init__(self, positions: dict[int, tuple[int, int]]):
        self.positions = positions

    def where(self, form) -> tuple[int, int]:
        return self.positions.get(id(form), (0, 0))

    def fail(self, form, message: str, expected: str = "") -> PlanSyntaxError:
        line, col = self.where(form)
        return PlanSyntaxError(message, line, col, expected)

    def parse_node(self, form) -> Node:
        if not isinstance(form, list):
            return Atom(form)
        if not form:
            raise self.fail(form, "empty form", expected="construct")
        head = form[0]
        if not isinstance(head, Symbol):
            raise self.fail(form, f"form head must be a symbol, got {head!r}",
                            expected="construct")
        name = str(head)
        if name == "pose":
            return Atom(self.parse_pose(form))
        if name in _ARTICLES:
            return Atom(self.parse_designator(form))
        if name in _SEQ_HEADS:
            return _SEQ_HEADS[name](tuple(self.parse_node(f) for f in form[1:]))
        if name == "perform":
            if len(form) != 2:
                raise self.fail(form, "perform takes exactly one designator",
                                expected="designator")
            d = self.parse_value(form[1])
            if not isinstance(d, Designator):
                raise self.fail(form, "perform requires a designator",
                                expected="designator")
            if d.kind == "action" and d.type is None:
                raise self.fail(form, "action designator needs a (type ...) prop",
                                expected="type")
            return Perform(d)
        if name == "with-robot-at-location":
            if len(form) < 2 or not isinstance(form[1], list) or len(form[1]) == 0:
                raise self.fail(form, "with-robot-at-location needs (location) then body",
                                expected="(location)")
            slot = form[1]
            if len(slot) == 1 and (isinstance(slot[0], Variable)
                                   or not isinstance(slot[0], list)):
                loc = self.parse_value(slot[0])
            else:
                loc = self.parse_value(slot)
            return WithRobotAtLocation(loc, tuple(self.parse_node(f) for f in form[2:]))
        if name == "handle-failure":
            return self.parse_handle_failure(form)
        if name == "when":
            if len(form) < 3 or not isinstance(form[1], list):
                raise self.fail(form, "when needs a condition and a body",
                                expected="(condition)")
            cond = tuple(self.parse_value(f) for f in form[1])
            return When(cond, tuple(self.parse_node(f) for f in form[2:]))
        if name == "wait-for":
            if len(form) == 2 and isinstance(form[1], Symbol):
                return WaitFor(str(form[1]), "value")
            if (len(form) == 3 and form[1] == Symbol("pulsed")
                    and isinstance(form[2], Symbol)):
                return WaitFor(str(form[2]), "pulsed")
            raise self.fail(form, "wait-for takes a fluent name, optionally after 'pulsed'",
                            expected="fluent name")
        if name == "pulse":
            if len(form) != 3 or not isinstance(form[1], Symbol):
                raise self.fail(form, "pulse takes a fluent name and a value",
                                expected="fluent name, value")
            return Pulse(str(form[1]), self.parse_value(form[2]))
        line, col = self.where(form)
        raise UnknownConstruct(name, line, col)

    def parse_handle_failure(self, form) -> HandleFailure:
        if len(form) < 3 or not isinstance(form[1], int) or form[1] < 0:
            raise self.fail(form, "handle-failure needs a max retry count >= 0 and a body",
                            expected="count")
        body = self.parse_node(form[2])
        handlers = []
        for h in form[3:]:
            if (not isinstance(h, list) or len(h) < 2 or h[0] != Symbol("on")
                    or not isinstance(h[1], Symbol)):
                raise self.fail(form, "handler must look like (on <failure-kind> body...)",
                                expected="(on kind ...)")
            kind = str(h[1])
            if kind not in FAILURE_KINDS:
                raise self.fail(h, f"unknown failure kind '{kind}'",
                                expected="|".join(FAILURE_KINDS))
            handlers.append((kind, tuple(self.parse_node(f) for f in h[2:])))
        return HandleFailure(form[1], body, tuple(handlers))

    def parse_designator(self, form) -> Designator:
        if len(form) < 2 or not isinstance(form[1], Symbol):
            raise self.fail(form, "designator needs a kind after the article",
                            expected="kind")
        kind = str(form[1])
        props = []
        seen = set()
        for p in form[2:]:
            if not isinstance(p, list) or len(p) != 2 or not isinstance(p[0], Symbol):
                raise self.fail(form, f"designator prop must be (key value), got {p!r}",
                                expected="(key value)")
            key = str(p[0])
            if key in seen:
                raise self.fail(form, f"duplicate designator key '{key}'")
            seen.add(key)
            props.append((key, self.parse_value(p[1])))
        return Designator(kind, tuple(props))

    def parse_pose(self, form) -> Pose:
        if len(form) != 5 or not all(isinstance(v, (int, float)) for v in form[1:]):
            raise self.fail(form, "pose takes four numbers: x y z yaw",
                            expected="(pose x y z yaw)")
        return Pose(*(float(v) for v in form[1:]))

    def parse_value(self, form) -> Value:
        if not isinstance(form, list):
            return form
        if not form:
            raise self.fail(form, "empty form is not a value", expected="value")
        head = form[0]
        if head == Symbol("pose"):
            return self.parse_pose(form)
        if isinstance(head, Symbol) and str(head) in _ARTICLES:
            return self.parse_designator(form)
        raise self.fail(form, f"expected a literal, variable, pose, or designator, got {form!r}",
                        expected="value")


def parse_plan(text: str) -> PlanAst:
    """Parse plan source into a ``PlanAst``, preserving designator key order."""
    try:
        forms, positions = sexpr.read_forms_with_positions(text)
    except ReadError as e:
        raise PlanSyntaxError(e.message, e.line, e.column, e.expected) from None
    p = _Parser(positions)
    definitions: dict[str, DefPlan] = {}
    fluents: dict[str, str] = {}
    top: list[Node] = []
    for form in forms:
        if isinstance(form, list) and form and form[0] == Symbol("def-plan"):
            if (len(form) < 3 or not isinstance(form[1], Symbol)
                    or not isinstance(form[2], list)):
                raise p.fail(form, "def-plan needs a name and a parameter list",
                             expected="(def-plan name (params) body...)")
            name = str(form[1])
            if name in definitions:
                raise p.fail(form, f"duplicate plan definition '{name}'")
            params = []
            for v in form[2]:
                if not isinstance(v, Variable):
                    raise p.fail(form, f"formal parameters must be variables, got {v!r}",
                                 expected="?name")
                params.append(v)
            body = tuple(p.parse_node(f) for f in form[3:])
            definitions[name] = DefPlan(name, tuple(params), body)
        elif isinstance(form, list) and form and form[0] == Symbol("def-fluent"):
            if (len(form) != 3 or not isinstance(form[1], Symbol)
                    or form[2] not in (Symbol(m) for m in _BUFFER_MODES)):
                raise p.fail(form, "def-fluent needs a name and a buffer mode",
                             expected="latest|all|none")
            fluents[str(form[1])] = str(form[2])
        else:
            top.append(p.parse_node(form))
    return PlanAst(definitions, fluents, tuple(top))


# ---------------------------------------------------------------------------
# printing


def value_to_form(v: Value):
    if isinstance(v, Pose):
        return v.to_form()
    if isinstance(v, Designator):
        return designator_to_form(v)
    return v


def designator_to_form(d: Designator) -> list:
    article = "an" if d.kind in ("action", "object") else "a"
    out = [Symbol(article), Symbol(d.kind)]
    for k, v in d.props:
        out.append([Symbol(k), value_to_form(v)])
    return out


def node_to_form(node: Node):
    if isinstance(node, Atom):
        return value_to_form(node.value)
    for head, cls in _SEQ_HEADS.items():
        if type(node) is cls:
            return [Symbol(head)] + [node_to_form(c) for c in node.children]
    if isinstance(node, Perform):
        return [Symbol("perform"), designator_to_form(node.designator)]
    if isinstance(node, WithRobotAtLocation):
        return ([Symbol("with-robot-at-location"), [value_to_form(node.location)]]
                + [node_to_form(c) for c in node.body])
    if isinstance(node, HandleFailure):
        out = [Symbol("handle-failure"), node.max_retries, node_to_form(node.body)]
        for kind, handler in node.handlers:
            out.append([Symbol("on"), Symbol(kind)] + [node_to_form(c) for c in handler])
        return out
    if isinstance(node, When):
        return ([Symbol("when"), [value_to_form(v) for v in node.condition]]
                + [node_to_form(c) for c in node.body])
    if isinstance(node, WaitFor):
        if node.mode == "pulsed":
            return [Symbol("wait-for"), Symbol("pulsed"), Symbol(node.fluent)]
        return [Symbol("wait-for"), Symbol(node.fluent)]
    if isinstance(node, Pulse):
        return [Symbol("pulse"), Symbol(node.fluent), value_to_form(node.value)]
    raise TypeError(f"cannot print node {node!r}")


def unparse_plan(ast: PlanAst) -> str:
    """Canonical text; ``parse_plan(unparse_plan(a))`` equals ``a`` structurally."""
    forms = []
    for name, mode in ast.fluents.items():
        forms.append([Symbol("def-fluent"), Symbol(name), Symbol(mode)])
    for d in ast.definitions.values():
        form = [Symbol("def-plan"), Symbol(d.name), list(d.params)]
        form.extend(node_to_form(n) for n in d.body)
        forms.append(form)
    forms.extend(node_to_form(n) for n in ast.top)
    return sexpr.write_forms(forms)


# ---------------------------------------------------------------------------
# variable analysis


def _walk_value_vars(v: Value, bound: frozenset[str], acc: list[str]):
    if isinstance(v, Variable):
        if v.name not in bound:
            acc.append(v.name)
    elif isinstance(v, Designator):
        for _, pv in v.props:
            _walk_value_vars(pv, bound, acc)


def _walk_node_vars(node: Node, bound: frozenset[str], acc: list[str]):
    if isinstance(node, Atom):
        _walk_value_vars(node.value, bound, acc)
    elif isinstance(node, (Seq, Par, Pursue, TryAll, TryInOrder)):
        for c in node.children:
            _walk_node_vars(c, bound, acc)
    elif isinstance(node, Perform):
        _walk_value_vars(node.designator, bound, acc)
    elif isinstance(node, WithRobotAtLocation):
        _walk_value_vars(node.location, bound, acc)
        for c in node.body:
            _walk_node_vars(c, bound, acc)
    elif isinstance(node, HandleFailure):
        _walk_node_vars(node.body, bound, acc)
        for _, handler in node.handlers:
            for c in handler:
                _walk_node_vars(c, bound, acc)
    elif isinstance(node, When):
        # variables first appearing in the condition are bound by its query
        inner = set(bound)
        for v in node.condition:
            if isinstance(v, Variable) and v.name not in inner:
                inner.add(v.name)
            else:
                _walk_value_vars(v, frozenset(inner), acc)
        for c in node.body:
            _walk_node_vars(c, frozenset(inner), acc)
    elif isinstance(node, Pulse):
        _walk_value_vars(node.value, bound, acc)
    # WaitFor carries no values


def free_variables(nodes, bound: frozenset[str] = frozenset()) -> list[str]:
    """Free variable names in first-occurrence order (duplicates removed)."""
    acc: list[str] = []
    for n in nodes:
        _walk_node_vars(n, bound, acc)
    seen = set()
    out = []
    for name in acc:
        if name not in seen:
            seen.add(name)
            out.append(name)
    return out


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Diagnostic:
    code: str        # unbound-variable | unknown-designator-kind | unknown-action-type | no-handlers
    subject: str
    message: str


def _known_action_types(ast: PlanAst, action_types) -> set[str]:
    if action_types is not None:
        return set(action_types)
    from .contextualizer import default_hierarchy  # deferred: avoids an import cycle
    known = set(ATOMIC_TO_MOTION) | set(default_hierarchy().composites)
    known |= set(ast.definitions)
    return known


def validate_plan(ast: PlanAst, action_types=None) -> list[Diagnostic]:
    """Structural diagnostics; never raises.

    Unbound-variable diagnostics cover every free variable occurrence (one
    diagnostic per use).  In schemas, free designator-prop variables are
    normal (they become query variables), so callers diff against a baseline
    or filter by code when they care about genuinely missing formals.
    """
    diags: list[Diagnostic] = []
    known_types = _known_action_types(ast, action_types)

    def check_designator(d: Designator):
        if d.kind not in DESIGNATOR_KINDS:
            diags.append(Diagnostic("unknown-designator-kind", d.kind,
                                    f"unknown designator kind '{d.kind}'"))
        if d.kind == "action":
            t = d.type
            if isinstance(t, Symbol) and str(t) not in known_types:
                diags.append(Diagnostic("unknown-action-type", str(t),
                                        f"action type '{t}' has no mapping or schema"))
        for _, v in d.props:
            if isinstance(v, Designator):
                check_designator(v)

    def check_node(node: Node, bound: frozenset[str]):
        if isinstance(node, Atom) and isinstance(node.value, Designator):
            check_designator(node.value)
        elif isinstance(node, (Seq, Par, Pursue, TryAll, TryInOrder)):
            for c in node.children:
                check_node(c, bound)
        elif isinstance(node, Perform):
            check_designator(node.designator)
        elif isinstance(node, WithRobotAtLocation):
            if isinstance(node.location, Designator):
                check_designator(node.location)
            for c in node.body:
                check_node(c, bound)
        elif isinstance(node, HandleFailure):
            if not node.handlers:
                diags.append(Diagnostic("no-handlers", "",
                                        "handle-failure with no handlers"))
            check_node(node.body, bound)
            for _, handler in node.handlers:
                for c in handler:
                    check_node(c, bound)
        elif isinstance(node, When):
            inner = bound | set(v.name for v in node.condition if isinstance(v, Variable))
            for c in node.body:
                check_node(c, inner)

    def flag_unbound(nodes, bound: frozenset[str]):
        acc: list[str] = []
        for n in nodes:
            _walk_node_vars(n, bound, acc)
        for name in acc:
            diags.append(Diagnostic("unbound-variable", name,
                                    f"variable ?{name} is not bound by a formal parameter"))

    for d in ast.definitions.values():
        bound = frozenset(v.name for v in d.params)
        flag_unbound(d.body, bound)
        for n in d.body:
            check_node(n, bound)
    flag_unbound(ast.top, frozenset())
    for n in ast.top:
        check_node(n, frozenset())
    return diags


# ---------------------------------------------------------------------------
# substitution


def _subst_value(v: Value, bindings: Bindings, key: str | None = None) -> Value:
    if isinstance(v, Variable):
        if v.name in bindings:
            new = bindings[v.name]
            if key in KEY_VALUE_CLASSES and not isinstance(new, (Variable, Designator)):
                expected = KEY_VALUE_CLASSES[key]
                if not isinstance(new, expected):
                    raise TypeMismatch(key, expected.__name__, new)
            return new
        return v
    if isinstance(v, Designator):
        return Designator(v.kind,
                          tuple((k, _subst_value(pv, bindings, k)) for k, pv in v.props))
    return v


def substitute_node(node: Node, bindings: Bindings) -> Node:
    if isinstance(node, Atom):
        return Atom(_subst_value(node.value, bindings))
    if isinstance(node, (Seq, Par, Pursue, TryAll, TryInOrder)):
        return type(node)(tuple(substitute_node(c, bindings) for c in node.children))
    if isinstance(node, Perform):
        return Perform(_subst_value(node.designator, bindings))
    if isinstance(node, WithRobotAtLocation):
        return WithRobotAtLocation(_subst_value(node.location, bindings),
                                   tuple(substitute_node(c, bindings) for c in node.body))
    if isinstance(node, HandleFailure):
        return HandleFailure(node.max_retries, substitute_node(node.body, bindings),
                             tuple((k, tuple(substitute_node(c, bindings) for c in h))
                                   for k, h in node.handlers))
    if isinstance(node, When):
        # condition variables are query-bound, not substitution targets,
        # unless already bound from outside
        cond = tuple(_subst_value(v, bindings) for v in node.condition)
        return When(cond, tuple(substitute_node(c, bindings) for c in node.body))
    if isinstance(node, Pulse):
        return Pulse(node.fluent, _subst_value(node.value, bindings))
    return node


def substitute_bindings(ast: PlanAst, bindings: Bindings) -> PlanAst:
    """Replace bound variables everywhere; unbound ones stay; idempotent."""
    defs = {
        name: DefPlan(d.name, d.params,
                      tuple(substitute_node(n, bindings) for n in d.body))
        for name, d in ast.definitions.items()
    }
    return PlanAst(defs, dict(ast.fluents),
                   tuple(substitute_node(n, bindings) for n in ast.top))


def load_plan_file(path) -> PlanAst:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_plan(fh.read())
