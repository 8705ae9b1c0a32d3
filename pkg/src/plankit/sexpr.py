"""S-expression reader/writer shared by plan, world, knowledge, and rule files.

The reader produces plain Python structures: nested lists of atoms.  Atoms are
``Symbol`` (an interned-looking str subclass), ``Variable`` (tokens starting
with ``?``), int, float, and quoted strings.  Consumers (the plan parser, the
world loader, the KB loader) interpret these generic forms.
"""

from __future__ import annotations

from dataclasses import dataclass

WHITESPACE = " \t\r\n"
DELIMS = WHITESPACE + "();\""


class Symbol(str):
    """A bare identifier token, distinguished from quoted string literals."""

    __slots__ = ()

    def __repr__(self) -> str:  # pragma: no cover - debug aid
        return f"Symbol({str.__repr__(self)})"


@dataclass(frozen=True)
class Variable:
    """A ``?name`` token; the unit of underdetermination in plans and queries."""

    name: str

    def __post_init__(self):
        if not self.name:
            raise ValueError("variable name must be nonempty after '?'")

    def __str__(self) -> str:
        return "?" + self.name


class ReadError(Exception):
    """Malformed s-expression text."""

    def __init__(self, message: str, line: int, column: int, expected: str = ""):
        super().__init__(f"{line}:{column}: {message}")
        self.message = message
        self.line = line
        self.column = column
        self.expected = expected


class _Reader:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.line = 1
        self.col = 1
        # position of every list form, keyed by id(), for error reporting
        self.positions: dict[int, tuple[int, int]] = {}

    def error(self, message: str, expected: str = "") -> ReadError:
        return ReadError(message, self.line, self.col, expected)

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def advance(self) -> str:
        c = self.text[self.pos]
        self.pos += 1
        if c == "\n":
            self.line += 1
            self.col = 1
        else:
            self.col += 1
        return c

    def skip_blank(self):
        while self.pos < len(self.text):
            c = self.peek()
            if c in WHITESPACE:
                self.advance()
            elif c == ";":
                while self.pos < len(self.text) and self.peek() != "\n":
                    self.advance()
            else:
                return

    def read_form(self):
        self.skip_blank()
        if self.pos >= len(self.text):
            raise self.error("unexpected end of input", expected="form")
        c = self.peek()
        if c == "(":
            return self.read_list()
        if c == ")":
            raise self.error("unexpected ')'", expected="form")
        if c == '"':
            return self.read_string()
        return self.read_atom()

    def read_list(self):
        open_line, open_col = self.line, self.col
        self.advance()  # consume '('
        items = []
        while True:
            self.skip_blank()
            if self.pos >= len(self.text):
                raise ReadError("unclosed '('", open_line, open_col, expected=")")
            if self.peek() == ")":
                self.advance()
                self.positions[id(items)] = (open_line, open_col)
                return items
            items.append(self.read_form())

    def read_string(self) -> str:
        line, col = self.line, self.col
        self.advance()  # opening quote
        out = []
        while True:
            if self.pos >= len(self.text):
                raise ReadError("unterminated string", line, col, expected='"')
            c = self.advance()
            if c == '"':
                return "".join(out)
            if c == "\\":
                if self.pos >= len(self.text):
                    raise ReadError("unterminated escape", line, col, expected='"')
                out.append(self.advance())
            else:
                out.append(c)

    def read_atom(self):
        line, col = self.line, self.col
        start = self.pos
        while self.pos < len(self.text) and self.peek() not in DELIMS:
            self.advance()
        token = self.text[start:self.pos]
        if token.startswith("?"):
            if len(token) == 1:
                raise ReadError("variable name must be nonempty after '?'",
                                line, col, expected="name")
            return Variable(token[1:])
        try:
            return int(token)
        except ValueError:
            pass
        try:
            return float(token)
        except ValueError:
            pass
        return Symbol(token)


def read_forms(text: str) -> list:
    """Read all top-level forms from ``text``."""
    return read_forms_with_positions(text)[0]


def read_forms_with_positions(text: str) -> tuple[list, dict[int, tuple[int, int]]]:
    """Read all forms plus a map from id(list form) to its (line, column)."""
    r = _Reader(text)
    forms = []
    while True:
        r.skip_blank()
        if r.pos >= len(r.text):
            return forms, r.positions
        forms.append(r.read_form())


def read_one(text: str):
    """Read exactly one form; trailing content is an error."""
    r = _Reader(text)
    form = r.read_form()
    r.skip_blank()
    if r.pos < len(r.text):
        raise r.error("trailing content after form", expected="end of input")
    return form


def _format_float(x: float) -> str:
    # repr round-trips exactly, which the save/load fixpoint tests rely on
    return repr(x)


def write_form(form, indent: int = 0, width: int = 88) -> str:
    """Render a form as canonical text. Lists that fit stay on one line."""
    flat = _write_flat(form)
    if len(flat) + indent <= width or not isinstance(form, list):
        return flat
    head = _write_flat(form[0]) if form else ""
    pad = " " * (indent + 2)
    parts = [write_form(item, indent + 2, width) for item in form[1:]]
    body = ("\n" + pad).join(parts)
    if parts:
        return f"({head}\n{pad}{body})"
    return f"({head})"


def _write_flat(form) -> str:
    if isinstance(form, list):
        return "(" + " ".join(_write_flat(f) for f in form) + ")"
    if isinstance(form, Variable):
        return str(form)
    if isinstance(form, Symbol):
        return str(form)
    if isinstance(form, bool):
        return "true" if form else "false"
    if isinstance(form, float):
        return _format_float(form)
    if isinstance(form, int):
        return str(form)
    if isinstance(form, str):
        escaped = form.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'
    raise TypeError(f"cannot write {type(form).__name__} as s-expression")


def write_forms(forms: list) -> str:
    return "\n".join(write_form(f) for f in forms) + "\n"
