"""Expression language for policy relationships and assertions.

A small, sandboxed DSL: no assignment, loops, or user-defined functions.
Sources parse to an immutable AST which evaluates against attribute bindings
(``subjectDevice``, ``objectDevice``, ``affectedDevice.<key>``) plus a
function registry. Grammar, loosest to tightest binding:

    or  <  and  <  not  <  == != < <= > >=  <  & |  <  + -  <  * /  <  unary -

Comparisons do not chain (``a == b == c`` is a syntax error). ``&``/``|`` are
set intersection/union and coerce list operands to sets. ``and``/``or``/``not``
short-circuit and return booleans. Boolean literals may be spelled
``True``/``true`` (same for ``False``, and ``None``/``null``).
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Any, Callable, Iterator, Mapping, NamedTuple

from .values import Value, as_value, kind_of, truthy, values_equal

__all__ = [
    "Expr",
    "Literal",
    "Path",
    "Unary",
    "Binary",
    "Call",
    "ExprSyntaxError",
    "EvalError",
    "TypeMismatch",
    "UnknownAttribute",
    "UnknownFunction",
    "FunctionRegistry",
    "parse_expr",
    "to_source",
    "eval_expr",
    "expr_depth",
    "iter_paths",
    "iter_calls",
]


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------


class Expr:
    """Base class for AST nodes; nodes are frozen dataclasses."""

    __slots__ = ()


@dataclass(frozen=True)
class Literal(Expr):
    value: Value


@dataclass(frozen=True)
class Path(Expr):
    root: str
    segments: tuple[str, ...] = ()

    def dotted(self) -> str:
        return ".".join((self.root, *self.segments))


@dataclass(frozen=True)
class Unary(Expr):
    op: str  # "not" or "-"
    operand: Expr


@dataclass(frozen=True)
class Binary(Expr):
    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Call(Expr):
    name: str
    args: tuple[Expr, ...] = ()


# ---------------------------------------------------------------------------
# Errors
# ---------------------------------------------------------------------------


class ExprSyntaxError(ValueError):
    """Parse failure, carrying the byte offset and the expected-token set."""

    def __init__(self, message: str, offset: int, expected: frozenset[str] = frozenset()):
        self.offset = offset
        self.expected = expected
        detail = f"{message} at byte {offset}"
        if expected:
            detail += f" (expected {', '.join(sorted(expected))})"
        super().__init__(detail)


class EvalError(Exception):
    """Evaluation failure; subclasses refine the category."""

    category = "eval"


class TypeMismatch(EvalError):
    category = "type"


class UnknownAttribute(EvalError):
    """A path references context the bindings do not provide."""

    category = "attr"

    def __init__(self, path: str):
        self.path = path
        super().__init__(f"unknown attribute: {path}")


class UnknownFunction(EvalError):
    category = "func"

    def __init__(self, name: str):
        self.name = name
        super().__init__(f"unknown function: {name}")


# ---------------------------------------------------------------------------
# Lexer
# ---------------------------------------------------------------------------


class _Token(NamedTuple):
    kind: str
    text: str
    pos: int  # character offset into the source


_TWO_CHAR = {"==": "EQ", "!=": "NE", "<=": "LE", ">=": "GE"}
_ONE_CHAR = {
    "<": "LT",
    ">": "GT",
    "&": "AMP",
    "|": "PIPE",
    "+": "PLUS",
    "-": "MINUS",
    "*": "STAR",
    "/": "SLASH",
    "(": "LPAREN",
    ")": "RPAREN",
    ",": "COMMA",
    ".": "DOT",
}
_KEYWORDS = {
    "or": "OR",
    "and": "AND",
    "not": "NOT",
    "True": "TRUE",
    "true": "TRUE",
    "False": "FALSE",
    "false": "FALSE",
    "None": "NULL",
    "null": "NULL",
}
_ESCAPES = {"\\": "\\", '"': '"', "'": "'", "n": "\n", "t": "\t", "r": "\r"}


def _byte_offset(source: str, pos: int) -> int:
    return len(source[:pos].encode("utf-8"))


def _lex_error(source: str, pos: int, message: str, expected: frozenset[str] = frozenset()) -> ExprSyntaxError:
    return ExprSyntaxError(message, _byte_offset(source, pos), expected)


def _tokenize(source: str) -> list[_Token]:
    tokens: list[_Token] = []
    i, n = 0, len(source)
    while i < n:
        ch = source[i]
        if ch in " \t\r\n":
            i += 1
            continue
        if source[i : i + 2] in _TWO_CHAR:
            tokens.append(_Token(_TWO_CHAR[source[i : i + 2]], source[i : i + 2], i))
            i += 2
            continue
        if ch in _ONE_CHAR:
            tokens.append(_Token(_ONE_CHAR[ch], ch, i))
            i += 1
            continue
        if ch.isdigit():
            start = i
            while i < n and source[i].isdigit():
                i += 1
            if i < n and source[i] == "." and i + 1 < n and source[i + 1].isdigit():
                i += 1
                while i < n and source[i].isdigit():
                    i += 1
            if i < n and source[i] in "eE":
                j = i + 1
                if j < n and source[j] in "+-":
                    j += 1
                if j < n and source[j].isdigit():
                    i = j
                    while i < n and source[i].isdigit():
                        i += 1
            tokens.append(_Token("NUMBER", source[start:i], start))
            continue
        if ch in "\"'":
            quote, start = ch, i
            i += 1
            parts: list[str] = []
            while True:
                if i >= n:
                    raise _lex_error(source, start, "unterminated string")
                c = source[i]
                if c == quote:
                    i += 1
                    break
                if c == "\\":
                    if i + 1 >= n or source[i + 1] not in _ESCAPES:
                        raise _lex_error(source, i, "invalid escape sequence")
                    parts.append(_ESCAPES[source[i + 1]])
                    i += 2
                    continue
                parts.append(c)
                i += 1
            tokens.append(_Token("STRING", "".join(parts), start))
            continue
        if ch.isalpha() or ch == "_":
            start = i
            while i < n and (source[i].isalnum() or source[i] == "_"):
                i += 1
            word = source[start:i]
            tokens.append(_Token(_KEYWORDS.get(word, "IDENT"), word, start))
            continue
        raise _lex_error(source, i, f"unexpected character {ch!r}")
    tokens.append(_Token("EOF", "", n))
    return tokens


# ---------------------------------------------------------------------------
# Parser (recursive descent, one function per precedence level)
# ---------------------------------------------------------------------------

_CMP_OPS = {"EQ": "==", "NE": "!=", "LT": "<", "LE": "<=", "GT": ">", "GE": ">="}
_ATOM_EXPECTED = frozenset({"number", "string", "identifier", "True", "False", "None", "'('", "'-'", "'not'"})


class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.tokens = _tokenize(source)
        self.i = 0

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def advance(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, kind: str, what: str) -> _Token:
        tok = self.peek()
        if tok.kind != kind:
            raise self.error(f"expected {what}", frozenset({what}))
        return self.advance()

    def error(self, message: str, expected: frozenset[str]) -> ExprSyntaxError:
        tok = self.peek()
        got = tok.text or "end of input"
        return ExprSyntaxError(
            f"{message}, got {got!r}", _byte_offset(self.source, tok.pos), expected
        )

    def parse(self) -> Expr:
        e = self.or_expr()
        if self.peek().kind != "EOF":
            raise self.error("unexpected trailing input", frozenset({"end of input"}))
        return e

    def or_expr(self) -> Expr:
        e = self.and_expr()
        while self.peek().kind == "OR":
            self.advance()
            e = Binary("or", e, self.and_expr())
        return e

    def and_expr(self) -> Expr:
        e = self.not_expr()
        while self.peek().kind == "AND":
            self.advance()
            e = Binary("and", e, self.not_expr())
        return e

    def not_expr(self) -> Expr:
        if self.peek().kind == "NOT":
            self.advance()
            return Unary("not", self.not_expr())
        return self.comparison()

    def comparison(self) -> Expr:
        e = self.set_expr()
        if self.peek().kind in _CMP_OPS:
            op = _CMP_OPS[self.advance().kind]
            e = Binary(op, e, self.set_expr())
        return e

    def set_expr(self) -> Expr:
        e = self.additive()
        while self.peek().kind in ("AMP", "PIPE"):
            op = "&" if self.advance().kind == "AMP" else "|"
            e = Binary(op, e, self.additive())
        return e

    def additive(self) -> Expr:
        e = self.term()
        while self.peek().kind in ("PLUS", "MINUS"):
            op = "+" if self.advance().kind == "PLUS" else "-"
            e = Binary(op, e, self.term())
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.peek().kind in ("STAR", "SLASH"):
            op = "*" if self.advance().kind == "STAR" else "/"
            e = Binary(op, e, self.unary())
        return e

    def unary(self) -> Expr:
        if self.peek().kind == "MINUS":
            self.advance()
            return Unary("-", self.unary())
        return self.primary()

    def primary(self) -> Expr:
        tok = self.peek()
        if tok.kind == "NUMBER":
            self.advance()
            return Literal(float(tok.text))
        if tok.kind == "STRING":
            self.advance()
            return Literal(tok.text)
        if tok.kind == "TRUE":
            self.advance()
            return Literal(True)
        if tok.kind == "FALSE":
            self.advance()
            return Literal(False)
        if tok.kind == "NULL":
            self.advance()
            return Literal(None)
        if tok.kind == "LPAREN":
            self.advance()
            e = self.or_expr()
            self.expect("RPAREN", "')'")
            return e
        if tok.kind == "IDENT":
            self.advance()
            if self.peek().kind == "LPAREN":
                self.advance()
                args: list[Expr] = []
                if self.peek().kind != "RPAREN":
                    args.append(self.or_expr())
                    while self.peek().kind == "COMMA":
                        self.advance()
                        args.append(self.or_expr())
                self.expect("RPAREN", "')'")
                return Call(tok.text, tuple(args))
            segments: list[str] = []
            while self.peek().kind == "DOT":
                self.advance()
                segments.append(self.expect("IDENT", "identifier").text)
            return Path(tok.text, tuple(segments))
        raise self.error("expected an expression", _ATOM_EXPECTED)


def parse_expr(source: str) -> Expr:
    """Parse an expression source string into an AST.

    Raises ExprSyntaxError (with byte offset and expected-token set) on
    malformed input, including empty sources.
    """
    if not source or not source.strip():
        raise ExprSyntaxError("empty expression", 0, _ATOM_EXPECTED)
    return _Parser(source).parse()


# ---------------------------------------------------------------------------
# Printer
# ---------------------------------------------------------------------------

_BINARY_PREC = {
    "or": 1,
    "and": 2,
    "==": 4,
    "!=": 4,
    "<": 4,
    "<=": 4,
    ">": 4,
    ">=": 4,
    "&": 5,
    "|": 5,
    "+": 6,
    "-": 6,
    "*": 7,
    "/": 7,
}
_COMPARISONS = frozenset({"==", "!=", "<", "<=", ">", ">="})


def _prec(e: Expr) -> int:
    if isinstance(e, Binary):
        return _BINARY_PREC[e.op]
    if isinstance(e, Unary):
        return 3 if e.op == "not" else 8
    return 9


def _quote(s: str) -> str:
    out = ['"']
    for ch in s:
        if ch == "\\":
            out.append("\\\\")
        elif ch == '"':
            out.append('\\"')
        elif ch == "\n":
            out.append("\\n")
        elif ch == "\t":
            out.append("\\t")
        elif ch == "\r":
            out.append("\\r")
        else:
            out.append(ch)
    out.append('"')
    return "".join(out)


def _literal_source(v: Value) -> str:
    if v is None:
        return "None"
    if isinstance(v, bool):
        return "True" if v else "False"
    if isinstance(v, float):
        if v == int(v) and abs(v) < 1e16:
            return str(int(v))
        return repr(v)
    if isinstance(v, str):
        return _quote(v)
    raise TypeError(f"literal cannot hold {kind_of(v)}")


def _render(e: Expr, floor: int) -> str:
    p = _prec(e)
    if isinstance(e, Literal):
        s = _literal_source(e.value)
    elif isinstance(e, Path):
        s = e.dotted()
    elif isinstance(e, Call):
        s = f"{e.name}({', '.join(_render(a, 1) for a in e.args)})"
    elif isinstance(e, Unary):
        if e.op == "not":
            s = f"not {_render(e.operand, p)}"
        else:
            s = f"-{_render(e.operand, p)}"
    else:
        assert isinstance(e, Binary)
        if e.op in _COMPARISONS:
            # comparisons do not chain: parenthesize nested comparisons
            s = f"{_render(e.left, p + 1)} {e.op} {_render(e.right, p + 1)}"
        else:
            s = f"{_render(e.left, p)} {e.op} {_render(e.right, p + 1)}"
    if p < floor:
        return f"({s})"
    return s


def to_source(e: Expr) -> str:
    """Render an AST back to source; parse_expr(to_source(e)) equals e."""
    return _render(e, 1)


# ---------------------------------------------------------------------------
# AST utilities
# ---------------------------------------------------------------------------


def _children(e: Expr) -> tuple[Expr, ...]:
    if isinstance(e, Unary):
        return (e.operand,)
    if isinstance(e, Binary):
        return (e.left, e.right)
    if isinstance(e, Call):
        return e.args
    return ()


def expr_depth(e: Expr) -> int:
    """Depth in nodes of the longest root-to-leaf chain."""
    kids = _children(e)
    if not kids:
        return 1
    return 1 + max(expr_depth(k) for k in kids)


def iter_paths(e: Expr) -> Iterator[Path]:
    if isinstance(e, Path):
        yield e
    for kid in _children(e):
        yield from iter_paths(kid)


def iter_calls(e: Expr) -> Iterator[Call]:
    if isinstance(e, Call):
        yield e
    for kid in _children(e):
        yield from iter_calls(kid)


# ---------------------------------------------------------------------------
# Function registry
# ---------------------------------------------------------------------------


def _want_collection(v: Value, fname: str) -> Value:
    if isinstance(v, (list, frozenset)):
        return v
    raise TypeMismatch(f"{fname}() expects a list or set, got {kind_of(v)}")


def _want_numbers(v: Value, fname: str) -> list[float]:
    out: list[float] = []
    for item in _want_collection(v, fname):
        if isinstance(item, bool) or not isinstance(item, float):
            raise TypeMismatch(f"{fname}() expects numbers, got {kind_of(item)}")
        out.append(item)
    return out


def _coerce_set(v: Value, context: str) -> frozenset:
    if isinstance(v, frozenset):
        return v
    if isinstance(v, list):
        for item in v:
            if not (isinstance(item, bool) or isinstance(item, (float, str))):
                raise TypeMismatch(f"set members must be scalar, got {kind_of(item)}")
        return frozenset(v)
    raise TypeMismatch(f"{context}: cannot treat {kind_of(v)} as a set")


def _arity(args: tuple, n: int, fname: str) -> None:
    if len(args) != n:
        raise EvalError(f"{fname}() takes {n} argument{'s' if n != 1 else ''}, got {len(args)}")


def _fn_set(*args: Value) -> Value:
    _arity(args, 1, "set")
    return _coerce_set(args[0], "set()")


def _fn_len(*args: Value) -> Value:
    _arity(args, 1, "len")
    v = args[0]
    if isinstance(v, (str, list, frozenset)):
        return float(len(v))
    raise TypeMismatch(f"len() of {kind_of(v)}")


def _fn_count(*args: Value) -> Value:
    _arity(args, 1, "count")
    return float(len(_want_collection(args[0], "count")))


def _fn_sum(*args: Value) -> Value:
    _arity(args, 1, "sum")
    return float(sum(_want_numbers(args[0], "sum")))


def _fn_min(*args: Value) -> Value:
    _arity(args, 1, "min")
    nums = _want_numbers(args[0], "min")
    if not nums:
        raise EvalError("min() of empty collection")
    return min(nums)


def _fn_max(*args: Value) -> Value:
    _arity(args, 1, "max")
    nums = _want_numbers(args[0], "max")
    if not nums:
        raise EvalError("max() of empty collection")
    return max(nums)


def _fn_contains(*args: Value) -> Value:
    _arity(args, 2, "contains")
    coll, item = args
    if isinstance(coll, str):
        if not isinstance(item, str):
            raise TypeMismatch("contains() on a string needs a string item")
        return item in coll
    for member in _want_collection(coll, "contains"):
        if values_equal(member, item):
            return True
    return False


_BUILTINS: dict[str, Callable[..., Value]] = {
    "set": _fn_set,
    "len": _fn_len,
    "count": _fn_count,
    "sum": _fn_sum,
    "min": _fn_min,
    "max": _fn_max,
    "contains": _fn_contains,
}


class FunctionRegistry:
    """Built-in functions plus host extensions (weather(), schedules, ...).

    ``now()`` is built in and reads the registry's clock, so hosts and tests
    can freeze time by constructing a registry with a fixed clock.
    """

    def __init__(self, clock: Callable[[], float] = time.time):
        self._clock = clock
        self._extensions: dict[str, Callable[..., Any]] = {}

    def register(self, name: str, fn: Callable[..., Any]) -> None:
        self._extensions[name] = fn

    def knows(self, name: str) -> bool:
        return name == "now" or name in self._extensions or name in _BUILTINS

    def names(self) -> frozenset[str]:
        return frozenset(_BUILTINS) | frozenset(self._extensions) | {"now"}

    def call(self, name: str, args: tuple[Value, ...]) -> Value:
        if name in self._extensions:
            return as_value(self._extensions[name](*args))
        if name == "now":
            _arity(args, 0, "now")
            return float(self._clock())
        fn = _BUILTINS.get(name)
        if fn is None:
            raise UnknownFunction(name)
        return fn(*args)


_DEFAULT_REGISTRY = FunctionRegistry()


# ---------------------------------------------------------------------------
# Evaluator
# ---------------------------------------------------------------------------


def _normalize_bindings(bindings: Mapping[str, Any]) -> dict[str, Any]:
    """Fold dotted roots ("affectedDevice.ac") into nested maps."""
    env: dict[str, Any] = {}
    for key, val in bindings.items():
        if "." in key:
            root, sub = key.split(".", 1)
            bucket = env.setdefault(root, {})
            bucket[sub] = val
        else:
            env[key] = val
    return env


def _resolve(env: Mapping[str, Any], path: Path) -> Value:
    if path.root not in env:
        raise UnknownAttribute(path.dotted())
    cur: Any = env[path.root]
    for seg in path.segments:
        if isinstance(cur, Mapping):
            if seg not in cur:
                raise UnknownAttribute(path.dotted())
            cur = cur[seg]
        elif isinstance(cur, (list, tuple)) and cur and all(isinstance(i, Mapping) for i in cur):
            # a set-quantified binding: project the segment across every view
            nxt = []
            for item in cur:
                if seg not in item:
                    raise UnknownAttribute(path.dotted())
                nxt.append(item[seg])
            cur = nxt
        else:
            raise UnknownAttribute(path.dotted())
    if isinstance(cur, Mapping):
        raise UnknownAttribute(path.dotted())
    return as_value(cur)


def _compare(op: str, a: Value, b: Value) -> bool:
    ka, kb = kind_of(a), kind_of(b)
    if op in ("==", "!="):
        if ka != kb or ka in ("set", "list"):
            raise TypeMismatch(f"cannot compare {ka} {op} {kb}")
        eq = values_equal(a, b)
        return eq if op == "==" else not eq
    if ka != kb or ka not in ("number", "string"):
        raise TypeMismatch(f"cannot order {ka} {op} {kb}")
    if op == "<":
        return a < b  # type: ignore[operator]
    if op == "<=":
        return a <= b  # type: ignore[operator]
    if op == ">":
        return a > b  # type: ignore[operator]
    return a >= b  # type: ignore[operator]


def _arith(op: str, a: Value, b: Value) -> float:
    for v in (a, b):
        if isinstance(v, bool) or not isinstance(v, float):
            raise TypeMismatch(f"arithmetic {op} on {kind_of(v)}")
    assert isinstance(a, float) and isinstance(b, float)
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if b == 0.0:
        raise EvalError("division by zero")
    return a / b


def eval_expr(
    e: Expr,
    bindings: Mapping[str, Any],
    functions: FunctionRegistry | None = None,
) -> Value:
    """Evaluate an AST against attribute bindings.

    ``bindings`` maps root names to attribute maps; affected-device roots may
    be given dotted ("affectedDevice.ac") or nested. Pure except for clock
    reads through the registry's ``now()``.

    Raises TypeMismatch, UnknownAttribute (missing context), UnknownFunction,
    or EvalError (division by zero, bad arity, empty min/max).
    """
    registry = functions if functions is not None else _DEFAULT_REGISTRY
    env = _normalize_bindings(bindings)

    def ev(node: Expr) -> Value:
        if isinstance(node, Literal):
            return node.value
        if isinstance(node, Path):
            return _resolve(env, node)
        if isinstance(node, Unary):
            if node.op == "not":
                return not truthy(ev(node.operand))
            v = ev(node.operand)
            if isinstance(v, bool) or not isinstance(v, float):
                raise TypeMismatch(f"unary - on {kind_of(v)}")
            return -v
        if isinstance(node, Call):
            return registry.call(node.name, tuple(ev(a) for a in node.args))
        assert isinstance(node, Binary)
        op = node.op
        if op == "or":
            if truthy(ev(node.left)):
                return True
            return truthy(ev(node.right))
        if op == "and":
            if not truthy(ev(node.left)):
                return False
            return truthy(ev(node.right))
        left, right = ev(node.left), ev(node.right)
        if op in ("&", "|"):
            sa = _coerce_set(left, f"operator {op}")
            sb = _coerce_set(right, f"operator {op}")
            return sa & sb if op == "&" else sa | sb
        if op in ("+", "-", "*", "/"):
            return _arith(op, left, right)
        return _compare(op, left, right)

    return ev(e)
