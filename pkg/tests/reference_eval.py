"""Independent reference interpreter for the policy expression language.

Written against the documented language semantics before the main evaluator,
and kept deliberately separate from it: a dispatch-table tree walker over the
shared AST node types, with its own error classes and its own helpers. Tests
compare outcomes (value or error category) between this interpreter and
``policyplane.expr.eval_expr``.

Semantics implemented here (identical contract, independent code):
  truthiness   bool as-is; number != 0; non-empty string/set/list; null false
  and/or/not   short-circuit, always return booleans
  == !=        same-type scalars only (number/number, string/string,
               boolean/boolean, null/null); anything else is a type error
  < <= > >=    number/number or string/string only
  & |          set intersection/union; lists coerce to sets of scalars
  + - * /      numbers only; division by zero is an evaluation error
  unary -      numbers only
  calls        set, len, sum, count, min, max, contains, plus registry names
"""

from __future__ import annotations

import time
from typing import Any, Callable, Mapping

from policyplane.expr import Binary, Call, Expr, Literal, Path, Unary


class RefError(Exception):
    """Base failure; category mirrors the main evaluator's error taxonomy."""

    category = "eval"


class RefTypeMismatch(RefError):
    category = "type"


class RefUnknownAttribute(RefError):
    category = "attr"


class RefUnknownFunction(RefError):
    category = "func"


def _kind(v: Any) -> str:
    if v is None:
        return "null"
    if isinstance(v, bool):
        return "boolean"
    if isinstance(v, float):
        return "number"
    if isinstance(v, str):
        return "string"
    if isinstance(v, frozenset):
        return "set"
    if isinstance(v, list):
        return "list"
    raise RefError(f"not a value: {v!r}")


def _truthy(v: Any) -> bool:
    if v is None:
        return False
    if isinstance(v, bool):
        return v
    if isinstance(v, float):
        return v != 0.0
    return len(v) > 0


def _to_set(v: Any) -> frozenset:
    if isinstance(v, frozenset):
        return v
    if isinstance(v, list):
        for item in v:
            if _kind(item) not in ("boolean", "number", "string"):
                raise RefTypeMismatch("set members must be scalar")
        return frozenset(v)
    raise RefTypeMismatch(f"cannot make a set from {_kind(v)}")


def _same_scalar(a: Any, b: Any) -> bool:
    """Strict same-type equality; never equates booleans with numbers."""
    ka, kb = _kind(a), _kind(b)
    if ka != kb:
        return False
    if ka == "null":
        return True
    return a == b


def _numbers_of(v: Any, fname: str) -> list[float]:
    if not isinstance(v, (list, frozenset)):
        raise RefTypeMismatch(f"{fname}() expects a list or set")
    out = []
    for item in v:
        if _kind(item) != "number":
            raise RefTypeMismatch(f"{fname}() expects numbers, got {_kind(item)}")
        out.append(item)
    return out


def _builtin_set(args: list) -> Any:
    if len(args) != 1:
        raise RefError("set() takes 1 argument")
    return _to_set(args[0])


def _builtin_len(args: list) -> Any:
    if len(args) != 1:
        raise RefError("len() takes 1 argument")
    v = args[0]
    if isinstance(v, (str, list, frozenset)):
        return float(len(v))
    raise RefTypeMismatch(f"len() of {_kind(v)}")


def _builtin_count(args: list) -> Any:
    if len(args) != 1:
        raise RefError("count() takes 1 argument")
    v = args[0]
    if isinstance(v, (list, frozenset)):
        return float(len(v))
    raise RefTypeMismatch(f"count() of {_kind(v)}")


def _builtin_sum(args: list) -> Any:
    if len(args) != 1:
        raise RefError("sum() takes 1 argument")
    total = 0.0
    for n in _numbers_of(args[0], "sum"):
        total += n
    return total


def _builtin_min(args: list) -> Any:
    if len(args) != 1:
        raise RefError("min() takes 1 argument")
    nums = _numbers_of(args[0], "min")
    if not nums:
        raise RefError("min() of empty collection")
    return min(nums)


def _builtin_max(args: list) -> Any:
    if len(args) != 1:
        raise RefError("max() takes 1 argument")
    nums = _numbers_of(args[0], "max")
    if not nums:
        raise RefError("max() of empty collection")
    return max(nums)


def _builtin_contains(args: list) -> Any:
    if len(args) != 2:
        raise RefError("contains() takes 2 arguments")
    coll, item = args
    if isinstance(coll, str):
        if _kind(item) != "string":
            raise RefTypeMismatch("contains() on a string needs a string item")
        return item in coll
    if isinstance(coll, (list, frozenset)):
        return any(_same_scalar(member, item) for member in coll)
    raise RefTypeMismatch(f"contains() of {_kind(coll)}")


_BUILTINS: dict[str, Callable[[list], Any]] = {
    "set": _builtin_set,
    "len": _builtin_len,
    "count": _builtin_count,
    "sum": _builtin_sum,
    "min": _builtin_min,
    "max": _builtin_max,
    "contains": _builtin_contains,
}


def _normalize(bindings: Mapping[str, Any]) -> dict:
    env: dict = {}
    for key, val in bindings.items():
        if "." in key:
            root, sub = key.split(".", 1)
            env.setdefault(root, {})[sub] = val
        else:
            env[key] = val
    return env


def _coerce(x: Any) -> Any:
    if isinstance(x, bool) or x is None or isinstance(x, (float, str, frozenset)):
        return x
    if isinstance(x, int):
        return float(x)
    if isinstance(x, (list, tuple)):
        return [_coerce(i) for i in x]
    if isinstance(x, (set, frozenset)):
        return frozenset(_coerce(i) for i in x)
    raise RefError(f"not representable: {x!r}")


def _walk_path(env: dict, node: Path) -> Any:
    dotted = ".".join((node.root, *node.segments))
    if node.root not in env:
        raise RefUnknownAttribute(dotted)
    cur = env[node.root]
    for seg in node.segments:
        if isinstance(cur, Mapping):
            if seg not in cur:
                raise RefUnknownAttribute(dotted)
            cur = cur[seg]
        elif isinstance(cur, (list, tuple)) and all(isinstance(i, Mapping) for i in cur):
            picked = []
            for item in cur:
                if seg not in item:
                    raise RefUnknownAttribute(dotted)
                picked.append(item[seg])
            cur = picked
        else:
            raise RefUnknownAttribute(dotted)
    if isinstance(cur, Mapping):
        raise RefUnknownAttribute(dotted)
    return _coerce(cur)


def reference_eval(
    expr: Expr,
    bindings: Mapping[str, Any],
    functions: Mapping[str, Callable] | None = None,
    clock: Callable[[], float] = time.time,
) -> Any:
    """Evaluate ``expr`` against ``bindings`` with this module's semantics."""
    env = _normalize(bindings)
    extra = dict(functions or {})

    def call(name: str, args: list) -> Any:
        if name == "now" and name not in extra:
            return float(clock())
        if name in extra:
            return _coerce(extra[name](*args))
        if name in _BUILTINS:
            return _BUILTINS[name](args)
        raise RefUnknownFunction(name)

    def arith(op: str, a: Any, b: Any) -> Any:
        if _kind(a) != "number" or _kind(b) != "number":
            raise RefTypeMismatch(f"{_kind(a)} {op} {_kind(b)}")
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if b == 0.0:
            raise RefError("division by zero")
        return a / b

    def compare(op: str, a: Any, b: Any) -> bool:
        ka, kb = _kind(a), _kind(b)
        if op in ("==", "!="):
            if ka != kb or ka in ("set", "list"):
                raise RefTypeMismatch(f"{ka} {op} {kb}")
            eq = True if ka == "null" else a == b
            return eq if op == "==" else not eq
        if ka != kb or ka not in ("number", "string"):
            raise RefTypeMismatch(f"{ka} {op} {kb}")
        if op == "<":
            return a < b
        if op == "<=":
            return a <= b
        if op == ">":
            return a > b
        return a >= b

    def ev(node: Expr) -> Any:
        if isinstance(node, Literal):
            return _coerce(node.value)
        if isinstance(node, Path):
            return _walk_path(env, node)
        if isinstance(node, Unary):
            if node.op == "not":
                return not _truthy(ev(node.operand))
            v = ev(node.operand)
            if _kind(v) != "number":
                raise RefTypeMismatch(f"unary - on {_kind(v)}")
            return -v
        if isinstance(node, Call):
            return call(node.name, [ev(a) for a in node.args])
        if isinstance(node, Binary):
            if node.op == "or":
                return True if _truthy(ev(node.left)) else _truthy(ev(node.right))
            if node.op == "and":
                return _truthy(ev(node.right)) if _truthy(ev(node.left)) else False
            a, b = ev(node.left), ev(node.right)
            if node.op in ("&", "|"):
                sa, sb = _to_set(a), _to_set(b)
                return sa & sb if node.op == "&" else sa | sb
            if node.op in ("+", "-", "*", "/"):
                return arith(node.op, a, b)
            return compare(node.op, a, b)
        raise RefError(f"unknown node {node!r}")

    return ev(expr)
