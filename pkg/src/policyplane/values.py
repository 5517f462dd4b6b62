"""Runtime value domain shared by the expression language, directory, and wire layer.

Values are plain Python objects: bool, float (all numbers are 64-bit floats),
str, None, frozenset (members are hashable scalars), and list. Booleans and
numbers are distinct types here even though Python treats bool as an int
subclass, so every type check in this module tests bool first.
"""

from __future__ import annotations

from typing import Any, Union

Value = Union[bool, float, str, None, frozenset, list]

_KIND_NAMES = {
    type(None): "null",
    bool: "boolean",
    float: "number",
    str: "string",
    frozenset: "set",
    list: "list",
}


def kind_of(v: Value) -> str:
    """Name of a value's type, for error messages and strict comparisons."""
    if isinstance(v, bool):
        return "boolean"
    name = _KIND_NAMES.get(type(v))
    if name is None:
        raise TypeError(f"not a value: {v!r}")
    return name


def is_value(x: Any) -> bool:
    try:
        kind_of(x)
    except TypeError:
        return False
    return True


def is_scalar(v: Value) -> bool:
    return isinstance(v, bool) or isinstance(v, (float, str))


def truthy(v: Value) -> bool:
    """Boolean as-is; number != 0; non-empty string/set/list; null is false."""
    if v is None:
        return False
    if isinstance(v, bool):
        return v
    if isinstance(v, float):
        return v != 0.0
    return len(v) > 0


def as_value(x: Any) -> Value:
    """Coerce a Python/JSON object into the value domain (ints become floats)."""
    if isinstance(x, bool) or x is None or isinstance(x, (float, str, frozenset)):
        return x
    if isinstance(x, int):
        return float(x)
    if isinstance(x, (list, tuple)):
        return [as_value(i) for i in x]
    if isinstance(x, (set, frozenset)):
        return frozenset(as_value(i) for i in x)
    raise TypeError(f"cannot represent {type(x).__name__} as a value")


def values_equal(a: Value, b: Value) -> bool:
    """Strict same-type equality; booleans never equal numbers."""
    ka, kb = kind_of(a), kind_of(b)
    if ka != kb:
        return False
    if ka == "null":
        return True
    return a == b


def to_jsonable(v: Value) -> Any:
    """Render a value as a JSON-encodable object (sets become sorted lists)."""
    if isinstance(v, frozenset):
        return sorted((to_jsonable(i) for i in v), key=lambda x: (str(type(x)), str(x)))
    if isinstance(v, list):
        return [to_jsonable(i) for i in v]
    return v
