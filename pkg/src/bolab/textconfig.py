"""Line-oriented ``key = value`` text files with line-precise validation.

Values are Python literals (numbers, lists, strings, booleans). Blank lines and
``#`` comments are ignored. Each key may appear once.
"""
from __future__ import annotations

import ast
from pathlib import Path
from typing import Any, Callable, Mapping


class ConfigError(ValueError):
    def __init__(self, source: str, line: int | None, message: str):
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")
        self.source = source
        self.line = line


def parse_text(text: str, schema: Mapping[str, Callable[[Any], Any]], source: str = "<string>",
               required: tuple[str, ...] = ()) -> dict[str, Any]:
    """Parse `text` against `schema` (key -> converter that raises on bad input)."""
    out: dict[str, Any] = {}
    lines: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(source, lineno, f"expected 'key = value', got {raw.strip()!r}")
        key, _, rhs = (part.strip() for part in line.partition("="))
        if key not in schema:
            raise ConfigError(source, lineno, f"unknown key {key!r} (allowed: {', '.join(sorted(schema))})")
        if key in out:
            raise ConfigError(source, lineno, f"duplicate key {key!r} (first set on line {lines[key]})")
        try:
            literal = ast.literal_eval(rhs)
        except (ValueError, SyntaxError):
            raise ConfigError(source, lineno, f"value for {key!r} is not a literal: {rhs!r}") from None
        try:
            out[key] = schema[key](literal)
        except (TypeError, ValueError) as exc:
            raise ConfigError(source, lineno, f"invalid {key!r}: {exc}") from None
        lines[key] = lineno
    missing = [k for k in required if k not in out]
    if missing:
        raise ConfigError(source, None, f"missing required key(s): {', '.join(missing)}")
    return out


def parse_file(path, schema, required: tuple[str, ...] = ()) -> dict[str, Any]:
    path = Path(path)
    return parse_text(path.read_text(), schema, source=str(path), required=required)


def float_list(value) -> list[float]:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        value = [value]
    if not isinstance(value, (list, tuple)) or not value:
        raise ValueError("expected a non-empty list of numbers")
    out = []
    for item in value:
        if isinstance(item, bool) or not isinstance(item, (int, float)):
            raise ValueError(f"non-numeric entry {item!r}")
        out.append(float(item))
    return out


def real(value) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValueError(f"expected a number, got {value!r}")
    return float(value)


def positive_int(value) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value <= 0:
        raise ValueError(f"expected a positive integer, got {value!r}")
    return value
