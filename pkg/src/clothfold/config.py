"""Plain-text ``key=value`` configuration files.

Format: one ``section.key = value`` pair per line, ``#`` starts a comment,
blank lines ignored.  Values are coerced to the target dataclass field type
(int, float, bool, str).  Unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

from .errors import InvalidArgumentError


def parse_config_text(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidArgumentError(f"config line {lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def load_config(path: str | Path) -> dict[str, str]:
    return parse_config_text(Path(path).read_text())


def _coerce(value: str, typ):
    if typ is bool:
        low = value.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise InvalidArgumentError(f"expected boolean, got {value!r}")
    return typ(value)


def apply_config(params, cfg: dict[str, str], prefix: str):
    """Return a copy of dataclass ``params`` with ``prefix.*`` keys applied."""
    fields = {f.name: f.type for f in dataclasses.fields(params)}
    updates = {}
    for key, value in cfg.items():
        if not key.startswith(prefix + "."):
            continue
        name = key[len(prefix) + 1 :]
        if name not in fields:
            raise InvalidArgumentError(f"unknown config key {key!r}")
        current = getattr(params, name)
        updates[name] = _coerce(value, type(current))
    return dataclasses.replace(params, **updates)


def dump_params(params, prefix: str) -> str:
    """Render a dataclass as config lines (used to document defaults)."""
    lines = []
    for f in dataclasses.fields(params):
        lines.append(f"{prefix}.{f.name} = {getattr(params, f.name)}")
    return "\n".join(lines) + "\n"
