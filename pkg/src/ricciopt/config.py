"""Key-value configuration files.

One ``key = value`` pair per line; ``#`` starts a comment and blank lines
are ignored.  Values are parsed as int, float, bool (``true``/``false``),
``none`` or left as strings.  Comma-separated values become lists.
"""
from __future__ import annotations

from pathlib import Path

from .errors import InvalidInputError


def parse_value(text):
    t = text.strip()
    low = t.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("none", "null", ""):
        return None
    if "," in t:
        return [parse_value(x) for x in t.split(",") if x.strip()]
    for conv in (int, float):
        try:
            return conv(t)
        except ValueError:
            pass
    return t


def parse_config(text, source="<config>"):
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidInputError(f"{source}:{lineno}: expected 'key = value'")
        key, val = line.split("=", 1)
        key = key.strip().replace("-", "_")
        if not key:
            raise InvalidInputError(f"{source}:{lineno}: empty key")
        out[key] = parse_value(val)
    return out


def load_config(path):
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise InvalidInputError(f"cannot read config {p}: {exc}") from exc
    return parse_config(text, str(p))
