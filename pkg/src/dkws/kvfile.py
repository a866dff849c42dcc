"""Line-oriented `key = value` text files shared by the bank, cost-model and
run-config formats.  Keys are dotted paths; values stay strings here and are
parsed by the owning module.  '#' starts a comment; blank lines are ignored."""

from __future__ import annotations


class KVError(ValueError):
    pass


def loads(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise KVError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = stripped.split("=", 1)
        key, value = key.strip(), value.strip()
        if not key:
            raise KVError(f"line {lineno}: empty key")
        if key in out:
            raise KVError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def dumps(items: dict[str, object], header: str | None = None) -> str:
    lines = []
    if header:
        lines.extend(f"# {h}" for h in header.splitlines())
    lines.extend(f"{k} = {v}" for k, v in items.items())
    return "\n".join(lines) + "\n"


def load(path) -> dict[str, str]:
    with open(path, "r", encoding="utf-8") as f:
        return loads(f.read())


def dump(items: dict[str, object], path, header: str | None = None) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(dumps(items, header))
