"""Structured text configs and line-delimited record files.

Config format: `key = value` lines, `#` comments, optional repeated
`[section]` headers. Every file carries an explicit `version` key and
consumers reject unknown keys, so silent config drift shows up as an
error with a line number instead of a quietly wrong experiment.

Record format: one record per line, space-separated `key=value` pairs.
Used for metric reports and decoded trajectory tracks.
"""

import re
from dataclasses import dataclass, field
from pathlib import Path

_KEY_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


class ConfigError(ValueError):
    """Config parse or schema violation; message carries file:line."""


@dataclass
class Section:
    name: str
    line: int
    entries: dict = field(default_factory=dict)  # key -> (raw value, line)


def parse_config(text: str, source: str = "<config>") -> list[Section]:
    """Parse config text into ordered sections.

    Keys appearing before any `[section]` header land in an unnamed
    preamble section. Section names may repeat (each occurrence is a
    separate Section). Duplicate keys within one section are errors.
    """
    sections = [Section(name="", line=0)]
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"{source}:{lineno}: unterminated section header")
            name = line[1:-1].strip()
            if not _KEY_RE.match(name):
                raise ConfigError(f"{source}:{lineno}: bad section name {name!r}")
            sections.append(Section(name=name, line=lineno))
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not _KEY_RE.match(key):
            raise ConfigError(f"{source}:{lineno}: bad key {key!r}")
        entries = sections[-1].entries
        if key in entries:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        entries[key] = (value, lineno)
    if not sections[0].entries:
        sections.pop(0)
    return sections


def load_config(path) -> list[Section]:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), source=str(path))


_MISSING = object()


class SectionView:
    """Consuming accessor over one Section; leftovers are unknown keys."""

    def __init__(self, section: Section, source: str = "<config>"):
        self._section = section
        self._source = source
        self._pending = dict(section.entries)

    @property
    def name(self) -> str:
        return self._section.name

    def _take(self, key, default):
        if key in self._pending:
            return self._pending.pop(key)
        if default is _MISSING:
            where = f"[{self.name}]" if self.name else "preamble"
            raise ConfigError(f"{self._source}: missing key {key!r} in {where}")
        return (None, None)

    def get_str(self, key, default=_MISSING) -> str:
        value, _ = self._take(key, default)
        return default if value is None else value

    def _convert(self, key, conv, default, kind):
        value, line = self._take(key, default)
        if value is None:
            return default
        try:
            return conv(value)
        except ValueError:
            raise ConfigError(
                f"{self._source}:{line}: key {key!r}: {value!r} is not a valid {kind}"
            ) from None

    def get_int(self, key, default=_MISSING) -> int:
        return self._convert(key, int, default, "integer")

    def get_float(self, key, default=_MISSING) -> float:
        return self._convert(key, float, default, "number")

    def get_bool(self, key, default=_MISSING) -> bool:
        def conv(v):
            low = v.lower()
            if low in ("true", "yes", "1"):
                return True
            if low in ("false", "no", "0"):
                return False
            raise ValueError(v)

        return self._convert(key, conv, default, "boolean")

    def get_choice(self, key, choices, default=_MISSING) -> str:
        value, line = self._take(key, default)
        if value is None:
            return default
        if value not in choices:
            raise ConfigError(
                f"{self._source}:{line}: key {key!r}: {value!r} not one of {sorted(choices)}"
            )
        return value

    def finish(self):
        """Reject any keys the schema did not consume."""
        if self._pending:
            key, (_, line) = next(iter(self._pending.items()))
            raise ConfigError(f"{self._source}:{line}: unknown key {key!r}")


def check_version(view: SectionView, expected: int = 1):
    got = view.get_int("version")
    if got != expected:
        raise ConfigError(f"{view._source}: unsupported version {got} (expected {expected})")


def format_config(sections: list[tuple[str, dict]]) -> str:
    """Render (name, {key: value}) pairs back into config text.

    Floats are rendered with repr() so they round-trip exactly.
    """
    lines = []
    for name, entries in sections:
        if name:
            lines.append(f"[{name}]")
        for key, value in entries.items():
            if isinstance(value, float):
                value = repr(value)
            lines.append(f"{key} = {value}")
        lines.append("")
    return "\n".join(lines)


def format_record(fields: dict) -> str:
    parts = []
    for key, value in fields.items():
        if isinstance(value, float):
            value = repr(value)
        text = str(value)
        if " " in text or "=" in text or "\n" in text:
            raise ValueError(f"record value for {key!r} may not contain spaces or '='")
        parts.append(f"{key}={text}")
    return " ".join(parts)


def parse_record(line: str) -> dict:
    fields = {}
    for part in line.split():
        key, _, value = part.partition("=")
        fields[key] = value
    return fields


def write_records(path, records: list[dict]):
    text = "".join(format_record(r) + "\n" for r in records)
    Path(path).write_text(text, encoding="utf-8")


def read_records(path) -> list[dict]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [parse_record(line) for line in lines if line.strip()]
