"""Line-level lexer for feature-mapping comments.

A mapping occupies a whole line: optional indentation, the tag (``///`` by
default), then either a feature list ``[A][B]`` followed by an optional
operator, a lone ``~`` (segment terminator), a lone ``^`` (replacement
delimiter), or arbitrary text.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass

from carve.diagnostics import CarveError

DEFAULT_TAG = "///"

FEATURE_NAME_RE = re.compile(r"[A-Za-z0-9_]+")
_MARKER_RE = re.compile(r"\s*(File|Code Block|Case Label|Segment) Debloated\.\s*")


class MappingKind(enum.Enum):
    FILE = "file"  # `!`
    SEGMENT = "segment"  # `~`
    IMPLICIT = "implicit"  # no operator


_OPERATORS = {"!": MappingKind.FILE, "~": MappingKind.SEGMENT}


class MalformedMapping(CarveError):
    code = "MalformedMapping"


@dataclass(frozen=True)
class Open:
    features: tuple[str, ...]
    kind: MappingKind


@dataclass(frozen=True)
class Terminator:
    pass


@dataclass(frozen=True)
class ReplacementDelim:
    pass


@dataclass(frozen=True)
class TaggedText:
    text: str


@dataclass(frozen=True)
class Plain:
    pass


LineToken = Open | Terminator | ReplacementDelim | TaggedText | Plain

TERMINATOR = Terminator()
REPLACEMENT_DELIM = ReplacementDelim()
PLAIN = Plain()


def check_tag(tag: str) -> None:
    if not tag or any(c.isspace() for c in tag):
        raise ValueError(f"invalid tag {tag!r}: must be non-empty and contain no whitespace")


def _parse_feature_list(body: str) -> Open:
    features = []
    pos = 0
    while pos < len(body) and body[pos] == "[":
        close = body.find("]", pos + 1)
        if close < 0:
            raise MalformedMapping(f"unbalanced '[' in feature list {body!r}")
        name = body[pos + 1 : close]
        if not name:
            raise MalformedMapping("empty feature name")
        if not FEATURE_NAME_RE.fullmatch(name):
            raise MalformedMapping(f"illegal character in feature name {name!r}")
        features.append(name)
        pos = close + 1
    rest = body[pos:]
    if rest == "":
        return Open(tuple(features), MappingKind.IMPLICIT)
    if rest in _OPERATORS:
        return Open(tuple(features), _OPERATORS[rest])
    raise MalformedMapping(f"unexpected {rest!r} after feature list")


def classify_line(line: str, tag: str = DEFAULT_TAG) -> LineToken:
    """Classify one source line (no line terminator) as a mapping token.

    Raises MalformedMapping when the tag is followed by ``[`` but the
    feature list does not parse.
    """
    stripped = line.lstrip()
    if not stripped.startswith(tag):
        return PLAIN
    rest = stripped[len(tag) :]
    body = rest.rstrip()
    if body.startswith("["):
        return _parse_feature_list(body)
    if body == "~":
        return TERMINATOR
    if body == "^":
        return REPLACEMENT_DELIM
    return TaggedText(rest)


def strip_tag(line: str, tag: str = DEFAULT_TAG) -> str:
    """Drop the leading whitespace and the tag, keeping everything after it."""
    stripped = line.lstrip()
    return stripped[len(tag) :]


def leading_ws(line: str) -> str:
    return line[: len(line) - len(line.lstrip())]


def marker(tag: str, kind: str) -> str:
    return f"{tag} {kind} Debloated."


def is_marker_text(text: str) -> bool:
    """True for the payload of a generated ``<tag> <Kind> Debloated.`` line."""
    return _MARKER_RE.fullmatch(text) is not None
