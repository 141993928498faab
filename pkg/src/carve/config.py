"""Debloat configuration file: parsing, rendering and validation.

The format is line oriented::

    # comment
    source = src
    output = build/debloated
    language = c
    tag = ///
    extensions = .c, .h
    markers = on

    [features]
    FeatureGroup_A
        Feature_G
        Feature_Y
    Feature_Z

    [debloat]
    Feature_Y

``key = value`` lines come first.  ``source`` may repeat.  Inside
``[features]`` each nesting level is exactly four spaces; ``[debloat]``
entries are flat.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

from carve.diagnostics import ERROR, CarveError, Diagnostic
from carve.feature_model import DuplicateFeature, FeatureHierarchy, FeatureNode
from carve.mapping_syntax import DEFAULT_TAG, FEATURE_NAME_RE

INDENT = 4
KEYS = ("source", "output", "language", "tag", "extensions", "markers")
DEFAULT_EXTENSIONS = {"c": frozenset({".c", ".h", ".cc", ".cpp", ".hpp"})}

__all__ = [
    "ConfigError",
    "ConfigSyntaxError",
    "DanglingIndent",
    "DebloatConfig",
    "DuplicateFeature",
    "MissingSection",
    "load_config",
    "parse_config",
    "render_config",
    "validate_config",
]


class ConfigError(CarveError):
    code = "ConfigError"


class ConfigSyntaxError(ConfigError):
    code = "SyntaxError"

    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line + 1}: {reason}", line)
        self.reason = reason


class DanglingIndent(ConfigError):
    code = "DanglingIndent"

    def __init__(self, line: int, name: str):
        super().__init__(f"line {line + 1}: {name!r} is indented more than one level below its parent", line)


class MissingSection(ConfigError):
    code = "MissingSection"

    def __init__(self, what: str):
        super().__init__(f"missing required {what!r}")
        self.what = what


@dataclass(frozen=True)
class DebloatConfig:
    sources: tuple[Path, ...]
    output_root: Path
    hierarchy: FeatureHierarchy
    debloat: frozenset[str] = frozenset()
    language: str = "c"
    tag: str = DEFAULT_TAG
    file_extensions: frozenset[str] | None = None
    emit_markers: bool = True
    # order of the [debloat] list as written, for rendering
    debloat_order: tuple[str, ...] = field(default=(), compare=False, repr=False)

    @property
    def source_root(self) -> Path:
        return self.sources[0]

    @property
    def extensions(self) -> frozenset[str]:
        if self.file_extensions is not None:
            return self.file_extensions
        return DEFAULT_EXTENSIONS.get(self.language, frozenset())


def _norm_ext(ext: str) -> str:
    ext = ext.strip()
    return ext if ext.startswith(".") else "." + ext


def _build_forest(entries: list[tuple[int, int, str]]) -> FeatureHierarchy:
    # entries: (line index, depth, name), depth already validated
    seen: dict[str, int] = {}
    stack: list[tuple[str, list]] = []
    roots: list = []
    for lineno, depth, name in entries:
        if name in seen:
            raise DuplicateFeature(name, lineno)
        seen[name] = lineno
        children: list = []
        del stack[depth:]
        (stack[-1][1] if stack else roots).append((name, children))
        stack.append((name, children))

    def freeze(items):
        return tuple(FeatureNode(n, freeze(c)) for n, c in items)

    return FeatureHierarchy(freeze(roots))


def parse_config(text: str, base_dir: str | os.PathLike | None = None) -> DebloatConfig:
    """Parse config text.  Relative paths are joined onto ``base_dir`` when given."""
    values: dict[str, str] = {}
    key_lines: dict[str, int] = {}
    sources: list[str] = []
    section = None
    sections_seen: set[str] = set()
    features: list[tuple[int, int, str]] = []
    debloat: list[str] = []
    prev_depth = -1

    for i, raw in enumerate(text.splitlines()):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if stripped in ("[features]", "[debloat]"):
            if raw != stripped:
                raise ConfigSyntaxError(i, "section header must start at column 0")
            section = stripped[1:-1]
            if section in sections_seen:
                raise ConfigSyntaxError(i, f"duplicate section [{section}]")
            sections_seen.add(section)
            continue
        if section is None:
            key, sep, value = raw.partition("=")
            key, value = key.strip(), value.strip()
            if not sep:
                raise ConfigSyntaxError(i, "expected 'key = value' before the first section")
            if key not in KEYS:
                raise ConfigSyntaxError(i, f"unknown key {key!r}")
            if not value:
                raise ConfigSyntaxError(i, f"empty value for {key!r}")
            if key == "source":
                sources.append(value)
            elif key in values:
                raise ConfigSyntaxError(i, f"duplicate key {key!r}")
            else:
                values[key] = value
                key_lines[key] = i
            continue

        body = raw.rstrip()
        if "\t" in body:
            raise ConfigSyntaxError(i, "tabs are not allowed in feature lists")
        name = body.lstrip(" ")
        indent = len(body) - len(name)
        if "=" in name and not FEATURE_NAME_RE.fullmatch(name):
            raise ConfigSyntaxError(i, "key = value lines must precede the first section")
        if not FEATURE_NAME_RE.fullmatch(name):
            raise ConfigSyntaxError(i, f"invalid feature name {name!r}")
        if indent % INDENT:
            raise ConfigSyntaxError(i, f"indentation must be a multiple of {INDENT} spaces")
        depth = indent // INDENT
        if section == "debloat":
            if depth:
                raise ConfigSyntaxError(i, "[debloat] entries must not be indented")
            debloat.append(name)
        else:
            if depth > prev_depth + 1:
                raise DanglingIndent(i, name)
            prev_depth = depth
            features.append((i, depth, name))

    if not sources:
        raise MissingSection("source")
    if "output" not in values:
        raise MissingSection("output")
    for sec in ("features", "debloat"):
        if sec not in sections_seen:
            raise MissingSection(f"[{sec}]")

    markers = values.get("markers", "on")
    if markers not in ("on", "off"):
        raise ConfigSyntaxError(key_lines["markers"], f"markers must be 'on' or 'off', not {markers!r}")
    tag = values.get("tag", DEFAULT_TAG)

    def as_path(p: str) -> Path:
        path = Path(p)
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        return path

    exts = None
    if "extensions" in values:
        exts = frozenset(_norm_ext(e) for e in values["extensions"].split(",") if e.strip())

    return DebloatConfig(
        sources=tuple(as_path(s) for s in sources),
        output_root=as_path(values["output"]),
        hierarchy=_build_forest(features),
        debloat=frozenset(debloat),
        language=values.get("language", "c"),
        tag=tag,
        file_extensions=exts,
        emit_markers=markers == "on",
        debloat_order=tuple(dict.fromkeys(debloat)),
    )


def load_config(path: str | os.PathLike) -> DebloatConfig:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), base_dir=path.parent)


def render_config(cfg: DebloatConfig) -> str:
    lines = [f"source = {s}" for s in cfg.sources]
    lines.append(f"output = {cfg.output_root}")
    lines.append(f"language = {cfg.language}")
    lines.append(f"tag = {cfg.tag}")
    if cfg.file_extensions is not None:
        lines.append("extensions = " + ", ".join(sorted(cfg.file_extensions)))
    lines.append("markers = " + ("on" if cfg.emit_markers else "off"))
    lines += ["", "[features]"]
    lines += [" " * (INDENT * depth) + node.name for depth, node in cfg.hierarchy.walk()]
    lines += ["", "[debloat]"]
    order = [n for n in cfg.debloat_order if n in cfg.debloat]
    order += sorted(cfg.debloat - set(order))
    lines += order
    return "\n".join(lines) + "\n"


def _inside(child: Path, parent: Path) -> bool:
    try:
        child.relative_to(parent)
    except ValueError:
        return False
    return True


def validate_config(cfg: DebloatConfig) -> list[Diagnostic]:
    """Check the invariants that need the filesystem or the language registry."""
    from carve.lang import LANGUAGES

    diags: list[Diagnostic] = []

    def add(code, msg):
        diags.append(Diagnostic(code, msg, severity=ERROR))

    for name in sorted(cfg.debloat - cfg.hierarchy.names()):
        add("UnknownFeature", f"debloat entry {name!r} is not in [features]")
    if cfg.language not in LANGUAGES:
        add("UnregisteredLanguage", f"no language module named {cfg.language!r} (available: {', '.join(sorted(LANGUAGES))})")
    try:
        from carve.mapping_syntax import check_tag

        check_tag(cfg.tag)
    except ValueError as e:
        add("InvalidTag", str(e))

    out = cfg.output_root.resolve()
    basenames: dict[str, Path] = {}
    for src in cfg.sources:
        if not src.is_dir():
            add("MissingSource", f"source root {str(src)!r} does not exist or is not a directory")
        if _inside(out, src.resolve()):
            add("OutputOverlapsSource", f"output {str(cfg.output_root)!r} is equal to or inside source {str(src)!r}")
        if len(cfg.sources) > 1:
            base = src.resolve().name
            if base in basenames:
                add("SourceNameClash", f"sources {str(basenames[base])!r} and {str(src)!r} share the directory name {base!r}")
            basenames[base] = src
    return diags
