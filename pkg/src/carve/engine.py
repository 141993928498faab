"""Debloating engine: mapping scan, edit planning, tree copy and lint."""

from __future__ import annotations

import logging
import os
import shutil
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from carve.config import DebloatConfig
from carve.diagnostics import ERROR, WARNING, CarveError, Diagnostic
from carve.feature_model import close_removal_set, mapping_fires
from carve.lang import get_language
from carve.mapping_syntax import (
    DEFAULT_TAG,
    MalformedMapping,
    MappingKind,
    Open,
    ReplacementDelim,
    TaggedText,
    Terminator,
    classify_line,
    is_marker_text,
    leading_ws,
    marker,
    strip_tag,
)
from carve.report import DebloatReport, FileResult, aggregate, kind_counts

log = logging.getLogger(__name__)

FILE, SEGMENT, IMPLICIT = MappingKind.FILE, MappingKind.SEGMENT, MappingKind.IMPLICIT


@dataclass
class Mapping:
    kind: MappingKind
    features: tuple[str, ...]
    line: int
    end_line: int | None = None  # terminator line, segments only
    replacement: list[str] | None = None  # output lines, segments only


@dataclass
class MappingScan:
    mappings: list[Mapping] = field(default_factory=list)
    diagnostics: list[Diagnostic] = field(default_factory=list)
    found: dict[str, int] = field(default_factory=kind_counts)

    @property
    def errors(self) -> list[Diagnostic]:
        return [d for d in self.diagnostics if d.is_error]

    def segments(self) -> list[Mapping]:
        return [m for m in self.mappings if m.kind is SEGMENT and m.end_line is not None]


@dataclass
class Edit:
    start: int  # first input line replaced
    end: int  # last input line replaced, inclusive
    lines: list[str]
    mappings: list[int]  # lines of the mappings this edit applies

    @property
    def key(self):
        return self.start, self.end, tuple(self.lines)


class EditConflict(CarveError):
    code = "OverlappingEdits"


def _diag(code, message, path, line, severity=ERROR) -> Diagnostic:
    return Diagnostic(code, message, path, None if line is None else line + 1, severity)


def _classify(line, tag):
    try:
        return classify_line(line, tag)
    except MalformedMapping:
        return None


def scan_mappings(lines, tag: str = DEFAULT_TAG, path: str | None = None) -> MappingScan:
    """Lex every line and pair up segments, terminators and replacement blocks."""
    scan = MappingScan()
    add = scan.diagnostics.append
    open_seg: Mapping | None = None
    n = len(lines)
    i = 0
    while i < n:
        try:
            tok = classify_line(lines[i], tag)
        except MalformedMapping as e:
            add(_diag(e.code, e.message, path, i))
            i += 1
            continue
        if isinstance(tok, Open):
            scan.found[tok.kind.value] += 1
            m = Mapping(tok.kind, tok.features, i)
            nxt = _classify(lines[i + 1], tag) if i + 1 < n else None
            if tok.kind is not SEGMENT:
                scan.mappings.append(m)
                if isinstance(nxt, ReplacementDelim):
                    add(_diag("ReplacementOnNonSegment", "replacement blocks are only allowed after segment mappings", path, i + 1))
                    i += 2
                    continue
                i += 1
                continue
            if open_seg is not None:
                add(_diag("NestedSegment", f"segment mapping inside the segment opened at line {open_seg.line + 1}", path, i))
                i += 1
                continue
            open_seg = m
            scan.mappings.append(m)
            i += 1
            if isinstance(nxt, ReplacementDelim):
                block = []
                j = i + 1
                while j < n:
                    t = _classify(lines[j], tag)
                    if not isinstance(t, TaggedText):
                        break
                    block.append(leading_ws(lines[j]) + strip_tag(lines[j], tag))
                    j += 1
                if j < n and isinstance(_classify(lines[j], tag), ReplacementDelim):
                    m.replacement = block
                    i = j + 1
                else:
                    add(_diag("UnbalancedReplacementDelims", "replacement block is never closed with a second delimiter", path, i))
                    i = j
            continue
        if isinstance(tok, Terminator):
            if open_seg is None:
                add(_diag("StrayTerminator", "termination tag without an open segment mapping", path, i))
            else:
                open_seg.end_line = i
                open_seg = None
        elif isinstance(tok, ReplacementDelim):
            add(_diag("UnbalancedReplacementDelims", "replacement delimiter outside a replacement block", path, i))
        elif isinstance(tok, TaggedText) and not is_marker_text(tok.text):
            add(_diag("SuspiciousTaggedText", "tagged line is neither a mapping nor replacement code", path, i, WARNING))
        i += 1
    if open_seg is not None:
        add(_diag("UnterminatedSegment", "segment mapping has no termination tag", path, open_seg.line))
    return scan


# --- edit construction ------------------------------------------------------------


def _splice(lines, start, end, middle, indent):
    """Replacement lines for the character span [start, end] of ``lines``."""
    head = lines[start.line][: start.col]
    tail = lines[end.line][end.col + 1 :]
    out = []
    if head.strip():
        out.append(head.rstrip())
    out.extend(middle)
    if tail.strip():
        out.append(indent + tail.strip())
    return out


def plan_edits(lines, mapping: Mapping, group_first: int, plan, lang, tag: str, emit_markers: bool) -> list[Edit]:
    """Turn a language RemovalPlan for one fired implicit mapping into line edits."""
    ml = [mapping.line]

    def markers(kind, indent):
        return [indent + marker(tag, kind)] if emit_markers else []

    if isinstance(plan, lang.WholeExtent):
        s, e = plan.extent
        indent = leading_ws(lines[s.line])
        body = _splice(lines, s, e, markers("Code Block", indent), indent)
        if not lines[s.line][: s.col].strip():
            return [Edit(group_first, e.line, body, ml)]
        return [Edit(group_first, s.line - 1, [], ml), Edit(s.line, e.line, body, ml)]

    drop_mapping = Edit(mapping.line, mapping.line, [], ml)
    if isinstance(plan, lang.LabelOnly):
        s, e = plan.label
        indent = leading_ws(lines[s.line])
        return [drop_mapping, Edit(s.line, e.line, _splice(lines, s, e, markers("Case Label", indent), indent), ml)]

    if isinstance(plan, lang.EmptyBody):
        s, e = plan.body
        mark = marker(tag, "Code Block")
        if plan.braced:
            head = lines[s.line][: s.col + 1]
            tail = lines[e.line][e.col :]
            tail_indent = leading_ws(lines[s.line] if s.line == e.line else lines[e.line])
            if emit_markers:
                new = [f"{head} {mark}", tail_indent + tail]
            elif s.line == e.line:
                new = [f"{head} {tail}"]
            else:
                new = [head, tail_indent + tail]
        else:
            head = lines[s.line][: s.col]
            tail = lines[e.line][e.col + 1 :].strip()
            prefix = head.rstrip() + " " if head.strip() else head
            after = " " + tail if tail else ""
            if emit_markers:
                new = [f"{prefix}{{ {mark}", leading_ws(lines[s.line]) + "}" + after]
            else:
                new = [f"{prefix}{{ }}{after}"]
        return [drop_mapping, Edit(s.line, e.line, new, ml)]

    raise TypeError(f"unknown removal plan {plan!r}")


def resolve_edits(edits: list[Edit]) -> tuple[list[Edit], set[int]]:
    """Drop edits nested inside earlier ones.  Returns (kept edits, consumed mapping lines)."""
    edits = sorted(edits, key=lambda e: (e.start, -e.end))
    kept: list[Edit] = []
    consumed: set[int] = set()
    for e in edits:
        if kept and e.start <= kept[-1].end:
            last = kept[-1]
            if e.end > last.end:
                raise EditConflict(f"edits for lines {last.start + 1}-{last.end + 1} and {e.start + 1}-{e.end + 1} overlap", e.start)
            if e.key == last.key:
                last.mappings.extend(m for m in e.mappings if m not in last.mappings)
            elif e.lines:
                consumed.update(e.mappings)
            # a bare deletion inside another edit is already done by it
            continue
        kept.append(e)
    applied = {m for e in kept for m in e.mappings}
    consumed |= {m for e in edits for m in e.mappings} - applied
    partial = applied & consumed
    if partial:
        line = min(partial)
        raise EditConflict("mapping is only partly covered by an enclosing removal", line)
    return kept, consumed


def trim_edit(lines, e: Edit) -> Edit:
    """Shrink an edit past boundary lines it reproduces verbatim."""
    new = list(e.lines)
    start, end = e.start, e.end
    while new and start <= end and new[-1] == lines[end]:
        new.pop()
        end -= 1
    while new and start <= end and new[0] == lines[start]:
        new.pop(0)
        start += 1
    return Edit(start, end, new, e.mappings)


def apply_edits(lines, edits: list[Edit]) -> list[str]:
    out: list[str] = []
    pos = 0
    for e in edits:
        out.extend(lines[pos : e.start])
        out.extend(e.lines)
        pos = e.end + 1
    out.extend(lines[pos:])
    return out


def _crossing(span: tuple[int, int], segments: list[Mapping]) -> Mapping | None:
    lo, hi = span
    for seg in segments:
        if (lo <= seg.line <= hi) != (lo <= seg.end_line <= hi):
            return seg
    return None


def _group_first(scan: MappingScan, mapping: Mapping, lang, src) -> int:
    """First line of the run of implicit mappings sharing this mapping's construct."""
    before, after = lang.code_gap(src, mapping.line)
    return min(m.line for m in scan.mappings if m.kind is IMPLICIT and before < m.line < after)


# --- per-file debloating ------------------------------------------------------------


def _safe_count(lang, src):
    if src is None:
        return None
    try:
        return lang.count_functions(src)
    except lang.AnalysisError:
        return None


def _abort(lines, result: FileResult, diags) -> tuple[list[str], FileResult]:
    result.loc_after = result.loc_before
    result.diagnostics = list(diags)
    result.aborted = True
    return list(lines), result


def debloat_file(
    lines,
    removal,
    lang=None,
    *,
    emit_markers: bool = True,
    tag: str = DEFAULT_TAG,
    path: str | None = None,
) -> tuple[list[str], FileResult]:
    """Debloat one file given as a list of lines without terminators.

    On any error the input comes back unchanged and the result carries the
    diagnostics.
    """
    if lang is None:
        lang = get_language("c")
    lines = list(lines)
    scan = scan_mappings(lines, tag, path)
    result = FileResult(path or "", loc_before=len(lines), mappings_found=dict(scan.found))

    try:
        src = lang.parse(lines, tag)
        parse_error = None
    except lang.AnalysisError as e:
        src, parse_error = None, e
    result.functions_before = _safe_count(lang, src)

    errors = scan.errors
    for m in scan.mappings:
        if m.kind is FILE and mapping_fires(m.features, removal):
            if any(d.lineno <= m.line + 1 for d in errors):
                break
            out = [marker(tag, "File")] if emit_markers else []
            result.loc_after = len(out)
            result.lines_removed = len(lines)
            result.lines_inserted = len(out)
            result.mappings_fired[FILE.value] = 1
            result.fired_lines = frozenset({m.line})
            result.consumed_lines = frozenset(x.line for x in scan.mappings if x is not m)
            result.touched = ((0, len(lines) - 1),) if lines else ()
            result.functions_after = 0
            return out, result
    if errors:
        return _abort(lines, result, errors)

    kinds = {m.line: m.kind for m in scan.mappings}
    edits: list[Edit] = []
    for m in scan.segments():
        if mapping_fires(m.features, removal):
            new = m.replacement or (
                [leading_ws(lines[m.line]) + marker(tag, "Segment")] if emit_markers else []
            )
            edits.append(Edit(m.line, m.end_line, new, [m.line]))

    fired_implicit = [m for m in scan.mappings if m.kind is IMPLICIT and mapping_fires(m.features, removal)]
    if fired_implicit:
        if src is None:
            return _abort(lines, result, [Diagnostic.from_error(parse_error, path)])
        try:
            edits += _implicit_edits(lines, scan, fired_implicit, lang, src, tag, emit_markers, path)
        except CarveError as e:
            return _abort(lines, result, [Diagnostic.from_error(e, path)])

    try:
        kept, consumed = resolve_edits(edits)
    except EditConflict as e:
        return _abort(lines, result, [Diagnostic.from_error(e, path)])

    applied = {m for e in kept for m in e.mappings}
    for line in applied:
        result.mappings_fired[kinds[line].value] += 1
    result.fired_lines = frozenset(applied)
    result.consumed_lines = frozenset(consumed)
    result.touched = tuple((e.start, e.end) for e in kept)
    result.lines_removed = sum(e.end - e.start + 1 for e in kept)
    result.lines_inserted = sum(len(e.lines) for e in kept)
    if not kept:
        result.loc_after = len(lines)
        result.functions_after = result.functions_before
        return lines, result
    out = apply_edits(lines, kept)
    result.loc_after = len(out)
    try:
        result.functions_after = _safe_count(lang, lang.parse(out, tag))
    except lang.AnalysisError:
        result.functions_after = None
    return out, result


def _implicit_edits(lines, scan, fired, lang, src, tag, emit_markers, path) -> list[Edit]:
    segments = scan.segments()
    analysed = []
    for m in fired:
        try:
            kind, anchor = lang.classify_construct(src, m.line)
            extent = lang.construct_extent(src, kind, anchor)
        except lang.AnalysisError as e:
            if e.line is None or isinstance(e, lang.NothingToMap):
                e.line = m.line
            raise
        analysed.append((m, kind, anchor, extent))
    fired_labels = {a for _, k, a, _ in analysed if k is lang.ConstructKind.SWITCH_CASE}

    edits = []
    for m, kind, anchor, extent in analysed:
        if kind is lang.ConstructKind.SWITCH_CASE:
            plan = lang.plan_switch_case(src, extent, lang.enclosing_switch(src, anchor), fired_labels)
        elif kind in lang.CONDITIONAL_KINDS:
            plan = lang.plan_conditional(src, kind, extent)
        else:
            plan = lang.WholeExtent(extent)
        if isinstance(plan, lang.WholeExtent) and lang.needs_placeholder(src, plan.extent):
            plan = lang.EmptyBody(plan.extent, braced=False)
        group_first = _group_first(scan, m, lang, src) if isinstance(plan, lang.WholeExtent) else m.line
        new = [trim_edit(lines, e) for e in plan_edits(lines, m, group_first, plan, lang, tag, emit_markers)]
        new = [e for e in new if e.start <= e.end or e.lines]
        span = (min(e.start for e in new), max(e.end for e in new))
        seg = _crossing(span, segments)
        if seg is not None:
            raise CrossesSegment(
                f"construct mapped here crosses the segment opened at line {seg.line + 1}", m.line
            )
        edits += new
    return edits


class CrossesSegment(CarveError):
    code = "ConstructCrossesSegment"


# --- tree operations ----------------------------------------------------------------


def read_lines(data: bytes) -> tuple[list[str], str, bool]:
    """Split file bytes into (lines, newline, ends_with_newline)."""
    text = data.decode("utf-8", errors="surrogateescape")
    newline = "\r\n" if "\r\n" in text else "\n"
    trailing = text.endswith("\n")
    body = text[:-1] if trailing else text
    lines = body.split("\n") if text else []
    if newline == "\r\n":
        lines = [ln[:-1] if ln.endswith("\r") else ln for ln in lines]
    return lines, newline, trailing


def join_lines(lines, newline: str = "\n", trailing: bool = True) -> bytes:
    if not lines:
        return b""
    text = newline.join(lines) + (newline if trailing else "")
    return text.encode("utf-8", errors="surrogateescape")


def count_lines(data: bytes) -> int:
    """Physical line count of file contents."""
    if not data:
        return 0
    return data.count(b"\n") + (0 if data.endswith(b"\n") else 1)


@dataclass(frozen=True)
class FileTask:
    src: str
    dest: str
    display: str
    removal: frozenset[str]
    language: str
    tag: str
    emit_markers: bool
    write: bool


def process_file(task: FileTask) -> FileResult:
    try:
        data = Path(task.src).read_bytes()
    except OSError as e:
        return FileResult(task.display, diagnostics=[Diagnostic("IOError", str(e), task.display)])
    lines, newline, trailing = read_lines(data)
    lang = get_language(task.language)
    out, result = debloat_file(
        lines, task.removal, lang, emit_markers=task.emit_markers, tag=task.tag, path=task.display
    )
    result.path = task.display
    unchanged = result.aborted or not result.touched
    payload = data if unchanged else join_lines(out, newline, trailing or not lines)
    if task.write:
        try:
            dest = Path(task.dest)
            dest.parent.mkdir(parents=True, exist_ok=True)
            dest.write_bytes(payload)
        except OSError as e:
            result.diagnostics.append(Diagnostic("IOError", str(e), task.display))
    return result


def iter_source_files(cfg: DebloatConfig):
    """Yield (source file, destination file, display path) for every file under the source roots."""
    multi = len(cfg.sources) > 1
    for root in cfg.sources:
        prefix = Path(root.resolve().name) if multi else Path()
        for dirpath, dirnames, filenames in os.walk(root):
            dirnames.sort()
            for fname in sorted(filenames):
                full = Path(dirpath) / fname
                rel = prefix / full.relative_to(root)
                yield full, cfg.output_root / rel, rel.as_posix()


def debloat_tree(
    cfg: DebloatConfig,
    *,
    jobs: int = 1,
    write: bool = True,
    emit_markers: bool | None = None,
) -> DebloatReport:
    """Copy the source tree to the output root, debloating every scanned file.

    With ``write=False`` nothing touches the filesystem (dry run).
    """
    removal = close_removal_set(cfg.hierarchy, cfg.debloat)
    markers_on = cfg.emit_markers if emit_markers is None else emit_markers
    if write:
        cfg.output_root.mkdir(parents=True, exist_ok=True)
    tasks = []
    copy_errors = []
    for src, dest, display in iter_source_files(cfg):
        if src.suffix in cfg.extensions:
            tasks.append(
                FileTask(str(src), str(dest), display, removal, cfg.language, cfg.tag, markers_on, write)
            )
        elif write:
            try:
                dest.parent.mkdir(parents=True, exist_ok=True)
                shutil.copyfile(src, dest)
            except OSError as e:
                copy_errors.append(Diagnostic("IOError", str(e), display))
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(process_file, tasks, chunksize=max(1, len(tasks) // (jobs * 4))))
    else:
        results = [process_file(t) for t in tasks]
    for d in copy_errors:
        results.append(FileResult(d.path, diagnostics=[d]))
    log.debug("debloated %d files", len(tasks))
    return aggregate(results)


def lint_lines(lines, cfg_hierarchy, lang, tag: str = DEFAULT_TAG, path: str | None = None) -> list[Diagnostic]:
    scan = scan_mappings(lines, tag, path)
    diags = list(scan.diagnostics)
    for m in scan.mappings:
        for f in m.features:
            if cfg_hierarchy is not None and f not in cfg_hierarchy:
                diags.append(_diag("UnknownFeatureInMapping", f"feature {f!r} is not in the configured hierarchy", path, m.line, WARNING))
    implicit = [m for m in scan.mappings if m.kind is IMPLICIT]
    if not implicit:
        return diags
    try:
        src = lang.parse(lines, tag)
    except lang.AnalysisError as e:
        diags.append(Diagnostic.from_error(e, path))
        return diags
    segments = scan.segments()
    structural = {
        m.line for m in scan.mappings if m.kind is not IMPLICIT
    } | {m.end_line for m in segments}
    for m in implicit:
        try:
            kind, anchor = lang.classify_construct(src, m.line)
            extent = lang.construct_extent(src, kind, anchor)
            if kind is lang.ConstructKind.SWITCH_CASE:
                lang.plan_switch_case(src, extent, lang.enclosing_switch(src, anchor), {anchor})
            elif kind in lang.CONDITIONAL_KINDS:
                lang.plan_conditional(src, kind, extent)
        except lang.AnalysisError as e:
            where = f" (at line {e.line + 1})" if e.line is not None and e.line != m.line else ""
            diags.append(_diag(e.code, f"cannot analyse the construct after this mapping: {e.message}{where}", path, m.line))
            continue
        if any(m.line < s < anchor.line for s in structural):
            diags.append(_diag("MappingSeparatedFromConstruct", "another structural mapping tag sits between this mapping and its construct", path, m.line, WARNING))
        for d in lang.conditional_directives(src, extent):
            diags.append(_diag("PreprocessorInConstruct", f"{d.text} inside the mapped {kind.value}; the removal ignores preprocessor structure", path, m.line, WARNING))
            break
        seg = _crossing((m.line, extent.end.line), segments)
        if seg is not None:
            diags.append(_diag("ConstructCrossesSegment", f"mapped {kind.value} crosses the segment opened at line {seg.line + 1}", path, m.line))
    return sorted(diags, key=lambda d: (d.lineno or 0, d.code))


def lint_tree(cfg: DebloatConfig) -> list[Diagnostic]:
    """Report mapping errors across the source tree without writing anything."""
    lang = get_language(cfg.language)
    diags: list[Diagnostic] = []
    for src, _dest, display in iter_source_files(cfg):
        if src.suffix not in cfg.extensions:
            continue
        try:
            data = src.read_bytes()
        except OSError as e:
            diags.append(Diagnostic("IOError", str(e), display))
            continue
        lines, _, _ = read_lines(data)
        diags += lint_lines(lines, cfg.hierarchy, lang, cfg.tag, display)
    return diags
