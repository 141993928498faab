"""Per-file and aggregate debloating metrics, rendered as text or JSON.

The JSON document (``render(report, "json")``) has this shape, keys in
this order::

    {
      "schema": "carve-report/1",
      "totals": {files, loc_before, loc_after, lines_removed, lines_inserted,
                 functions_before, functions_after, functions_unavailable,
                 mappings_found: {file, segment, implicit},
                 mappings_fired: {file, segment, implicit},
                 diagnostics_count},
      "derived": {loc_reduction_pct, mean_file_loc_reduction_pct,
                  function_reduction_pct, mean_file_function_reduction_pct,
                  mapping_density_per_kloc, loc_increased},
      "external": {binary_size_reduction_pct: null, libraries_eliminated: null},
      "files": [{path, loc_before, loc_after, lines_removed, lines_inserted,
                 functions_before, functions_after, mappings_found,
                 mappings_fired, diagnostics: [...]}, ...]
    }

``functions_*`` totals only include files where both counts were
available; ``functions_unavailable`` counts the rest.  The ``external``
slots are left for tooling that builds the output tree.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields

from carve.diagnostics import Diagnostic

SCHEMA = "carve-report/1"
KINDS = ("file", "segment", "implicit")


def kind_counts() -> dict[str, int]:
    return dict.fromkeys(KINDS, 0)


@dataclass
class FileResult:
    path: str
    loc_before: int = 0
    loc_after: int = 0
    lines_removed: int = 0
    lines_inserted: int = 0
    functions_before: int | None = None
    functions_after: int | None = None
    mappings_found: dict[str, int] = field(default_factory=kind_counts)
    mappings_fired: dict[str, int] = field(default_factory=kind_counts)
    diagnostics: list[Diagnostic] = field(default_factory=list)
    # bookkeeping for a single run; not part of the JSON schema
    aborted: bool = field(default=False, compare=False, repr=False)
    fired_lines: frozenset[int] = field(default=frozenset(), compare=False, repr=False)
    consumed_lines: frozenset[int] = field(default=frozenset(), compare=False, repr=False)
    touched: tuple[tuple[int, int], ...] = field(default=(), compare=False, repr=False)

    def to_dict(self) -> dict:
        return {
            "path": self.path,
            "loc_before": self.loc_before,
            "loc_after": self.loc_after,
            "lines_removed": self.lines_removed,
            "lines_inserted": self.lines_inserted,
            "functions_before": self.functions_before,
            "functions_after": self.functions_after,
            "mappings_found": dict(self.mappings_found),
            "mappings_fired": dict(self.mappings_fired),
            "diagnostics": [d.to_dict() for d in self.diagnostics],
        }

    @classmethod
    def from_dict(cls, d: dict) -> FileResult:
        d = dict(d)
        d["diagnostics"] = [Diagnostic.from_dict(x) for x in d["diagnostics"]]
        return cls(**d)


def _add_counts(a: dict, b: dict) -> dict:
    return {k: a.get(k, 0) + b.get(k, 0) for k in KINDS}


@dataclass
class Totals:
    files: int = 0
    loc_before: int = 0
    loc_after: int = 0
    lines_removed: int = 0
    lines_inserted: int = 0
    functions_before: int = 0
    functions_after: int = 0
    functions_unavailable: int = 0
    mappings_found: dict[str, int] = field(default_factory=kind_counts)
    mappings_fired: dict[str, int] = field(default_factory=kind_counts)
    diagnostics_count: int = 0

    @classmethod
    def of(cls, r: FileResult) -> Totals:
        have_funcs = r.functions_before is not None and r.functions_after is not None
        return cls(
            files=1,
            loc_before=r.loc_before,
            loc_after=r.loc_after,
            lines_removed=r.lines_removed,
            lines_inserted=r.lines_inserted,
            functions_before=r.functions_before if have_funcs else 0,
            functions_after=r.functions_after if have_funcs else 0,
            functions_unavailable=0 if have_funcs else 1,
            mappings_found=dict(r.mappings_found),
            mappings_fired=dict(r.mappings_fired),
            diagnostics_count=len(r.diagnostics),
        )

    def __add__(self, other: Totals) -> Totals:
        out = {}
        for f in fields(self):
            a, b = getattr(self, f.name), getattr(other, f.name)
            out[f.name] = _add_counts(a, b) if isinstance(a, dict) else a + b
        return Totals(**out)

    def to_dict(self) -> dict:
        return {f.name: (dict(v) if isinstance(v := getattr(self, f.name), dict) else v) for f in fields(self)}

    @property
    def mappings_found_total(self) -> int:
        return sum(self.mappings_found.values())

    @property
    def mappings_fired_total(self) -> int:
        return sum(self.mappings_fired.values())


def _pct(before: int, after: int) -> float:
    return 100.0 * (before - after) / before if before > 0 else 0.0


def _mean(values: list[float]) -> float:
    return sum(values) / len(values) if values else 0.0


@dataclass
class DebloatReport:
    files: list[FileResult] = field(default_factory=list)
    totals: Totals = field(default_factory=Totals)

    @property
    def diagnostics(self) -> list[Diagnostic]:
        return [d for f in self.files for d in f.diagnostics]

    @property
    def derived(self) -> dict:
        t = self.totals
        with_loc = [f for f in self.files if f.loc_before > 0]
        with_funcs = [
            f for f in self.files if f.functions_before and f.functions_after is not None
        ]
        return {
            "loc_reduction_pct": _pct(t.loc_before, t.loc_after),
            "mean_file_loc_reduction_pct": _mean([_pct(f.loc_before, f.loc_after) for f in with_loc]),
            "function_reduction_pct": _pct(t.functions_before, t.functions_after),
            "mean_file_function_reduction_pct": _mean(
                [_pct(f.functions_before, f.functions_after) for f in with_funcs]
            ),
            "mapping_density_per_kloc": 1000.0 * t.mappings_found_total / t.loc_before if t.loc_before else 0.0,
            "loc_increased": t.loc_after > t.loc_before,
        }

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "totals": self.totals.to_dict(),
            "derived": self.derived,
            "external": {"binary_size_reduction_pct": None, "libraries_eliminated": None},
            "files": [f.to_dict() for f in self.files],
        }


def aggregate(results) -> DebloatReport:
    files = sorted(results, key=lambda r: r.path)
    totals = Totals()
    for r in files:
        totals = totals + Totals.of(r)
    return DebloatReport(files, totals)


def report_from_json(text: str) -> DebloatReport:
    doc = json.loads(text)
    if doc.get("schema") != SCHEMA:
        raise ValueError(f"unsupported report schema {doc.get('schema')!r}")
    return DebloatReport([FileResult.from_dict(f) for f in doc["files"]], Totals(**doc["totals"]))


def _fmt_funcs(v) -> str:
    return "-" if v is None else str(v)


def render_text(report: DebloatReport) -> str:
    t, d = report.totals, report.derived
    total_label = f"total ({t.files} files)"
    width = max([len(total_label)] + [len(f.path) for f in report.files])
    header = f"{'path':<{width}}  {'LOC before':>10}  {'LOC after':>9}  {'LOC red.':>8}  {'fn before':>9}  {'fn after':>8}  {'fired/found':>11}"
    out = [header, "-" * len(header)]
    for f in report.files:
        fired = sum(f.mappings_fired.values())
        found = sum(f.mappings_found.values())
        out.append(
            f"{f.path:<{width}}  {f.loc_before:>10}  {f.loc_after:>9}  "
            f"{_pct(f.loc_before, f.loc_after):>7.1f}%  {_fmt_funcs(f.functions_before):>9}  "
            f"{_fmt_funcs(f.functions_after):>8}  {f'{fired}/{found}':>11}"
        )
    out.append("-" * len(header))
    out.append(
        f"{total_label:<{width}}  {t.loc_before:>10}  {t.loc_after:>9}  "
        f"{d['loc_reduction_pct']:>7.1f}%  {t.functions_before:>9}  {t.functions_after:>8}  "
        f"{f'{t.mappings_fired_total}/{t.mappings_found_total}':>11}"
    )
    out.append("")
    out.append(f"{t.files} files")
    out.append(
        f"LOC reduction: {d['loc_reduction_pct']:.1f}% pooled, {d['mean_file_loc_reduction_pct']:.1f}% mean per file"
    )
    out.append(
        f"Function count reduction: {d['function_reduction_pct']:.1f}% pooled, "
        f"{d['mean_file_function_reduction_pct']:.1f}% mean per file"
    )
    if t.functions_unavailable:
        out.append(f"Function counts unavailable for {t.functions_unavailable} files")
    fired = ", ".join(f"{k} {t.mappings_fired[k]}/{t.mappings_found[k]}" for k in KINDS)
    out.append(f"Mappings fired/found: {fired}")
    out.append(f"Mapping density: {d['mapping_density_per_kloc']:.1f} m/KLOC")
    if d["loc_increased"]:
        out.append("Note: replacement code made the output longer than the input")
    if t.diagnostics_count:
        out.append(f"{t.diagnostics_count} diagnostics (see lint output)")
    return "\n".join(out) + "\n"


def render(report: DebloatReport, fmt: str = "text") -> str:
    if fmt == "text":
        return render_text(report)
    if fmt in ("json", "machine"):
        return json.dumps(report.to_dict(), indent=2) + "\n"
    raise ValueError(f"unknown report format {fmt!r}")
