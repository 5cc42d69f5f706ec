"""Render query and analytics results into a directory of CSV, JSON and markdown.

The report layer only formats: every number it writes comes straight from a
query or analytics call, printed with 6 significant digits.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Any, Optional, Sequence

from .analytics import (
    MatchParams,
    WeeklySeries,
    annotate_with_calendar,
    compliance_series,
    match_controls,
    naics_name,
    outbreak_trend_compare,
    read_outbreak_roster,
    sampling_rate,
    weekly_category_series,
)
from .model import MN_CALENDAR, PolicyCalendar, PopulationTable, SocialDistancingRecord, WarehouseError, parse_date
from .queries import q2_top_categories, q3_top_hangouts
from .warehouse import DEFAULT_SUPPRESSION_THRESHOLD, Warehouse

log = logging.getLogger(__name__)

SECTION_TYPES = (
    "top_categories", "hangouts", "category_series", "compliance", "sampling_rate", "outbreak_compare",
)
_SERIES_SECTIONS = {"category_series", "compliance", "outbreak_compare"}


class ReportError(WarehouseError):
    pass


class SpecError(ReportError, ValueError):
    """The report spec is malformed."""


def fmt(value: Any) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return format(value, ".6g")
    return str(value)


def _num(value: Any) -> Any:
    """JSON-ready number printed at 6 significant digits."""
    return float(format(value, ".6g")) if isinstance(value, float) else value


@dataclass(frozen=True)
class Section:
    type: str
    params: dict


@dataclass(frozen=True)
class ReportSpec:
    title: str
    start: date
    end: date
    sections: tuple[Section, ...]
    calendar_path: Optional[Path] = None
    suppress_threshold: int = DEFAULT_SUPPRESSION_THRESHOLD
    base_dir: Path = field(default_factory=Path)

    def __post_init__(self):
        if not self.sections:
            raise SpecError("a report needs at least one section")
        if self.start > self.end:
            raise SpecError("report start is after end")
        for s in self.sections:
            if s.type not in SECTION_TYPES:
                raise SpecError(f"unknown section type {s.type!r}")

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p

    @classmethod
    def from_dict(cls, data: dict, base_dir: Path | str = ".") -> "ReportSpec":
        try:
            sections = tuple(
                Section(s["type"], {k: v for k, v in s.items() if k != "type"}) for s in data["sections"]
            )
            return cls(
                title=data.get("title", "Mobility report"),
                start=parse_date(data["start"]),
                end=parse_date(data["end"]),
                sections=sections,
                calendar_path=Path(data["calendar"]) if data.get("calendar") else None,
                suppress_threshold=int(data.get("suppress_threshold", DEFAULT_SUPPRESSION_THRESHOLD)),
                base_dir=Path(base_dir),
            )
        except (KeyError, TypeError, ValueError) as e:
            if isinstance(e, SpecError):
                raise
            raise SpecError(f"malformed report spec: {e!r}") from e

    @classmethod
    def from_json(cls, path: str | Path) -> "ReportSpec":
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise SpecError(f"{path}: {e}") from e
        if not isinstance(data, dict):
            raise SpecError(f"{path}: top level must be a JSON object")
        return cls.from_dict(data, path.parent)


@dataclass(frozen=True)
class ReportBundle:
    directory: Path
    files: tuple[Path, ...]


@dataclass
class _Rendered:
    filename: str
    content: str
    heading: str
    headline: list[str]


def _csv(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows([fmt(v) for v in row] for row in rows)
    return buf.getvalue()


def _series_json(series: Sequence[WeeklySeries], **extra) -> str:
    doc = {
        "series": [
            {
                "label": s.label,
                "points": [{"week_start": d.isoformat(), "value": _num(v)} for d, v in s.points],
                "annotations": [{"date": d.isoformat(), "label": t} for d, t in s.annotations],
            }
            for s in series
        ],
        **extra,
    }
    return json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def _peak(series: WeeklySeries) -> str:
    if not series.points:
        return f"{series.label}: no data"
    week, value = max(series.points, key=lambda p: (p[1], -p[0].toordinal()))
    return f"{series.label}: peak {fmt(value)} in week of {week.isoformat()}"


class _Context:
    def __init__(self, wh: Warehouse, sd: Optional[Sequence[SocialDistancingRecord]], spec: ReportSpec):
        self.wh, self.sd, self.spec = wh, sd, spec
        self.calendar = PolicyCalendar.from_csv(spec.resolve(str(spec.calendar_path))) if spec.calendar_path else MN_CALENDAR

    def need_sd(self) -> Sequence[SocialDistancingRecord]:
        if self.sd is None:
            raise ReportError("no social-distancing records were loaded")
        return self.sd


def _top_categories(ctx: _Context, p: dict) -> _Rendered:
    k = int(p.get("k", 10))
    ranked = q2_top_categories(ctx.wh, ctx.spec.start, ctx.spec.end, k)
    rows = [(i, code, naics_name(code), v) for i, (code, v) in enumerate(ranked.rows, 1)]
    head = [f"{naics_name(code)} ({code}): {fmt(v)} visits" for code, v in ranked.rows[:3]] or ["no visits in range"]
    return _Rendered("top_categories.csv", _csv(["rank", "naics_code", "category", "visits"], rows),
                     f"Top categories by visits (k={k})", head)


def _hangouts(ctx: _Context, p: dict) -> _Rendered:
    naics, k = int(p["naics"]), int(p.get("k", 10))
    ranked = q3_top_hangouts(ctx.wh, naics, p.get("state"), ctx.spec.start, ctx.spec.end, k)
    rows = [(i, pid, ctx.wh.pois[pid].location_name, v) for i, (pid, v) in enumerate(ranked.rows, 1)]
    head = [f"{ctx.wh.pois[pid].location_name} ({pid}): {fmt(v)} long visits" for pid, v in ranked.rows[:3]]
    return _Rendered("hangouts.csv",
                     _csv(["rank", "place_id", "location_name", "long_duration_visits"], rows),
                     f"Hangouts: {naics_name(naics)} by visits over 20 minutes (k={k})",
                     head or ["no matching places"])


def _category_series(ctx: _Context, p: dict) -> _Rendered:
    cats = [int(c) for c in p["categories"]]
    dwell_filter = p.get("dwell_filter", "long_only")
    series = [annotate_with_calendar(s, ctx.calendar)
              for s in weekly_category_series(ctx.wh, cats, dwell_filter, ctx.spec.start, ctx.spec.end)]
    return _Rendered("category_series.json", _series_json(series, dwell_filter=dwell_filter),
                     f"Weekly visits by category ({dwell_filter})",
                     [f"{naics_name(s.label)} - {_peak(s)}" for s in series])


def _compliance(ctx: _Context, p: dict) -> _Rendered:
    metric = p.get("metric", "time_at_home")
    aggregation = p.get("aggregation", "median_of_medians")
    s = compliance_series(ctx.need_sd(), metric, aggregation, ctx.spec.start, ctx.spec.end,
                          suppress_threshold=ctx.spec.suppress_threshold)
    s = annotate_with_calendar(s, ctx.calendar)
    return _Rendered("compliance.json", _series_json([s]), f"Stay-at-home compliance: {metric}", [_peak(s)])


def _sampling_rate(ctx: _Context, p: dict) -> _Rendered:
    level = p.get("level", "tract")
    population = PopulationTable.from_csv(ctx.spec.resolve(p["population"]))
    result = sampling_rate(ctx.need_sd(), population, level, (ctx.spec.start, ctx.spec.end))
    rows = [(region, rate, rate > 1) for region, rate in result.rates.items()]
    head = []
    if result.rates:
        head.append(f"{len(result.rates)} regions, rate from {fmt(min(result.rates.values()))} "
                    f"to {fmt(max(result.rates.values()))}")
    if result.omitted:
        head.append(f"omitted (no population): {', '.join(result.omitted)}")
    if result.flagged:
        head.append(f"flagged (rate above 1): {', '.join(result.flagged)}")
    return _Rendered("sampling_rate.csv", _csv(["region_id", "rate", "above_one"], rows),
                     f"Sampling rate by {level}", head or ["no device records in range"])


def _outbreak_compare(ctx: _Context, p: dict) -> _Rendered:
    roster = read_outbreak_roster(ctx.spec.resolve(p["roster"]))
    outbreak = sorted({e.place_id for e in roster})
    window = tuple(parse_date(d) for d in p["baseline_window"])
    params = MatchParams(
        baseline_window=window,
        max_distance_meters=float(p.get("max_distance_meters", 5000)),
        visit_ratio_band=tuple(p.get("visit_ratio_band", (0.8, 1.25))),
    )
    categories = {ctx.wh.pois[pid].naics_code for pid in outbreak if pid in ctx.wh.pois}
    candidates = p.get("candidates") or [
        pid for code in sorted(categories) for pid in ctx.wh.pois_by_naics.get(code, ())
    ]
    pairs, unmatched = match_controls(ctx.wh, [pid for pid in outbreak if pid in ctx.wh.pois], candidates, params)
    if not pairs:
        raise ReportError("no outbreak POI could be matched to a control")
    baseline_week = parse_date(p["baseline_week"])
    series = [annotate_with_calendar(s, ctx.calendar)
              for s in outbreak_trend_compare(ctx.wh, pairs, baseline_week, ctx.spec.start, ctx.spec.end)]
    pair_rows = [
        {"outbreak_poi": m.outbreak_poi, "control_poi": m.control_poi,
         "distance_meters": _num(m.distance_meters), "baseline_visit_ratio": _num(m.baseline_visit_ratio)}
        for m in pairs
    ]
    missing = [pid for pid in outbreak if pid not in ctx.wh.pois]
    head = [f"{len(pairs)} matched pairs, {len(unmatched) + len(missing)} outbreak places unmatched"]
    head += [f"{s.label}: final week {fmt(s.points[-1][1])} of baseline" for s in series if s.points]
    return _Rendered("outbreak_compare.json",
                     _series_json(series, pairs=pair_rows, unmatched=sorted(unmatched + missing),
                                  baseline_week=baseline_week.isoformat()),
                     "Long-duration visits, outbreak versus matched controls", head)


_RENDERERS = {
    "top_categories": _top_categories,
    "hangouts": _hangouts,
    "category_series": _category_series,
    "compliance": _compliance,
    "sampling_rate": _sampling_rate,
    "outbreak_compare": _outbreak_compare,
}


def render_report(
    wh: Warehouse,
    sd_records: Optional[Sequence[SocialDistancingRecord]],
    spec: ReportSpec,
    out_dir: str | Path,
) -> ReportBundle:
    """Render every section, then write the bundle.

    Nothing is written if any section fails; the error names the section.
    """
    ctx = _Context(wh, sd_records, spec)
    rendered: list[_Rendered] = []
    used: dict[str, int] = {}
    for i, section in enumerate(spec.sections, 1):
        try:
            r = _RENDERERS[section.type](ctx, section.params)
        except (WarehouseError, ValueError, KeyError, OSError) as e:
            raise ReportError(f"section {i} ({section.type}) failed: {e}") from e
        n = used[r.filename] = used.get(r.filename, 0) + 1
        if n > 1:
            stem, ext = r.filename.rsplit(".", 1)
            r.filename = f"{stem}_{n}.{ext}"
        rendered.append(r)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = []
    for r in rendered:
        path = out_dir / r.filename
        path.write_text(r.content, encoding="utf-8", newline="\n")
        files.append(path)
    summary = out_dir / "summary.md"
    summary.write_text(_summary(ctx, rendered), encoding="utf-8", newline="\n")
    log.info("report written to %s", out_dir)
    return ReportBundle(out_dir, (summary, *files))


def _summary(ctx: _Context, rendered: list[_Rendered]) -> str:
    spec = ctx.spec
    lines = [f"# {spec.title}", "", f"Weeks from {spec.start.isoformat()} to {spec.end.isoformat()}.", ""]
    events = ctx.calendar.between(spec.start, spec.end)
    lines.append("## Policy calendar")
    lines.append("")
    lines += [f"- {d.isoformat()}: {label}" for d, label in events] or ["- no events in range"]
    for i, r in enumerate(rendered, 1):
        lines += ["", f"## {i}. {r.heading}", "", f"Data: `{r.filename}`", ""]
        lines += [f"- {h}" for h in r.headline]
    return "\n".join(lines) + "\n"
