"""Parse vendor CSVs, validate them, explode nested columns, and load the warehouse."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Iterable, Optional

from .model import (
    BUCKET_LABELS,
    WEEK,
    DwellBucket,
    DwellRow,
    FlatWeeklyRecord,
    FormatError,
    IngestConflictError,
    SocialDistancingRecord,
    is_cbg_id,
    parse_date,
)
from .warehouse import Poi, VisitFact, Warehouse

log = logging.getLogger(__name__)

WEEKLY_COLUMNS = (
    "safegraph_place_id", "location_name", "brands", "naics_code", "poi_cbg",
    "latitude", "longitude", "date_range_start", "date_range_end",
    "raw_visit_counts", "raw_visitor_counts", "median_dwell",
    "bucketed_dwell_times", "visits_by_day", "visitor_home_cbgs", "distance_from_home",
)
SD_COLUMNS = (
    "origin_census_block_group", "date", "device_count", "distance_traveled_from_home",
    "median_home_dwell_time", "completely_home_device_count",
)
COUNTRY = "US"


@dataclass(frozen=True)
class Issue:
    field: str
    severity: str  # "error" or "warning"
    message: str
    row: Optional[int] = None


@dataclass
class ValidationReport:
    records_total: int = 0
    records_ok: int = 0
    issues: list[Issue] = field(default_factory=list)

    @property
    def errors(self) -> list[Issue]:
        return [i for i in self.issues if i.severity == "error"]

    @property
    def warnings(self) -> list[Issue]:
        return [i for i in self.issues if i.severity == "warning"]

    @property
    def records_with_errors(self) -> int:
        return len({i.row for i in self.errors})

    def summary(self) -> str:
        lines = [
            f"records_total={self.records_total} records_ok={self.records_ok} "
            f"records_with_errors={self.records_with_errors} warnings={len(self.warnings)}"
        ]
        lines += [f"row {i.row}: {i.severity}: {i.field}: {i.message}" for i in self.issues]
        return "\n".join(lines)


class _RowError(ValueError):
    def __init__(self, field: str, message: str):
        super().__init__(message)
        self.field = field


def _int(row: dict, col: str) -> int:
    try:
        value = int(row[col])
    except ValueError:
        raise _RowError(col, f"not an integer: {row[col]!r}") from None
    if value < 0:
        raise _RowError(col, f"must be nonnegative, got {value}")
    return value


def _float(row: dict, col: str, optional: bool = False) -> Optional[float]:
    text = row[col].strip()
    if optional and text == "":
        return None
    try:
        value = float(text)
    except ValueError:
        raise _RowError(col, f"not a number: {text!r}") from None
    if value != value:
        raise _RowError(col, "NaN is not allowed")
    return value


def _date(row: dict, col: str) -> date:
    try:
        return parse_date(row[col])
    except ValueError as e:
        raise _RowError(col, str(e)) from None


def _json(row: dict, col: str):
    try:
        return json.loads(row[col])
    except json.JSONDecodeError as e:
        raise _RowError(col, f"malformed JSON: {e.msg}") from None


def _count_map(row: dict, col: str) -> dict[str, int]:
    value = _json(row, col)
    if not isinstance(value, dict):
        raise _RowError(col, "expected a JSON object")
    for k, v in value.items():
        if isinstance(v, bool) or not isinstance(v, int) or v < 0:
            raise _RowError(col, f"count for {k!r} must be a nonnegative integer")
    return value


def _weekly_from_row(row: dict) -> FlatWeeklyRecord:
    naics = row["naics_code"].strip()
    if not (len(naics) == 6 and naics.isdigit()):
        raise _RowError("naics_code", f"not a 6-digit code: {naics!r}")
    cbg = row["poi_cbg"].strip()
    if not is_cbg_id(cbg):
        raise _RowError("poi_cbg", f"not a 12-digit census block group: {cbg!r}")
    by_day = _json(row, "visits_by_day")
    if not isinstance(by_day, list) or len(by_day) != 7:
        raise _RowError("visits_by_day", "expected a JSON list of 7 counts")
    if any(isinstance(v, bool) or not isinstance(v, int) or v < 0 for v in by_day):
        raise _RowError("visits_by_day", "daily counts must be nonnegative integers")
    origins = _count_map(row, "visitor_home_cbgs")
    for origin in origins:
        if not is_cbg_id(origin):
            raise _RowError("visitor_home_cbgs", f"not a 12-digit census block group: {origin!r}")
    brand = row["brands"].strip() or None
    return FlatWeeklyRecord(
        place_id=row["safegraph_place_id"].strip(),
        location_name=row["location_name"],
        brand=brand,
        naics_code=int(naics),
        poi_cbg=cbg,
        latitude=_float(row, "latitude", optional=True),
        longitude=_float(row, "longitude", optional=True),
        period_start=_date(row, "date_range_start"),
        period_end=_date(row, "date_range_end"),
        raw_visit_counts=_int(row, "raw_visit_counts"),
        raw_visitor_counts=_int(row, "raw_visitor_counts"),
        median_dwell_minutes=_nonneg(_float(row, "median_dwell"), "median_dwell"),
        bucketed_dwell_times=_count_map(row, "bucketed_dwell_times"),
        visits_by_day=tuple(by_day),
        visitor_home_cbgs=origins,
        distance_from_home_meters=_nonneg(_float(row, "distance_from_home", optional=True), "distance_from_home"),
    )


def _nonneg(value: Optional[float], col: str) -> Optional[float]:
    if value is not None and value < 0:
        raise _RowError(col, f"must be nonnegative, got {value}")
    return value


def validate_record(record: FlatWeeklyRecord) -> list[Issue]:
    """Check the invariants of one weekly record.

    Errors make the record unusable; warnings flag totals that disagree with
    their breakdowns, which real vendor data does routinely.
    """
    issues = []
    if record.period_end - record.period_start != WEEK:
        days = (record.period_end - record.period_start).days
        issues.append(Issue("date_range_end", "error", f"period must be 7 days, got {days}"))
    for label in record.bucketed_dwell_times:
        if label not in BUCKET_LABELS:
            issues.append(Issue("bucketed_dwell_times", "error", f"unknown bucket {label!r}"))
    if record.raw_visitor_counts > record.raw_visit_counts:
        issues.append(Issue(
            "raw_visitor_counts", "error",
            f"visitors ({record.raw_visitor_counts}) exceed visits ({record.raw_visit_counts})",
        ))
    if record.raw_visit_counts < 0 or record.raw_visitor_counts < 0:
        issues.append(Issue("raw_visit_counts", "error", "counts must be nonnegative"))
    if len(record.visits_by_day) != 7:
        issues.append(Issue("visits_by_day", "error", "expected exactly 7 daily counts"))
    elif sum(record.visits_by_day) != record.raw_visit_counts:
        issues.append(Issue(
            "visits_by_day", "warning",
            f"daily visits sum to {sum(record.visits_by_day)}, raw_visit_counts is {record.raw_visit_counts}",
        ))
    dwell_total = sum(record.bucketed_dwell_times.values())
    if dwell_total != record.raw_visit_counts:
        issues.append(Issue(
            "bucketed_dwell_times", "warning",
            f"dwell buckets sum to {dwell_total}, raw_visit_counts is {record.raw_visit_counts}",
        ))
    return issues


def _open_csv(path: str | Path, required: tuple[str, ...]):
    f = open(path, newline="", encoding="utf-8")
    reader = csv.DictReader(f)
    # a zero-byte file has no header and simply holds no records
    missing = [c for c in required if c not in reader.fieldnames] if reader.fieldnames else []
    if missing:
        f.close()
        raise FormatError(f"{path}: missing required column(s) {', '.join(missing)}")
    return f, reader


def parse_flat_weekly(path: str | Path) -> tuple[list[FlatWeeklyRecord], ValidationReport]:
    """Parse a weekly-pattern CSV whose nested columns hold JSON strings.

    Rows that fail to parse or carry validation errors are left out of the
    returned records and listed in the report; row numbers count data rows
    from 1.
    """
    report = ValidationReport()
    records = []
    f, reader = _open_csv(path, WEEKLY_COLUMNS)
    with f:
        for n, row in enumerate(reader, 1):
            report.records_total += 1
            try:
                record = _weekly_from_row(row)
            except _RowError as e:
                report.issues.append(Issue(e.field, "error", str(e), n))
                continue
            issues = [Issue(i.field, i.severity, i.message, n) for i in validate_record(record)]
            report.issues.extend(issues)
            if any(i.severity == "error" for i in issues):
                continue
            records.append(record)
            report.records_ok += 1
    log.info("parsed %s: %d/%d records ok", path, report.records_ok, report.records_total)
    return records, report


def _sd_from_row(row: dict) -> SocialDistancingRecord:
    cbg = row["origin_census_block_group"].strip()
    if not is_cbg_id(cbg):
        raise _RowError("origin_census_block_group", f"not a 12-digit census block group: {cbg!r}")
    record = SocialDistancingRecord(
        origin_cbg=cbg,
        date=_date(row, "date"),
        device_count=_int(row, "device_count"),
        median_distance_traveled_from_home_meters=_nonneg(
            _float(row, "distance_traveled_from_home"), "distance_traveled_from_home"),
        median_home_dwell_time_minutes=_nonneg(_float(row, "median_home_dwell_time"), "median_home_dwell_time"),
        completely_home_device_count=_int(row, "completely_home_device_count"),
    )
    if record.completely_home_device_count > record.device_count:
        raise _RowError(
            "completely_home_device_count",
            f"{record.completely_home_device_count} exceeds device_count {record.device_count}",
        )
    return record


def parse_social_distancing(path: str | Path) -> tuple[list[SocialDistancingRecord], ValidationReport]:
    report = ValidationReport()
    records = []
    f, reader = _open_csv(path, SD_COLUMNS)
    with f:
        for n, row in enumerate(reader, 1):
            report.records_total += 1
            try:
                records.append(_sd_from_row(row))
            except _RowError as e:
                report.issues.append(Issue(e.field, "error", str(e), n))
                continue
            report.records_ok += 1
    return records, report


def write_social_distancing(records: Iterable[SocialDistancingRecord], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(SD_COLUMNS)
        for r in records:
            w.writerow([
                r.origin_cbg, r.date.isoformat(), r.device_count,
                _num(r.median_distance_traveled_from_home_meters),
                _num(r.median_home_dwell_time_minutes), r.completely_home_device_count,
            ])


def _num(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def explode_to_1nf(record: FlatWeeklyRecord) -> list[DwellRow]:
    """One atomic row per (dwell bucket, visits) pair of the nested map."""
    rows = [
        DwellRow(
            place_id=record.place_id,
            period_start=record.period_start,
            period_end=record.period_end,
            naics_code=record.naics_code,
            dwell_bucket=DwellBucket.parse(label),
            visits=visits,
        )
        for label, visits in record.bucketed_dwell_times.items()
    ]
    rows.sort(key=lambda r: r.dwell_bucket.order)
    return rows


def load_warehouse(records: Iterable[FlatWeeklyRecord], dedup_identical: bool = False) -> Warehouse:
    """Fold validated records into a fresh normalized warehouse.

    A second record for the same (place, week) raises IngestConflictError,
    unless ``dedup_identical`` is set and the two records are equal. A POI
    whose descriptive columns differ between weeks is also a conflict.
    """
    wh = Warehouse()
    seen: dict[tuple[str, date], FlatWeeklyRecord] = {}
    for r in records:
        key = (r.place_id, r.period_start)
        if key in seen:
            if dedup_identical and seen[key] == r:
                continue
            raise IngestConflictError(
                f"duplicate record for place {r.place_id!r} period {r.period_start.isoformat()}"
            )
        seen[key] = r

        wh.countries.add(COUNTRY)
        for cbg in (r.poi_cbg, *r.visitor_home_cbgs):
            state = cbg[:2]
            wh.states.setdefault(state, COUNTRY)
            wh.cbgs.setdefault(cbg, state)

        poi = Poi(r.location_name, r.naics_code, r.poi_cbg, r.latitude, r.longitude)
        known = wh.pois.setdefault(r.place_id, poi)
        if known != poi:
            raise IngestConflictError(f"place {r.place_id!r} described inconsistently: {known} vs {poi}")
        if r.brand:
            wh.brands.add(r.brand)
            wh.brand_poi.add((r.brand, r.place_id))

        end = wh.periods.setdefault(r.period_start, r.period_end)
        if end != r.period_end:
            raise IngestConflictError(f"period {r.period_start.isoformat()} has two end dates")

        wh.visit_facts[key] = VisitFact(
            r.raw_visit_counts, r.raw_visitor_counts, float(r.median_dwell_minutes),
            r.distance_from_home_meters,
        )
        for row in explode_to_1nf(r):
            wh.dwell_facts[(r.place_id, r.period_start, row.dwell_bucket)] = row.visits
        for day, visits in enumerate(r.visits_by_day):
            wh.interval_facts[(r.place_id, r.period_start, day)] = visits
        for origin, count in r.visitor_home_cbgs.items():
            wh.origin_facts[(r.place_id, r.period_start, origin)] = count
    return wh


def write_flat_weekly(records: Iterable[FlatWeeklyRecord], path: str | Path) -> None:
    """Write records in the vendor layout (nested columns as compact JSON)."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(WEEKLY_COLUMNS)
        for r in records:
            w.writerow([
                r.place_id, r.location_name, r.brand or "", f"{r.naics_code:06d}", r.poi_cbg,
                "" if r.latitude is None else f"{r.latitude:.6f}",
                "" if r.longitude is None else f"{r.longitude:.6f}",
                r.period_start.isoformat(), r.period_end.isoformat(),
                r.raw_visit_counts, r.raw_visitor_counts, _num(r.median_dwell_minutes),
                json.dumps(r.bucketed_dwell_times, separators=(",", ":")),
                json.dumps(list(r.visits_by_day), separators=(",", ":")),
                json.dumps(r.visitor_home_cbgs, separators=(",", ":"), sort_keys=True),
                "" if r.distance_from_home_meters is None else _num(r.distance_from_home_meters),
            ])
