"""The normalized store: entity tables, fact tables, CSV snapshots, privacy suppression.

Every table is a dict keyed by its primary key (or a set, for key-only
tables), so two warehouses compare equal exactly when every table holds the
same rows regardless of insertion order.
"""

from __future__ import annotations

import csv
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import date
from functools import cached_property
from pathlib import Path
from typing import Iterable, NamedTuple, Optional

from .model import (
    DwellBucket,
    PersistenceError,
    SnapshotError,
    SocialDistancingRecord,
)

log = logging.getLogger(__name__)

DEFAULT_SUPPRESSION_THRESHOLD = 5


class Poi(NamedTuple):
    location_name: str
    naics_code: int
    cbg: str
    latitude: Optional[float] = None
    longitude: Optional[float] = None


class VisitFact(NamedTuple):
    raw_visits: int
    raw_visitors: int
    median_dwell: float
    distance_from_home: Optional[float] = None


PoiWeek = tuple[str, date]


@dataclass
class Warehouse:
    """Third-normal-form store of weekly-pattern data.

    Treat an instance as read-only once ingest has produced it; the derived
    indexes below are computed on first use and never refreshed.
    """

    countries: set[str] = field(default_factory=set)
    states: dict[str, str] = field(default_factory=dict)  # state -> country
    cbgs: dict[str, str] = field(default_factory=dict)  # cbg -> state
    pois: dict[str, Poi] = field(default_factory=dict)
    brands: set[str] = field(default_factory=set)
    brand_poi: set[tuple[str, str]] = field(default_factory=set)  # (brand, place_id)
    periods: dict[date, date] = field(default_factory=dict)  # start -> end
    visit_facts: dict[PoiWeek, VisitFact] = field(default_factory=dict)
    dwell_facts: dict[tuple[str, date, DwellBucket], int] = field(default_factory=dict)
    interval_facts: dict[tuple[str, date, int], int] = field(default_factory=dict)
    origin_facts: dict[tuple[str, date, str], int] = field(default_factory=dict)

    def table_sizes(self) -> dict[str, int]:
        return {name: len(getattr(self, name)) for name in TABLES}

    # -- indexes, built once -------------------------------------------------

    @cached_property
    def pois_by_naics(self) -> dict[int, list[str]]:
        index: dict[int, list[str]] = defaultdict(list)
        for pid in sorted(self.pois):
            index[self.pois[pid].naics_code].append(pid)
        return dict(index)

    @cached_property
    def pois_by_cbg(self) -> dict[str, list[str]]:
        index: dict[str, list[str]] = defaultdict(list)
        for pid in sorted(self.pois):
            index[self.pois[pid].cbg].append(pid)
        return dict(index)

    @cached_property
    def weeks_by_poi(self) -> dict[str, list[date]]:
        index: dict[str, list[date]] = defaultdict(list)
        for pid, start in sorted(self.visit_facts):
            index[pid].append(start)
        return dict(index)

    @cached_property
    def dwell_by_poi_week(self) -> dict[PoiWeek, dict[DwellBucket, int]]:
        index: dict[PoiWeek, dict[DwellBucket, int]] = defaultdict(dict)
        for (pid, start, bucket), visits in self.dwell_facts.items():
            index[(pid, start)][bucket] = visits
        return dict(index)

    def periods_within(self, start: date, end: date) -> list[date]:
        """Period starts whose whole week lies inside [start, end]."""
        return sorted(s for s, e in self.periods.items() if s >= start and e <= end)

    def long_visits(self, place_id: str, period_start: date) -> int:
        buckets = self.dwell_by_poi_week.get((place_id, period_start), {})
        return sum(v for b, v in buckets.items() if b.is_long)


# -- snapshot layout -----------------------------------------------------------

TABLES = (
    "countries",
    "states",
    "cbgs",
    "pois",
    "brands",
    "brand_poi",
    "periods",
    "visit_facts",
    "dwell_facts",
    "interval_facts",
    "origin_facts",
)

HEADERS = {
    "countries": ["country_code"],
    "states": ["state_code", "country_code"],
    "cbgs": ["cbg_id", "state_code"],
    "pois": ["place_id", "location_name", "naics_code", "cbg_id", "latitude", "longitude"],
    "brands": ["brand"],
    "brand_poi": ["brand", "place_id"],
    "periods": ["period_start", "period_end"],
    "visit_facts": [
        "place_id", "period_start", "raw_visit_counts", "raw_visitor_counts",
        "median_dwell", "distance_from_home",
    ],
    "dwell_facts": ["place_id", "period_start", "dwell_bucket", "visits"],
    "interval_facts": ["place_id", "period_start", "day_index", "visits"],
    "origin_facts": ["place_id", "period_start", "origin_cbg", "visitor_count"],
}


def _opt(value) -> str:
    return "" if value is None else repr(value) if isinstance(value, float) else str(value)


def _rows(wh: Warehouse, table: str) -> list[list[str]]:
    if table == "countries":
        return [[c] for c in sorted(wh.countries)]
    if table == "states":
        return [[s, c] for s, c in sorted(wh.states.items())]
    if table == "cbgs":
        return [[g, s] for g, s in sorted(wh.cbgs.items())]
    if table == "pois":
        return [
            [pid, p.location_name, str(p.naics_code), p.cbg, _opt(p.latitude), _opt(p.longitude)]
            for pid, p in sorted(wh.pois.items())
        ]
    if table == "brands":
        return [[b] for b in sorted(wh.brands)]
    if table == "brand_poi":
        return [[b, pid] for b, pid in sorted(wh.brand_poi)]
    if table == "periods":
        return [[s.isoformat(), e.isoformat()] for s, e in sorted(wh.periods.items())]
    if table == "visit_facts":
        return [
            [pid, s.isoformat(), str(f.raw_visits), str(f.raw_visitors),
             repr(float(f.median_dwell)), _opt(f.distance_from_home)]
            for (pid, s), f in sorted(wh.visit_facts.items())
        ]
    if table == "dwell_facts":
        keys = sorted(wh.dwell_facts, key=lambda k: (k[0], k[1], k[2].order))
        return [[pid, s.isoformat(), b.value, str(wh.dwell_facts[(pid, s, b)])] for pid, s, b in keys]
    if table == "interval_facts":
        return [[pid, s.isoformat(), str(d), str(v)] for (pid, s, d), v in sorted(wh.interval_facts.items())]
    if table == "origin_facts":
        return [[pid, s.isoformat(), o, str(v)] for (pid, s, o), v in sorted(wh.origin_facts.items())]
    raise KeyError(table)


def warehouse_save(wh: Warehouse, directory: str | Path) -> list[Path]:
    """Write one sorted, header-first CSV per table. Returns the written paths."""
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise PersistenceError(f"cannot create snapshot directory {directory}: {e}") from e
    written = []
    for table in TABLES:
        path = directory / f"{table}.csv"
        try:
            with open(path, "w", newline="", encoding="utf-8") as f:
                w = csv.writer(f, lineterminator="\n")
                w.writerow(HEADERS[table])
                w.writerows(_rows(wh, table))
        except OSError as e:
            raise PersistenceError(f"cannot write {path}: {e}") from e
        written.append(path)
    return written


def _read(directory: Path, table: str) -> list[dict[str, str]]:
    path = directory / f"{table}.csv"
    if not path.exists():
        raise SnapshotError(f"missing snapshot file {path}")
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        missing = set(HEADERS[table]) - set(reader.fieldnames or [])
        if missing:
            raise SnapshotError(f"{path.name}: missing columns {sorted(missing)}")
        return list(reader)


def _none_or_float(text: str) -> Optional[float]:
    return None if text == "" else float(text)


def warehouse_load(directory: str | Path) -> Warehouse:
    """Read a snapshot and check referential integrity of every fact and link."""
    directory = Path(directory)
    if not directory.is_dir():
        raise SnapshotError(f"snapshot directory {directory} does not exist")
    wh = Warehouse()

    def put(table: str, target: dict | set, key, value=None, row: int = 0):
        if key in target:
            raise SnapshotError(f"{table}.csv row {row}: duplicate key {key!r}")
        if isinstance(target, set):
            target.add(key)
        else:
            target[key] = value

    def need(table: str, row: int, what: str, key, pool) -> None:
        if key not in pool:
            raise SnapshotError(f"{table}.csv row {row}: unknown {what} {key!r}")

    try:
        for i, r in enumerate(_read(directory, "countries"), 1):
            put("countries", wh.countries, r["country_code"], row=i)
        for i, r in enumerate(_read(directory, "states"), 1):
            need("states", i, "country", r["country_code"], wh.countries)
            put("states", wh.states, r["state_code"], r["country_code"], i)
        for i, r in enumerate(_read(directory, "cbgs"), 1):
            need("cbgs", i, "state", r["state_code"], wh.states)
            put("cbgs", wh.cbgs, r["cbg_id"], r["state_code"], i)
        for i, r in enumerate(_read(directory, "pois"), 1):
            need("pois", i, "cbg", r["cbg_id"], wh.cbgs)
            poi = Poi(
                r["location_name"], int(r["naics_code"]), r["cbg_id"],
                _none_or_float(r["latitude"]), _none_or_float(r["longitude"]),
            )
            put("pois", wh.pois, r["place_id"], poi, i)
        for i, r in enumerate(_read(directory, "brands"), 1):
            put("brands", wh.brands, r["brand"], row=i)
        for i, r in enumerate(_read(directory, "brand_poi"), 1):
            need("brand_poi", i, "brand", r["brand"], wh.brands)
            need("brand_poi", i, "poi", r["place_id"], wh.pois)
            put("brand_poi", wh.brand_poi, (r["brand"], r["place_id"]), row=i)
        for i, r in enumerate(_read(directory, "periods"), 1):
            put("periods", wh.periods, date.fromisoformat(r["period_start"]),
                date.fromisoformat(r["period_end"]), i)

        def fact_key(table: str, i: int, r: dict) -> tuple[str, date]:
            need(table, i, "poi", r["place_id"], wh.pois)
            start = date.fromisoformat(r["period_start"])
            need(table, i, "period", start, wh.periods)
            return r["place_id"], start

        for i, r in enumerate(_read(directory, "visit_facts"), 1):
            fact = VisitFact(
                int(r["raw_visit_counts"]), int(r["raw_visitor_counts"]),
                float(r["median_dwell"]), _none_or_float(r["distance_from_home"]),
            )
            put("visit_facts", wh.visit_facts, fact_key("visit_facts", i, r), fact, i)
        for i, r in enumerate(_read(directory, "dwell_facts"), 1):
            try:
                bucket = DwellBucket.parse(r["dwell_bucket"])
            except ValueError as e:
                raise SnapshotError(f"dwell_facts.csv row {i}: {e}") from None
            put("dwell_facts", wh.dwell_facts, (*fact_key("dwell_facts", i, r), bucket), int(r["visits"]), i)
        for i, r in enumerate(_read(directory, "interval_facts"), 1):
            day = int(r["day_index"])
            if not 0 <= day <= 6:
                raise SnapshotError(f"interval_facts.csv row {i}: day_index {day} outside 0-6")
            put("interval_facts", wh.interval_facts, (*fact_key("interval_facts", i, r), day), int(r["visits"]), i)
        for i, r in enumerate(_read(directory, "origin_facts"), 1):
            need("origin_facts", i, "cbg", r["origin_cbg"], wh.cbgs)
            key = (*fact_key("origin_facts", i, r), r["origin_cbg"])
            put("origin_facts", wh.origin_facts, key, int(r["visitor_count"]), i)
    except ValueError as e:
        raise SnapshotError(f"malformed value in snapshot {directory}: {e}") from e
    log.info("loaded snapshot %s: %s", directory, wh.table_sizes())
    return wh


# -- privacy -------------------------------------------------------------------


def suppress_low_device_cbgs(
    records: Iterable[SocialDistancingRecord], threshold: int = DEFAULT_SUPPRESSION_THRESHOLD
) -> tuple[list[SocialDistancingRecord], set[str]]:
    """Drop every record whose device count is below ``threshold``.

    Returns the surviving records (input order kept) and the distinct CBGs
    that lost at least one record.
    """
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    kept, suppressed = [], set()
    for r in records:
        if r.device_count < threshold:
            suppressed.add(r.origin_cbg)
        else:
            kept.append(r)
    return kept, suppressed

