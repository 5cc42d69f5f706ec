"""Domain types shared by every layer of the warehouse."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional


class WarehouseError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(WarehouseError):
    """An input file does not have the expected layout."""


class IngestConflictError(WarehouseError):
    """Two input records disagree about the same entity or fact."""


class SnapshotError(WarehouseError):
    """A snapshot directory could not be read or is inconsistent."""


class PersistenceError(WarehouseError):
    """A snapshot could not be written."""


class DwellBucket(str, Enum):
    """Visit-duration bucket, in minutes."""

    UNDER_5 = "<5"
    FROM_5_TO_20 = "5-20"
    FROM_21_TO_60 = "21-60"
    FROM_61_TO_240 = "61-240"
    OVER_240 = ">240"

    @property
    def lower_bound(self) -> int:
        return _LOWER_BOUNDS[self]

    @property
    def order(self) -> int:
        return _ORDER[self]

    @property
    def is_long(self) -> bool:
        return self in LONG_BUCKETS

    @classmethod
    def parse(cls, label: str) -> "DwellBucket":
        try:
            return cls(label)
        except ValueError:
            raise ValueError(f"unknown bucket {label!r}") from None


_LOWER_BOUNDS = {
    DwellBucket.UNDER_5: 0,
    DwellBucket.FROM_5_TO_20: 5,
    DwellBucket.FROM_21_TO_60: 21,
    DwellBucket.FROM_61_TO_240: 61,
    DwellBucket.OVER_240: 241,
}
# canonical order is the declaration order, which is also lower-bound order
BUCKETS: tuple[DwellBucket, ...] = tuple(DwellBucket)
BUCKET_LABELS: tuple[str, ...] = tuple(b.value for b in BUCKETS)
_ORDER = {b: i for i, b in enumerate(BUCKETS)}
LONG_BUCKETS = frozenset(
    {DwellBucket.FROM_21_TO_60, DwellBucket.FROM_61_TO_240, DwellBucket.OVER_240}
)


def long_duration(bucket: DwellBucket | str) -> bool:
    """True for visits lasting more than 20 minutes."""
    return DwellBucket.parse(bucket) in LONG_BUCKETS


# -- dates -------------------------------------------------------------------

WEEK = timedelta(days=7)


def parse_date(text: str) -> date:
    """Parse ISO-8601 (YYYY-MM-DD) or vendor-style MM-DD-YYYY."""
    text = text.strip()
    for fmt in ("%Y-%m-%d", "%m-%d-%Y"):
        try:
            return datetime.strptime(text, fmt).date()
        except ValueError:
            pass
    raise ValueError(f"unparseable date {text!r}")


def check_range(start: date, end: date) -> None:
    if start > end:
        raise ValueError(f"start {start.isoformat()} is after end {end.isoformat()}")


# -- census geography ----------------------------------------------------------

LEVEL_LENGTHS = {"cbg": 12, "tract": 11, "county": 5, "state": 2}
# coarse to fine is the reverse of this order
LEVELS = ("cbg", "tract", "county", "state")


def roll_up(region_id: str, level: str) -> str:
    """Truncate a FIPS id to the prefix identifying its enclosing region."""
    try:
        n = LEVEL_LENGTHS[level]
    except KeyError:
        raise ValueError(f"unknown region level {level!r}") from None
    if len(region_id) < n:
        raise ValueError(f"{region_id!r} is coarser than level {level!r}")
    return region_id[:n]


def level_of(region_id: str) -> str:
    for level, n in LEVEL_LENGTHS.items():
        if len(region_id) == n:
            return level
    raise ValueError(f"region id {region_id!r} matches no census level")


def is_cbg_id(text: str) -> bool:
    return len(text) == 12 and text.isdigit()


STATE_POSTAL_TO_FIPS = {
    "AL": "01", "AK": "02", "AZ": "04", "AR": "05", "CA": "06", "CO": "08", "CT": "09",
    "DE": "10", "DC": "11", "FL": "12", "GA": "13", "HI": "15", "ID": "16", "IL": "17",
    "IN": "18", "IA": "19", "KS": "20", "KY": "21", "LA": "22", "ME": "23", "MD": "24",
    "MA": "25", "MI": "26", "MN": "27", "MS": "28", "MO": "29", "MT": "30", "NE": "31",
    "NV": "32", "NH": "33", "NJ": "34", "NM": "35", "NY": "36", "NC": "37", "ND": "38",
    "OH": "39", "OK": "40", "OR": "41", "PA": "42", "RI": "44", "SC": "45", "SD": "46",
    "TN": "47", "TX": "48", "UT": "49", "VT": "50", "VA": "51", "WA": "53", "WV": "54",
    "WI": "55", "WY": "56", "PR": "72",
}


def state_fips(code: str) -> str:
    """Accept either a two-digit FIPS code or a postal abbreviation."""
    code = code.strip()
    return STATE_POSTAL_TO_FIPS.get(code.upper(), code)


# -- records -----------------------------------------------------------------


@dataclass(frozen=True)
class FlatWeeklyRecord:
    """One row of the vendor's denormalized weekly-pattern table."""

    place_id: str
    location_name: str
    brand: Optional[str]
    naics_code: int
    poi_cbg: str
    latitude: Optional[float]
    longitude: Optional[float]
    period_start: date
    period_end: date
    raw_visit_counts: int
    raw_visitor_counts: int
    median_dwell_minutes: float
    bucketed_dwell_times: dict[str, int]
    visits_by_day: tuple[int, ...]
    visitor_home_cbgs: dict[str, int]
    distance_from_home_meters: Optional[float] = None


@dataclass(frozen=True)
class DwellRow:
    """First-normal-form row: one dwell bucket of one POI-week."""

    place_id: str
    period_start: date
    period_end: date
    naics_code: int
    dwell_bucket: DwellBucket
    visits: int


@dataclass(frozen=True)
class SocialDistancingRecord:
    origin_cbg: str
    date: date
    device_count: int
    median_distance_traveled_from_home_meters: float
    median_home_dwell_time_minutes: float
    completely_home_device_count: int


@dataclass(frozen=True)
class PolicyCalendar:
    entries: tuple[tuple[date, str], ...]

    def __post_init__(self):
        for (d0, _), (d1, _) in zip(self.entries, self.entries[1:]):
            if d1 <= d0:
                raise ValueError(f"calendar dates must strictly increase ({d0} then {d1})")
        for d, label in self.entries:
            if not label.strip():
                raise ValueError(f"empty calendar label on {d}")

    def between(self, start: date, end: date) -> list[tuple[date, str]]:
        return [(d, label) for d, label in self.entries if start <= d <= end]

    @classmethod
    def from_csv(cls, path: str | Path) -> "PolicyCalendar":
        with open(path, newline="", encoding="utf-8") as f:
            reader = csv.DictReader(f)
            if reader.fieldnames is None or not {"date", "label"} <= set(reader.fieldnames):
                raise FormatError(f"{path}: calendar needs columns date,label")
            return cls(tuple((parse_date(r["date"]), r["label"]) for r in reader))

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["date", "label"])
            for d, label in self.entries:
                w.writerow([d.isoformat(), label])


MN_CALENDAR = PolicyCalendar(
    (
        (date(2020, 3, 9), "University of Minnesota Spring break"),
        (date(2020, 3, 17), "University of Minnesota school closing"),
        (date(2020, 3, 27), "MN stay-at-home"),
        (date(2020, 5, 18), "MN reopening Phase 1"),
        (date(2020, 6, 1), "MN reopening Phase 2"),
        (date(2020, 6, 10), "MN reopening Phase 3"),
        (date(2020, 11, 16), "MN shutdown order for Bars and Restaurants"),
        (date(2021, 1, 11), "MN reopening order for Bars and Restaurants"),
        (date(2021, 5, 27), "No limits on size and no social distancing requirements."),
    )
)


@dataclass(frozen=True)
class PopulationTable:
    region_level: str
    rows: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.region_level not in LEVEL_LENGTHS:
            raise ValueError(f"unknown region level {self.region_level!r}")
        n = LEVEL_LENGTHS[self.region_level]
        for region, pop in self.rows.items():
            if len(region) != n:
                raise ValueError(f"region {region!r} is not a {self.region_level} id")
            if pop < 0:
                raise ValueError(f"negative population for {region!r}")

    @classmethod
    def from_rows(cls, rows: Iterable[tuple[str, int]]) -> "PopulationTable":
        table: dict[str, int] = {}
        for region, pop in rows:
            if region in table:
                raise ValueError(f"duplicate region {region!r}")
            table[region] = pop
        if not table:
            raise ValueError("population table is empty")
        levels = {level_of(r) for r in table}
        if len(levels) != 1:
            raise ValueError(f"population table mixes levels {sorted(levels)}")
        return cls(levels.pop(), table)

    @classmethod
    def from_csv(cls, path: str | Path) -> "PopulationTable":
        with open(path, newline="", encoding="utf-8") as f:
            reader = csv.DictReader(f)
            if reader.fieldnames is None or not {"region_id", "population"} <= set(reader.fieldnames):
                raise FormatError(f"{path}: population needs columns region_id,population")
            return cls.from_rows((r["region_id"], int(r["population"])) for r in reader)
