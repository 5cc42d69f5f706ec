"""Weekly series, sampling rates, compliance metrics and outbreak/control matching."""

from __future__ import annotations

import csv
import math
import statistics
from collections import defaultdict
from dataclasses import dataclass, replace
from datetime import date, timedelta
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .model import (
    LEVEL_LENGTHS,
    FormatError,
    PolicyCalendar,
    PopulationTable,
    SocialDistancingRecord,
    check_range,
    roll_up,
)
from .warehouse import Warehouse, suppress_low_device_cbgs

EARTH_RADIUS_M = 6_371_008.8


@lru_cache(maxsize=None)
def naics_names() -> dict[int, str]:
    text = resources.files("mobility_warehouse").joinpath("data/naics.csv").read_text(encoding="utf-8")
    return {int(r["code"]): r["name"] for r in csv.DictReader(text.splitlines())}


def naics_name(code: int | str) -> str:
    """Display name for a NAICS code; unknown codes display as the code itself."""
    return naics_names().get(int(code), str(code))


@dataclass(frozen=True)
class WeeklySeries:
    label: str
    points: tuple[tuple[date, float], ...]
    annotations: tuple[tuple[date, str], ...] = ()

    def __post_init__(self):
        for (a, _), (b, _) in zip(self.points, self.points[1:]):
            if b <= a:
                raise ValueError(f"week starts must strictly increase ({a} then {b})")

    @property
    def values(self) -> list[float]:
        return [v for _, v in self.points]

    def value_at(self, week: date) -> float:
        return dict(self.points)[week]

    def to_json(self) -> dict:
        return {
            "label": self.label,
            "points": [{"week_start": d.isoformat(), "value": v} for d, v in self.points],
            "annotations": [{"date": d.isoformat(), "label": s} for d, s in self.annotations],
        }


# -- category trends -------------------------------------------------------------


def weekly_category_series(
    wh: Warehouse, categories: Iterable[int], dwell_filter: str, start: date, end: date
) -> list[WeeklySeries]:
    """One series per NAICS code with a point for every warehouse week in range.

    ``dwell_filter`` is "all" (raw visit counts) or "long_only" (the three
    buckets above 20 minutes).
    """
    categories = sorted(set(categories))
    if not categories:
        raise ValueError("at least one category is required")
    if dwell_filter not in ("all", "long_only"):
        raise ValueError(f"dwell_filter must be 'all' or 'long_only', got {dwell_filter!r}")
    check_range(start, end)
    weeks = wh.periods_within(start, end)
    in_range = set(weeks)
    out = []
    for naics in categories:
        totals = dict.fromkeys(weeks, 0)
        for pid in wh.pois_by_naics.get(naics, ()):
            for week in wh.weeks_by_poi.get(pid, ()):
                if week not in in_range:
                    continue
                if dwell_filter == "all":
                    totals[week] += wh.visit_facts[(pid, week)].raw_visits
                else:
                    totals[week] += wh.long_visits(pid, week)
        out.append(WeeklySeries(str(naics), tuple(totals.items())))
    return out


def annotate_with_calendar(series: WeeklySeries, calendar: PolicyCalendar) -> WeeklySeries:
    """Attach the calendar events falling inside the weeks the series covers."""
    if not series.points:
        return replace(series, annotations=())
    first = series.points[0][0]
    last = series.points[-1][0] + timedelta(days=6)
    return replace(series, annotations=tuple(calendar.between(first, last)))


# -- sampling rate -----------------------------------------------------------------


@dataclass(frozen=True)
class SamplingRates:
    rates: dict[str, float]
    omitted: tuple[str, ...] = ()  # regions with devices but zero or unknown population
    flagged: tuple[str, ...] = ()  # regions whose rate exceeds 1


def sampling_rate(
    records: Iterable[SocialDistancingRecord],
    population: PopulationTable,
    level: str,
    as_of: tuple[date, date],
) -> SamplingRates:
    """Mean daily device count per region divided by resident population.

    The mean is taken over the distinct dates in ``as_of`` that appear in the
    records, so a CBG missing on some day contributes zero for it.
    Populations given at a finer level than ``level`` are summed up to it.
    """
    if not population.rows:
        raise ValueError("population table is empty")
    if level not in LEVEL_LENGTHS:
        raise ValueError(f"unknown region level {level!r}")
    if LEVEL_LENGTHS[population.region_level] < LEVEL_LENGTHS[level]:
        raise ValueError(f"population at {population.region_level} level cannot be split to {level}")
    check_range(*as_of)

    pop: dict[str, int] = defaultdict(int)
    for region, n in population.rows.items():
        pop[roll_up(region, level)] += n

    devices: dict[str, int] = defaultdict(int)
    days = set()
    for r in records:
        if as_of[0] <= r.date <= as_of[1]:
            days.add(r.date)
            devices[roll_up(r.origin_cbg, level)] += r.device_count
    rates, omitted = {}, []
    for region in sorted(devices):
        if pop.get(region, 0) == 0:
            omitted.append(region)
            continue
        rates[region] = devices[region] / len(days) / pop[region]
    flagged = tuple(r for r, v in rates.items() if v > 1)
    return SamplingRates(rates, tuple(omitted), flagged)


# -- stay-at-home compliance --------------------------------------------------------

_METRICS = {
    "time_at_home": "median_home_dwell_time_minutes",
    "distance_from_home": "median_distance_traveled_from_home_meters",
}


def compliance_series(
    records: Iterable[SocialDistancingRecord],
    metric: str,
    aggregation: str,
    start: date,
    end: date,
    suppress_threshold: int = 0,
) -> WeeklySeries:
    """Weekly statewide value of a social-distancing metric.

    Weeks are anchored at ``start``. ``median_of_medians`` takes the median of
    the per-CBG daily medians in a week; ``device_weighted_mean`` weights each
    of them by its device count. Records below ``suppress_threshold`` devices
    are dropped first.
    """
    if metric not in _METRICS:
        raise ValueError(f"metric must be one of {sorted(_METRICS)}, got {metric!r}")
    if aggregation not in ("median_of_medians", "device_weighted_mean"):
        raise ValueError(f"unknown aggregation {aggregation!r}")
    check_range(start, end)
    kept, _ = suppress_low_device_cbgs(records, suppress_threshold)
    attr = _METRICS[metric]
    weekly: dict[date, list[tuple[float, int]]] = defaultdict(list)
    for r in kept:
        if start <= r.date <= end:
            week = start + timedelta(days=7 * ((r.date - start).days // 7))
            weekly[week].append((getattr(r, attr), r.device_count))
    points = []
    for week in sorted(weekly):
        values = weekly[week]
        if aggregation == "median_of_medians":
            v = statistics.median(x for x, _ in values)
        else:
            n = sum(w for _, w in values)
            v = sum(x * w for x, w in values) / n if n else statistics.fmean(x for x, _ in values)
        points.append((week, v))
    return WeeklySeries(f"{metric} ({aggregation})", tuple(points))


# -- outbreak vs control ------------------------------------------------------------


def haversine_m(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance in meters on a spherical Earth."""
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2 - lon1)
    a = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(a)))


@dataclass(frozen=True)
class MatchParams:
    baseline_window: tuple[date, date]
    max_distance_meters: float = 5000.0
    visit_ratio_band: tuple[float, float] = (0.8, 1.25)

    def __post_init__(self):
        low, high = self.visit_ratio_band
        if not low <= 1 <= high:
            raise ValueError("visit_ratio_band must satisfy low <= 1 <= high")
        if self.max_distance_meters <= 0:
            raise ValueError("max_distance_meters must be positive")
        check_range(*self.baseline_window)


@dataclass(frozen=True)
class MatchedPair:
    outbreak_poi: str
    control_poi: str
    distance_meters: float
    baseline_visit_ratio: float  # control baseline / outbreak baseline


def baseline_weekly_visits(wh: Warehouse, place_id: str, window: tuple[date, date]) -> float:
    """Mean raw visits per warehouse week inside ``window``; absent weeks count as 0."""
    weeks = wh.periods_within(*window)
    if not weeks:
        raise ValueError(f"no warehouse weeks inside baseline window {window[0]}..{window[1]}")
    return sum(wh.visit_facts[(place_id, w)].raw_visits for w in weeks if (place_id, w) in wh.visit_facts) / len(weeks)


def match_controls(
    wh: Warehouse,
    outbreak_pois: Sequence[str],
    candidate_pois: Sequence[str],
    params: MatchParams,
) -> tuple[list[MatchedPair], list[str]]:
    """Greedy one-to-one matching of outbreak POIs to nearby similar controls.

    Outbreak POIs are taken in id order; each gets the nearest unused
    candidate of the same NAICS code within the distance limit whose baseline
    weekly visits, relative to the outbreak POI's, fall inside the band.
    Distance ties go to the smaller place id.
    """
    outbreak = sorted(set(outbreak_pois))
    pool = sorted(set(candidate_pois) - set(outbreak))
    for pid in (*outbreak, *pool):
        if pid not in wh.pois:
            raise ValueError(f"unknown poi {pid!r}")
    baseline = {pid: baseline_weekly_visits(wh, pid, params.baseline_window) for pid in (*outbreak, *pool)}
    low, high = params.visit_ratio_band
    used: set[str] = set()
    pairs, unmatched = [], []
    for pid in outbreak:
        poi = wh.pois[pid]
        best = None
        if poi.latitude is not None and poi.longitude is not None and baseline[pid] > 0:
            for cid in pool:
                cand = wh.pois[cid]
                if cid in used or cand.naics_code != poi.naics_code:
                    continue
                if cand.latitude is None or cand.longitude is None:
                    continue
                d = haversine_m(poi.latitude, poi.longitude, cand.latitude, cand.longitude)
                ratio = baseline[cid] / baseline[pid]
                if d > params.max_distance_meters or not low <= ratio <= high:
                    continue
                if best is None or (d, cid) < (best.distance_meters, best.control_poi):
                    best = MatchedPair(pid, cid, d, ratio)
        if best is None:
            unmatched.append(pid)
        else:
            used.add(best.control_poi)
            pairs.append(best)
    return pairs, unmatched


def outbreak_trend_compare(
    wh: Warehouse, pairs: Sequence[MatchedPair], baseline_week: date, start: date, end: date
) -> tuple[WeeklySeries, WeeklySeries]:
    """Long-duration visits of each group, relative to the group's baseline week."""
    check_range(start, end)
    groups = {
        "outbreak": sorted({p.outbreak_poi for p in pairs}),
        "control": sorted({p.control_poi for p in pairs}),
    }
    weeks = wh.periods_within(start, end)
    out = []
    for name, members in groups.items():
        base = sum(wh.long_visits(pid, baseline_week) for pid in members)
        if base == 0:
            raise ValueError(f"{name} group has zero long-duration visits in baseline week {baseline_week}")
        points = tuple((w, sum(wh.long_visits(pid, w) for pid in members) / base) for w in weeks)
        out.append(WeeklySeries(name, points))
    return out[0], out[1]


@dataclass(frozen=True)
class RosterEntry:
    place_id: str
    month_linked: str  # YYYY-MM


def read_outbreak_roster(path: str | Path) -> list[RosterEntry]:
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or not {"place_id", "month_linked"} <= set(reader.fieldnames):
            raise FormatError(f"{path}: roster needs columns place_id,month_linked")
        return [RosterEntry(r["place_id"], r["month_linked"]) for r in reader]


def write_outbreak_roster(entries: Iterable[RosterEntry], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["place_id", "month_linked"])
        for e in entries:
            w.writerow([e.place_id, e.month_linked])
