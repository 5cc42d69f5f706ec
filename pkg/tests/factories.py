"""Hand-built records, the desk report spec and a directory digest shared by tests."""

from __future__ import annotations

import hashlib
from datetime import date, timedelta

from mobility_warehouse.model import FlatWeeklyRecord, SocialDistancingRecord
from mobility_warehouse.report import ReportSpec

MONDAY = date(2020, 3, 2)


def record(
    place_id="p1",
    naics=722410,
    cbg="270530001001",
    week=MONDAY,
    buckets=None,
    brand=None,
    name=None,
    visits_by_day=None,
    lat=44.97,
    lon=-93.26,
    **overrides,
) -> FlatWeeklyRecord:
    buckets = {"21-60": 7, "61-240": 3} if buckets is None else buckets
    total = overrides.pop("raw_visit_counts", sum(buckets.values()))
    if visits_by_day is None:
        visits_by_day = (total,) + (0,) * 6
    fields = dict(
        place_id=place_id,
        location_name=name or f"Place {place_id}",
        brand=brand,
        naics_code=naics,
        poi_cbg=cbg,
        latitude=lat,
        longitude=lon,
        period_start=week,
        period_end=week + timedelta(days=7),
        raw_visit_counts=total,
        raw_visitor_counts=min(total, overrides.pop("raw_visitor_counts", total)),
        median_dwell_minutes=30.0,
        bucketed_dwell_times=buckets,
        visits_by_day=tuple(visits_by_day),
        visitor_home_cbgs={"270530002002": 4},
        distance_from_home_meters=1200.0,
    )
    fields.update(overrides)
    return FlatWeeklyRecord(**fields)


def sd(cbg="270530001001", day=MONDAY, devices=10, home=600.0, distance=1000.0, completely_home=0):
    return SocialDistancingRecord(cbg, day, devices, distance, home, completely_home)


def tree_digest(directory) -> str:
    h = hashlib.sha256()
    for path in sorted(p for p in directory.rglob("*") if p.is_file()):
        h.update(str(path.relative_to(directory)).encode())
        h.update(b"\0")
        h.update(path.read_bytes())
        h.update(b"\0")
    return h.hexdigest()


def desk_report_spec(desk_dir) -> ReportSpec:
    return ReportSpec.from_dict({
        "title": "Desk report",
        "start": "2020-03-02",
        "end": "2021-07-05",
        "calendar": "calendar.csv",
        "sections": [
            {"type": "top_categories", "k": 5},
            {"type": "hangouts", "naics": 722410, "k": 3, "state": "MN"},
            {"type": "category_series", "categories": [722511, 722410]},
            {"type": "compliance", "metric": "time_at_home", "aggregation": "median_of_medians"},
            {"type": "compliance", "metric": "distance_from_home", "aggregation": "device_weighted_mean"},
            {"type": "sampling_rate", "level": "county", "population": "population.csv"},
            {"type": "outbreak_compare", "roster": "outbreak_roster.csv",
             "baseline_window": ["2020-03-02", "2020-03-16"], "baseline_week": "2020-03-02",
             "max_distance_meters": 50000, "visit_ratio_band": [0.2, 5.0]},
        ],
    }, base_dir=desk_dir)
