"""Answerable policy queries over a loaded warehouse.

All rankings order by value descending, then key ascending, so results do
not depend on the order facts were ingested in. A weekly fact counts toward
a date range only when its whole week lies inside the range.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from datetime import date
from typing import Mapping, Optional, Union

from .model import BUCKETS, check_range, state_fips
from .warehouse import Warehouse

Number = Union[int, float]
DEFAULT_MIN_BASELINE_VISITS = 100


@dataclass(frozen=True)
class RankedResult:
    rows: tuple[tuple[str, Number], ...]

    @classmethod
    def from_totals(cls, totals: Mapping[str, Number], k: Optional[int] = None) -> "RankedResult":
        rows = sorted(totals.items(), key=lambda kv: (-kv[1], kv[0]))
        return cls(tuple(rows if k is None else rows[:k]))

    def keys(self) -> list[str]:
        return [k for k, _ in self.rows]

    def __len__(self) -> int:
        return len(self.rows)


def _check_k(k: int) -> None:
    if k < 1:
        raise ValueError("k must be >= 1")


def dwell_aggregation(wh: Warehouse, naics: int, start: date, end: date) -> dict[str, int]:
    """Total visits per dwell bucket for one NAICS code, canonical bucket order."""
    check_range(start, end)
    totals = {b: 0 for b in BUCKETS}
    weeks = set(wh.periods_within(start, end))
    for pid in wh.pois_by_naics.get(naics, ()):
        for week in wh.weeks_by_poi.get(pid, ()):
            if week in weeks:
                for bucket, visits in wh.dwell_by_poi_week.get((pid, week), {}).items():
                    totals[bucket] += visits
    return {b.value: v for b, v in totals.items()}


def _raw_visits(wh: Warehouse, pid: str, weeks: set[date]) -> int:
    return sum(wh.visit_facts[(pid, w)].raw_visits for w in wh.weeks_by_poi.get(pid, ()) if w in weeks)


@dataclass(frozen=True)
class CbgBreakdown:
    pois: tuple[tuple[str, str, int], ...]  # (place_id, category, visits)
    category_visits: dict[str, int] = field(default_factory=dict)
    distribution: dict[str, float] = field(default_factory=dict)

    @property
    def total_visits(self) -> int:
        return sum(self.category_visits.values())


def q1_pois_and_distribution(wh: Warehouse, cbg: str, start: date, end: date) -> CbgBreakdown:
    """Business categories located in a CBG and how its visits split among them.

    The distribution is empty when the CBG has no visits in range.
    """
    check_range(start, end)
    weeks = set(wh.periods_within(start, end))
    pois = []
    by_cat: dict[str, int] = defaultdict(int)
    for pid in wh.pois_by_cbg.get(cbg, ()):
        category = str(wh.pois[pid].naics_code)
        visits = _raw_visits(wh, pid, weeks)
        pois.append((pid, category, visits))
        by_cat[category] += visits
    total = sum(by_cat.values())
    dist = {c: v / total for c, v in sorted(by_cat.items())} if total else {}
    return CbgBreakdown(tuple(pois), dict(sorted(by_cat.items())), dist)


def q2_top_categories(wh: Warehouse, start: date, end: date, k: int) -> RankedResult:
    """NAICS categories ranked by raw visits over weeks fully inside the range."""
    _check_k(k)
    check_range(start, end)
    weeks = set(wh.periods_within(start, end))
    totals: dict[str, int] = defaultdict(int)
    for (pid, week), fact in wh.visit_facts.items():
        if week in weeks:
            totals[str(wh.pois[pid].naics_code)] += fact.raw_visits
    return RankedResult.from_totals(totals, k)


def q3_top_hangouts(
    wh: Warehouse, naics: int, region: Optional[str], start: date, end: date, k: int
) -> RankedResult:
    """POIs of one category ranked by long-duration (over 20 minute) visits.

    ``region`` is a state FIPS code or postal abbreviation; None or "all"
    disables the filter. A POI is listed when it has any week in range.
    """
    _check_k(k)
    check_range(start, end)
    state = None if region in (None, "", "all") else state_fips(region)
    weeks = set(wh.periods_within(start, end))
    totals: dict[str, int] = {}
    for pid in wh.pois_by_naics.get(naics, ()):
        if state is not None and wh.pois[pid].cbg[:2] != state:
            continue
        in_range = [w for w in wh.weeks_by_poi.get(pid, ()) if w in weeks]
        if in_range:
            totals[pid] = sum(wh.long_visits(pid, w) for w in in_range)
    return RankedResult.from_totals(totals, k)


@dataclass(frozen=True)
class ImpactResult:
    rows: tuple[tuple[str, float], ...]  # (category, intervention mean / baseline mean)
    note: str = ""


def _category_totals(wh: Warehouse, start: date, end: date) -> tuple[dict[str, int], int]:
    """Raw visits per category over the window, and the number of warehouse weeks in it."""
    weeks = set(wh.periods_within(start, end))
    totals: dict[str, int] = defaultdict(int)
    for (pid, week), fact in wh.visit_facts.items():
        if week in weeks:
            totals[str(wh.pois[pid].naics_code)] += fact.raw_visits
    return totals, len(weeks)


def q4_least_impacted_category(
    wh: Warehouse,
    baseline: tuple[date, date],
    intervention: tuple[date, date],
    min_baseline_visits: int = DEFAULT_MIN_BASELINE_VISITS,
) -> ImpactResult:
    """Categories ordered from least to most impacted.

    Impact is the ratio of mean weekly visits in the intervention window to
    mean weekly visits in the baseline window, where the mean divides by the
    number of warehouse weeks inside the window. A higher ratio means less
    impact. Categories with fewer than ``min_baseline_visits`` baseline visits
    are left out.
    """
    check_range(*baseline)
    check_range(*intervention)
    # touching windows are fine: a week ending on the shared day belongs to the baseline only
    if baseline[1] > intervention[0]:
        raise ValueError("baseline window must not overlap the intervention window")
    base, n_base = _category_totals(wh, *baseline)
    after, n_after = _category_totals(wh, *intervention)
    ratios = {}
    for category, total in base.items():
        if total == 0 or total < min_baseline_visits:
            continue
        after_mean = after.get(category, 0) / n_after if n_after else 0.0
        ratios[category] = after_mean / (total / n_base)
    if not ratios:
        return ImpactResult((), "no category has nonzero baseline visits above the minimum")
    rows = sorted(ratios.items(), key=lambda kv: (-kv[1], kv[0]))
    return ImpactResult(tuple(rows))


# -- answerability ---------------------------------------------------------------

QUERIES = {
    1: "categories and visit distribution for one census block group",
    2: "category with the most visits",
    3: "top bars in a state by long-duration visits",
    4: "category least affected by the pandemic and policy interventions",
    5: "median distance traveled, commuters versus delivery vehicles",
    6: "census block group with the most confirmed cases",
    7: "smartphones reporting from a bridge during a protest event",
    8: "unemployment rate by gender, category and brand",
}

_MISSING = {
    5: "mode of transportation",
    6: "confirmed COVID-19 cases",
    7: "device pings located at the event site",
    8: "unemployment rate by gender and brand",
}


@dataclass(frozen=True)
class Answerability:
    query_id: int
    status: str  # "Answerable" or "RequiresExternalData"
    missing: Optional[str] = None

    @property
    def answerable(self) -> bool:
        return self.status == "Answerable"

    def __str__(self) -> str:
        return self.status if self.answerable else f"{self.status}: {self.missing}"


def answerability(query_id: int) -> Answerability:
    if query_id not in QUERIES:
        raise ValueError(f"query id must be between 1 and 8, got {query_id}")
    if query_id in _MISSING:
        return Answerability(query_id, "RequiresExternalData", _MISSING[query_id])
    return Answerability(query_id, "Answerable")
