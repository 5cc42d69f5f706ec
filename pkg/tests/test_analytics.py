from datetime import date, timedelta

import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

import oracle
from factories import record, sd
from strategies import record_sets

from mobility_warehouse.analytics import (
    MatchedPair,
    MatchParams,
    RosterEntry,
    WeeklySeries,
    annotate_with_calendar,
    baseline_weekly_visits,
    compliance_series,
    haversine_m,
    match_controls,
    naics_name,
    outbreak_trend_compare,
    read_outbreak_roster,
    sampling_rate,
    weekly_category_series,
    write_outbreak_roster,
)
from mobility_warehouse.ingest import load_warehouse
from mobility_warehouse.model import MN_CALENDAR, PolicyCalendar, PopulationTable
from mobility_warehouse.synth import SynthConfig, device_counts, generate_social_distancing, populations, preset

W1, W2, W3 = date(2020, 3, 2), date(2020, 3, 9), date(2020, 3, 16)
SPAN = (date(2020, 3, 1), date(2020, 12, 31))
# one degree of latitude is about 111.2 km on this sphere
KM_LAT = 1 / 111.195


def test_naics_names():
    assert naics_name(722410) == "Drinking Places (Alcoholic Beverages)"
    assert naics_name("999999") == "999999"


def test_series_three_weeks():
    records = [record(week=w, buckets={"<5": i + 1, "21-60": 10 * (i + 1)}) for i, w in enumerate((W1, W2, W3))]
    wh = load_warehouse(records)
    (series,) = weekly_category_series(wh, [722410], "all", *SPAN)
    assert list(series.points) == oracle.weekly_series(records, 722410, "all", *SPAN)
    assert series.values == [11, 22, 33]


def test_long_only_filter_and_additivity():
    wh = load_warehouse([record("a", buckets={"<5": 9}), record("b", naics=722511, buckets={"61-240": 4})])
    (bars,) = weekly_category_series(wh, [722410], "long_only", *SPAN)
    assert bars.values == [0]
    both = weekly_category_series(wh, [722511, 722410], "long_only", *SPAN)
    assert [s.label for s in both] == ["722410", "722511"]
    assert [s.values for s in both] == [[0], [4]]
    with pytest.raises(ValueError):
        weekly_category_series(wh, [722410], "short_only", *SPAN)


def test_series_zero_fills_missing_weeks():
    wh = load_warehouse([record("a", week=W1), record("b", naics=722511, week=W2)])
    (bars,) = weekly_category_series(wh, [722410], "all", *SPAN)
    assert bars.points == ((W1, 10), (W2, 0))


def test_weekly_series_rejects_unordered_points():
    with pytest.raises(ValueError):
        WeeklySeries("x", ((W2, 1), (W1, 2)))


def test_annotations():
    series = WeeklySeries("s", tuple((date(2020, 3, 2) + timedelta(weeks=i), 0) for i in range(17)))
    annotated = annotate_with_calendar(series, MN_CALENDAR)
    assert (date(2020, 3, 27), "MN stay-at-home") in annotated.annotations
    assert all(d <= date(2020, 6, 28) for d, _ in annotated.annotations)
    assert (date(2020, 11, 16), "MN shutdown order for Bars and Restaurants") not in annotated.annotations
    assert annotate_with_calendar(series, PolicyCalendar(())).annotations == ()


def test_sampling_rate_arithmetic():
    table = PopulationTable.from_rows([("270530001001", 1000)])
    result = sampling_rate([sd(devices=50)], table, "cbg", (W1, W1))
    assert result.rates == {"270530001001": 0.05}


def test_sampling_rate_rolls_population_up():
    table = PopulationTable.from_rows([("270530001001", 600), ("270530001002", 400), ("270610001001", 0)])
    records = [sd("270530001001", devices=30), sd("270530001002", devices=20), sd("270610001001", devices=5)]
    result = sampling_rate(records, table, "county", (W1, W1))
    assert result.rates == {"27053": 0.05}
    assert result.omitted == ("27061",)
    with pytest.raises(ValueError):
        sampling_rate(records, PopulationTable.from_rows([("27", 10)]), "county", (W1, W1))


def test_sampling_rate_flags_rates_above_one():
    table = PopulationTable.from_rows([("27", 10)])
    assert sampling_rate([sd(devices=20)], table, "state", (W1, W1)).flagged == ("27",)


def test_statewide_rate_at_full_scale():
    config = preset("mn-scale")
    devices = sum(device_counts(config))
    assert devices == 294_014
    rate = devices / sum(populations(config).values())
    assert rate == pytest.approx(0.05, rel=1e-3)


def test_compliance_constant_data():
    records = [sd(cbg, W1 + timedelta(days=d), devices=n, home=600.0)
               for d in range(14) for cbg, n in (("270530001001", 10), ("270530001002", 90))]
    for aggregation in ("median_of_medians", "device_weighted_mean"):
        s = compliance_series(records, "time_at_home", aggregation, W1, W1 + timedelta(days=13))
        assert s.values == [600, 600]


def test_compliance_single_record_aggregations_agree():
    one_day = [sd(devices=10, home=640.0)]
    assert compliance_series(one_day, "time_at_home", "median_of_medians", W1, W1).values == \
        compliance_series(one_day, "time_at_home", "device_weighted_mean", W1, W1).values == [640.0]


def test_device_weighted_mean():
    records = [sd("270530001001", devices=10, home=500.0), sd("270530001002", devices=30, home=700.0),
               sd("270530001003", devices=60, home=600.0)]
    assert compliance_series(records, "time_at_home", "device_weighted_mean", W1, W1).values == [620.0]
    assert compliance_series(records, "time_at_home", "median_of_medians", W1, W1).values == [600.0]


def test_compliance_peak_matches_generator():
    config = SynthConfig(seed=9, n_pois={722511: 1}, n_cbgs=20, weeks=(W1, date(2020, 6, 29)))
    start = date(2020, 3, 2)
    s = compliance_series(generate_social_distancing(config), "time_at_home", "median_of_medians",
                          start, date(2020, 7, 5))
    peak_week = max(s.points, key=lambda p: p[1])[0]
    assert peak_week == date(2020, 4, 6)


def test_compliance_suppression_removes_small_cbgs():
    records = [sd("270530001001", devices=2, home=100.0), sd("270530001002", devices=50, home=700.0)]
    s = compliance_series(records, "time_at_home", "median_of_medians", W1, W1, suppress_threshold=5)
    assert s.values == [700.0]


def test_haversine():
    assert haversine_m(44.0, -93.0, 44.0, -93.0) == 0
    assert haversine_m(0, 0, 1, 0) == pytest.approx(111_195, rel=1e-4)


@given(st.floats(-80, 80), st.floats(-179, 179), st.floats(-80, 80), st.floats(-179, 179))
def test_haversine_symmetric_and_bounded(a, b, c, d):
    x = haversine_m(a, b, c, d)
    assert x == pytest.approx(haversine_m(c, d, a, b), abs=1e-6)
    assert 0 <= x <= 20_016_000


def bar(pid, lat, visits, naics=722410):
    return [record(pid, naics=naics, lat=lat, lon=-93.0, week=w, buckets={"21-60": visits}) for w in (W1, W2)]


PARAMS = MatchParams((W1, W3))


def test_match_within_distance_and_band():
    wh = load_warehouse(bar("out", 45.0, 100) + bar("cand", 45.0 + 2 * KM_LAT, 110))
    pairs, unmatched = match_controls(wh, ["out"], ["cand"], PARAMS)
    assert unmatched == []
    (pair,) = pairs
    assert pair.control_poi == "cand"
    assert pair.distance_meters == pytest.approx(2000, rel=1e-3)
    assert pair.baseline_visit_ratio == pytest.approx(1.1)


def test_match_requires_same_category():
    wh = load_warehouse(bar("out", 45.0, 100) + bar("shop", 45.0 + KM_LAT, 100, naics=445110))
    assert match_controls(wh, ["out"], ["shop"], PARAMS) == ([], ["out"])


def test_match_picks_nearest():
    wh = load_warehouse(bar("out", 45.0, 100) + bar("far", 45.0 + 3 * KM_LAT, 100) + bar("near", 45.0 - KM_LAT, 100))
    pairs, _ = match_controls(wh, ["out"], ["far", "near"], PARAMS)
    assert pairs[0].control_poi == "near"


def test_match_respects_limits_and_uses_each_control_once():
    wh = load_warehouse(bar("o1", 45.0, 100) + bar("o2", 45.0, 100) + bar("c", 45.0, 100)
                        + bar("too_far", 45.0 + 6 * KM_LAT, 100) + bar("too_big", 45.0, 200))
    pairs, unmatched = match_controls(wh, ["o2", "o1"], ["c", "too_far", "too_big"], PARAMS)
    assert [(p.outbreak_poi, p.control_poi) for p in pairs] == [("o1", "c")]
    assert unmatched == ["o2"]
    assert baseline_weekly_visits(wh, "o1", (W1, W3)) == 100


def test_match_params_validation():
    with pytest.raises(ValueError):
        MatchParams((W1, W3), visit_ratio_band=(1.1, 1.3))
    with pytest.raises(ValueError):
        MatchParams((W1, W3), max_distance_meters=0)


def test_trend_compare_identical_groups_and_baseline():
    wh = load_warehouse(bar("o", 45.0, 100) + bar("c", 45.0, 100))
    pairs, _ = match_controls(wh, ["o"], ["c"], PARAMS)
    outbreak, control = outbreak_trend_compare(wh, pairs, W1, *SPAN)
    assert outbreak.values == control.values == [1.0, 1.0]
    with pytest.raises(ValueError, match="outbreak"):
        outbreak_trend_compare(wh, pairs, W3, *SPAN)


def test_roster_round_trip(tmp_path):
    entries = [RosterEntry("sg-1", "2020-06"), RosterEntry("sg-2", "2020-07")]
    write_outbreak_roster(entries, tmp_path / "r.csv")
    assert read_outbreak_roster(tmp_path / "r.csv") == entries


@given(record_sets(), st.sampled_from(["all", "long_only"]))
def test_series_agree_with_scan(records, dwell_filter):
    wh = load_warehouse(records)
    start, end = date(2020, 3, 2), date(2020, 4, 27)
    for s in weekly_category_series(wh, [722410, 722511], dwell_filter, start, end):
        assert list(s.points) == oracle.weekly_series(records, int(s.label), dwell_filter, start, end)


@given(record_sets(), st.sets(st.sampled_from([722410, 722511, 722513, 445110]), min_size=1))
def test_series_additive_over_category_sets(records, categories):
    wh = load_warehouse(records)
    together = weekly_category_series(wh, categories, "all", *SPAN)
    separate = [weekly_category_series(wh, [c], "all", *SPAN)[0] for c in sorted(categories)]
    assert together == separate


weekly_long = st.lists(st.tuples(st.integers(0, 400), st.integers(0, 400)), min_size=1, max_size=12)


@given(weekly_long, weekly_long, st.integers(1, 1000))
def test_normalized_compare_is_scale_free(outbreak_weeks, control_weeks, c):
    def rows(pid, weeks, scale):
        return [
            record(pid, week=W1 + timedelta(weeks=i), buckets={"21-60": a * scale, "61-240": b * scale})
            for i, (a, b) in enumerate(weeks)
        ]

    pairs = [MatchedPair("out", "ctl", 0.0, 1.0)]
    assume(sum(outbreak_weeks[0]) and sum(control_weeks[0]))
    plain = load_warehouse(rows("out", outbreak_weeks, 1) + rows("ctl", control_weeks, 1))
    scaled = load_warehouse(rows("out", outbreak_weeks, c) + rows("ctl", control_weeks, c))
    got = outbreak_trend_compare(scaled, pairs, W1, *SPAN)
    assert got == outbreak_trend_compare(plain, pairs, W1, *SPAN)
    assert got[0].value_at(W1) == got[1].value_at(W1) == 1.0


@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 500)), min_size=1, max_size=20),
       st.integers(1, 10_000))
def test_sampling_rate_scale_invariant(rows, population):
    records = [sd(f"27053000100{i}", W1, n) for i, n in rows]
    table = PopulationTable.from_rows([(f"27053000100{i}", population + i) for i in range(6)])
    doubled = [sd(r.origin_cbg, r.date, 2 * r.device_count) for r in records]
    table2 = PopulationTable.from_rows([(k, 2 * v) for k, v in table.rows.items()])
    for level in ("cbg", "county"):
        assert sampling_rate(records, table, level, (W1, W1)) == sampling_rate(doubled, table2, level, (W1, W1))


@given(st.lists(st.tuples(st.floats(-0.05, 0.05), st.integers(50, 150), st.booleans()), min_size=2, max_size=12),
       st.floats(500, 8000))
def test_matches_satisfy_constraints(places, max_distance):
    records, outbreak, candidates = [], [], []
    for i, (dlat, visits, is_outbreak) in enumerate(places):
        pid = f"b{i:02d}"
        naics = 722410 if i % 4 else 722511
        records += bar(pid, 45.0 + dlat, visits, naics=naics)
        (outbreak if is_outbreak else candidates).append(pid)
    wh = load_warehouse(records)
    params = MatchParams((W1, W3), max_distance_meters=max_distance)
    pairs, unmatched = match_controls(wh, outbreak, candidates, params)
    controls = [p.control_poi for p in pairs]
    assert len(controls) == len(set(controls))
    assert sorted([p.outbreak_poi for p in pairs] + unmatched) == sorted(outbreak)
    for p in pairs:
        o, c = wh.pois[p.outbreak_poi], wh.pois[p.control_poi]
        assert o.naics_code == c.naics_code
        assert p.control_poi not in outbreak
        assert p.distance_meters <= max_distance
        assert 0.8 <= p.baseline_visit_ratio <= 1.25


@given(record_sets())
def test_annotation_keeps_points(records):
    wh = load_warehouse(records)
    for s in weekly_category_series(wh, [722410, 722511], "long_only", *SPAN):
        assert annotate_with_calendar(s, MN_CALENDAR).points == s.points
