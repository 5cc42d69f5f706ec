from datetime import date

import pytest
from hypothesis import given
from hypothesis import strategies as st

from mobility_warehouse.model import (
    BUCKET_LABELS,
    MN_CALENDAR,
    DwellBucket,
    PolicyCalendar,
    PopulationTable,
    level_of,
    long_duration,
    parse_date,
    roll_up,
    state_fips,
)


def test_bucket_order_matches_lower_bounds():
    assert BUCKET_LABELS == ("<5", "5-20", "21-60", "61-240", ">240")
    bounds = [DwellBucket(b).lower_bound for b in BUCKET_LABELS]
    assert bounds == sorted(bounds)
    assert [DwellBucket(b).order for b in BUCKET_LABELS] == list(range(5))


@pytest.mark.parametrize("label,expected", [("<5", False), ("5-20", False), ("21-60", True),
                                            ("61-240", True), (">240", True)])
def test_long_duration(label, expected):
    assert long_duration(label) is expected
    assert DwellBucket(label).is_long is expected


def test_unknown_bucket():
    with pytest.raises(ValueError, match="unknown bucket"):
        DwellBucket.parse("0-4")


def test_parse_date_accepts_both_styles():
    assert parse_date("2020-03-01") == parse_date("03-01-2020") == date(2020, 3, 1)
    with pytest.raises(ValueError):
        parse_date("2020/03/01")


@given(st.dates())
def test_parse_date_round_trips(d):
    assert parse_date(d.isoformat()) == d
    if d.year >= 1000:
        assert parse_date(d.strftime("%m-%d-%Y")) == d


def test_roll_up_levels():
    cbg = "270530001001"
    assert roll_up(cbg, "cbg") == cbg
    assert roll_up(cbg, "tract") == "27053000100"
    assert roll_up(cbg, "county") == "27053"
    assert roll_up(cbg, "state") == "27"
    assert level_of("27053") == "county"
    with pytest.raises(ValueError):
        roll_up("27053", "tract")
    with pytest.raises(ValueError):
        roll_up(cbg, "block")


@given(st.text("0123456789", min_size=12, max_size=12))
def test_roll_up_is_prefix_chain(cbg):
    ids = [roll_up(cbg, level) for level in ("cbg", "tract", "county", "state")]
    for finer, coarser in zip(ids, ids[1:]):
        assert finer.startswith(coarser)
        assert roll_up(finer, level_of(coarser)) == coarser


def test_state_fips():
    assert state_fips("MN") == "27"
    assert state_fips("mn") == "27"
    assert state_fips("27") == "27"


def test_calendar_has_stay_at_home_row():
    assert len(MN_CALENDAR.entries) == 9
    assert (date(2020, 3, 27), "MN stay-at-home") in MN_CALENDAR.entries
    assert MN_CALENDAR.entries[-1][0] == date(2021, 5, 27)


def test_calendar_rejects_disorder_and_blank_labels():
    with pytest.raises(ValueError):
        PolicyCalendar(((date(2020, 2, 1), "b"), (date(2020, 1, 1), "a")))
    with pytest.raises(ValueError):
        PolicyCalendar(((date(2020, 1, 1), "  "),))


def test_calendar_csv_round_trip(tmp_path):
    MN_CALENDAR.to_csv(tmp_path / "cal.csv")
    assert PolicyCalendar.from_csv(tmp_path / "cal.csv") == MN_CALENDAR


def test_population_table():
    table = PopulationTable.from_rows([("27053", 100), ("27123", 50)])
    assert table.region_level == "county"
    with pytest.raises(ValueError):
        PopulationTable.from_rows([("27053", 1), ("27", 5)])
    with pytest.raises(ValueError):
        PopulationTable.from_rows([])
    with pytest.raises(ValueError):
        PopulationTable("county", {"27053": -1})


def test_long_buckets_partition():
    long = [b for b in DwellBucket if b.is_long]
    assert len(long) == 3
    assert all(b.lower_bound >= 21 for b in long)
    assert all(b.lower_bound < 21 for b in DwellBucket if not b.is_long)
