import json
from datetime import date
from statistics import fmean

import pytest
from hypothesis import given
from hypothesis import strategies as st

from mobility_warehouse.ingest import parse_flat_weekly, parse_social_distancing
from mobility_warehouse.model import PopulationTable
from mobility_warehouse.synth import (
    BARS,
    FSR,
    OUTPUT_FILES,
    ConfigError,
    OutbreakSpec,
    Phase,
    SynthConfig,
    device_counts,
    generate,
    generate_records,
    outbreak_roster,
    populations,
    preset,
)


def test_same_seed_same_bytes(tmp_path):
    config = SynthConfig(seed=42, n_pois={FSR: 3, BARS: 2}, weeks=(date(2020, 3, 2), date(2020, 4, 27)))
    generate(config, tmp_path / "a")
    generate(config, tmp_path / "b")
    for name in OUTPUT_FILES:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_different_seed_different_data():
    a = list(generate_records(SynthConfig(seed=1, n_pois={FSR: 2})))
    b = list(generate_records(SynthConfig(seed=2, n_pois={FSR: 2})))
    assert a != b


def test_category_streams_are_independent():
    # adding a category must not disturb the records of another
    alone = list(generate_records(SynthConfig(seed=5, n_pois={FSR: 2})))
    mixed = [r for r in generate_records(SynthConfig(seed=5, n_pois={FSR: 2, BARS: 3})) if r.naics_code == FSR]
    assert alone == mixed


def test_zero_pois_gives_header_only_files(tmp_path):
    paths = generate(SynthConfig(seed=1, n_pois={FSR: 0}), tmp_path)
    assert [p.name for p in paths] == list(OUTPUT_FILES)
    for name in ("weekly_patterns.csv", "social_distancing.csv", "population.csv", "outbreak_roster.csv"):
        assert len((tmp_path / name).read_text().splitlines()) == 1
    assert parse_flat_weekly(tmp_path / "weekly_patterns.csv")[0] == []


def test_phase_multiplier_law_of_large_numbers():
    sah = Phase(date(2020, 3, 30), date(2020, 5, 17), {BARS: 0.2})
    config = SynthConfig(seed=8, n_pois={BARS: 24}, phases=[sah], weeks=(date(2020, 3, 2), date(2020, 5, 25)))
    visits = [r.raw_visit_counts for r in generate_records(config)
              if sah.start <= r.period_start and r.period_end <= date(2020, 5, 18)]
    assert len(visits) >= 20 * 7
    assert fmean(visits) == pytest.approx(0.2 * config.base(BARS), rel=0.10)


def test_records_pass_validation(tmp_path):
    generate(preset("desk"), tmp_path)
    records, report = parse_flat_weekly(tmp_path / "weekly_patterns.csv")
    assert len(records) == 980 <= 1000
    assert report.issues == []
    sd, report = parse_social_distancing(tmp_path / "social_distancing.csv")
    assert report.issues == []
    assert len({r.date for r in sd}) == 70 * 7
    assert len(sd) == 70 * 7 * 10


def test_desk_population_gives_exact_rate():
    config = preset("desk")
    pops = populations(config)
    assert sum(device_counts(config)) / sum(pops.values()) == 0.05


@given(st.floats(0.01, 0.05), st.floats(0.06, 0.3), st.integers(0, 50))
def test_population_range_keeps_every_cbg_in_band(lo, hi, seed):
    config = SynthConfig(seed=seed, n_pois={FSR: 1}, n_cbgs=12, sampling_rate=(lo, hi))
    pops = populations(config)
    table = PopulationTable.from_rows(pops.items())
    for cbg, devices in zip(sorted(table.rows), device_counts(config)):
        assert lo <= devices / table.rows[cbg] <= hi


def test_outbreak_roster():
    config = SynthConfig(seed=1, n_pois={BARS: 5}, outbreak=OutbreakSpec(BARS, 2, date(2020, 6, 15), month_linked="2020-06"))
    roster = outbreak_roster(config)
    assert [e.place_id for e in roster] == ["sg-722410-00000", "sg-722410-00001"]
    assert {e.month_linked for e in roster} == {"2020-06"}


def test_config_json_round_trip(tmp_path):
    config = SynthConfig(seed=3, n_pois={FSR: 2}, sampling_rate=(0.01, 0.15),
                         outbreak=OutbreakSpec(FSR, 1, date(2020, 7, 6)))
    path = tmp_path / "c.json"
    path.write_text(json.dumps(config.to_dict()))
    assert SynthConfig.from_json(path) == config


@pytest.mark.parametrize("bad", [
    {"n_pois": {"722511": -1}},
    {"dwell_mix": {"722511": [0.5, 0.5, 0.5, 0, 0]}},
    {"sampling_rate": 0},
    {"weeks": ["2020-05-04", "2020-03-02"]},
    {"colour": "red"},
])
def test_invalid_configs(bad):
    with pytest.raises(ConfigError):
        SynthConfig.from_dict({"n_pois": {"722511": 1}, **bad})


def test_presets():
    assert sum(preset("desk").n_pois.values()) == 14
    with pytest.raises(ValueError):
        preset("planet")


def test_generated_rows_have_no_warnings():
    from mobility_warehouse.ingest import validate_record

    for r in generate_records(preset("desk")):
        assert validate_record(r) == []


def test_every_phase_multiplier_is_recoverable():
    config = SynthConfig(seed=12, n_pois={code: 20 for code in (FSR, BARS, 722513, 445110, 611110)})
    weekly: dict = {}
    for r in generate_records(config):
        weekly.setdefault((r.naics_code, config.multiplier(r.naics_code, r.period_start)), []).append(r.raw_visit_counts)
    for code in config.n_pois:
        base = fmean(weekly[(code, 1.0)])
        for (c, mult), visits in weekly.items():
            if c == code and mult != 1.0:
                assert fmean(visits) / base == pytest.approx(mult, rel=0.10), (code, mult)
