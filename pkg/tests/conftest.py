from __future__ import annotations

import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, derandomize=True, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("ci", parent=settings.get_profile("default"), max_examples=200)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# criterion number -> (name, passed); filled in by test_acceptance.py
ACCEPTANCE: dict[int, tuple[str, bool]] = {}


@pytest.fixture(scope="session")
def desk_dir(tmp_path_factory):
    from mobility_warehouse.synth import generate, preset

    out = tmp_path_factory.mktemp("desk")
    generate(preset("desk"), out)
    return out


@pytest.fixture(scope="session")
def desk(desk_dir):
    """(records, warehouse, social-distancing records) for the desk preset."""
    from mobility_warehouse.ingest import load_warehouse, parse_flat_weekly, parse_social_distancing

    records, report = parse_flat_weekly(desk_dir / "weekly_patterns.csv")
    assert not report.issues
    sd, _ = parse_social_distancing(desk_dir / "social_distancing.csv")
    return records, load_warehouse(records), sd


@pytest.fixture(scope="session")
def desk_snapshot(desk, tmp_path_factory):
    from mobility_warehouse.ingest import write_social_distancing
    from mobility_warehouse.warehouse import warehouse_save

    out = tmp_path_factory.mktemp("snapshot")
    _, wh, sd = desk
    warehouse_save(wh, out)
    write_social_distancing(sd, out / "social_distancing.csv")
    return out


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        name, ok = ACCEPTANCE[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n}: {name}")
