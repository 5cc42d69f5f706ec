"""Generate the desk dataset, ingest it and render a full report.

    python3 scripts/run_desk_pipeline.py /tmp/desk
"""

import argparse
import json
import sys
from pathlib import Path

from mobility_warehouse.cli import main

SPEC = {
    "title": "Desk-scale mobility report",
    "start": "2020-03-02",
    "end": "2021-07-05",
    "calendar": "calendar.csv",
    "sections": [
        {"type": "top_categories", "k": 5},
        {"type": "hangouts", "naics": 722410, "k": 3, "state": "MN"},
        {"type": "category_series", "categories": [722511, 722410, 722513, 445110]},
        {"type": "compliance", "metric": "time_at_home", "aggregation": "median_of_medians"},
        {"type": "sampling_rate", "level": "county", "population": "population.csv"},
        {"type": "outbreak_compare", "roster": "outbreak_roster.csv",
         "baseline_window": ["2020-03-02", "2020-03-16"], "baseline_week": "2020-03-02",
         "max_distance_meters": 50000, "visit_ratio_band": [0.2, 5.0]},
    ],
}


def run(*argv) -> None:
    status = main([str(a) for a in argv])
    if status:
        sys.exit(status)


def cli() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("workdir", type=Path)
    args = parser.parse_args()
    data, snapshot, report = args.workdir / "input", args.workdir / "snapshot", args.workdir / "report"

    run("synth", "--preset", "desk", "--out", data)
    run("ingest", "--weekly", data / "weekly_patterns.csv", "--sd", data / "social_distancing.csv",
        "--snapshot", snapshot)
    # report spec paths resolve against the report spec's own directory
    (data / "report.json").write_text(json.dumps(SPEC, indent=2) + "\n", encoding="utf-8")
    run("report", "--snapshot", snapshot, "--spec", data / "report.json", "--out", report)
    print((report / "summary.md").read_text(encoding="utf-8"))


if __name__ == "__main__":
    cli()
