"""Weekly long-duration visits by category, relative to the pre-closure weeks.

Prints one row per week with each category's value divided by its mean
over the weeks before 2020-03-16; with --plot, also draws the series with
the policy calendar marked (needs matplotlib).
"""

import argparse
from datetime import date
from statistics import fmean

from mobility_warehouse.analytics import annotate_with_calendar, naics_name, weekly_category_series
from mobility_warehouse.ingest import load_warehouse
from mobility_warehouse.model import MN_CALENDAR
from mobility_warehouse.synth import BARS, FSR, GROCERY, LSR, SynthConfig, generate_records

BASELINE_END = date(2020, 3, 16)


def relative_series(seed: int, pois: int, dwell_filter: str):
    config = SynthConfig(seed=seed, n_pois={FSR: pois, BARS: pois, LSR: pois, GROCERY: pois})
    wh = load_warehouse(generate_records(config))
    series = weekly_category_series(wh, sorted(config.n_pois), dwell_filter, config.weeks[0], date(2021, 7, 5))
    out = []
    for s in series:
        base = fmean(v for d, v in s.points if d < BASELINE_END)
        out.append((s, [(d, v / base) for d, v in s.points]))
    return out


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=20200302)
    parser.add_argument("--pois", type=int, default=20, help="POIs per category")
    parser.add_argument("--dwell-filter", choices=("all", "long_only"), default="long_only")
    parser.add_argument("--plot", help="write a PNG to this path")
    args = parser.parse_args()

    rows = relative_series(args.seed, args.pois, args.dwell_filter)
    print("week_start," + ",".join(s.label for s, _ in rows))
    for i, (week, _) in enumerate(rows[0][1]):
        print(week.isoformat() + "," + ",".join(f"{rel[i][1]:.3f}" for _, rel in rows))

    if args.plot:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(11, 5))
        for s, rel in rows:
            ax.plot([d for d, _ in rel], [v for _, v in rel], label=naics_name(s.label))
        for day, label in annotate_with_calendar(rows[0][0], MN_CALENDAR).annotations:
            ax.axvline(day, color="grey", linewidth=0.6, linestyle="--")
            ax.text(day, ax.get_ylim()[1], label, rotation=90, fontsize=6, va="top")
        ax.set_ylabel("visits relative to early March 2020")
        ax.legend(fontsize=7)
        fig.tight_layout()
        fig.savefig(args.plot, dpi=150)
        print(f"wrote {args.plot}")


if __name__ == "__main__":
    main()
