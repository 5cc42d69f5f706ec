"""``mw`` command line: synth, ingest, query, report, serve.

Exit status: 0 success, 1 validation errors, 2 usage error, 3 I/O error.
Data goes to stdout, logs to stderr.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import socket
import sys
from pathlib import Path
from typing import Optional, Sequence

from .api import (
    SNAPSHOT_ENV,
    dumps,
    hangouts_payload,
    top_categories_payload,
    visits_payload,
)
from .ingest import parse_flat_weekly, parse_social_distancing, load_warehouse, write_social_distancing
from .model import FormatError, IngestConflictError, PersistenceError, SnapshotError, parse_date
from .queries import answerability, q4_least_impacted_category, DEFAULT_MIN_BASELINE_VISITS
from .warehouse import DEFAULT_SUPPRESSION_THRESHOLD, suppress_low_device_cbgs, warehouse_load, warehouse_save

log = logging.getLogger("mobility_warehouse")

EXIT_OK, EXIT_VALIDATION, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3
SD_SNAPSHOT_FILE = "social_distancing.csv"


class UsageError(Exception):
    pass


def _date_arg(text: str):
    try:
        return parse_date(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def _snapshot(args) -> Path:
    snapshot = args.snapshot or os.environ.get(SNAPSHOT_ENV)
    if not snapshot:
        raise UsageError(f"--snapshot is required (or set {SNAPSHOT_ENV})")
    return Path(snapshot)


def _emit_csv(header, rows) -> None:
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)


# -- synth -------------------------------------------------------------------------


def cmd_synth(args) -> int:
    from .synth import ConfigError, SynthConfig, generate, preset

    try:
        config = SynthConfig.from_json(args.config) if args.config else preset(args.preset)
    except (ConfigError, ValueError) as e:
        raise UsageError(str(e)) from e
    for path in generate(config, args.out):
        print(path)
    return EXIT_OK


# -- ingest ------------------------------------------------------------------------


def cmd_ingest(args) -> int:
    snapshot = _snapshot(args)
    records, report = parse_flat_weekly(args.weekly)
    print(f"weekly_patterns: {report.summary()}")
    status = EXIT_VALIDATION if report.errors else EXIT_OK
    wh = load_warehouse(records, dedup_identical=args.dedup_identical)
    warehouse_save(wh, snapshot)
    if args.sd:
        sd, sd_report = parse_social_distancing(args.sd)
        print(f"social_distancing: {sd_report.summary()}")
        if sd_report.errors:
            status = EXIT_VALIDATION
        kept, suppressed = suppress_low_device_cbgs(sd, args.suppress_threshold)
        print(f"suppressed_cbgs={len(suppressed)} threshold={args.suppress_threshold} kept_records={len(kept)}")
        try:
            write_social_distancing(kept, snapshot / SD_SNAPSHOT_FILE)
        except OSError as e:
            raise PersistenceError(f"cannot write {snapshot / SD_SNAPSHOT_FILE}: {e}") from e
    for table, n in wh.table_sizes().items():
        print(f"{table}={n}")
    return status


# -- query -------------------------------------------------------------------------


def cmd_query(args) -> int:
    if args.query == "answerability":
        try:
            result = answerability(args.id)
        except ValueError as e:
            raise UsageError(str(e)) from e
        if args.format == "json":
            print(dumps({"query_id": result.query_id, "status": result.status, "missing": result.missing}))
        elif args.format == "csv":
            _emit_csv(["query_id", "status", "missing"], [[result.query_id, result.status, result.missing or ""]])
        else:
            print(result)
        return EXIT_OK

    wh = warehouse_load(_snapshot(args))
    fmt = args.format or "json"
    try:
        if args.query == "dwell":
            payload = visits_payload(wh, args.code, args.start, args.end)
            rows = [[b, v] for b, v in payload["buckets"].items()]
            header = ["dwell_bucket", "visits"]
        elif args.query == "top-categories":
            payload = top_categories_payload(wh, args.k, args.start, args.end)
            rows = [[i, r["key"], r["value"]] for i, r in enumerate(payload["rows"], 1)]
            header = ["rank", "naics_code", "visits"]
        elif args.query == "hangouts":
            payload = hangouts_payload(wh, args.code, args.state, args.k, args.start, args.end)
            rows = [[i, r["key"], r["value"]] for i, r in enumerate(payload["rows"], 1)]
            header = ["rank", "place_id", "long_duration_visits"]
        else:
            result = q4_least_impacted_category(
                wh, (args.baseline_start, args.baseline_end),
                (args.intervention_start, args.intervention_end), args.min_baseline_visits,
            )
            payload = {
                "baseline": [args.baseline_start.isoformat(), args.baseline_end.isoformat()],
                "intervention": [args.intervention_start.isoformat(), args.intervention_end.isoformat()],
                "rows": [{"key": k, "value": v} for k, v in result.rows],
                "note": result.note,
            }
            rows = [[k, repr(v)] for k, v in result.rows]
            header = ["naics_code", "impact_ratio"]
    except ValueError as e:
        raise UsageError(str(e)) from e
    if fmt == "json":
        print(dumps(payload))
    else:
        _emit_csv(header, rows)
    return EXIT_OK


# -- report ------------------------------------------------------------------------


def cmd_report(args) -> int:
    from .ingest import parse_social_distancing as _parse_sd
    from .report import ReportError, ReportSpec, SpecError, render_report

    snapshot = _snapshot(args)
    try:
        spec = ReportSpec.from_json(args.spec)
    except SpecError as e:
        raise UsageError(str(e)) from e
    wh = warehouse_load(snapshot)
    sd = None
    if (snapshot / SD_SNAPSHOT_FILE).exists():
        sd, _ = _parse_sd(snapshot / SD_SNAPSHOT_FILE)
    try:
        bundle = render_report(wh, sd, spec, args.out)
    except ReportError as e:
        log.error("%s", e)
        return EXIT_VALIDATION
    for path in bundle.files:
        print(path)
    return EXIT_OK


# -- serve -------------------------------------------------------------------------


def _parse_bind(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep:
        host, port = "127.0.0.1", text
    try:
        return host or "127.0.0.1", int(port)
    except ValueError:
        raise UsageError(f"--bind must be HOST:PORT, got {text!r}") from None


def cmd_serve(args) -> int:
    import uvicorn

    from .api import create_app

    snapshot = _snapshot(args)
    host, port = _parse_bind(args.bind)
    wh = warehouse_load(snapshot)
    sock = socket.socket(socket.AF_INET6 if ":" in host else socket.AF_INET, socket.SOCK_STREAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    try:
        sock.bind((host, port))
    except OSError as e:
        sock.close()
        log.error("cannot bind %s:%d: %s", host, port, e)
        return EXIT_IO
    app = create_app(wh, snapshot)
    log.info("serving %s on %s:%d", snapshot, host, port)
    server = uvicorn.Server(uvicorn.Config(app, log_level="warning"))
    server.run(sockets=[sock])
    return EXIT_OK


# -- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mw", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log at INFO level")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic input files")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", type=Path, help="JSON generator config")
    src.add_argument("--preset", choices=("desk", "mn-scale"))
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="parse, validate and load a snapshot")
    p.add_argument("--weekly", type=Path, required=True)
    p.add_argument("--sd", type=Path)
    p.add_argument("--snapshot", type=Path)
    p.add_argument("--suppress-threshold", type=int, default=DEFAULT_SUPPRESSION_THRESHOLD)
    p.add_argument("--dedup-identical", action="store_true", help="accept byte-identical duplicate rows")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("query", help="run a query against a snapshot")
    qsub = p.add_subparsers(dest="query", required=True)

    def query_parser(name: str, help: str) -> argparse.ArgumentParser:
        q = qsub.add_parser(name, help=help)
        q.add_argument("--snapshot", type=Path)
        q.add_argument("--format", choices=("csv", "json"))
        q.set_defaults(func=cmd_query)
        return q

    q = query_parser("dwell", "visits per dwell bucket for one NAICS code")
    q.add_argument("--code", type=int, required=True)
    q.add_argument("--start", type=_date_arg, required=True)
    q.add_argument("--end", type=_date_arg, required=True)

    q = query_parser("top-categories", "categories ranked by visits")
    q.add_argument("--k", type=int, default=10)
    q.add_argument("--start", type=_date_arg, required=True)
    q.add_argument("--end", type=_date_arg, required=True)

    q = query_parser("hangouts", "places ranked by long-duration visits")
    q.add_argument("--code", type=int, required=True)
    q.add_argument("--state", default=None, help="state FIPS code or postal abbreviation")
    q.add_argument("--k", type=int, default=10)
    q.add_argument("--start", type=_date_arg, required=True)
    q.add_argument("--end", type=_date_arg, required=True)

    q = query_parser("least-impacted", "categories ordered from least to most impacted")
    q.add_argument("--baseline-start", type=_date_arg, required=True)
    q.add_argument("--baseline-end", type=_date_arg, required=True)
    q.add_argument("--intervention-start", type=_date_arg, required=True)
    q.add_argument("--intervention-end", type=_date_arg, required=True)
    q.add_argument("--min-baseline-visits", type=int, default=DEFAULT_MIN_BASELINE_VISITS)

    q = query_parser("answerability", "whether a catalogue query can be answered")
    q.add_argument("--id", type=int, required=True)

    p = sub.add_parser("report", help="render a report bundle")
    p.add_argument("--snapshot", type=Path)
    p.add_argument("--spec", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("serve", help="serve the HTTP API over a snapshot")
    p.add_argument("--snapshot", type=Path)
    p.add_argument("--bind", default="127.0.0.1:8000")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except UsageError as e:
        print(f"mw: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, IngestConflictError) as e:
        print(f"mw: error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except (SnapshotError, PersistenceError, OSError) as e:
        print(f"mw: error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
