"""Read-only HTTP service over one warehouse snapshot.

The payload builders here are shared with the CLI so both surfaces emit the
same JSON for the same parameters.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass
from datetime import date, datetime, timezone
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.responses import Response

from .model import parse_date
from .queries import RankedResult, dwell_aggregation, q2_top_categories, q3_top_hangouts
from .warehouse import Warehouse, warehouse_load

log = logging.getLogger(__name__)

SNAPSHOT_ENV = "MW_SNAPSHOT_DIR"


@dataclass(frozen=True)
class ApiConfig:
    snapshot_dir: Path
    host: str = "127.0.0.1"
    port: int = 8000
    population_path: Optional[Path] = None
    calendar_path: Optional[Path] = None

    @classmethod
    def from_env(cls, **overrides) -> "ApiConfig":
        snapshot = overrides.pop("snapshot_dir", None) or os.environ.get(SNAPSHOT_ENV)
        if not snapshot:
            raise ValueError(f"no snapshot directory given and {SNAPSHOT_ENV} is unset")
        return cls(Path(snapshot), **overrides)


class BadParameter(ValueError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message


def dumps(payload) -> str:
    """Serialization used by both the CLI and the service."""
    return json.dumps(payload, ensure_ascii=False, separators=(",", ":"))


def _ranked(result: RankedResult) -> list[dict]:
    return [{"key": k, "value": v} for k, v in result.rows]


def visits_payload(wh: Warehouse, code: int, start: date, end: date) -> dict:
    return {
        "code": code,
        "start": start.isoformat(),
        "end": end.isoformat(),
        "buckets": dwell_aggregation(wh, code, start, end),
    }


def top_categories_payload(wh: Warehouse, k: int, start: date, end: date) -> dict:
    return {
        "k": k,
        "start": start.isoformat(),
        "end": end.isoformat(),
        "rows": _ranked(q2_top_categories(wh, start, end, k)),
    }


def hangouts_payload(wh: Warehouse, code: int, state: Optional[str], k: int, start: date, end: date) -> dict:
    return {
        "code": code,
        "state": state or "all",
        "k": k,
        "start": start.isoformat(),
        "end": end.isoformat(),
        "rows": _ranked(q3_top_hangouts(wh, code, state, start, end, k)),
    }


# -- parameter parsing ---------------------------------------------------------------


def _required(params, name: str) -> str:
    value = params.get(name)
    if value is None or value.strip() == "":
        raise BadParameter(name, "missing required parameter")
    return value


def _code(params, name: str = "Code") -> int:
    text = _required(params, name).strip()
    if not (len(text) == 6 and text.isdigit()):
        raise BadParameter(name, f"expected a 6-digit NAICS code, got {text!r}")
    return int(text)


def _date(params, name: str) -> date:
    text = _required(params, name).strip().strip("'\"")
    try:
        return parse_date(text)
    except ValueError:
        raise BadParameter(name, f"expected YYYY-MM-DD or MM-DD-YYYY, got {text!r}") from None


def _range(params) -> tuple[date, date]:
    start, end = _date(params, "Start_Date"), _date(params, "End_Date")
    if start > end:
        raise BadParameter("Start_Date", "Start_Date is after End_Date")
    return start, end


def _k(params, default: int = 10) -> int:
    text = params.get("k")
    if text is None:
        return default
    try:
        k = int(text)
    except ValueError:
        raise BadParameter("k", f"expected an integer, got {text!r}") from None
    if k < 1:
        raise BadParameter("k", "must be at least 1")
    return k


def _json(payload, status: int = 200) -> Response:
    return Response(dumps(payload), status_code=status, media_type="application/json")


def create_app(wh: Warehouse, snapshot_dir: Optional[Path] = None) -> FastAPI:
    app = FastAPI(title="mobility warehouse", docs_url=None, redoc_url=None)
    loaded_at = datetime.now(timezone.utc).replace(microsecond=0).isoformat()
    counts = wh.table_sizes()
    # build indexes before serving so concurrent requests never race on them
    for index in ("pois_by_naics", "pois_by_cbg", "weeks_by_poi", "dwell_by_poi_week"):
        getattr(wh, index)

    @app.exception_handler(BadParameter)
    async def bad_parameter(request: Request, exc: BadParameter):
        return _json({"error": {"field": exc.field, "message": exc.message}}, 400)

    @app.get("/health")
    def health():
        return _json({
            "status": "ok",
            "snapshot": str(snapshot_dir) if snapshot_dir else None,
            "snapshot_loaded_at": loaded_at,
            "record_counts": counts,
        })

    @app.get("/Visits")
    def visits(request: Request):
        q = request.query_params
        code = _code(q)
        start, end = _range(q)
        return _json(visits_payload(wh, code, start, end))

    @app.get("/Categories/Top")
    def top_categories(request: Request):
        q = request.query_params
        k = _k(q)
        start, end = _range(q)
        return _json(top_categories_payload(wh, k, start, end))

    @app.get("/Hangouts")
    def hangouts(request: Request):
        q = request.query_params
        code = _code(q)
        k = _k(q)
        start, end = _range(q)
        return _json(hangouts_payload(wh, code, q.get("State") or None, k, start, end))

    return app


def load_app(config: ApiConfig) -> FastAPI:
    """Load the snapshot (raising on any problem) and build the app around it."""
    wh = warehouse_load(config.snapshot_dir)
    return create_app(wh, config.snapshot_dir)
