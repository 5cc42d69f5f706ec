"""Deterministic generator for weekly-pattern, social-distancing and population files.

Generated data has known ground truth: the expected weekly visits of a POI
in category c during phase p is base(c) * multiplier(p, c). Randomness comes
only from ``random.Random`` streams seeded with strings (stable across
platforms and Python versions) and is consumed through integer draws, so a
fixed config always produces the same bytes.
"""

from __future__ import annotations

import bisect
import json
import logging
import math
import random
from dataclasses import asdict, dataclass, field
from datetime import date, timedelta
from fractions import Fraction
from pathlib import Path
from typing import Iterator, Optional, Union

from .analytics import RosterEntry, write_outbreak_roster
from .ingest import write_flat_weekly, write_social_distancing
from .model import (
    BUCKET_LABELS,
    MN_CALENDAR,
    WEEK,
    FlatWeeklyRecord,
    PersistenceError,
    SocialDistancingRecord,
    WarehouseError,
)

log = logging.getLogger(__name__)

FSR, BARS, LSR, GROCERY, SCHOOLS = 722511, 722410, 722513, 445110, 611110

DEFAULT_DWELL_MIX = {
    FSR: (0.05, 0.25, 0.45, 0.20, 0.05),
    BARS: (0.05, 0.20, 0.40, 0.30, 0.05),
    LSR: (0.35, 0.45, 0.15, 0.04, 0.01),
    GROCERY: (0.30, 0.50, 0.17, 0.02, 0.01),
    SCHOOLS: (0.05, 0.10, 0.15, 0.30, 0.40),
}
GENERIC_DWELL_MIX = (0.20, 0.40, 0.30, 0.08, 0.02)
DEFAULT_BASE_VISITS = {FSR: 300, BARS: 200, LSR: 600, GROCERY: 900, SCHOOLS: 400}
GENERIC_BASE_VISITS = 150

# minutes used as the median dwell when the median visit falls in a bucket
_BUCKET_MINUTES = (3, 12, 38, 115, 300)
_WEIGHT_SCALE = 1 << 20
BRANDS = {LSR: ("McDonald's", "Subway"), GROCERY: ("Cub Foods",), FSR: ("Applebee's",)}
_NAMES = {FSR: "Restaurant", BARS: "Bar", LSR: "Quick Eats", GROCERY: "Grocery", SCHOOLS: "School"}


class ConfigError(WarehouseError, ValueError):
    """The generator configuration is invalid."""


@dataclass(frozen=True)
class Phase:
    start: date
    end: date
    multipliers: dict[int, float]
    name: str = ""


@dataclass(frozen=True)
class DwellProfile:
    start: date
    end: date
    minutes: float


@dataclass(frozen=True)
class OutbreakSpec:
    """The first ``count`` POIs of ``naics`` are outbreak sites.

    From ``start`` on, outbreak sites run at ``outbreak_multiplier`` of base and
    every other POI of the category at ``control_multiplier``, overriding phases.
    """

    naics: int
    count: int
    start: date
    outbreak_multiplier: float = 1.0
    control_multiplier: float = 0.5
    month_linked: str = ""


def _phases_from_calendar() -> list[Phase]:
    d = dict((label, day) for day, label in MN_CALENDAR.entries)
    one = timedelta(days=1)
    sah = d["MN stay-at-home"]
    p1 = d["MN reopening Phase 1"]
    p2 = d["MN reopening Phase 2"]
    p3 = d["MN reopening Phase 3"]
    shut = d["MN shutdown order for Bars and Restaurants"]
    reopen = d["MN reopening order for Bars and Restaurants"]
    nolimit = d["No limits on size and no social distancing requirements."]
    return [
        Phase(sah, p1 - one, {FSR: 0.15, BARS: 0.10, LSR: 0.60, GROCERY: 0.90, SCHOOLS: 0.05}, "stay-at-home"),
        Phase(p1, p2 - one, {FSR: 0.35, BARS: 0.30, LSR: 0.70, GROCERY: 0.90, SCHOOLS: 0.05}, "phase 1"),
        Phase(p2, p3 - one, {FSR: 0.50, BARS: 0.45, LSR: 0.75, GROCERY: 0.90, SCHOOLS: 0.05}, "phase 2"),
        Phase(p3, shut - one, {FSR: 0.80, BARS: 0.70, LSR: 0.80, GROCERY: 0.95, SCHOOLS: 0.30}, "phase 3"),
        Phase(shut, reopen - one, {FSR: 0.30, BARS: 0.20, LSR: 0.70, GROCERY: 0.95, SCHOOLS: 0.30}, "shutdown"),
        Phase(reopen, nolimit - one, {FSR: 0.70, BARS: 0.60, LSR: 0.80, GROCERY: 0.95, SCHOOLS: 0.50}, "reopening"),
        Phase(nolimit, date(2099, 12, 31), {FSR: 0.90, BARS: 0.85, LSR: 0.90, GROCERY: 1.00, SCHOOLS: 0.50}, "no limits"),
    ]


DEFAULT_PHASES = _phases_from_calendar()
DEFAULT_HOME_DWELL = [
    DwellProfile(date(2020, 3, 16), date(2020, 3, 26), 700),
    DwellProfile(date(2020, 3, 27), date(2020, 4, 5), 820),
    DwellProfile(date(2020, 4, 6), date(2020, 4, 12), 900),
    DwellProfile(date(2020, 4, 13), date(2020, 5, 17), 780),
    DwellProfile(date(2020, 5, 18), date(2099, 12, 31), 660),
]


@dataclass
class SynthConfig:
    seed: int = 0
    n_pois: dict[int, int] = field(default_factory=dict)
    n_cbgs: int = 10
    n_counties: int = 2
    state: str = "27"
    # first and last week start, inclusive; weeks are 7 days apart
    weeks: tuple[date, date] = (date(2020, 3, 2), date(2021, 6, 28))
    base_visits: dict[int, int] = field(default_factory=dict)
    dwell_mix: dict[int, tuple[float, ...]] = field(default_factory=dict)
    phases: list[Phase] = field(default_factory=lambda: list(DEFAULT_PHASES))
    baseline_home_dwell: float = 600
    home_dwell_profile: list[DwellProfile] = field(default_factory=lambda: list(DEFAULT_HOME_DWELL))
    devices_per_cbg: int = 100
    total_devices: Optional[int] = None
    population: Union[int, dict[str, int], None] = None
    sampling_rate: Union[float, tuple[float, float]] = 0.05
    outbreak: Optional[OutbreakSpec] = None
    noise: float = 0.05
    origin: tuple[float, float] = (44.90, -93.40)
    cell_degrees: float = 0.02

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.weeks[1] < self.weeks[0] or (self.weeks[1] - self.weeks[0]).days % 7:
            raise ConfigError("weeks must run forward in whole weeks")
        if self.n_cbgs < 1 or self.n_counties < 1 or self.n_counties > self.n_cbgs:
            raise ConfigError("need 1 <= n_counties <= n_cbgs")
        if not (len(self.state) == 2 and self.state.isdigit()):
            raise ConfigError(f"state must be a 2-digit FIPS code, got {self.state!r}")
        for naics, n in self.n_pois.items():
            if not 100000 <= naics <= 999999 or n < 0:
                raise ConfigError(f"bad POI count entry {naics}: {n}")
        for naics, probs in self.dwell_mix.items():
            if len(probs) != len(BUCKET_LABELS) or any(p < 0 for p in probs):
                raise ConfigError(f"dwell mix for {naics} must be 5 nonnegative probabilities")
            if abs(math.fsum(probs) - 1) > 1e-9:
                raise ConfigError(f"dwell mix for {naics} sums to {math.fsum(probs)}, not 1")
        for phase in self.phases:
            if any(m < 0 for m in phase.multipliers.values()):
                raise ConfigError(f"negative multiplier in phase {phase.name or phase.start}")
        if not 0 <= self.noise <= 1:
            raise ConfigError("noise must be within [0, 1]")
        if self.outbreak is not None:
            o = self.outbreak
            if o.count > self.n_pois.get(o.naics, 0):
                raise ConfigError("outbreak count exceeds the category's POI count")
            if o.outbreak_multiplier < 0 or o.control_multiplier < 0:
                raise ConfigError("outbreak multipliers must be nonnegative")
        rates = self.sampling_rate if isinstance(self.sampling_rate, (tuple, list)) else (self.sampling_rate,)
        if any(not 0 < r for r in rates):
            raise ConfigError("sampling rates must be positive")

    # -- lookups ---------------------------------------------------------------

    def week_starts(self) -> list[date]:
        n = (self.weeks[1] - self.weeks[0]).days // 7 + 1
        return [self.weeks[0] + i * WEEK for i in range(n)]

    def base(self, naics: int) -> int:
        return self.base_visits.get(naics, DEFAULT_BASE_VISITS.get(naics, GENERIC_BASE_VISITS))

    def mix(self, naics: int) -> tuple[float, ...]:
        return tuple(self.dwell_mix.get(naics, DEFAULT_DWELL_MIX.get(naics, GENERIC_DWELL_MIX)))

    def multiplier(self, naics: int, week: date) -> float:
        for phase in self.phases:
            if phase.start <= week <= phase.end:
                return phase.multipliers.get(naics, 1.0)
        return 1.0

    def home_dwell(self, day: date) -> float:
        for seg in self.home_dwell_profile:
            if seg.start <= day <= seg.end:
                return seg.minutes
        return self.baseline_home_dwell

    # -- JSON ------------------------------------------------------------------

    def to_dict(self) -> dict:
        return json.loads(json.dumps(asdict(self), default=_json_default))

    @classmethod
    def from_dict(cls, data: dict) -> "SynthConfig":
        data = dict(data)
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        try:
            for key in ("n_pois", "base_visits"):
                if key in data:
                    data[key] = {int(k): int(v) for k, v in data[key].items()}
            if "dwell_mix" in data:
                data["dwell_mix"] = {int(k): tuple(v) for k, v in data["dwell_mix"].items()}
            if "weeks" in data:
                data["weeks"] = tuple(date.fromisoformat(d) for d in data["weeks"])
            if "phases" in data:
                data["phases"] = [
                    Phase(date.fromisoformat(p["start"]), date.fromisoformat(p["end"]),
                          {int(k): float(v) for k, v in p["multipliers"].items()}, p.get("name", ""))
                    for p in data["phases"]
                ]
            if "home_dwell_profile" in data:
                data["home_dwell_profile"] = [
                    DwellProfile(date.fromisoformat(p["start"]), date.fromisoformat(p["end"]), p["minutes"])
                    for p in data["home_dwell_profile"]
                ]
            if isinstance(data.get("sampling_rate"), list):
                data["sampling_rate"] = tuple(data["sampling_rate"])
            if "origin" in data:
                data["origin"] = tuple(data["origin"])
            if data.get("outbreak") is not None:
                o = dict(data["outbreak"])
                o["start"] = date.fromisoformat(o["start"])
                data["outbreak"] = OutbreakSpec(**o)
        except (KeyError, TypeError, ValueError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"malformed config: {e}") from e
        return cls(**data)

    @classmethod
    def from_json(cls, path: str | Path) -> "SynthConfig":
        with open(path, encoding="utf-8") as f:
            try:
                data = json.load(f)
            except json.JSONDecodeError as e:
                raise ConfigError(f"{path}: {e}") from e
        return cls.from_dict(data)


def _json_default(obj):
    if isinstance(obj, date):
        return obj.isoformat()
    raise TypeError(type(obj))


# -- geography -------------------------------------------------------------------


@dataclass(frozen=True)
class Cell:
    cbg: str
    lat_micro: int  # south-west corner, micro-degrees
    lon_micro: int


def cbg_cells(config: SynthConfig) -> list[Cell]:
    """CBGs on a square grid of cells, spread round-robin across counties."""
    cols = math.ceil(math.sqrt(config.n_cbgs))
    size = round(config.cell_degrees * 1_000_000)
    lat0 = round(config.origin[0] * 1_000_000)
    lon0 = round(config.origin[1] * 1_000_000)
    cells = []
    for i in range(config.n_cbgs):
        county = 2 * (i % config.n_counties) + 1
        tract = i // 3 + 1
        cbg = f"{config.state}{county:03d}{tract:04d}00{i % 3 + 1}"
        row, col = divmod(i, cols)
        cells.append(Cell(cbg, lat0 + row * size, lon0 + col * size))
    return cells


def device_counts(config: SynthConfig) -> list[int]:
    if config.total_devices is None:
        return [config.devices_per_cbg] * config.n_cbgs
    q, r = divmod(config.total_devices, config.n_cbgs)
    return [q + (1 if i < r else 0) for i in range(config.n_cbgs)]


def populations(config: SynthConfig) -> dict[str, int]:
    """Resident population per region, as written to population.csv."""
    if not any(config.n_pois.values()):
        return {}
    cells = cbg_cells(config)
    devices = device_counts(config)
    pop = config.population
    if isinstance(pop, dict):
        return dict(sorted(pop.items()))
    if isinstance(pop, int):
        total = sum(devices)
        shares = [pop * d // total for d in devices] if total else [pop // len(devices)] * len(devices)
        shares[0] += pop - sum(shares)
        return {c.cbg: s for c, s in zip(cells, shares)}
    if isinstance(config.sampling_rate, (tuple, list)):
        low, high = (Fraction(str(x)) for x in config.sampling_rate)
        rng = random.Random(f"{config.seed}:population")
        out = {}
        for c, d in zip(cells, devices):
            lo_pop, hi_pop = math.ceil(d / high), math.floor(d / low)
            out[c.cbg] = lo_pop + rng.randrange(hi_pop - lo_pop + 1) if hi_pop >= lo_pop else lo_pop
        return out
    rate = Fraction(str(config.sampling_rate))
    return {c.cbg: round(d / rate) for c, d in zip(cells, devices)}


# -- weekly patterns ---------------------------------------------------------------


def _split(rng: random.Random, n: int, cumulative: list[int]) -> list[int]:
    """Multinomial split of n items using integer cumulative weights."""
    counts = [0] * len(cumulative)
    total = cumulative[-1]
    for _ in range(n):
        counts[bisect.bisect_right(cumulative, rng.randrange(total))] += 1
    return counts


def _cumulative(probs: tuple[float, ...]) -> list[int]:
    weights = [round(p * _WEIGHT_SCALE) for p in probs]
    out, acc = [], 0
    for w in weights:
        acc += w
        out.append(acc)
    return out


def _median_minutes(buckets: list[int]) -> float:
    n = sum(buckets)
    if n == 0:
        return 0.0
    target, acc = (n + 1) // 2, 0
    for count, minutes in zip(buckets, _BUCKET_MINUTES):
        acc += count
        if acc >= target:
            return float(minutes)
    raise AssertionError("unreachable")


def poi_ids(config: SynthConfig) -> dict[int, list[str]]:
    return {naics: [f"sg-{naics}-{i:05d}" for i in range(n)] for naics, n in sorted(config.n_pois.items())}


def generate_records(config: SynthConfig) -> Iterator[FlatWeeklyRecord]:
    """Weekly records, POI by POI, category by category (ascending NAICS)."""
    cells = cbg_cells(config)
    size = round(config.cell_degrees * 1_000_000)
    weeks = config.week_starts()
    outbreak = config.outbreak
    for naics, ids in poi_ids(config).items():
        rng = random.Random(f"{config.seed}:{naics}")
        cumulative = _cumulative(config.mix(naics))
        base = config.base(naics)
        brands = BRANDS.get(naics, ())
        for i, pid in enumerate(ids):
            # placement depends only on (category, index) so categories stay independent
            cell = cells[(naics + i) % len(cells)]
            lat = (cell.lat_micro + rng.randrange(size)) / 1_000_000
            lon = (cell.lon_micro + rng.randrange(size)) / 1_000_000
            brand = brands[i % len(brands)] if brands and i % 3 == 0 else None
            name = f"{_NAMES.get(naics, 'Place')} {i + 1}"
            for week in weeks:
                mult = config.multiplier(naics, week)
                if outbreak is not None and naics == outbreak.naics and week >= outbreak.start:
                    mult = outbreak.outbreak_multiplier if i < outbreak.count else outbreak.control_multiplier
                mean = round(base * mult)
                jitter = int(mean * config.noise)
                visits = mean + rng.randint(-jitter, jitter) if jitter else mean
                buckets = _split(rng, visits, cumulative)
                by_day = _split(rng, visits, [1, 2, 3, 4, 5, 6, 7])
                visitors = visits - rng.randrange(visits // 3 + 1)
                origins_pool = [cell.cbg] + [cells[rng.randrange(len(cells))].cbg for _ in range(2)]
                origins: dict[str, int] = {}
                for j, count in enumerate(_split(rng, visitors, [1, 2, 3])):
                    if count:
                        origins[origins_pool[j]] = origins.get(origins_pool[j], 0) + count
                yield FlatWeeklyRecord(
                    place_id=pid,
                    location_name=name,
                    brand=brand,
                    naics_code=naics,
                    poi_cbg=cell.cbg,
                    latitude=lat,
                    longitude=lon,
                    period_start=week,
                    period_end=week + WEEK,
                    raw_visit_counts=visits,
                    raw_visitor_counts=visitors,
                    median_dwell_minutes=_median_minutes(buckets),
                    bucketed_dwell_times=dict(zip(BUCKET_LABELS, buckets)),
                    visits_by_day=tuple(by_day),
                    visitor_home_cbgs=dict(sorted(origins.items())),
                    distance_from_home_meters=float(rng.randrange(500, 20000)),
                )


def generate_social_distancing(config: SynthConfig) -> Iterator[SocialDistancingRecord]:
    """Daily per-CBG rows over every day of every configured week."""
    rng = random.Random(f"{config.seed}:social-distancing")
    cells = cbg_cells(config)
    devices = device_counts(config)
    weeks = config.week_starts()
    if not any(config.n_pois.values()):
        return
    days = (weeks[-1] - weeks[0]).days + 7
    for offset in range(days):
        day = weeks[0] + timedelta(days=offset)
        target = config.home_dwell(day)
        for cell, n in zip(cells, devices):
            jitter = int(target * 0.02)
            home = int(target) + (rng.randint(-jitter, jitter) if jitter else 0)
            distance = int(5000 * config.baseline_home_dwell / max(home, 1)) + rng.randrange(200)
            yield SocialDistancingRecord(
                origin_cbg=cell.cbg,
                date=day,
                device_count=n,
                median_distance_traveled_from_home_meters=float(distance),
                median_home_dwell_time_minutes=float(home),
                completely_home_device_count=n * min(home, 1440) // 1440,
            )


def outbreak_roster(config: SynthConfig) -> list[RosterEntry]:
    o = config.outbreak
    if o is None:
        return []
    month = o.month_linked or o.start.strftime("%Y-%m")
    return [RosterEntry(pid, month) for pid in poi_ids(config)[o.naics][: o.count]]


OUTPUT_FILES = ("weekly_patterns.csv", "social_distancing.csv", "population.csv", "calendar.csv", "outbreak_roster.csv")


def generate(config: SynthConfig, out_dir: str | Path) -> list[Path]:
    """Write the five generated files and return their paths in a fixed order."""
    config.validate()
    out_dir = Path(out_dir)
    paths = [out_dir / name for name in OUTPUT_FILES]
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        write_flat_weekly(generate_records(config), paths[0])
        write_social_distancing(generate_social_distancing(config), paths[1])
        with open(paths[2], "w", newline="", encoding="utf-8") as f:
            f.write("region_id,population\n")
            for region, n in populations(config).items():
                f.write(f"{region},{n}\n")
        MN_CALENDAR.to_csv(paths[3])
        write_outbreak_roster(outbreak_roster(config), paths[4])
    except OSError as e:
        raise PersistenceError(f"cannot write generated data to {out_dir}: {e}") from e
    log.info("generated %s", ", ".join(str(p) for p in paths))
    return paths


# -- presets -----------------------------------------------------------------------

MN_POIS = 73_548
MN_CATEGORIES = 261
MN_CBGS = 4_107
MN_DEVICES = 294_014


def preset(name: str) -> SynthConfig:
    """Named configurations: ``desk`` for tests and demos, ``mn-scale`` for load testing."""
    if name == "desk":
        return SynthConfig(
            seed=20200302,
            n_pois={FSR: 4, BARS: 4, LSR: 3, GROCERY: 3},
            n_cbgs=10,
            n_counties=2,
            devices_per_cbg=100,
            sampling_rate=0.05,
            outbreak=OutbreakSpec(BARS, 2, date(2020, 6, 15), 1.0, 0.5, "2020-06"),
        )
    if name == "mn-scale":
        named = {FSR: 9_000, BARS: 2_500, LSR: 7_000, GROCERY: 2_000, SCHOOLS: 2_400}
        rest = MN_POIS - sum(named.values())
        others = MN_CATEGORIES - len(named)
        q, r = divmod(rest, others)
        n_pois = dict(named)
        for i in range(others):
            n_pois[810001 + i] = q + (1 if i < r else 0)
        return SynthConfig(
            seed=20200302,
            n_pois=n_pois,
            n_cbgs=MN_CBGS,
            n_counties=87,
            total_devices=MN_DEVICES,
            sampling_rate=0.05,
            cell_degrees=0.01,
        )
    raise ValueError(f"unknown preset {name!r}; choose 'desk' or 'mn-scale'")
