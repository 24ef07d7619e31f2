"""Dataset parsing, raw-log enrichment, and aggregation into the usage cube."""

from __future__ import annotations

import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Protocol, Sequence

from .domain import (
    DATASET_DIMENSIONS,
    DIMENSION_ORDER,
    DIMENSIONS,
    AppCatalog,
    AppInfo,
    ContextVector,
    DataError,
    InteractionEvent,
    RawSample,
    UsageTuple,
)

EARTH_RADIUS_KM = 6371.0
CITY_RADIUS_KM = 20.0

TUPLE_COLUMNS = ("user", "app", "category") + DATASET_DIMENSIONS + ("cnt",)
RAW_COLUMNS = ("user", "ts", "app", "screen", "cell", "lat", "lon", "battery_pct", "charger", "conn")
EVENT_COLUMNS = ("user", "ts", "app", "kind", "session") + DIMENSION_ORDER


class UsageCube:
    """Sparse (user, app, context) -> count tensor with cached marginals.

    Immutable once built; marginals (grand total, per-app, per-user, per
    dimension value, per app x dimension value) are derived at construction
    and can be re-derived with rebuild_marginals() as a consistency check.
    """

    def __init__(self, tuples: Iterable[UsageTuple], catalog: AppCatalog | None = None,
                 tuple_times: Mapping[tuple, float] | None = None):
        self._counts: dict[tuple[str, str, ContextVector], int] = {}
        for t in tuples:
            if t.count == 0:
                continue
            key = (t.user, t.app, t.context)
            self._counts[key] = self._counts.get(key, 0) + t.count
        self.catalog = catalog or AppCatalog()
        # optional (user, app, context) -> last event timestamp, for temporal splits
        self.tuple_times = dict(tuple_times) if tuple_times else {}
        self._build_marginals()

    def _build_marginals(self):
        self.grand_total = 0
        self._app_totals: Counter = Counter()
        self._user_totals: Counter = Counter()
        self._dim_value: dict[str, Counter] = {d: Counter() for d in DIMENSION_ORDER}
        self._app_dim_value: dict[str, dict[str, Counter]] = defaultdict(lambda: {d: Counter() for d in DIMENSION_ORDER})
        for (user, app, ctx), n in self._counts.items():
            self.grand_total += n
            self._app_totals[app] += n
            self._user_totals[user] += n
            per_app = self._app_dim_value[app]
            for dim, value in zip(DIMENSION_ORDER, ctx.values):
                self._dim_value[dim][value] += n
                per_app[dim][value] += n

    # -- queries --------------------------------------------------------

    def tuples(self) -> Iterator[UsageTuple]:
        for (user, app, ctx), n in self._counts.items():
            yield UsageTuple(user, app, ctx, n)

    def count(self, user: str, app: str, context: ContextVector) -> int:
        return self._counts.get((user, app, context), 0)

    def users(self) -> list[str]:
        return sorted(self._user_totals)

    def apps(self) -> list[str]:
        return sorted(self._app_totals)

    def app_total(self, app: str) -> int:
        return self._app_totals.get(app, 0)

    def user_total(self, user: str) -> int:
        return self._user_totals.get(user, 0)

    def dim_value_total(self, dimension: str, value: str) -> int:
        return self._dim_value[dimension].get(value, 0)

    def app_dim_value_total(self, app: str, dimension: str, value: str) -> int:
        if app not in self._app_dim_value:
            return 0
        return self._app_dim_value[app][dimension].get(value, 0)

    def observed_values(self, dimension: str) -> list[str]:
        return sorted(v for v, n in self._dim_value[dimension].items() if n > 0)

    def user_apps(self, user: str) -> set[str]:
        return {app for (u, app, _c) in self._counts if u == user}

    def __len__(self) -> int:
        return len(self._counts)

    def rebuild_marginals(self) -> bool:
        """Recompute marginals from tuples and compare with the cache."""
        cached = (self.grand_total, dict(self._app_totals), dict(self._user_totals),
                  {d: dict(c) for d, c in self._dim_value.items()})
        self._build_marginals()
        fresh = (self.grand_total, dict(self._app_totals), dict(self._user_totals),
                 {d: dict(c) for d, c in self._dim_value.items()})
        return cached == fresh

    # -- derivations ----------------------------------------------------

    def restrict_users(self, keep: Iterable[str]) -> "UsageCube":
        keep = set(keep)
        kept = [t for t in self.tuples() if t.user in keep]
        times = {k: v for k, v in self.tuple_times.items() if k[0] in keep}
        return UsageCube(kept, catalog=self.catalog, tuple_times=times)


def cube_from_events(events: Iterable[InteractionEvent], catalog: AppCatalog | None = None) -> UsageCube:
    """Aggregate `used` events into a UsageCube (one count per event)."""
    counts: Counter = Counter()
    times: dict[tuple, float] = {}
    for e in events:
        if e.kind != "used":
            continue
        key = (e.user, e.app, e.context)
        counts[key] += 1
        times[key] = max(times.get(key, e.timestamp), e.timestamp)
    tuples = [UsageTuple(u, a, c, n) for (u, a, c), n in counts.items()]
    return UsageCube(tuples, catalog=catalog, tuple_times=times)


# -- canonical tuple files ------------------------------------------------


@dataclass
class ColumnMapping:
    """Adapter from an external dataset's headers/values to the canonical schema."""

    columns: dict[str, str] = field(default_factory=dict)  # external name -> canonical
    values: dict[str, dict[str, str]] = field(default_factory=dict)  # dim -> external -> canonical

    @classmethod
    def from_json(cls, path: str | Path) -> "ColumnMapping":
        data = json.loads(Path(path).read_text())
        return cls(columns=data.get("columns", {}), values=data.get("values", {}))

    def map_column(self, name: str) -> str:
        return self.columns.get(name, name)

    def map_value(self, dimension: str, value: str) -> str:
        return self.values.get(dimension, {}).get(value, value)


def parse_tuples(path: str | Path, mapping: ColumnMapping | None = None) -> UsageCube:
    """Parse a canonical tab-separated tuple dataset into a UsageCube.

    Duplicate (user, app, context) keys are summed. The first malformed row
    aborts parsing with its line number and column named.
    """
    mapping = mapping or ColumnMapping()
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or (len(lines) == 1 and not lines[0].strip()):
        return UsageCube([])
    header = [mapping.map_column(h.strip()) for h in lines[0].split("\t")]
    missing = [c for c in TUPLE_COLUMNS if c not in header]
    if missing:
        raise DataError(f"{path}: header missing columns {missing}")
    idx = {c: header.index(c) for c in TUPLE_COLUMNS}

    tuples = []
    catalog = AppCatalog()
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cols = line.split("\t")
        if len(cols) != len(header):
            raise DataError(f"{path}: line {lineno}: expected {len(header)} columns, got {len(cols)}")
        get = lambda c: cols[idx[c]].strip()
        assignments = {}
        for dim in DATASET_DIMENSIONS:
            value = mapping.map_value(dim, get(dim).lower())
            if not DIMENSIONS[dim].accepts(value):
                raise DataError(f"{path}: line {lineno}, column {dim}: unknown value {get(dim)!r}")
            assignments[dim] = value
        assignments["screen"] = "on"  # usage data implies screen on
        try:
            cnt = int(get("cnt"))
        except ValueError:
            raise DataError(f"{path}: line {lineno}, column cnt: not an integer")
        if cnt < 1:
            raise DataError(f"{path}: line {lineno}, column cnt: must be >= 1")
        app = get("app")
        tuples.append(UsageTuple(get("user"), app, ContextVector.from_mapping(assignments), cnt))
        if app not in catalog:
            catalog.add(AppInfo(id=app, category=get("category") or "unknown"))
    return UsageCube(tuples, catalog=catalog)


def write_tuples(cube: UsageCube, path: str | Path) -> None:
    """Write a cube in the canonical tuple file schema."""
    rows = ["\t".join(TUPLE_COLUMNS)]
    for t in sorted(cube.tuples(), key=lambda t: (t.user, t.app, t.context.values)):
        ctx = t.context.as_dict()
        rows.append("\t".join([t.user, t.app, cube.catalog.category(t.app)]
                              + [ctx[d] for d in DATASET_DIMENSIONS] + [str(t.count)]))
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


# -- raw sample files ------------------------------------------------------


def _opt_float(s: str) -> float | None:
    return float(s) if s.strip() else None


def parse_raw_samples(path: str | Path) -> list[RawSample]:
    """Parse the tab-separated raw minute-sample file (empty fields allowed)."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        return []
    header = [h.strip() for h in lines[0].split("\t")]
    if header != list(RAW_COLUMNS):
        raise DataError(f"{path}: expected raw sample header {list(RAW_COLUMNS)}, got {header}")
    samples = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cols = line.split("\t")
        if len(cols) != len(RAW_COLUMNS):
            raise DataError(f"{path}: line {lineno}: expected {len(RAW_COLUMNS)} columns")
        try:
            samples.append(RawSample(
                user=cols[0],
                timestamp=float(cols[1]),
                foreground_app=cols[2] or None,
                screen=cols[3] or "off",
                location_cell=cols[4] or None,
                lat=_opt_float(cols[5]),
                lon=_opt_float(cols[6]),
                battery_pct=_opt_float(cols[7]),
                charger=cols[8] or None,
                connectivity=cols[9] or None,
            ))
        except ValueError as exc:
            raise DataError(f"{path}: line {lineno}: {exc}")
    return samples


def write_raw_samples(samples: Iterable[RawSample], path: str | Path) -> None:
    def fmt(v) -> str:
        return "" if v is None else (f"{v:g}" if isinstance(v, float) else str(v))

    rows = ["\t".join(RAW_COLUMNS)]
    for s in samples:
        rows.append("\t".join([s.user, f"{s.timestamp:.0f}", s.foreground_app or "", s.screen,
                               s.location_cell or "", fmt(s.lat), fmt(s.lon), fmt(s.battery_pct),
                               s.charger or "", s.connectivity or ""]))
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


# -- event files -----------------------------------------------------------


def write_events(events: Iterable[InteractionEvent], path: str | Path) -> None:
    rows = ["\t".join(EVENT_COLUMNS)]
    for e in events:
        ctx = e.context.as_dict()
        rows.append("\t".join([e.user, f"{e.timestamp:.3f}", e.app, e.kind, e.session or ""]
                              + [ctx[d] for d in DIMENSION_ORDER]))
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


def parse_events(path: str | Path) -> list[InteractionEvent]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        return []
    header = [h.strip() for h in lines[0].split("\t")]
    if header != list(EVENT_COLUMNS):
        raise DataError(f"{path}: expected event header {list(EVENT_COLUMNS)}, got {header}")
    events = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cols = line.split("\t")
        if len(cols) != len(EVENT_COLUMNS):
            raise DataError(f"{path}: line {lineno}: expected {len(EVENT_COLUMNS)} columns")
        assignments = dict(zip(DIMENSION_ORDER, cols[5:]))
        try:
            events.append(InteractionEvent(
                user=cols[0], timestamp=float(cols[1]), app=cols[2], kind=cols[3],
                session=cols[4] or None, context=ContextVector.from_mapping(assignments)))
        except (ValueError, DataError) as exc:
            raise DataError(f"{path}: line {lineno}: {exc}")
    return events


# -- time bucketing --------------------------------------------------------


def _local(ts: float, tz_offset_min: int) -> datetime:
    return datetime.fromtimestamp(ts, tz=timezone.utc) + timedelta(minutes=tz_offset_min)


def bucket_timestamp(ts: float, tz_offset_min: int = 0) -> tuple[str, str, str]:
    """Map a UTC timestamp to (daytime, weekday, isweekend) in local time.

    Daytime partition: night [00:00,06:00), morning [06:00,12:00),
    afternoon [12:00,18:00), evening [18:00,24:00).
    """
    local = _local(ts, tz_offset_min)
    hour = local.hour
    if hour < 6:
        daytime = "night"
    elif hour < 12:
        daytime = "morning"
    elif hour < 18:
        daytime = "afternoon"
    else:
        daytime = "evening"
    weekday = ("mon", "tue", "wed", "thu", "fri", "sat", "sun")[local.weekday()]
    isweekend = "weekend" if weekday in ("sat", "sun") else "workday"
    return daytime, weekday, isweekend


# -- home/work inference ----------------------------------------------------

HOME_WINDOW = (1, 6)  # local hours [01:00, 06:00)
WORK_WINDOW = (9, 18)  # local hours [09:00, 18:00), workdays only
DEFAULT_MIN_DAYS = 3


@dataclass(frozen=True)
class PlaceLabels:
    """Inferred home/work location cells for one user, with supporting counts."""

    user: str
    home: str | None = None
    work: str | None = None
    home_support: int = 0
    work_support: int = 0


def _modal_cell(window_samples: list[RawSample], min_days: int, tz_offset_min: int) -> tuple[str | None, int]:
    days = {_local(s.timestamp, tz_offset_min).date() for s in window_samples}
    if len(days) < min_days:
        return None, 0
    counts: Counter = Counter()
    first_seen: dict[str, float] = {}
    for s in window_samples:
        counts[s.location_cell] += 1
        first_seen.setdefault(s.location_cell, s.timestamp)
    # modal cell; ties broken by earliest observation
    best = min(counts, key=lambda c: (-counts[c], first_seen[c]))
    return best, counts[best]


def infer_home_work(samples: Sequence[RawSample], min_days: int = DEFAULT_MIN_DAYS,
                    tz_offset_min: int = 0) -> PlaceLabels:
    """Infer home (modal night cell) and work (modal office-hours cell on workdays).

    Labels are withheld until min_days distinct local days contribute to the
    window. If the two labels collide, home wins and work falls back to the
    next most frequent office-hours cell.
    """
    if not samples:
        return PlaceLabels(user="")
    user = samples[0].user
    night, office = [], []
    for s in sorted(samples, key=lambda s: s.timestamp):
        if s.location_cell is None:
            continue
        local = _local(s.timestamp, tz_offset_min)
        if HOME_WINDOW[0] <= local.hour < HOME_WINDOW[1]:
            night.append(s)
        if WORK_WINDOW[0] <= local.hour < WORK_WINDOW[1] and local.weekday() < 5:
            office.append(s)
    home, home_support = _modal_cell(night, min_days, tz_offset_min)
    work, work_support = _modal_cell(office, min_days, tz_offset_min)
    if work is not None and work == home:
        remaining = [s for s in office if s.location_cell != home]
        work, work_support = _modal_cell(remaining, min_days, tz_offset_min) if remaining else (None, 0)
    return PlaceLabels(user=user, home=home, work=work,
                       home_support=home_support, work_support=work_support)


def classify_location(sample: RawSample, labels: PlaceLabels | None) -> str:
    """Label a sample's cell as home/work/other by equality with inferred places."""
    if labels is None or sample.location_cell is None:
        return "other"
    if labels.home is not None and sample.location_cell == labels.home:
        return "home"
    if labels.work is not None and sample.location_cell == labels.work:
        return "work"
    return "other"


# -- city proximity ---------------------------------------------------------


@dataclass(frozen=True)
class CityCenter:
    name: str
    lat: float
    lon: float


def parse_city_centers(path: str | Path) -> list[CityCenter]:
    centers = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip() or line.startswith("name\t"):
            continue
        cols = line.split("\t")
        if len(cols) != 3:
            raise DataError(f"{path}: line {lineno}: expected name/lat/lon")
        centers.append(CityCenter(cols[0], float(cols[1]), float(cols[2])))
    return centers


def haversine_km(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance on a sphere of mean Earth radius."""
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dphi = p2 - p1
    dlam = math.radians(lon2 - lon1)
    a = math.sin(dphi / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dlam / 2) ** 2
    return 2 * EARTH_RADIUS_KM * math.asin(math.sqrt(a))


class QualityCounters(Counter):
    """Data-quality counters incremented by enrichment fallbacks."""


def classify_city(lat: float | None, lon: float | None, city_centers: Sequence[CityCenter],
                  counters: QualityCounters | None = None) -> bool:
    """True iff within 20 km great-circle distance of the nearest major-city center."""
    if lat is None or lon is None:
        if counters is not None:
            counters["missing_coordinates"] += 1
        return False
    return any(haversine_km(lat, lon, c.lat, c.lon) < CITY_RADIUS_KM for c in city_centers)


# -- weather ----------------------------------------------------------------

WEATHER_BUCKET_DEG = 0.5


class WeatherProvider(Protocol):
    def lookup(self, lat: float | None, lon: float | None, ts: float) -> str:
        """Weather label at a place and time, or "unknown"."""
        ...


def _bucket(x: float) -> float:
    return math.floor(x / WEATHER_BUCKET_DEG) * WEATHER_BUCKET_DEG


class FileWeatherProvider:
    """Deterministic file-backed weather lookup bucketed at 0.5 degrees / day."""

    def __init__(self, path: str | Path):
        self._table: dict[tuple[float, float, str], str] = {}
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
            if not line.strip() or line.startswith("lat_bucket\t"):
                continue
            cols = line.split("\t")
            if len(cols) != 4:
                raise DataError(f"{path}: line {lineno}: expected lat_bucket/lon_bucket/day/weather")
            self._table[(float(cols[0]), float(cols[1]), cols[2])] = cols[3]

    def lookup(self, lat: float | None, lon: float | None, ts: float) -> str:
        if lat is None or lon is None:
            return "unknown"
        day = datetime.fromtimestamp(ts, tz=timezone.utc).date().isoformat()
        return self._table.get((_bucket(lat), _bucket(lon), day), "unknown")


class ConstantWeatherProvider:
    def __init__(self, label: str = "unknown"):
        self.label = label

    def lookup(self, lat, lon, ts) -> str:
        return self.label


def parse_app_catalog(path: str | Path) -> AppCatalog:
    """Read app metadata (app, category, language, optional display name)."""
    catalog = AppCatalog()
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip() or line.startswith("app\t"):
            continue
        cols = line.split("\t")
        if len(cols) < 3:
            raise DataError(f"{path}: line {lineno}: expected app/category/language")
        catalog.add(AppInfo(id=cols[0], category=cols[1], language=cols[2],
                            name=cols[3] if len(cols) > 3 and cols[3] else None))
    return catalog


def write_app_catalog(catalog: AppCatalog, path: str | Path) -> None:
    rows = ["app\tcategory\tlanguage\tname"]
    for info in sorted(catalog, key=lambda i: i.id):
        rows.append(f"{info.id}\t{info.category}\t{info.language}\t{info.name or ''}")
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


def write_weather_file(table: Mapping[tuple[float, float, str], str], path: str | Path) -> None:
    rows = ["lat_bucket\tlon_bucket\tday\tweather"]
    for (lat_b, lon_b, day), label in sorted(table.items()):
        rows.append(f"{lat_b:g}\t{lon_b:g}\t{day}\t{label}")
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


def write_city_file(centers: Iterable[CityCenter], path: str | Path) -> None:
    rows = ["name\tlat\tlon"]
    for c in centers:
        rows.append(f"{c.name}\t{c.lat:g}\t{c.lon:g}")
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


# -- enrichment -------------------------------------------------------------


def battery_bucket(pct: float | None) -> str:
    """Map a battery percentage onto the five-level vocabulary."""
    if pct is None:
        return "medium"
    if pct >= 95:
        return "full"
    if pct >= 70:
        return "high"
    if pct >= 40:
        return "medium"
    if pct >= 15:
        return "low"
    return "empty"


def energy_source(charger: str | None) -> str:
    if charger in ("usb", "ac"):
        return charger
    return "battery"


def connectivity_label(conn: str | None) -> str:
    if conn in ("wifi", "mobile"):
        return conn
    return "none"


@dataclass
class Enricher:
    """Turns raw samples into full ContextVectors.

    Per-user timezone offsets and countries come from configuration (UTC and
    "unknown" by default); weather lookups falling back to "unknown" are
    replaced by default_weather and counted.
    """

    labels: Mapping[str, PlaceLabels] = field(default_factory=dict)
    city_centers: Sequence[CityCenter] = ()
    weather: WeatherProvider = field(default_factory=ConstantWeatherProvider)
    tz_offsets: Mapping[str, int] = field(default_factory=dict)
    countries: Mapping[str, str] = field(default_factory=dict)
    default_weather: str = "sunny"
    counters: QualityCounters = field(default_factory=QualityCounters)

    def tz_offset(self, user: str) -> int:
        return self.tz_offsets.get(user, 0)

    def context_for(self, sample: RawSample) -> ContextVector:
        daytime, weekday, isweekend = bucket_timestamp(sample.timestamp, self.tz_offset(sample.user))
        weather = self.weather.lookup(sample.lat, sample.lon, sample.timestamp)
        if weather == "unknown":
            self.counters["weather_unknown"] += 1
            weather = self.default_weather
        return ContextVector.from_mapping({
            "daytime": daytime,
            "weekday": weekday,
            "isweekend": isweekend,
            "location": classify_location(sample, self.labels.get(sample.user)),
            "city": "true" if classify_city(sample.lat, sample.lon, self.city_centers, self.counters) else "false",
            "country": self.countries.get(sample.user, "unknown"),
            "weather": weather,
            "battery": battery_bucket(sample.battery_pct),
            "energy": energy_source(sample.charger),
            "connectivity": connectivity_label(sample.connectivity),
            "screen": sample.screen if sample.screen in ("on", "off") else "off",
        })


def extract_usage_events(samples: Sequence[RawSample], enricher: Enricher) -> list[InteractionEvent]:
    """One `used` event per maximal run of consecutive same-app screen-on samples.

    Samples are grouped per user and time-sorted; the event's context comes
    from the run's first sample.
    """
    by_user: dict[str, list[RawSample]] = defaultdict(list)
    for s in samples:
        by_user[s.user].append(s)
    events = []
    for user in sorted(by_user):
        run_first: RawSample | None = None
        prev_key = None
        for s in sorted(by_user[user], key=lambda s: s.timestamp):
            key = (s.foreground_app, s.screen) if (s.screen == "on" and s.foreground_app) else None
            if key != prev_key:
                if run_first is not None:
                    events.append(InteractionEvent(user, run_first.foreground_app, "used",
                                                   run_first.timestamp, enricher.context_for(run_first)))
                run_first = s if key is not None else None
                prev_key = key
        if run_first is not None:
            events.append(InteractionEvent(user, run_first.foreground_app, "used",
                                           run_first.timestamp, enricher.context_for(run_first)))
    return events


DEFAULT_SESSION_GAP_S = 300.0


def sessionize(events: Sequence[InteractionEvent], gap_seconds: float = DEFAULT_SESSION_GAP_S) -> list[InteractionEvent]:
    """Assign per-user session ids; a gap greater than gap_seconds opens a new session."""
    by_user: dict[str, list[InteractionEvent]] = defaultdict(list)
    for e in events:
        by_user[e.user].append(e)
    out = []
    for user in sorted(by_user):
        ordered = sorted(by_user[user], key=lambda e: e.timestamp)
        session_no = 0
        prev_ts = None
        for e in ordered:
            if prev_ts is not None and e.timestamp - prev_ts > gap_seconds:
                session_no += 1
            prev_ts = e.timestamp
            out.append(e.with_session(f"{user}:{session_no}"))
    out.sort(key=lambda e: (e.timestamp, e.user))
    return out


# -- cleaning ----------------------------------------------------------------


@dataclass
class CleanReport:
    removed: list[tuple[str, str]]  # (user, reason)

    def write(self, path: str | Path) -> None:
        Path(path).write_text("".join(f"{u}\t{r}\n" for u, r in self.removed), encoding="utf-8")


def clean(cube: UsageCube, events: Sequence[InteractionEvent],
          failed_users: Iterable[str] = ()) -> tuple[UsageCube, list[InteractionEvent], CleanReport]:
    """Drop users with zero usage tuples or flagged retrieval failures."""
    failed = set(failed_users)
    cube_users = set(cube.users())
    event_users = {e.user for e in events}
    removed = []
    for user in sorted(cube_users | event_users):
        if user in failed:
            removed.append((user, "retrieval failure"))
        elif user not in cube_users:
            removed.append((user, "no usage"))
    dropped = {u for u, _ in removed}
    keep = (cube_users | event_users) - dropped
    return (cube.restrict_users(keep),
            [e for e in events if e.user in keep],
            CleanReport(removed=removed))
