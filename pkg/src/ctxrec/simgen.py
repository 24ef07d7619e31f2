"""Synthetic world and usage generator with planted contextual effects.

The generator is the ground-truth oracle for the ingestion, model,
explanation, and analytics tests: it emits raw minute samples plus the
planted facts (home/work cells, app affinities, true usage events) needed
to check what the pipeline recovers.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .domain import (
    BATTERY_LEVELS,
    DIMENSION_ORDER,
    WEATHER,
    AppCatalog,
    AppInfo,
    ContextVector,
    DataError,
    InteractionEvent,
    RawSample,
)
from .ingest import (
    CityCenter,
    UsageCube,
    bucket_timestamp,
    write_app_catalog,
    write_city_file,
    write_raw_samples,
    write_weather_file,
)

SIM_EPOCH = 1362355200.0  # a Monday, 00:00 UTC
MINUTE = 60.0
SLOT_MIN = 10  # event/background scheduling grid, keeps usage runs separable

DEFAULT_CATEGORIES = {"communication": 1.5, "social": 1.2, "games": 1.0, "news": 0.9, "tools": 0.8}
DEFAULT_CITY = CityCenter("metropolis", 41.40, 2.15)

_BATTERY_PCT = {"full": 98.0, "high": 80.0, "medium": 50.0, "low": 20.0, "empty": 5.0}
_COUNTRY_POOL = ("us", "gb", "es", "au", "de")


@dataclass(frozen=True)
class Affinity:
    """Planted contextual usage multiplier for a category or a single app."""

    target: str  # "category:<name>" or "app:<id>"
    dimension: str
    value: str
    gamma: float = 1.0

    def __post_init__(self):
        if self.gamma < 0 or not math.isfinite(self.gamma):
            raise DataError("affinity multiplier must be finite and non-negative")


@dataclass(frozen=True)
class WorldSpec:
    """Parameters of the simulated population and its planted effects."""

    n_users: int = 100
    n_apps: int = 20
    categories: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_CATEGORIES))
    affinities: tuple[Affinity, ...] = ()
    n_days: int = 14
    start_ts: float = SIM_EPOCH
    location_noise: float = 0.0  # probability a recorded cell is corrupted
    schedule_wander: float = 0.05  # probability the user deviates from the schedule
    night_samples_per_day: int = 4
    office_samples_per_day: int = 6
    evening_samples_per_day: int = 3
    n_other_cells: int = 5
    city_fraction: float = 0.5
    run_minutes_max: int = 3
    n_broken_users: int = 0  # trailing users emit client events but no usage
    seed: int = 0

    def validate(self) -> None:
        if self.n_users < 1 or self.n_apps < 1 or self.n_days < 1:
            raise DataError("n_users, n_apps, n_days must be >= 1")
        if not 0 <= self.n_broken_users < self.n_users:
            raise DataError("n_broken_users must be in [0, n_users)")
        if not 0 <= self.location_noise <= 1 or not 0 <= self.schedule_wander <= 1:
            raise DataError("noise rates must be probabilities")
        for a in self.affinities:
            kind, _, name = a.target.partition(":")
            if kind not in ("category", "app") or not name:
                raise DataError(f"affinity target must be category:<name> or app:<id>, got {a.target!r}")
            if a.dimension not in DIMENSION_ORDER:
                raise DataError(f"unknown affinity dimension {a.dimension!r}")
        if self.run_minutes_max < 1 or self.run_minutes_max > SLOT_MIN - 2:
            raise DataError(f"run_minutes_max must be in [1, {SLOT_MIN - 2}]")


@dataclass
class SimUser:
    user: str
    home_cell: str
    work_cell: str
    country: str
    lat: float
    lon: float
    in_city: bool


@dataclass
class TrueEvent:
    user: str
    app: str
    timestamp: float
    context: ContextVector


@dataclass
class GroundTruth:
    """Planted facts the pipelines are supposed to recover."""

    homes: dict[str, str]
    works: dict[str, str]
    affinities: tuple[Affinity, ...]
    catalog: AppCatalog
    events: list[TrueEvent]
    city_centers: list[CityCenter]
    weather_table: dict[tuple[float, float, str], str]
    countries: dict[str, str]
    broken_users: list[str] = field(default_factory=list)

    def cube(self) -> UsageCube:
        """Usage cube aggregated from the true events (bypasses ingestion)."""
        from .ingest import cube_from_events

        used = [InteractionEvent(e.user, e.app, "used", e.timestamp, e.context)
                for e in self.events]
        return cube_from_events(used, catalog=self.catalog)

    def write_json(self, path: str | Path) -> None:
        data = {
            "homes": self.homes,
            "works": self.works,
            "countries": self.countries,
            "affinities": [{"target": a.target, "dimension": a.dimension,
                            "value": a.value, "gamma": a.gamma} for a in self.affinities],
            "apps": [{"id": i.id, "category": i.category, "language": i.language}
                     for i in self.catalog],
            "city_centers": [asdict(c) for c in self.city_centers],
            "n_events": len(self.events),
        }
        Path(path).write_text(json.dumps(data, indent=2, sort_keys=True), encoding="utf-8")


@dataclass
class SimulatedUsage:
    samples: list[RawSample]
    truth: GroundTruth


class _World:
    """Deterministically derived population, catalog, and planted weights."""

    def __init__(self, spec: WorldSpec, rng: np.random.Generator):
        spec.validate()
        self.spec = spec
        cat_names = list(spec.categories)
        self.apps = [f"app{i:03d}" for i in range(spec.n_apps)]
        self.catalog = AppCatalog()
        languages = rng.choice(["en", "de", "es"], size=spec.n_apps, p=[0.9, 0.05, 0.05])
        for i, app in enumerate(self.apps):
            self.catalog.add(AppInfo(id=app, category=cat_names[i % len(cat_names)],
                                     language=str(languages[i])))
        # base popularity: category weight x within-category zipf-ish decay
        self.base_pop = np.array([
            spec.categories[self.catalog.category(a)] / (1.0 + (i // len(cat_names))) ** 0.8
            for i, a in enumerate(self.apps)])

        self.users = []
        self.other_cells = [f"cell_o{i}" for i in range(spec.n_other_cells)]
        for u in range(spec.n_users):
            name = f"u{u:04d}"
            in_city = bool(rng.random() < spec.city_fraction)
            base_lat = DEFAULT_CITY.lat if in_city else DEFAULT_CITY.lat + 1.8
            self.users.append(SimUser(
                user=name,
                home_cell=f"cell_h{u}",
                work_cell=f"cell_w{u}",
                country=str(rng.choice(_COUNTRY_POOL)),
                lat=float(base_lat + rng.uniform(-0.04, 0.04)),
                lon=float(DEFAULT_CITY.lon + rng.uniform(-0.04, 0.04)),
                in_city=in_city,
            ))

        # per-affinity app mask for fast context-conditional popularity
        self.affinity_masks = []
        for a in spec.affinities:
            kind, _, name = a.target.partition(":")
            if kind == "category":
                mask = np.array([self.catalog.category(app) == name for app in self.apps])
            else:
                mask = np.array([app == name for app in self.apps])
            self.affinity_masks.append((a, mask))

        # weather table covering every bucket a user can occupy, per day
        self.weather_table: dict[tuple[float, float, str], str] = {}
        buckets = sorted({(math.floor(u.lat / 0.5) * 0.5, math.floor(u.lon / 0.5) * 0.5)
                          for u in self.users})
        from datetime import datetime, timedelta, timezone

        day0 = datetime.fromtimestamp(spec.start_ts, tz=timezone.utc).date()
        for d in range(spec.n_days + 1):
            day = (day0 + timedelta(days=d)).isoformat()
            for b in buckets:
                self.weather_table[(b[0], b[1], day)] = str(rng.choice(WEATHER))

    def weather_at(self, user: SimUser, ts: float) -> str:
        from datetime import datetime, timezone

        day = datetime.fromtimestamp(ts, tz=timezone.utc).date().isoformat()
        key = (math.floor(user.lat / 0.5) * 0.5, math.floor(user.lon / 0.5) * 0.5, day)
        return self.weather_table.get(key, "sunny")

    def schedule_state(self, ts: float, rng: np.random.Generator) -> str:
        """Home at night, work in office hours on workdays, other elsewhere."""
        minute = int((ts - self.spec.start_ts) / MINUTE)
        hour = (minute // 60) % 24
        weekday = (minute // 1440) % 7  # start_ts is a Monday
        if rng.random() < self.spec.schedule_wander:
            return str(rng.choice(["home", "work", "other"]))
        if 1 <= hour < 6 or hour >= 22:
            return "home"
        if weekday < 5 and 9 <= hour < 18:
            return "work"
        return "other"

    def cell_for_state(self, user: SimUser, state: str, rng: np.random.Generator) -> str:
        if state == "home":
            cell = user.home_cell
        elif state == "work":
            cell = user.work_cell
        else:
            cell = self.other_cells[int(rng.integers(0, len(self.other_cells)))]
        if rng.random() < self.spec.location_noise:
            pool = [user.home_cell, user.work_cell] + self.other_cells
            cell = pool[int(rng.integers(0, len(pool)))]
        return cell

    def context_at(self, user: SimUser, ts: float, state: str,
                   battery: str, energy: str, conn: str, screen: str) -> ContextVector:
        daytime, weekday, isweekend = bucket_timestamp(ts)
        return ContextVector.from_mapping({
            "daytime": daytime, "weekday": weekday, "isweekend": isweekend,
            "location": state,
            "city": "true" if user.in_city else "false",
            "country": user.country,
            "weather": self.weather_at(user, ts),
            "battery": battery, "energy": energy, "connectivity": conn,
            "screen": screen,
        })

    def choose_app(self, context: ContextVector, rng: np.random.Generator) -> str:
        weights = self.base_pop.copy()
        for affinity, mask in self.affinity_masks:
            if context.get(affinity.dimension) == affinity.value:
                weights = np.where(mask, weights * affinity.gamma, weights)
        total = weights.sum()
        if total <= 0:
            raise DataError("app popularity weights are not normalizable")
        return self.apps[int(rng.choice(len(self.apps), p=weights / total))]

    def draw_device_state(self, rng: np.random.Generator) -> tuple[str, str, str]:
        battery = str(rng.choice(BATTERY_LEVELS, p=[0.15, 0.35, 0.3, 0.15, 0.05]))
        energy = str(rng.choice(["battery", "usb", "ac"], p=[0.7, 0.15, 0.15]))
        conn = str(rng.choice(["wifi", "mobile", "none"], p=[0.6, 0.35, 0.05]))
        return battery, energy, conn


def _background_samples(world: _World, user: SimUser, rng: np.random.Generator) -> list[RawSample]:
    """Idle screen-off samples giving the home/work heuristic something to chew on."""
    spec = world.spec
    samples = []
    windows = (
        ((1 * 60, 6 * 60), spec.night_samples_per_day, None),
        ((9 * 60, 18 * 60), spec.office_samples_per_day, "workday"),
        ((19 * 60, 24 * 60), spec.evening_samples_per_day, None),
    )
    for day in range(spec.n_days):
        weekday = day % 7
        for (lo, hi), per_day, only in windows:
            if per_day <= 0 or (only == "workday" and weekday >= 5):
                continue
            slots = np.arange(lo // SLOT_MIN, hi // SLOT_MIN)
            chosen = rng.choice(slots, size=min(per_day, len(slots)), replace=False)
            for slot in sorted(int(s) for s in chosen):
                # offset 5 within the slot keeps background samples off usage runs
                ts = spec.start_ts + day * 86400.0 + slot * SLOT_MIN * MINUTE + 5 * MINUTE
                state = world.schedule_state(ts, rng)
                battery, energy, conn = world.draw_device_state(rng)
                samples.append(RawSample(
                    user=user.user, timestamp=ts, foreground_app=None, screen="off",
                    location_cell=world.cell_for_state(user, state, rng),
                    lat=user.lat, lon=user.lon, battery_pct=_BATTERY_PCT[battery],
                    charger=energy if energy in ("usb", "ac") else None,
                    connectivity=conn if conn != "none" else None,
                ))
    return samples


def generate_usage(spec: WorldSpec, n_events: int) -> SimulatedUsage:
    """Simulate n_events app-usage runs plus idle context samples.

    Returns the raw sample stream and the ground truth (planted places,
    affinities, and the true per-event contexts). n_events == 0 yields an
    empty stream but still emits the truth.
    """
    if n_events < 0:
        raise DataError("n_events must be >= 0")
    rng = np.random.default_rng(spec.seed)
    world = _World(spec, rng)
    truth = GroundTruth(
        homes={u.user: u.home_cell for u in world.users},
        works={u.user: u.work_cell for u in world.users},
        affinities=spec.affinities,
        catalog=world.catalog,
        events=[],
        city_centers=[DEFAULT_CITY],
        weather_table=world.weather_table,
        countries={u.user: u.country for u in world.users},
        broken_users=[u.user for u in world.users[spec.n_users - spec.n_broken_users:]],
    )
    if n_events == 0:
        return SimulatedUsage(samples=[], truth=truth)

    samples: list[RawSample] = []
    n_slots = spec.n_days * 1440 // SLOT_MIN
    event_users = rng.integers(0, spec.n_users - spec.n_broken_users, size=n_events)
    per_user_events = [np.flatnonzero(event_users == u) for u in range(spec.n_users)]

    for u, user in enumerate(world.users):
        samples.extend(_background_samples(world, user, rng))
        k = len(per_user_events[u])
        if k == 0:
            continue
        if k > n_slots:
            raise DataError(f"too many events for the simulated window ({k} > {n_slots})")
        slots = np.sort(rng.choice(n_slots, size=k, replace=False))
        for slot in slots:
            ts = spec.start_ts + int(slot) * SLOT_MIN * MINUTE
            state = world.schedule_state(ts, rng)
            battery, energy, conn = world.draw_device_state(rng)
            context = world.context_at(user, ts, state, battery, energy, conn, "on")
            app = world.choose_app(context, rng)
            truth.events.append(TrueEvent(user.user, app, ts, context))
            cell = world.cell_for_state(user, state, rng)
            run_len = int(rng.integers(1, spec.run_minutes_max + 1))
            for m in range(run_len):
                samples.append(RawSample(
                    user=user.user, timestamp=ts + m * MINUTE, foreground_app=app,
                    screen="on", location_cell=cell, lat=user.lat, lon=user.lon,
                    battery_pct=_BATTERY_PCT[battery],
                    charger=energy if energy in ("usb", "ac") else None,
                    connectivity=conn if conn != "none" else None,
                ))
            # screen-off separator so back-to-back same-app events stay distinct runs
            samples.append(RawSample(
                user=user.user, timestamp=ts + run_len * MINUTE, foreground_app=None,
                screen="off", location_cell=cell, lat=user.lat, lon=user.lon,
                battery_pct=_BATTERY_PCT[battery],
                charger=energy if energy in ("usb", "ac") else None,
                connectivity=conn if conn != "none" else None,
            ))

    samples.sort(key=lambda s: (s.user, s.timestamp))
    truth.events.sort(key=lambda e: (e.user, e.timestamp))
    return SimulatedUsage(samples=samples, truth=truth)


def write_usage(sim: SimulatedUsage, out_dir: str | Path) -> dict[str, Path]:
    """Write raw samples, weather stub, city centers, and truth JSON to a directory."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "samples": out / "samples.tsv",
        "weather": out / "weather.tsv",
        "cities": out / "cities.tsv",
        "apps": out / "apps.tsv",
        "truth": out / "truth.json",
    }
    write_raw_samples(sim.samples, paths["samples"])
    write_weather_file(sim.truth.weather_table, paths["weather"])
    write_city_file(sim.truth.city_centers, paths["cities"])
    write_app_catalog(sim.truth.catalog, paths["apps"])
    sim.truth.write_json(paths["truth"])
    return paths


# -- session/funnel simulation --------------------------------------------------


@dataclass(frozen=True)
class SessionProbs:
    """Stage probabilities for the simulated recommendation funnel."""

    p_view: float = 0.2
    p_install: float = 0.19
    p_direct_use: float = 0.578
    p_uninstall: float = 0.25
    direct_use_window: float = 24 * 3600.0
    shown_n: int = 21
    ttl_fast_mean: float = 3600.0  # first-hour uninstall mass
    ttl_slow_mean: float = 3 * 86400.0
    ttl_fast_weight: float = 0.7

    def validate(self) -> None:
        for name in ("p_view", "p_install", "p_direct_use", "p_uninstall", "ttl_fast_weight"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise DataError(f"{name} must be in [0, 1], got {v}")
        if self.shown_n < 1:
            raise DataError("shown_n must be >= 1")


def simulate_sessions(spec: WorldSpec, probs: SessionProbs, n_sessions: int,
                      scorer=None) -> list[InteractionEvent]:
    """Generate a sessionized interaction-event stream with known funnel rates.

    Each session shows shown_n apps (ranked by the scorer when given, random
    otherwise); per item: view with p_view, then install with p_install, then
    direct use within the window with p_direct_use; installs uninstall with
    p_uninstall after a mixture-of-exponentials lifetime.
    """
    probs.validate()
    if n_sessions < 0:
        raise DataError("n_sessions must be >= 0")
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 2]))
    world = _World(spec, np.random.default_rng(spec.seed))
    events: list[InteractionEvent] = []
    session_spacing = 1800.0
    installed_by_user: dict[str, set[str]] = {}

    for s in range(n_sessions):
        user = world.users[s % len(world.users)]
        session = f"{user.user}:s{s}"
        ts0 = spec.start_ts + s * session_spacing
        state = world.schedule_state(ts0, rng)
        battery, energy, conn = world.draw_device_state(rng)
        context = world.context_at(user, ts0, state, battery, energy, conn, "on")
        installed = installed_by_user.setdefault(user.user, set())
        if scorer is not None:
            shown = [i.app for i in scorer.recommend(user.user, context, n=probs.shown_n,
                                                     installed=installed).items]
        else:
            # installed apps never reappear, so repeat (user, app) installs
            # cannot cross-contaminate direct-use windows
            available = [a for a in world.apps if a not in installed]
            k = min(probs.shown_n, len(available))
            shown = [available[int(i)] for i in rng.choice(len(available), size=k, replace=False)] \
                if k else []
        t = ts0
        for app in shown:
            t += 1.0
            events.append(InteractionEvent(user.user, app, "shown", t, context, session))
            if rng.random() >= probs.p_view:
                if rng.random() < 0.2:
                    events.append(InteractionEvent(user.user, app, "skipped", t + 0.5, context, session))
                continue
            t += 2.0
            events.append(InteractionEvent(user.user, app, "viewed", t, context, session))
            if rng.random() >= probs.p_install:
                continue
            t += 3.0
            events.append(InteractionEvent(user.user, app, "installed", t, context, session))
            installed.add(app)
            if rng.random() < probs.p_direct_use:
                delta = rng.uniform(60.0, 0.5 * probs.direct_use_window)
                use_ts = t + delta
                use_state = world.schedule_state(use_ts, rng)
                use_ctx = world.context_at(user, use_ts, use_state, battery, energy, conn, "on")
                events.append(InteractionEvent(user.user, app, "used", use_ts, use_ctx))
            if rng.random() < probs.p_uninstall:
                if rng.random() < probs.ttl_fast_weight:
                    ttl = rng.exponential(probs.ttl_fast_mean)
                else:
                    ttl = rng.exponential(probs.ttl_slow_mean)
                un_ts = t + ttl
                un_state = world.schedule_state(un_ts, rng)
                un_ctx = world.context_at(user, un_ts, un_state, battery, energy, conn, "on")
                events.append(InteractionEvent(user.user, app, "uninstalled", un_ts, un_ctx))
    events.sort(key=lambda e: (e.timestamp, e.user, e.kind))
    return events
