"""Contextual vocabulary, identifiers, and usage/interaction records shared by all modules."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping


class DataError(Exception):
    """Malformed or vocabulary-violating input data."""


class ConfigError(Exception):
    """Invalid configuration (unknown rule, flag, or mapping)."""


class InvalidContextError(DataError):
    """Context rejected by vocabulary validation."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


@dataclass(frozen=True)
class ContextDimension:
    """A categorical situational variable with a closed (or open) value vocabulary."""

    name: str
    values: tuple[str, ...]
    open_vocabulary: bool = False  # country accepts any ISO alpha-2 code

    @property
    def cardinality(self) -> int:
        return len(self.values)

    def accepts(self, value: str) -> bool:
        if value in self.values:
            return True
        if self.open_vocabulary:
            return value == "unknown" or (len(value) == 2 and value.isalpha() and value.islower())
        return False


DAYTIMES = ("morning", "afternoon", "evening", "night")
WEEKDAYS = ("mon", "tue", "wed", "thu", "fri", "sat", "sun")
WEATHER = ("sunny", "cloudy", "foggy", "windy", "drizzle", "rainy", "stormy", "sleet", "snowy")
BATTERY_LEVELS = ("full", "high", "medium", "low", "empty")

DIMENSIONS: dict[str, ContextDimension] = {
    d.name: d
    for d in (
        ContextDimension("daytime", DAYTIMES),
        ContextDimension("weekday", WEEKDAYS),
        ContextDimension("isweekend", ("weekend", "workday")),
        ContextDimension("location", ("home", "work", "other")),
        ContextDimension("city", ("true", "false")),
        ContextDimension("country", ("unknown",), open_vocabulary=True),
        ContextDimension("weather", WEATHER),
        ContextDimension("battery", BATTERY_LEVELS),
        ContextDimension("energy", ("battery", "usb", "ac")),
        ContextDimension("connectivity", ("wifi", "mobile", "none")),
        ContextDimension("screen", ("on", "off")),
    )
}

DIMENSION_ORDER: tuple[str, ...] = tuple(DIMENSIONS)

# Dimensions carried by canonical tuple datasets (screen is constant "on" in
# usage data, so it is not persisted).
DATASET_DIMENSIONS: tuple[str, ...] = tuple(d for d in DIMENSION_ORDER if d != "screen")

# Context dimensions the factorization model uses unless configured otherwise.
DEFAULT_MODEL_DIMENSIONS: tuple[str, ...] = ("daytime", "weekday", "isweekend", "location", "weather")

# Fallback assignments for dimensions a client or CLI invocation leaves unset.
DEFAULT_CONTEXT = {
    "daytime": "morning", "weekday": "mon", "isweekend": "workday",
    "location": "other", "city": "false", "country": "unknown",
    "weather": "sunny", "battery": "high", "energy": "battery",
    "connectivity": "wifi", "screen": "on",
}


@dataclass(frozen=True)
class Violation:
    """One vocabulary violation found while validating a context assignment."""

    dimension: str
    problem: str  # "missing" | "unknown_value" | "unknown_dimension"
    value: str | None = None

    def __str__(self) -> str:
        if self.problem == "missing":
            return f"{self.dimension}: missing"
        if self.problem == "unknown_dimension":
            return f"{self.dimension}: not a context dimension"
        return f"{self.dimension}: value {self.value!r} not in vocabulary"


def validate_assignments(assignments: Mapping[str, str]) -> list[Violation]:
    """Check a raw dimension->value mapping against the built-in vocabulary.

    Total function: returns every violation instead of raising. An empty list
    means the mapping forms a valid ContextVector.
    """
    violations = []
    for name, dim in DIMENSIONS.items():
        if name not in assignments:
            violations.append(Violation(name, "missing"))
        elif not dim.accepts(assignments[name]):
            violations.append(Violation(name, "unknown_value", assignments[name]))
    for name in assignments:
        if name not in DIMENSIONS:
            violations.append(Violation(name, "unknown_dimension"))
    return violations


@dataclass(frozen=True)
class ContextVector:
    """One value per contextual dimension; immutable and hashable.

    Values are stored positionally in DIMENSION_ORDER so vectors can act as
    sparse-cube keys.
    """

    values: tuple[str, ...]

    def __post_init__(self):
        if len(self.values) != len(DIMENSION_ORDER):
            raise InvalidContextError([Violation("<vector>", "missing")])

    @classmethod
    def from_mapping(cls, assignments: Mapping[str, str]) -> "ContextVector":
        violations = validate_assignments(assignments)
        if violations:
            raise InvalidContextError(violations)
        return cls(tuple(assignments[d] for d in DIMENSION_ORDER))

    def get(self, dimension: str) -> str:
        return self.values[DIMENSION_ORDER.index(dimension)]

    def as_dict(self) -> dict[str, str]:
        return dict(zip(DIMENSION_ORDER, self.values))

    def replace(self, **changes: str) -> "ContextVector":
        d = self.as_dict()
        d.update(changes)
        return ContextVector.from_mapping(d)

    def project(self, dimensions: Iterable[str]) -> tuple[str, ...]:
        """Values restricted to the given dimensions, in the given order."""
        return tuple(self.get(d) for d in dimensions)


def validate_context(vector: ContextVector | Mapping[str, str]) -> list[Violation]:
    """Return every dimension whose value is outside its vocabulary (empty list = ok)."""
    if isinstance(vector, ContextVector):
        return validate_assignments(vector.as_dict())
    return validate_assignments(vector)


def context_distance(a: ContextVector, b: ContextVector) -> int:
    """Hamming count of differing dimensions between two valid contexts."""
    for v in (a, b):
        violations = validate_context(v)
        if violations:
            raise InvalidContextError(violations)
    return sum(1 for x, y in zip(a.values, b.values) if x != y)


@dataclass(frozen=True)
class AppInfo:
    """Catalog metadata for one app."""

    id: str
    category: str = "unknown"
    language: str = "unknown"
    name: str | None = None
    audience_tags: frozenset[str] = frozenset()

    @property
    def display_name(self) -> str:
        return self.name or self.id


class AppCatalog:
    """App id -> metadata registry with a configurable category taxonomy."""

    def __init__(self, infos: Iterable[AppInfo] = ()):
        self._infos: dict[str, AppInfo] = {}
        for info in infos:
            self.add(info)

    def add(self, info: AppInfo) -> None:
        if not info.id:
            raise DataError("empty app id")
        self._infos[info.id] = info

    def get(self, app: str) -> AppInfo:
        return self._infos.get(app, AppInfo(id=app))

    def category(self, app: str) -> str:
        return self.get(app).category

    def language(self, app: str) -> str:
        return self.get(app).language

    def categories(self) -> list[str]:
        return sorted({i.category for i in self._infos.values()})

    def apps(self) -> list[str]:
        return sorted(self._infos)

    def __len__(self) -> int:
        return len(self._infos)

    def __contains__(self, app: str) -> bool:
        return app in self._infos

    def __iter__(self) -> Iterator[AppInfo]:
        return iter(self._infos.values())


@dataclass(frozen=True)
class UsageTuple:
    """(user, app, context) usage count; persisted datasets omit zero counts."""

    user: str
    app: str
    context: ContextVector
    count: int

    def __post_init__(self):
        if not self.user or not self.app:
            raise DataError("empty user or app id")
        if self.count < 0:
            raise DataError(f"negative usage count for ({self.user}, {self.app})")


EVENT_KINDS = ("shown", "viewed", "installed", "skipped", "used", "uninstalled")

# Kinds a client may report back; "shown" is logged by the server itself and
# "used" originates from the usage-sampling pipeline.
FEEDBACK_KINDS = ("viewed", "installed", "skipped", "uninstalled")


@dataclass(frozen=True)
class InteractionEvent:
    """One funnel event (shown/viewed/installed/skipped/used/uninstalled)."""

    user: str
    app: str
    kind: str
    timestamp: float
    context: ContextVector
    session: str | None = None

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise DataError(f"unknown event kind {self.kind!r}")

    def with_session(self, session: str) -> "InteractionEvent":
        return InteractionEvent(self.user, self.app, self.kind, self.timestamp, self.context, session)


@dataclass(frozen=True)
class RawSample:
    """One minute-cadence phone-state sample; empty sensor fields allowed."""

    user: str
    timestamp: float
    foreground_app: str | None = None
    screen: str = "off"  # "on" | "off"
    location_cell: str | None = None
    lat: float | None = None
    lon: float | None = None
    battery_pct: float | None = None
    charger: str | None = None  # None/"" = on battery, else "usb" | "ac"
    connectivity: str | None = None  # "wifi" | "mobile" | None


def context_to_json(vector: ContextVector) -> dict[str, str]:
    return vector.as_dict()


def context_from_json(data: Mapping[str, str]) -> ContextVector:
    return ContextVector.from_mapping(data)
