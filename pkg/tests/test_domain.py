import pytest
from hypothesis import given

from ctxrec.domain import (
    DIMENSION_ORDER,
    DIMENSIONS,
    AppCatalog,
    AppInfo,
    ContextVector,
    DataError,
    InteractionEvent,
    InvalidContextError,
    UsageTuple,
    context_distance,
    context_from_json,
    context_to_json,
    validate_context,
)

from conftest import BASE_ASSIGNMENTS, contexts, make_context


def test_builtin_dimensions_mirror_the_signal_table():
    assert list(DIMENSIONS) == ["daytime", "weekday", "isweekend", "location", "city",
                                "country", "weather", "battery", "energy", "connectivity",
                                "screen"]
    assert DIMENSIONS["daytime"].cardinality == 4
    assert DIMENSIONS["weekday"].cardinality == 7
    assert DIMENSIONS["isweekend"].values == ("weekend", "workday")
    assert DIMENSIONS["location"].values == ("home", "work", "other")
    assert DIMENSIONS["weather"].cardinality == 9
    assert DIMENSIONS["battery"].cardinality == 5
    assert DIMENSIONS["energy"].values == ("battery", "usb", "ac")
    assert DIMENSIONS["connectivity"].values == ("wifi", "mobile", "none")
    for dim in DIMENSIONS.values():
        assert len(set(dim.values)) == dim.cardinality
        assert all(dim.values)


def test_validate_all_valid_vector_is_ok():
    assert validate_context(make_context()) == []


def test_validate_rejects_offvocabulary_weather():
    bad = dict(BASE_ASSIGNMENTS, weather="hail")
    violations = validate_context(bad)
    assert [v.dimension for v in violations] == ["weather"]
    assert violations[0].problem == "unknown_value"


def test_validate_reports_missing_dimension():
    partial = {k: v for k, v in BASE_ASSIGNMENTS.items() if k != "battery"}
    violations = validate_context(partial)
    assert [v.dimension for v in violations] == ["battery"]
    assert violations[0].problem == "missing"


def test_validate_reports_unknown_dimension():
    extra = dict(BASE_ASSIGNMENTS, mood="happy")
    assert any(v.dimension == "mood" and v.problem == "unknown_dimension"
               for v in validate_context(extra))


def test_country_is_open_vocabulary():
    assert validate_context(make_context(country="es")) == []
    assert validate_context(make_context(country="unknown")) == []
    for bad in ("ESP", "E", "e1", ""):
        assert validate_context(dict(BASE_ASSIGNMENTS, country=bad)), bad


def test_from_mapping_raises_with_violations():
    with pytest.raises(InvalidContextError) as exc:
        ContextVector.from_mapping(dict(BASE_ASSIGNMENTS, weather="hail"))
    assert "weather" in str(exc.value)


def test_context_distance_examples():
    a = make_context()
    assert context_distance(a, a) == 0
    assert context_distance(a, make_context(daytime="evening")) == 1
    b = ContextVector.from_mapping({
        "daytime": "night", "weekday": "sun", "isweekend": "weekend",
        "location": "work", "city": "true", "country": "es", "weather": "snowy",
        "battery": "empty", "energy": "ac", "connectivity": "none", "screen": "off",
    })
    assert context_distance(a, b) == 11


def test_context_distance_rejects_invalid():
    with pytest.raises(InvalidContextError):
        context_distance(make_context(), ContextVector(tuple(["x"] * 11)))


@given(contexts(), contexts())
def test_context_distance_symmetry_and_identity(a, b):
    assert context_distance(a, b) == context_distance(b, a)
    assert (context_distance(a, b) == 0) == (a == b)
    assert 0 <= context_distance(a, b) <= len(DIMENSION_ORDER)


@given(contexts(), contexts(), contexts())
def test_context_distance_triangle_inequality(a, b, c):
    assert context_distance(a, c) <= context_distance(a, b) + context_distance(b, c)


@given(contexts())
def test_serialization_round_trip(ctx):
    assert context_from_json(context_to_json(ctx)) == ctx
    assert validate_context(ctx) == []


def test_context_replace_and_project():
    ctx = make_context()
    evening = ctx.replace(daytime="evening")
    assert evening.get("daytime") == "evening"
    assert ctx.get("daytime") == "morning"
    assert evening.project(("daytime", "isweekend")) == ("evening", "workday")


def test_usage_tuple_validation():
    with pytest.raises(DataError):
        UsageTuple("", "a", make_context(), 1)
    with pytest.raises(DataError):
        UsageTuple("u", "a", make_context(), -1)


def test_interaction_event_kind_is_closed():
    with pytest.raises(DataError):
        InteractionEvent("u", "a", "liked", 0.0, make_context())


def test_app_catalog_defaults_and_lookup():
    catalog = AppCatalog([AppInfo(id="a1", category="games", language="de")])
    assert catalog.category("a1") == "games"
    assert catalog.language("a1") == "de"
    assert catalog.category("missing") == "unknown"
    assert "a1" in catalog and "missing" not in catalog
    assert catalog.categories() == ["games"]
