"""Shared fixtures and context helpers for the test suite."""

from __future__ import annotations

import hypothesis.strategies as st
import pytest

from ctxrec.domain import DIMENSIONS, ContextVector, UsageTuple
from ctxrec.ingest import UsageCube

BASE_ASSIGNMENTS = {
    "daytime": "morning", "weekday": "mon", "isweekend": "workday",
    "location": "home", "city": "false", "country": "unknown",
    "weather": "sunny", "battery": "high", "energy": "battery",
    "connectivity": "wifi", "screen": "on",
}

COUNTRY_SAMPLES = ("us", "gb", "es", "de", "au", "unknown")


def make_context(**overrides) -> ContextVector:
    assignments = dict(BASE_ASSIGNMENTS)
    assignments.update(overrides)
    return ContextVector.from_mapping(assignments)


@st.composite
def contexts(draw) -> ContextVector:
    assignments = {}
    for dim in DIMENSIONS.values():
        if dim.open_vocabulary:
            assignments[dim.name] = draw(st.sampled_from(COUNTRY_SAMPLES))
        else:
            assignments[dim.name] = draw(st.sampled_from(dim.values))
    return ContextVector.from_mapping(assignments)


@pytest.fixture
def weekend_cube() -> UsageCube:
    """The worked explanation example: appA used 9x weekend / 1x workday,
    grand total 100 with 40 weekend usages."""
    weekend = make_context(isweekend="weekend", weekday="sat")
    workday = make_context()
    return UsageCube([
        UsageTuple("u1", "appA", weekend, 9),
        UsageTuple("u1", "appA", workday, 1),
        UsageTuple("u2", "appB", weekend, 31),
        UsageTuple("u2", "appB", workday, 59),
    ])
