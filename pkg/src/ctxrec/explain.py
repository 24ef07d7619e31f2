"""Chi-square contextual explanation engine over population usage statistics."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Sequence

from .domain import DIMENSION_ORDER, DIMENSIONS, ContextVector, DataError
from .ingest import UsageCube

P_THRESHOLD = 0.1
MAX_FACTORS = 3

_TOL = 1e-14  # internal series/continued-fraction convergence tolerance
_MAX_ITER = 500


class UndefinedStatisticError(DataError):
    """Chi-square statistic undefined (expected count not positive)."""


# -- regularized incomplete gamma -------------------------------------------


def _gamma_p_series(s: float, x: float) -> float:
    # P(s,x) by the ascending series x^s e^-x / Gamma(s) * sum x^n / (s..(s+n))
    term = 1.0 / s
    total = term
    denom = s
    for _ in range(_MAX_ITER):
        denom += 1.0
        term *= x / denom
        total += term
        if abs(term) < abs(total) * _TOL:
            break
    return total * math.exp(-x + s * math.log(x) - math.lgamma(s))

def _gamma_q_contfrac(s: float, x: float) -> float:
    # Q(s,x) by Lentz's continued-fraction evaluation
    tiny = 1e-300
    b = x + 1.0 - s
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER + 1):
        an = -i * (i - s)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _TOL:
            break
    return h * math.exp(-x + s * math.log(x) - math.lgamma(s))


def regularized_gamma_q(s: float, x: float) -> float:
    """Upper regularized incomplete gamma Q(s, x) = Gamma(s, x) / Gamma(s).

    Series expansion for x < s + 1, continued fraction otherwise.
    """
    if s <= 0:
        raise ValueError(f"shape must be positive, got {s}")
    if x < 0:
        raise ValueError(f"argument must be non-negative, got {x}")
    if x == 0:
        return 1.0
    if x < s + 1.0:
        return min(max(1.0 - _gamma_p_series(s, x), 0.0), 1.0)
    return min(max(_gamma_q_contfrac(s, x), 0.0), 1.0)


def chi_square_pvalue(x: float, df: int) -> float:
    """Upper-tail probability of a chi-square statistic with df degrees of freedom."""
    if df < 1 or int(df) != df:
        raise ValueError(f"degrees of freedom must be a positive integer, got {df}")
    if x < 0:
        raise ValueError(f"statistic must be non-negative, got {x}")
    return regularized_gamma_q(df / 2.0, x / 2.0)


# -- per-factor statistics ---------------------------------------------------


def expected_count(cube: UsageCube, app: str, dimension: str, value: str) -> float:
    """Expected usage of an app in a context value under population proportions.

    E = (total usage in the context value / grand total) * app total.
    """
    if cube.grand_total == 0:
        raise DataError("expected count undefined on an empty cube")
    return cube.dim_value_total(dimension, value) / cube.grand_total * cube.app_total(app)


def chi_square_stat(observed: float, expected: float) -> float:
    """Single-cell Pearson statistic (O - E)^2 / E."""
    if expected <= 0:
        raise UndefinedStatisticError(f"expected count must be positive, got {expected}")
    return (observed - expected) ** 2 / expected


@dataclass(frozen=True)
class FactorStat:
    """Observed-vs-expected significance of one contextual value for one app."""

    dimension: str
    value: str
    observed: float
    expected: float
    chi2: float
    df: int
    p: float

    def as_dict(self) -> dict:
        return {"dimension": self.dimension, "value": self.value, "observed": self.observed,
                "expected": self.expected, "chi2": self.chi2, "df": self.df, "p": self.p}


def dimension_df(cube: UsageCube, dimension: str, convention: str = "paper") -> int:
    """Degrees of freedom for a dimension.

    "paper" uses the number of distinct values in the dimension (for the
    open country vocabulary: values observed in the cube); "conventional"
    uses one fewer.
    """
    dim = DIMENSIONS[dimension]
    cardinality = len(cube.observed_values(dimension)) if dim.open_vocabulary else dim.cardinality
    if convention == "paper":
        return max(cardinality, 1)
    if convention == "conventional":
        return max(cardinality - 1, 1)
    raise ValueError(f"unknown df convention {convention!r}")


def factor_stat(cube: UsageCube, app: str, dimension: str, value: str,
                df_convention: str = "paper") -> FactorStat:
    observed = cube.app_dim_value_total(app, dimension, value)
    expected = expected_count(cube, app, dimension, value)
    chi2 = chi_square_stat(observed, expected)
    df = dimension_df(cube, dimension, df_convention)
    return FactorStat(dimension, value, float(observed), expected, chi2, df,
                      chi_square_pvalue(chi2, df))


def select_factors(cube: UsageCube, app: str, context: ContextVector,
                   max_factors: int = MAX_FACTORS, p_threshold: float = P_THRESHOLD,
                   dimensions: Sequence[str] | None = None, df_convention: str = "paper",
                   counters: Counter | None = None) -> list[FactorStat]:
    """Pick up to max_factors contextual values that over-index for this app.

    Each dimension is evaluated independently at the user's current value;
    a factor is kept only when p < p_threshold and O - E > 0. Most significant
    (smallest p) first; dimensions with no observations of the current value
    are skipped.
    """
    if cube.app_total(app) == 0:
        raise DataError(f"app {app!r} not present in usage data")
    kept = []
    for dimension in (dimensions or DIMENSION_ORDER):
        value = context.get(dimension)
        if cube.dim_value_total(dimension, value) == 0:
            if counters is not None:
                counters[f"skipped_unobserved:{dimension}"] += 1
            continue
        stat = factor_stat(cube, app, dimension, value, df_convention)
        if stat.p < p_threshold and stat.observed - stat.expected > 0:
            kept.append(stat)
    kept.sort(key=lambda s: (s.p, s.dimension))
    return kept[:max_factors]


# -- rendering ----------------------------------------------------------------

_VALUE_DISPLAY = {
    "workday": "Working day",
    "wifi": "WiFi",
    "usb": "USB",
    "ac": "AC",
    ("city", "true"): "In a city",
    ("city", "false"): "Outside cities",
    ("connectivity", "none"): "Offline",
    ("screen", "on"): "Screen on",
    ("screen", "off"): "Screen off",
}

FALLBACK_TEXT = "Recommended based on your overall app usage"


def display_value(stat: FactorStat, display_context: Mapping[str, str] | None = None) -> str:
    """Human-facing name for a factor value; display_context may override per dimension."""
    if display_context and stat.dimension in display_context:
        return display_context[stat.dimension]
    if (stat.dimension, stat.value) in _VALUE_DISPLAY:
        return _VALUE_DISPLAY[(stat.dimension, stat.value)]
    if stat.value in _VALUE_DISPLAY:
        return _VALUE_DISPLAY[stat.value]
    if stat.dimension == "country":
        return stat.value.upper()
    return stat.value.capitalize()


def render_explanation(selected: Sequence[FactorStat],
                       display_context: Mapping[str, str] | None = None) -> str:
    """Render the user-facing explanation sentence for the selected factors."""
    if not selected:
        return FALLBACK_TEXT
    names = ", ".join(display_value(s, display_context) for s in selected)
    return f"Recommended because your current situation is: {names}"


@dataclass(frozen=True)
class ExplanationReport:
    """Selected contextual factors and rendered text for one recommended app."""

    app: str
    selected: tuple[FactorStat, ...]
    text: str

    def as_dict(self) -> dict:
        return {"app": self.app, "text": self.text,
                "factors": [s.as_dict() for s in self.selected]}


def explain_app(cube: UsageCube, app: str, context: ContextVector,
                max_factors: int = MAX_FACTORS, p_threshold: float = P_THRESHOLD,
                dimensions: Sequence[str] | None = None, df_convention: str = "paper",
                display_context: Mapping[str, str] | None = None) -> ExplanationReport:
    selected = select_factors(cube, app, context, max_factors=max_factors,
                              p_threshold=p_threshold, dimensions=dimensions,
                              df_convention=df_convention)
    return ExplanationReport(app=app, selected=tuple(selected),
                             text=render_explanation(selected, display_context))
