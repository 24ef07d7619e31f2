import math

import hypothesis.strategies as st
import numpy as np
import pytest
from hypothesis import given, settings
from scipy import integrate, special

from ctxrec.domain import DIMENSIONS, DataError, UsageTuple
from ctxrec.explain import (
    ExplanationReport,
    FactorStat,
    UndefinedStatisticError,
    chi_square_pvalue,
    chi_square_stat,
    dimension_df,
    expected_count,
    explain_app,
    regularized_gamma_q,
    render_explanation,
    select_factors,
)
from ctxrec.ingest import UsageCube

from conftest import make_context


# -- expected counts -----------------------------------------------------------


def test_expected_count_formula(weekend_cube):
    # grand 100, weekend 40, appA total 10 -> E = 4
    assert expected_count(weekend_cube, "appA", "isweekend", "weekend") == pytest.approx(4.0)


def test_expected_count_unobserved_context_is_zero(weekend_cube):
    assert expected_count(weekend_cube, "appA", "location", "work") == 0.0


def test_expected_count_app_only_context():
    ctx = make_context()
    cube = UsageCube([UsageTuple("u", "a", ctx, 7)])
    # the context value covers the whole cube, so E equals the app total
    assert expected_count(cube, "a", "daytime", "morning") == pytest.approx(7.0)


def test_expected_count_empty_cube_errors():
    with pytest.raises(DataError):
        expected_count(UsageCube([]), "a", "daytime", "morning")


# -- chi-square statistic ---------------------------------------------------------


def test_chi_square_stat_examples():
    assert chi_square_stat(8, 4) == pytest.approx(4.0)
    assert chi_square_stat(4, 4) == 0.0
    assert chi_square_stat(9, 4) == pytest.approx(6.25)


def test_chi_square_stat_undefined_for_nonpositive_expected():
    with pytest.raises(UndefinedStatisticError):
        chi_square_stat(3, 0.0)


# -- p-values ---------------------------------------------------------------------


def _chi2_pdf(t, df):
    return t ** (df / 2 - 1) * math.exp(-t / 2) / (2 ** (df / 2) * math.gamma(df / 2))


def quadrature_pvalue(x, df):
    """Independent oracle: numeric integration of the chi-square density."""
    if x == 0:
        return 1.0
    val, _ = integrate.quad(_chi2_pdf, x, np.inf, args=(df,), limit=200)
    return val


def test_pvalue_at_zero_statistic():
    for df in (1, 2, 5, 11):
        assert chi_square_pvalue(0.0, df) == 1.0


def test_pvalue_closed_form_df2():
    # at df=2 the upper tail is exactly exp(-x/2)
    for x in np.linspace(0.0, 50.0, 201):
        assert chi_square_pvalue(float(x), 2) == pytest.approx(math.exp(-x / 2), abs=1e-10)
    assert chi_square_pvalue(6.25, 2) == pytest.approx(0.04393693362340742, abs=1e-12)


def test_pvalue_against_quadrature_oracle():
    assert chi_square_pvalue(3.841, 1) == pytest.approx(0.050013683763956804, abs=1e-8)
    for df in range(1, 13):
        for x in (0.1, 0.7, 2.3, 5.0, 11.4, 25.0):
            assert chi_square_pvalue(x, df) == pytest.approx(quadrature_pvalue(x, df), abs=1e-8)


def test_pvalue_against_scipy_grid():
    for df in range(1, 13):
        for x in np.linspace(0.01, 60, 40):
            assert chi_square_pvalue(float(x), df) == pytest.approx(
                float(special.chdtrc(df, x)), abs=1e-10)


def test_pvalue_invalid_inputs():
    with pytest.raises(ValueError):
        chi_square_pvalue(1.0, 0)
    with pytest.raises(ValueError):
        chi_square_pvalue(-1.0, 2)
    with pytest.raises(ValueError):
        regularized_gamma_q(-1.0, 2.0)


@settings(max_examples=80)
@given(st.integers(min_value=1, max_value=12),
       st.floats(min_value=0, max_value=80, allow_nan=False),
       st.floats(min_value=0, max_value=80, allow_nan=False))
def test_pvalue_monotone_nonincreasing_in_x(df, x1, x2):
    lo, hi = sorted((x1, x2))
    assert chi_square_pvalue(hi, df) <= chi_square_pvalue(lo, df) + 1e-12


def test_pvalue_tails():
    assert chi_square_pvalue(1e4, 3) < 1e-12
    assert 0.0 <= chi_square_pvalue(80.0, 1) <= 1.0


# -- factor selection ----------------------------------------------------------------


def test_select_factors_worked_example(weekend_cube):
    stats = select_factors(weekend_cube, "appA", make_context(isweekend="weekend", weekday="sat"),
                           dimensions=["isweekend"])
    assert len(stats) == 1
    s = stats[0]
    assert (s.dimension, s.value) == ("isweekend", "weekend")
    assert s.observed == 9 and s.expected == pytest.approx(4.0)
    assert s.chi2 == pytest.approx(6.25)
    assert s.df == 2
    assert s.p == pytest.approx(0.0439369, abs=1e-6)


def test_select_factors_filters_and_orders():
    # appA: strongly weekend (p<0.1, O>E), mildly evening (p>0.1), under-indexed at home (O<E)
    weekend = make_context(isweekend="weekend", weekday="sat", daytime="evening", location="home")
    tuples = [
        UsageTuple("u1", "appA", weekend, 9),
        UsageTuple("u1", "appA", make_context(location="work"), 1),
        UsageTuple("u2", "appB", make_context(isweekend="weekend", weekday="sat"), 31),
        UsageTuple("u2", "appB", make_context(location="home"), 59),
    ]
    cube = UsageCube(tuples)
    stats = select_factors(cube, "appA", weekend)
    assert all(s.p < 0.1 and s.observed > s.expected for s in stats)
    assert [s.p for s in stats] == sorted(s.p for s in stats)
    assert len(stats) <= 3
    dims = [s.dimension for s in stats]
    assert "location" not in dims  # O < E there


def test_select_factors_caps_at_three():
    # one app used only in a single distinctive context inside a large uniform pool
    special_ctx = make_context(isweekend="weekend", weekday="sun", daytime="night",
                               location="work", weather="snowy")
    tuples = [UsageTuple("u1", "appA", special_ctx, 30)]
    for i in range(20):
        tuples.append(UsageTuple(f"v{i}", "appB", make_context(), 20))
    cube = UsageCube(tuples)
    stats = select_factors(cube, "appA", special_ctx)
    assert len(stats) == 3
    assert [s.p for s in stats] == sorted(s.p for s in stats)


def test_select_factors_global_distribution_selects_nothing():
    # appA's split across isweekend matches the population split exactly
    weekend = make_context(isweekend="weekend", weekday="sat")
    workday = make_context()
    cube = UsageCube([
        UsageTuple("u1", "appA", weekend, 4),
        UsageTuple("u1", "appA", workday, 6),
        UsageTuple("u2", "appB", weekend, 36),
        UsageTuple("u2", "appB", workday, 54),
    ])
    assert select_factors(cube, "appA", weekend, dimensions=["isweekend"]) == []


def test_select_factors_unknown_app_errors(weekend_cube):
    with pytest.raises(DataError):
        select_factors(weekend_cube, "ghost", make_context())


def test_dimension_df_conventions(weekend_cube):
    assert dimension_df(weekend_cube, "isweekend", "paper") == 2
    assert dimension_df(weekend_cube, "isweekend", "conventional") == 1
    assert dimension_df(weekend_cube, "weekday", "paper") == 7
    # open vocabulary: observed countries in the cube
    assert dimension_df(weekend_cube, "country", "paper") == 1
    with pytest.raises(ValueError):
        dimension_df(weekend_cube, "isweekend", "other")


# -- rendering -------------------------------------------------------------------------


def _stat(dim, value):
    return FactorStat(dim, value, 9, 4, 6.25, 2, 0.04)


def test_render_verbatim_template():
    selected = [_stat("daytime", "afternoon"), _stat("city", "true"), _stat("country", "es")]
    text = render_explanation(selected, display_context={"city": "Barcelona", "country": "Spain"})
    assert text == "Recommended because your current situation is: Afternoon, Barcelona, Spain"


def test_render_empty_selection_fallback():
    assert render_explanation([]) == "Recommended based on your overall app usage"


def test_render_single_weekend_factor():
    assert render_explanation([_stat("isweekend", "weekend")]) == \
        "Recommended because your current situation is: Weekend"


def test_render_display_names():
    assert "Working day" in render_explanation([_stat("isweekend", "workday")])
    assert "WiFi" in render_explanation([_stat("connectivity", "wifi")])
    assert "ES" in render_explanation([_stat("country", "es")])


def test_explain_app_report(weekend_cube):
    report = explain_app(weekend_cube, "appA", make_context(isweekend="weekend", weekday="sat"))
    assert report.app == "appA"
    assert report.text.startswith("Recommended")
    data = report.as_dict()
    assert data["factors"] and {"dimension", "value", "observed", "expected",
                                "chi2", "df", "p"} <= set(data["factors"][0])


# -- independent brute-force oracle -----------------------------------------------------


def brute_force_select(tuples, app, context, max_factors=3, p_threshold=0.1):
    """Recompute O, E, chi2, p straight from the tuple list with scipy."""
    grand = sum(t.count for t in tuples)
    app_total = sum(t.count for t in tuples if t.app == app)
    out = []
    for dim in DIMENSIONS:
        value = context.get(dim)
        ctx_total = sum(t.count for t in tuples if t.context.get(dim) == value)
        if ctx_total == 0:
            continue
        observed = sum(t.count for t in tuples if t.app == app and t.context.get(dim) == value)
        expected = ctx_total / grand * app_total
        chi2 = (observed - expected) ** 2 / expected
        if DIMENSIONS[dim].open_vocabulary:
            df = len({t.context.get(dim) for t in tuples})
        else:
            df = DIMENSIONS[dim].cardinality
        p = float(special.chdtrc(df, chi2))
        if p < p_threshold and observed - expected > 0:
            out.append((p, dim, value, observed, expected, chi2, df))
    out.sort(key=lambda r: (r[0], r[1]))
    return out[:max_factors]


def _random_cube(rng):
    apps = [f"a{i}" for i in range(rng.integers(2, 6))]
    users = [f"u{i}" for i in range(rng.integers(1, 4))]
    tuples = []
    for _ in range(rng.integers(3, 25)):
        ctx = make_context(
            daytime=str(rng.choice(["morning", "evening", "night"])),
            isweekend=str(rng.choice(["weekend", "workday"])),
            location=str(rng.choice(["home", "work", "other"])),
            weekday=str(rng.choice(["mon", "sat"])),
        )
        tuples.append(UsageTuple(str(rng.choice(users)), str(rng.choice(apps)), ctx,
                                 int(rng.integers(1, 20))))
    return tuples


def test_select_factors_matches_brute_force_on_fuzzed_cubes():
    rng = np.random.default_rng(42)
    checked = 0
    for _ in range(60):
        tuples = _random_cube(rng)
        cube = UsageCube(tuples)
        app = tuples[0].app
        context = tuples[0].context
        expected = brute_force_select(tuples, app, context)
        got = select_factors(cube, app, context)
        assert len(got) == len(expected)
        for g, e in zip(got, expected):
            p, dim, value, observed, exp_count, chi2, df = e
            assert (g.dimension, g.value) == (dim, value)
            assert g.observed == pytest.approx(observed, abs=1e-9)
            assert g.expected == pytest.approx(exp_count, abs=1e-9)
            assert g.chi2 == pytest.approx(chi2, abs=1e-9)
            assert g.df == df
            assert g.p == pytest.approx(p, abs=1e-8)
            checked += 1
    assert checked > 20
