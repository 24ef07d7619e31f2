"""Contextual-dependence tables and usage-centric funnel metrics."""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

from .domain import (
    DIMENSIONS,
    AppCatalog,
    ConfigError,
    ContextVector,
    DataError,
    InteractionEvent,
)
from .ingest import UsageCube

RESIDUAL_THRESHOLD = 2.0
STRONG_RESIDUAL_THRESHOLD = 4.0
DEFAULT_DIRECT_USE_WINDOW_S = 24 * 3600.0
DEFAULT_MIN_CATEGORY_INSTALLS = 10


# -- contingency tables -------------------------------------------------------


@dataclass(frozen=True)
class ContingencyCell:
    row: str
    col: tuple[str, ...]
    observed: float
    expected: float
    residual: float
    signif: str  # "above" | "below" | "neutral"
    strong: bool = False


@dataclass
class ContingencyTable:
    rows: list[str]
    cols: list[tuple[str, ...]]
    col_dims: tuple[str, ...]
    cells: dict[tuple[str, tuple[str, ...]], ContingencyCell]
    total: float
    row_totals: dict[str, float]
    col_totals: dict[tuple[str, ...], float]

    def cell(self, row: str, col: tuple[str, ...]) -> ContingencyCell:
        return self.cells[(row, col)]


def _classify(residual: float) -> tuple[str, bool]:
    if residual >= RESIDUAL_THRESHOLD:
        return "above", residual >= STRONG_RESIDUAL_THRESHOLD
    if residual <= -RESIDUAL_THRESHOLD:
        return "below", residual <= -STRONG_RESIDUAL_THRESHOLD
    return "neutral", False


def _row_key_fn(selector: str, catalog: AppCatalog) -> Callable[[str, ContextVector], str]:
    if selector == "app":
        return lambda app, ctx: app
    if selector == "category":
        return lambda app, ctx: catalog.category(app)
    if selector in DIMENSIONS:
        return lambda app, ctx: ctx.get(selector)
    raise DataError(f"unknown row selector {selector!r} (use app, category, or a dimension)")


def _ordered_values(dim: str, observed: Iterable[str]) -> list[str]:
    spec = DIMENSIONS.get(dim)
    observed = set(observed)
    if spec is not None and not spec.open_vocabulary:
        return [v for v in spec.values if v in observed]
    return sorted(observed)


def contingency(source: UsageCube | Sequence[InteractionEvent], rows: str = "category",
                cols: Sequence[str] = ("location", "isweekend"),
                catalog: AppCatalog | None = None, row_filter: Iterable[str] | None = None,
                kinds: Sequence[str] = ("used",)) -> ContingencyTable:
    """Observed vs independence-expected counts with Pearson residuals.

    Rows select apps, categories, or a dimension's values; cols name one or
    two context dimensions (two produce crossed column keys). A cube source
    weighs by usage counts; an event source counts events of the given kinds.
    """
    cols = tuple(cols)
    if not 1 <= len(cols) <= 2:
        raise DataError("cols must name one or two dimensions")
    for c in cols:
        if c not in DIMENSIONS:
            raise DataError(f"unknown column dimension {c!r}")

    if isinstance(source, UsageCube):
        catalog = catalog or source.catalog
        observations = ((t.app, t.context, t.count) for t in source.tuples())
    else:
        catalog = catalog or AppCatalog()
        observations = ((e.app, e.context, 1) for e in source if e.kind in kinds)

    row_of = _row_key_fn(rows, catalog)
    keep = set(row_filter) if row_filter is not None else None

    counts: Counter = Counter()
    row_totals: Counter = Counter()
    col_totals: Counter = Counter()
    total = 0.0
    for app, ctx, n in observations:
        r = row_of(app, ctx)
        if keep is not None and r not in keep:
            continue
        c = ctx.project(cols)
        counts[(r, c)] += n
        row_totals[r] += n
        col_totals[c] += n
        total += n

    if total == 0:
        return ContingencyTable([], [], cols, {}, 0.0, {}, {})

    row_keys = sorted(row_totals)
    col_keys = [c for c in _cross_order(cols, col_totals)]
    cells = {}
    for r in row_keys:
        for c in col_keys:
            observed = float(counts.get((r, c), 0))
            expected = row_totals[r] * col_totals[c] / total
            residual = (observed - expected) / math.sqrt(expected) if expected > 0 else 0.0
            signif, strong = _classify(residual)
            cells[(r, c)] = ContingencyCell(r, c, observed, expected, residual, signif, strong)
    return ContingencyTable(row_keys, col_keys, cols, cells, total,
                            dict(row_totals), dict(col_totals))


def _cross_order(cols: tuple[str, ...], col_totals: Mapping[tuple, float]) -> list[tuple[str, ...]]:
    """Column keys ordered by vocabulary order, outer dimension last-listed first."""
    if len(cols) == 1:
        return [(v,) for v in _ordered_values(cols[0], (c[0] for c in col_totals))]
    inner = _ordered_values(cols[0], (c[0] for c in col_totals))
    outer = _ordered_values(cols[1], (c[1] for c in col_totals))
    return [(i, o) for o in outer for i in inner if (i, o) in col_totals]


# -- mosaic layout -------------------------------------------------------------


def mosaic_export(table: ContingencyTable) -> dict:
    """Nested tile rectangles in the unit square for mosaic rendering.

    Outer slices split x by the second column dimension's marginals; within a
    slice, columns split by the first dimension conditional on the slice; tile
    heights are within-column row shares. Fractions are normalized per group.
    """
    if table.total == 0:
        raise DataError("cannot lay out an empty contingency table")
    two_dim = len(table.col_dims) == 2
    if two_dim:
        slice_keys = []
        for c in table.cols:
            if c[1] not in slice_keys:
                slice_keys.append(c[1])
        slice_totals = {s: sum(v for k, v in table.col_totals.items() if k[1] == s)
                        for s in slice_keys}
    else:
        slice_keys = ["all"]
        slice_totals = {"all": table.total}

    slices = []
    tiles = []
    x_cursor = 0.0
    for s in slice_keys:
        slice_w = slice_totals[s] / table.total
        slices.append({"key": s, "x": x_cursor, "width": slice_w})
        cols_in_slice = [c for c in table.cols if (not two_dim) or c[1] == s]
        cx = x_cursor
        for c in cols_in_slice:
            col_total = table.col_totals[c]
            col_frac = col_total / slice_totals[s] if slice_totals[s] > 0 else 0.0
            col_w = slice_w * col_frac
            y_cursor = 0.0
            for r in table.rows:
                cell = table.cell(r, c)
                h_frac = cell.observed / col_total if col_total > 0 else 0.0
                tiles.append({
                    "row": r,
                    "col": list(c),
                    "slice": s,
                    "x": cx,
                    "y": y_cursor,
                    "width": col_w,
                    "height": h_frac,
                    "width_fraction": col_frac,
                    "height_fraction": h_frac,
                    "observed": cell.observed,
                    "expected": cell.expected,
                    "residual": cell.residual,
                    "signif": cell.signif,
                    "strong": cell.strong,
                    "degenerate": col_total == 0,
                })
                y_cursor += h_frac
            cx += col_w
        x_cursor += slice_w
    return {"rows": table.rows, "cols": [list(c) for c in table.cols],
            "col_dims": list(table.col_dims), "slices": slices, "tiles": tiles}


_SIGNIF_FILL = {
    ("above", False): "#7da7d9",
    ("above", True): "#2b5ea7",
    ("below", False): "#e09a8e",
    ("below", True): "#bf3b2b",
    ("neutral", False): "#d9d9d9",
    ("neutral", True): "#d9d9d9",
}


def mosaic_svg(layout: Mapping, width: int = 800, height: int = 500, pad: int = 2) -> str:
    """Static SVG rendering of a mosaic layout; tile geometry mirrors the layout data."""
    from xml.sax.saxutils import escape

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {width} {height}" '
             f'data-rows="{len(layout["rows"])}">']
    for t in layout["tiles"]:
        x = t["x"] * width
        y = t["y"] * height
        w = max(t["width"] * width - pad, 0.0)
        h = max(t["height"] * height - pad, 0.0)
        fill = _SIGNIF_FILL[(t["signif"], t["strong"])]
        title = escape(f'{t["row"]} | {"/".join(t["col"])}: '
                       f'O={t["observed"]:g} E={t["expected"]:.2f} r={t["residual"]:.2f}')
        parts.append(f'<rect x="{x:.4f}" y="{y:.4f}" width="{w:.4f}" height="{h:.4f}" '
                     f'fill="{fill}" data-width-fraction="{t["width_fraction"]:.12f}">'
                     f'<title>{title}</title></rect>')
    parts.append("</svg>")
    return "\n".join(parts)


# -- conversion funnel ----------------------------------------------------------


@dataclass(frozen=True)
class CategoryConversion:
    category: str
    views: int
    installs: int
    rate: float


@dataclass
class FunnelReport:
    shown: int
    viewed: int
    installed: int
    attributed_installs: int
    delayed_installs: int
    direct_used: int
    uninstalled: int
    sessions: int
    view_to_install: float
    install_to_direct_use: float
    installs_per_session: float
    views_per_session: float
    per_category: dict[str, CategoryConversion] = field(default_factory=dict)

    def as_dict(self) -> dict:
        d = {k: getattr(self, k) for k in ("shown", "viewed", "installed", "attributed_installs",
                                           "delayed_installs", "direct_used", "uninstalled", "sessions",
                                           "view_to_install", "install_to_direct_use",
                                           "installs_per_session", "views_per_session")}
        d["per_category"] = {c.category: {"views": c.views, "installs": c.installs, "rate": c.rate}
                             for c in self.per_category.values()}
        return d


def _attribute_installs(events: Sequence[InteractionEvent]) -> tuple[list[InteractionEvent], int]:
    """Split installs into view-attributed (same user/app/session, last touch)
    and delayed (viewed in an earlier session)."""
    views_by_session: dict[tuple[str, str, str | None], list[float]] = defaultdict(list)
    viewed_pairs: dict[tuple[str, str], float] = {}
    for e in events:
        if e.kind == "viewed":
            views_by_session[(e.user, e.app, e.session)].append(e.timestamp)
            key = (e.user, e.app)
            viewed_pairs[key] = min(viewed_pairs.get(key, e.timestamp), e.timestamp)
    attributed = []
    delayed = 0
    for e in events:
        if e.kind != "installed":
            continue
        in_session = views_by_session.get((e.user, e.app, e.session), ())
        if any(ts <= e.timestamp for ts in in_session):
            attributed.append(e)
        elif viewed_pairs.get((e.user, e.app), float("inf")) <= e.timestamp:
            delayed += 1
    return attributed, delayed


def funnel(events: Sequence[InteractionEvent], catalog: AppCatalog | None = None,
           direct_use_window: float = DEFAULT_DIRECT_USE_WINDOW_S,
           min_installs: int = DEFAULT_MIN_CATEGORY_INSTALLS) -> FunnelReport:
    """Conversion funnel over sessionized interaction events.

    view -> install requires a prior view of the same (user, app) in the same
    session; install -> direct use requires a `used` event within the window.
    """
    by_kind = Counter(e.kind for e in events)
    installs = [e for e in events if e.kind == "installed"]
    attributed, delayed = _attribute_installs(events)

    used_times: dict[tuple[str, str], list[float]] = defaultdict(list)
    for e in events:
        if e.kind == "used":
            used_times[(e.user, e.app)].append(e.timestamp)
    direct_used = 0
    for e in installs:
        times = used_times.get((e.user, e.app), ())
        if any(e.timestamp < ts <= e.timestamp + direct_use_window for ts in times):
            direct_used += 1

    sessions = len({(e.user, e.session) for e in events if e.session is not None})
    viewed = by_kind.get("viewed", 0)
    installed = by_kind.get("installed", 0)
    report = FunnelReport(
        shown=by_kind.get("shown", 0),
        viewed=viewed,
        installed=installed,
        attributed_installs=len(attributed),
        delayed_installs=delayed,
        direct_used=direct_used,
        uninstalled=by_kind.get("uninstalled", 0),
        sessions=sessions,
        view_to_install=len(attributed) / viewed if viewed else 0.0,
        install_to_direct_use=direct_used / installed if installed else 0.0,
        installs_per_session=installed / sessions if sessions else 0.0,
        views_per_session=viewed / sessions if sessions else 0.0,
    )
    if catalog is not None:
        report.per_category = category_conversion(events, catalog, min_installs)
    return report


def category_conversion(events: Sequence[InteractionEvent], catalog: AppCatalog,
                        min_installs: int = DEFAULT_MIN_CATEGORY_INSTALLS) -> dict[str, CategoryConversion]:
    """Per-category view->install rates; categories below min_installs are omitted."""
    views: Counter = Counter()
    installs: Counter = Counter()
    for e in events:
        if e.kind == "viewed":
            views[catalog.category(e.app)] += 1
    attributed, _ = _attribute_installs(events)
    for e in attributed:
        installs[catalog.category(e.app)] += 1
    out = {}
    for cat in sorted(views | installs):
        if installs.get(cat, 0) < min_installs:
            continue
        v = views.get(cat, 0)
        out[cat] = CategoryConversion(cat, v, installs[cat], installs[cat] / v if v else 0.0)
    return out


# -- uninstall time-to-live -------------------------------------------------------


@dataclass
class UninstallReport:
    ttls: list[float]
    hour_histogram: dict[int, int]
    day_histogram: dict[int, int]
    within_hour: float
    within_day: float
    matched: int
    unmatched_uninstalls: int

    def as_dict(self) -> dict:
        return {"matched": self.matched, "unmatched_uninstalls": self.unmatched_uninstalls,
                "within_hour": self.within_hour, "within_day": self.within_day,
                "hour_histogram": dict(sorted(self.hour_histogram.items())),
                "day_histogram": dict(sorted(self.day_histogram.items()))}


def uninstall_ttl(events: Sequence[InteractionEvent]) -> UninstallReport:
    """Install-to-uninstall lifetimes; uninstalls without a prior install are
    counted separately and excluded from the histograms."""
    installs_by_pair: dict[tuple[str, str], list[float]] = defaultdict(list)
    for e in sorted(events, key=lambda e: e.timestamp):
        if e.kind == "installed":
            installs_by_pair[(e.user, e.app)].append(e.timestamp)
    ttls = []
    unmatched = 0
    for e in sorted(events, key=lambda e: e.timestamp):
        if e.kind != "uninstalled":
            continue
        stack = installs_by_pair.get((e.user, e.app), [])
        prior = [ts for ts in stack if ts <= e.timestamp]
        if not prior:
            unmatched += 1
            continue
        ts = max(prior)
        stack.remove(ts)
        ttls.append(e.timestamp - ts)
    hour_hist: Counter = Counter(int(t // 3600) for t in ttls)
    day_hist: Counter = Counter(int(t // 86400) for t in ttls)
    n = len(ttls)
    return UninstallReport(
        ttls=ttls,
        hour_histogram=dict(hour_hist),
        day_histogram=dict(day_hist),
        within_hour=sum(1 for t in ttls if t <= 3600) / n if n else 0.0,
        within_day=sum(1 for t in ttls if t <= 86400) / n if n else 0.0,
        matched=n,
        unmatched_uninstalls=unmatched,
    )


# -- WTF score ----------------------------------------------------------------------


@dataclass(frozen=True)
class UserProfile:
    user: str
    languages: frozenset[str] = frozenset({"en"})
    tags: frozenset[str] = frozenset()


def _language_mismatch(profile: UserProfile, app) -> bool:
    return app.language != "unknown" and app.language not in profile.languages


def _profile_tag_mismatch(profile: UserProfile, app) -> bool:
    return bool(app.audience_tags) and not (app.audience_tags & profile.tags)


WTF_RULES: dict[str, Callable[[UserProfile, object], bool]] = {
    "language_mismatch": _language_mismatch,
    "profile_tag_mismatch": _profile_tag_mismatch,
}


@dataclass
class WtfReport:
    n: int
    rules: tuple[str, ...]
    per_user: dict[str, int]
    total: int
    mean: float

    def as_dict(self) -> dict:
        return {"n": self.n, "rules": list(self.rules), "per_user": dict(sorted(self.per_user.items())),
                "total": self.total, "mean": self.mean}


def wtf_score(recommendations: Mapping[str, Sequence[str]], profiles: Mapping[str, UserProfile],
              catalog: AppCatalog, rules: Sequence[str] = (), n: int | None = None) -> WtfReport:
    """Count highly irrelevant items in each user's top-N list per the configured rules."""
    predicates = []
    for name in rules:
        if name not in WTF_RULES:
            raise ConfigError(f"unknown WTF rule {name!r} (available: {sorted(WTF_RULES)})")
        predicates.append(WTF_RULES[name])
    per_user = {}
    for user, apps in recommendations.items():
        profile = profiles.get(user, UserProfile(user=user))
        top = list(apps)[:n] if n is not None else list(apps)
        per_user[user] = sum(1 for a in top if any(p(profile, catalog.get(a)) for p in predicates))
    total = sum(per_user.values())
    return WtfReport(n=n if n is not None else 0, rules=tuple(rules), per_user=per_user,
                     total=total, mean=total / len(per_user) if per_user else 0.0)


# -- location share -------------------------------------------------------------------


@dataclass
class LocationShare:
    counts: dict[str, int]
    fractions: dict[str, float]

    def as_dict(self) -> dict:
        return {"counts": self.counts, "fractions": self.fractions}


def location_share(events: Sequence[InteractionEvent]) -> LocationShare:
    """Fraction of events at home / work / other; zero report on empty input."""
    counts = Counter(e.context.get("location") for e in events)
    full = {loc: counts.get(loc, 0) for loc in ("home", "work", "other")}
    total = sum(full.values())
    fractions = {loc: (c / total if total else 0.0) for loc, c in full.items()}
    return LocationShare(counts=full, fractions=fractions)
