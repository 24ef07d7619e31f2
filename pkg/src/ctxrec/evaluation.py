"""Offline ranking evaluation: splits, AP/MAP/precision/recall at k, model comparison."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .domain import ContextVector, DataError, UsageTuple
from .ingest import UsageCube

DEFAULT_KS = (3, 10, 21)


@dataclass(frozen=True)
class SplitSpec:
    strategy: str = "per-user-random"  # or "temporal"
    test_fraction: float = 0.2
    seed: int = 0

    def validate(self) -> None:
        if not 0 < self.test_fraction < 1:
            raise DataError("test_fraction must be in (0, 1)")
        if self.strategy not in ("per-user-random", "temporal"):
            raise DataError(f"unknown split strategy {self.strategy!r}")


def split(cube: UsageCube, spec: SplitSpec) -> tuple[UsageCube, list[UsageTuple]]:
    """Partition a cube into a training cube and held-out test tuples.

    Users with a single tuple go wholly to train, so every test user appears
    in training; counts are conserved and membership is seed-deterministic.
    """
    spec.validate()
    if len(cube) == 0:
        raise DataError("cannot split an empty cube")
    rng = np.random.default_rng(spec.seed)
    by_user: dict[str, list[UsageTuple]] = defaultdict(list)
    for t in cube.tuples():
        by_user[t.user].append(t)

    train_tuples: list[UsageTuple] = []
    test_tuples: list[UsageTuple] = []
    for user in sorted(by_user):
        tuples = sorted(by_user[user], key=lambda t: (t.app, t.context.values))
        if len(tuples) < 2:
            train_tuples.extend(tuples)
            continue
        n_test = min(max(1, round(len(tuples) * spec.test_fraction)), len(tuples) - 1)
        if spec.strategy == "per-user-random":
            order = rng.permutation(len(tuples))
            test_idx = set(order[:n_test].tolist())
        else:
            times = []
            for t in tuples:
                ts = cube.tuple_times.get((t.user, t.app, t.context))
                if ts is None:
                    raise DataError("temporal split requires a cube built from timestamped events")
                times.append(ts)
            order = sorted(range(len(tuples)), key=lambda i: (times[i], tuples[i].app))
            test_idx = set(order[-n_test:])
        for i, t in enumerate(tuples):
            (test_tuples if i in test_idx else train_tuples).append(t)

    times = None
    if cube.tuple_times:
        train_keys = {(t.user, t.app, t.context) for t in train_tuples}
        times = {k: v for k, v in cube.tuple_times.items() if k in train_keys}
    train_cube = UsageCube(train_tuples, catalog=cube.catalog, tuple_times=times)
    return train_cube, test_tuples


def average_precision(ranked: Sequence[str], relevant: set[str], k: int) -> float:
    """AP@k = sum of precision@r over relevant hits at ranks r <= k, / min(|relevant|, k)."""
    if k < 1:
        raise DataError("k must be >= 1")
    if not relevant:
        raise DataError("average precision undefined for an empty relevant set")
    hits = 0
    score = 0.0
    for r, app in enumerate(ranked[:k], start=1):
        if app in relevant:
            hits += 1
            score += hits / r
    return score / min(len(relevant), k)


def precision_at_k(ranked: Sequence[str], relevant: set[str], k: int) -> float:
    return sum(1 for a in ranked[:k] if a in relevant) / k


def recall_at_k(ranked: Sequence[str], relevant: set[str], k: int) -> float:
    if not relevant:
        raise DataError("recall undefined for an empty relevant set")
    return sum(1 for a in ranked[:k] if a in relevant) / len(relevant)


@dataclass
class QueryMetrics:
    evaluated: int
    skipped: int
    ap: float
    precision: float
    recall: float


def _rank(scorer, user: str, context: ContextVector, candidates: Sequence[str]) -> list[str]:
    return [a for a, _ in scorer.rank_candidates(user, context, candidates)]


def evaluate_queries(scorer, train_cube: UsageCube, test_tuples: Sequence[UsageTuple],
                     k: int, catalog_apps: Sequence[str] | None = None) -> QueryMetrics:
    """Mean AP/precision/recall at k over (user, context) holdout queries.

    Candidates are the full catalog minus each user's training apps; queries
    whose relevant set is empty after that exclusion are skipped and counted.
    Accumulation is order-independent (sorted queries, exact summation).
    """
    if catalog_apps is None:
        apps = set(train_cube.apps()) | {t.app for t in test_tuples}
        catalog_apps = sorted(apps)
    by_query: dict[tuple[str, ContextVector], set[str]] = defaultdict(set)
    for t in test_tuples:
        by_query[(t.user, t.context)].add(t.app)

    aps, precs, recs = [], [], []
    skipped = 0
    for (user, context) in sorted(by_query, key=lambda q: (q[0], q[1].values)):
        train_apps = train_cube.user_apps(user)
        candidates = [a for a in catalog_apps if a not in train_apps]
        relevant = by_query[(user, context)] - train_apps
        if not relevant or not candidates:
            skipped += 1
            continue
        ranked = _rank(scorer, user, context, candidates)
        aps.append(average_precision(ranked, relevant, k))
        precs.append(precision_at_k(ranked, relevant, k))
        recs.append(recall_at_k(ranked, relevant, k))
    n = len(aps)
    if n == 0:
        raise DataError("no evaluable queries (all users cold or fully held out)")
    return QueryMetrics(evaluated=n, skipped=skipped, ap=math.fsum(aps) / n,
                        precision=math.fsum(precs) / n, recall=math.fsum(recs) / n)


def map_at_k(scorer, train_cube: UsageCube, test_tuples: Sequence[UsageTuple], k: int,
             catalog_apps: Sequence[str] | None = None) -> float:
    return evaluate_queries(scorer, train_cube, test_tuples, k, catalog_apps).ap


@dataclass
class EvalRow:
    seed: int
    model: str
    metrics: dict[int, QueryMetrics]  # k -> metrics


@dataclass
class EvalReport:
    ks: tuple[int, ...]
    models: tuple[str, ...]
    rows: list[EvalRow] = field(default_factory=list)

    def mean(self, model: str, k: int, metric: str = "ap") -> float:
        vals = [getattr(r.metrics[k], metric) for r in self.rows if r.model == model]
        if not vals:
            raise DataError(f"no rows for model {model!r}")
        return math.fsum(vals) / len(vals)

    def lift(self, baseline: str, k: int, metric: str = "ap") -> float:
        """Relative lift of the primary (first) model over a baseline."""
        primary = self.mean(self.models[0], k, metric)
        base = self.mean(baseline, k, metric)
        if base == 0:
            return math.inf if primary > 0 else 0.0
        return (primary - base) / base

    def as_dict(self) -> dict:
        return {
            "ks": list(self.ks),
            "models": list(self.models),
            "rows": [{"seed": r.seed, "model": r.model,
                      "metrics": {k: {"map": m.ap, "precision": m.precision, "recall": m.recall,
                                      "evaluated": m.evaluated, "skipped": m.skipped}
                                  for k, m in r.metrics.items()}}
                     for r in self.rows],
            "means": {m: {k: self.mean(m, k) for k in self.ks} for m in self.models},
            "lifts": {b: {k: self.lift(b, k) for k in self.ks} for b in self.models[1:]},
        }


def compare(models: Mapping[str, Callable[[UsageCube], object]], cube: UsageCube,
            spec: SplitSpec, ks: Sequence[int] = DEFAULT_KS,
            seeds: Sequence[int] | None = None) -> EvalReport:
    """Train every model factory on identical splits and evaluate at each k.

    The first mapping entry is the primary model for lift reporting; seeds
    default to the split spec's single seed.
    """
    names = tuple(models)
    if not names:
        raise DataError("no models to compare")
    report = EvalReport(ks=tuple(ks), models=names)
    for seed in (seeds if seeds is not None else [spec.seed]):
        train_cube, test_tuples = split(cube, SplitSpec(spec.strategy, spec.test_fraction, seed))
        catalog_apps = sorted(set(cube.apps()))
        for name in names:
            scorer = models[name](train_cube)
            metrics = {k: evaluate_queries(scorer, train_cube, test_tuples, k, catalog_apps)
                       for k in ks}
            report.rows.append(EvalRow(seed=seed, model=name, metrics=metrics))
    return report
