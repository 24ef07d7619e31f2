"""Implicit-feedback context-aware factorization recommender and baselines.

Scoring form: s(u, i, c) = b_i + <U_u, V_i> + sum_j <V_i, W_j[c_j]> over the
modeled context dimensions j. Training runs per-sample SGD on a pairwise
logistic ranking loss over (positive, sampled-negative) app pairs, with
positives weighted by log-count confidence.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .domain import (
    DEFAULT_MODEL_DIMENSIONS,
    DIMENSIONS,
    ContextVector,
    DataError,
)
from .ingest import UsageCube

MAGIC = b"CARSMDL1"
FORMAT_VERSION = 1
INIT_SCALE = 0.01
DEFAULT_TOP_N = 21


class ColdStartError(DataError):
    """User or app unknown to the model (distinct from context validation)."""


class ModelFormatError(DataError):
    """Model file rejected: bad magic, unsupported version, or truncation."""


class TrainingDivergedError(Exception):
    """Loss became non-finite during training (learning rate too high)."""

    def __init__(self, epoch: int):
        self.epoch = epoch
        super().__init__(f"non-finite loss at epoch {epoch}; reduce the learning rate")


@dataclass(frozen=True)
class ModelConfig:
    """Hyperparameters for the factorization recommender."""

    latent_dim: int = 16
    learning_rate: float = 0.05
    regularization: float = 0.01
    epochs: int = 30
    negatives_per_positive: int = 4
    confidence_alpha: float = 1.0
    context_dims: tuple[str, ...] = DEFAULT_MODEL_DIMENSIONS
    seed: int = 0
    negative_sampling: str = "uniform"  # "uniform" | "frequency"

    def validate(self) -> None:
        if self.latent_dim < 1:
            raise DataError("latent_dim must be >= 1")
        if self.learning_rate <= 0:
            raise DataError("learning_rate must be positive")
        if self.regularization < 0:
            raise DataError("regularization must be non-negative")
        if self.epochs < 0 or self.negatives_per_positive < 1:
            raise DataError("epochs >= 0 and negatives_per_positive >= 1 required")
        unknown = [d for d in self.context_dims if d not in DIMENSIONS]
        if unknown:
            raise DataError(f"unknown context dimensions {unknown}")
        if self.negative_sampling not in ("uniform", "frequency"):
            raise DataError(f"unknown negative_sampling {self.negative_sampling!r}")

    def with_context_dims(self, dims: Sequence[str]) -> "ModelConfig":
        data = asdict(self)
        data["context_dims"] = tuple(dims)
        return ModelConfig(**data)


@dataclass(frozen=True)
class ScoredApp:
    app: str
    score: float
    rank: int


@dataclass(frozen=True)
class Recommendations:
    items: tuple[ScoredApp, ...]
    cold_start: bool = False


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    return np.exp(np.minimum(x, 0.0)) / (1.0 + np.exp(-np.abs(x)))


def _log_sigmoid(x: np.ndarray) -> np.ndarray:
    return np.minimum(x, 0.0) - np.log1p(np.exp(-np.abs(x)))


def pairwise_loss(x, weight):
    """Weighted logistic ranking loss -w * log(sigmoid(x)) of score differences x."""
    return -np.asarray(weight) * _log_sigmoid(np.asarray(x, dtype=float))


def triple_loss(U, V, Wall, b, u, p, n, ctx_rows, weight) -> float:
    """Pairwise loss of one (user, positive, negative) triple.

    ctx_rows are row indices into the stacked context-factor matrix Wall.
    """
    prof = U[u] + (Wall[list(ctx_rows)].sum(axis=0) if len(ctx_rows) else 0.0)
    x = b[p] - b[n] + prof @ (V[p] - V[n])
    return float(pairwise_loss(x, weight))


def triple_grads(U, V, Wall, b, u, p, n, ctx_rows, weight) -> dict:
    """Analytic gradients of triple_loss for every touched parameter block."""
    ctx_rows = list(ctx_rows)
    ctxsum = Wall[ctx_rows].sum(axis=0) if ctx_rows else np.zeros(U.shape[1])
    prof = U[u] + ctxsum
    diff = V[p] - V[n]
    x = b[p] - b[n] + prof @ diff
    g = float(weight * _stable_sigmoid(np.asarray(-x)))  # -dL/dx
    return {
        "b_p": -g,
        "b_n": g,
        "U_u": -g * diff,
        "V_p": -g * prof,
        "V_n": g * prof,
        "W_rows": {r: -g * diff for r in ctx_rows},
    }


# -- SGD kernel ---------------------------------------------------------------


def _sgd_steps(U, V, b, Wall, pos_u, pos_a, pctx, weights, order, neg, eta, lam):
    """Sequential SGD over (positive, negative) rows; returns (loss_sum, steps).

    pctx holds absolute row indices into Wall (one column per modeled
    dimension); neg entries < 0 mark rows with no sampleable negative.
    """
    d = U.shape[1]
    n_dims = pctx.shape[1]
    prof = np.empty(d)
    diff = np.empty(d)
    total = 0.0
    steps = 0
    for t in range(order.shape[0]):
        i = order[t]
        nn = neg[t]
        if nn < 0:
            continue
        u = pos_u[i]
        p = pos_a[i]
        w = weights[i]
        x = b[p] - b[nn]
        for k in range(d):
            ctxsum = 0.0
            for j in range(n_dims):
                ctxsum += Wall[pctx[i, j], k]
            prof[k] = U[u, k] + ctxsum
            diff[k] = V[p, k] - V[nn, k]
            x += prof[k] * diff[k]
        if x >= 0.0:
            e = math.exp(-x)
            sig_neg = e / (1.0 + e)
            loss = w * math.log1p(e)
        else:
            e = math.exp(x)
            sig_neg = 1.0 / (1.0 + e)
            loss = w * (math.log1p(e) - x)
        g = w * sig_neg
        total += loss
        steps += 1
        b[p] += eta * (g - lam * b[p])
        b[nn] += eta * (-g - lam * b[nn])
        for k in range(d):
            u_old = U[u, k]
            U[u, k] += eta * (g * diff[k] - lam * u_old)
            V[p, k] += eta * (g * prof[k] - lam * V[p, k])
            V[nn, k] += eta * (-g * prof[k] - lam * V[nn, k])
            for j in range(n_dims):
                r = pctx[i, j]
                Wall[r, k] += eta * (g * diff[k] - lam * Wall[r, k])
    return total, steps


_KERNEL = None


def _get_kernel():
    """JIT-compiled SGD kernel when numba is available, else the pure-Python loop."""
    global _KERNEL
    if _KERNEL is None:
        try:
            from numba import njit

            _KERNEL = njit(cache=True, fastmath=False)(_sgd_steps)
        except Exception:
            _KERNEL = _sgd_steps
    return _KERNEL


class ContextPopularity:
    """Usage counts per app, globally and per modeled-context cell.

    Backs the popularity/context-popularity baselines and the cold-start
    fallback inside FactorModel.recommend.
    """

    def __init__(self, apps: Sequence[str], context_dims: Sequence[str],
                 global_counts: Mapping[str, int], cells: Mapping[tuple, Mapping[str, int]]):
        self.apps = list(apps)
        self.context_dims = tuple(context_dims)
        self.global_counts = {a: int(global_counts.get(a, 0)) for a in self.apps}
        self.cells = {tuple(k): dict(v) for k, v in cells.items()}

    @classmethod
    def from_cube(cls, cube: UsageCube, context_dims: Sequence[str]) -> "ContextPopularity":
        cells: dict[tuple, dict[str, int]] = {}
        glob: dict[str, int] = {}
        for t in cube.tuples():
            key = t.context.project(context_dims)
            cell = cells.setdefault(key, {})
            cell[t.app] = cell.get(t.app, 0) + t.count
            glob[t.app] = glob.get(t.app, 0) + t.count
        return cls(cube.apps(), context_dims, glob, cells)

    def cell_counts(self, context: ContextVector) -> Mapping[str, int]:
        return self.cells.get(context.project(self.context_dims), {})

    def rank(self, context: ContextVector | None, candidates: Sequence[str]) -> list[tuple[str, float]]:
        """Candidates ordered by in-context count, then global count, then app id."""
        cell = self.cell_counts(context) if context is not None else self.global_counts
        ordered = sorted(candidates,
                         key=lambda a: (-cell.get(a, 0), -self.global_counts.get(a, 0), a))
        return [(a, float(cell.get(a, 0))) for a in ordered]


def _ranked_items(pairs: Sequence[tuple[str, float]], n: int) -> tuple[ScoredApp, ...]:
    return tuple(ScoredApp(app=a, score=s, rank=r + 1) for r, (a, s) in enumerate(pairs[:n]))


class FactorModel:
    """Trained latent factors plus id maps; immutable and safe to score concurrently."""

    def __init__(self, users: Sequence[str], apps: Sequence[str], config: ModelConfig,
                 dim_values: Mapping[str, Sequence[str]], U: np.ndarray, V: np.ndarray,
                 W: Mapping[str, np.ndarray], b: np.ndarray,
                 seen: Mapping[str, frozenset], context_pop: ContextPopularity,
                 loss_trace: Sequence[float] = ()):
        self.users = list(users)
        self.apps = list(apps)
        self.config = config
        self.dim_values = {d: list(v) for d, v in dim_values.items()}
        self.U = U
        self.V = V
        self.W = dict(W)
        self.b = b
        self.seen = {u: frozenset(s) for u, s in seen.items()}
        self.context_pop = context_pop
        self.loss_trace = list(loss_trace)
        self.user_index = {u: i for i, u in enumerate(self.users)}
        self.app_index = {a: i for i, a in enumerate(self.apps)}
        self.value_index = {d: {v: i for i, v in enumerate(vals)} for d, vals in self.dim_values.items()}

    # -- scoring ---------------------------------------------------------

    def _context_profile(self, context: ContextVector) -> np.ndarray:
        """Sum of context-value factor rows for the modeled dimensions."""
        q = np.zeros(self.config.latent_dim)
        for dim in self.config.context_dims:
            idx = self.value_index[dim].get(context.get(dim))
            if idx is not None:
                q += self.W[dim][idx]
        return q

    def known_user(self, user: str) -> bool:
        return user in self.user_index

    def score(self, user: str, app: str, context: ContextVector) -> float:
        if user not in self.user_index:
            raise ColdStartError(f"unknown user {user!r}")
        if app not in self.app_index:
            raise ColdStartError(f"unknown app {app!r}")
        u = self.user_index[user]
        i = self.app_index[app]
        q = self.U[u] + self._context_profile(context)
        return float(self.b[i] + self.V[i] @ q)

    def score_candidates(self, user: str, context: ContextVector,
                         candidates: Sequence[str]) -> np.ndarray:
        """Scores for candidate apps; apps unknown to the model score -inf."""
        if user not in self.user_index:
            raise ColdStartError(f"unknown user {user!r}")
        q = self.U[self.user_index[user]] + self._context_profile(context)
        scores = np.full(len(candidates), -np.inf)
        for k, app in enumerate(candidates):
            i = self.app_index.get(app)
            if i is not None:
                scores[k] = self.b[i] + self.V[i] @ q
        return scores

    def rank_candidates(self, user: str, context: ContextVector,
                        candidates: Sequence[str]) -> list[tuple[str, float]]:
        scores = self.score_candidates(user, context, candidates)
        order = sorted(range(len(candidates)), key=lambda k: (-scores[k], candidates[k]))
        return [(candidates[k], float(scores[k])) for k in order]

    def recommend(self, user: str, context: ContextVector, n: int = DEFAULT_TOP_N,
                  exclude_installed: bool = True,
                  installed: Iterable[str] | None = None) -> Recommendations:
        """Top-n apps for a user in a context; cold-start users get the
        context-popularity fallback (never an empty list)."""
        if n < 1:
            raise DataError("n must be >= 1")
        excluded = set(installed or ()) if exclude_installed else set()
        if exclude_installed and user in self.seen:
            excluded |= self.seen[user]
        if not self.known_user(user):
            candidates = [a for a in self.apps if a not in excluded]
            return Recommendations(items=_ranked_items(self.context_pop.rank(context, candidates), n),
                                   cold_start=True)
        candidates = [a for a in self.apps if a not in excluded]
        return Recommendations(items=_ranked_items(self.rank_candidates(user, context, candidates), n),
                               cold_start=False)

    # -- persistence ------------------------------------------------------

    def version(self) -> str:
        """Deterministic content hash of the serialized model."""
        return hashlib.sha256(self.to_bytes()).hexdigest()[:12]

    def to_bytes(self) -> bytes:
        header = {
            "users": self.users,
            "apps": self.apps,
            "config": {**asdict(self.config), "context_dims": list(self.config.context_dims)},
            "dim_values": self.dim_values,
            "seen": {u: sorted(s) for u, s in self.seen.items()},
            "loss_trace": self.loss_trace,
            "context_pop": {
                "context_dims": list(self.context_pop.context_dims),
                "global": self.context_pop.global_counts,
                "cells": [[list(k), v] for k, v in sorted(self.context_pop.cells.items())],
            },
            "matrices": ["U", "V", "b"] + [f"W:{d}" for d in self.config.context_dims],
        }
        blob = json.dumps(header, sort_keys=True).encode("utf-8")
        parts = [MAGIC, struct.pack("<I", FORMAT_VERSION), struct.pack("<Q", len(blob)), blob]
        for m in (self.U, self.V, self.b):
            parts.append(np.ascontiguousarray(m, dtype="<f8").tobytes())
        for dim in self.config.context_dims:
            parts.append(np.ascontiguousarray(self.W[dim], dtype="<f8").tobytes())
        return b"".join(parts)


def save(model: FactorModel, path: str | Path) -> None:
    Path(path).write_bytes(model.to_bytes())


def load(path: str | Path) -> FactorModel:
    return from_bytes(Path(path).read_bytes())


def from_bytes(data: bytes) -> FactorModel:
    if len(data) < len(MAGIC) + 12 or data[: len(MAGIC)] != MAGIC:
        raise ModelFormatError("not a recommender model file (bad magic)")
    off = len(MAGIC)
    (version,) = struct.unpack_from("<I", data, off)
    off += 4
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format version {version} (supported: {FORMAT_VERSION})")
    (hlen,) = struct.unpack_from("<Q", data, off)
    off += 8
    if off + hlen > len(data):
        raise ModelFormatError("truncated model file (header)")
    try:
        header = json.loads(data[off:off + hlen].decode("utf-8"))
    except ValueError as exc:
        raise ModelFormatError(f"corrupt model header: {exc}")
    off += hlen

    try:
        cfg_data = header["config"]
        cfg_data["context_dims"] = tuple(cfg_data["context_dims"])
        config = ModelConfig(**cfg_data)
        users, apps = header["users"], header["apps"]
    except (KeyError, TypeError) as exc:
        raise ModelFormatError(f"model header missing required fields: {exc}")
    d = config.latent_dim

    def read_matrix(rows: int, cols: int) -> np.ndarray:
        nonlocal off
        nbytes = rows * cols * 8
        if off + nbytes > len(data):
            raise ModelFormatError("truncated model file (matrices)")
        m = np.frombuffer(data[off:off + nbytes], dtype="<f8").reshape(rows, cols).copy()
        off += nbytes
        return m

    U = read_matrix(len(users), d)
    V = read_matrix(len(apps), d)
    b = read_matrix(1, len(apps)).reshape(-1)
    dim_values = header["dim_values"]
    W = {dim: read_matrix(len(dim_values[dim]), d) for dim in config.context_dims}
    cp = header["context_pop"]
    context_pop = ContextPopularity(apps, cp["context_dims"], cp["global"],
                                    {tuple(k): v for k, v in cp["cells"]})
    return FactorModel(users, apps, config, dim_values, U, V, W, b,
                       {u: frozenset(s) for u, s in header["seen"].items()},
                       context_pop, header.get("loss_trace", []))


# -- training -----------------------------------------------------------------


def _model_dim_values(cube: UsageCube, context_dims: Sequence[str]) -> dict[str, list[str]]:
    values = {}
    for dim in context_dims:
        spec = DIMENSIONS[dim]
        values[dim] = cube.observed_values(dim) if spec.open_vocabulary else list(spec.values)
    return values


def _init_model(cube: UsageCube, cfg: ModelConfig) -> FactorModel:
    rng = np.random.default_rng(cfg.seed)
    users, apps = cube.users(), cube.apps()
    dim_values = _model_dim_values(cube, cfg.context_dims)
    d = cfg.latent_dim
    U = rng.uniform(-INIT_SCALE, INIT_SCALE, size=(len(users), d))
    V = rng.uniform(-INIT_SCALE, INIT_SCALE, size=(len(apps), d))
    W = {dim: rng.uniform(-INIT_SCALE, INIT_SCALE, size=(len(dim_values[dim]), d))
         for dim in cfg.context_dims}
    b = np.zeros(len(apps))
    seen = {u: frozenset(cube.user_apps(u)) for u in users}
    context_pop = ContextPopularity.from_cube(cube, cfg.context_dims)
    return FactorModel(users, apps, cfg, dim_values, U, V, W, b, seen, context_pop)


def _stack_context_factors(model: FactorModel) -> tuple[np.ndarray, dict[str, int]]:
    """Stack per-dimension W matrices into one row-indexed matrix."""
    dims = model.config.context_dims
    offsets = {}
    rows = 0
    for dim in dims:
        offsets[dim] = rows
        rows += len(model.dim_values[dim])
    Wall = np.zeros((max(rows, 1), model.config.latent_dim))
    for dim in dims:
        o = offsets[dim]
        Wall[o:o + len(model.dim_values[dim])] = model.W[dim]
    return Wall, offsets


def _draw_negatives(rng: np.random.Generator, rows: np.ndarray, pg: np.ndarray,
                    group_sets: list[set[int]], observed: np.ndarray | None,
                    sampleable: np.ndarray, n_apps: int,
                    freq: np.ndarray | None) -> np.ndarray:
    """One negative app per step row, rejecting apps observed for the row's
    (user, context) group; -1 where the group covers the whole catalog."""
    def draw(size: int) -> np.ndarray:
        if freq is None:
            return rng.integers(0, n_apps, size=size)
        return rng.choice(n_apps, size=size, p=freq)

    neg = draw(len(rows))
    groups = pg[rows]
    neg[~sampleable[groups]] = -1
    live = neg >= 0

    def find_bad() -> np.ndarray:
        if observed is not None:
            return np.flatnonzero(live & observed[groups, np.maximum(neg, 0)])
        return np.asarray([k for k in np.flatnonzero(live)
                           if int(neg[k]) in group_sets[groups[k]]], dtype=np.int64)

    for _ in range(200):
        bad = find_bad()
        if len(bad) == 0:
            break
        neg[bad] = draw(len(bad))
    else:
        neg[find_bad()] = -1  # give up on pathological rows rather than train on observed apps
    return neg


def train(cube: UsageCube, cfg: ModelConfig = ModelConfig()) -> FactorModel:
    """Fit the factorization model on a usage cube; deterministic given cfg.seed."""
    cfg.validate()
    if len(cube) == 0:
        raise DataError("cannot train on an empty cube")
    model = _init_model(cube, cfg)
    if cfg.epochs == 0:
        return model
    # training RNG is separate from the init draw so epochs=0 stays comparable
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))

    n_apps = len(model.apps)
    n_dims = len(cfg.context_dims)
    Wall, offsets = _stack_context_factors(model)

    # negative-sampling groups key on the context as the model sees it (the
    # modeled-dimension projection); the full 11-dim context would make
    # "unobserved in this context" true for nearly every app
    groups: dict[tuple[int, tuple[str, ...]], int] = {}
    group_sets: list[set[int]] = []
    pu, pa, pg, pw, pctx_rows = [], [], [], [], []
    for t in cube.tuples():
        u = model.user_index[t.user]
        a = model.app_index[t.app]
        gkey = (u, t.context.project(cfg.context_dims))
        if gkey not in groups:
            groups[gkey] = len(group_sets)
            group_sets.append(set())
        g = groups[gkey]
        group_sets[g].add(a)
        pu.append(u)
        pa.append(a)
        pg.append(g)
        pw.append(1.0 + cfg.confidence_alpha * math.log1p(t.count))
        pctx_rows.append([offsets[dim] + model.value_index[dim].get(t.context.get(dim), 0)
                          for dim in cfg.context_dims])
    pu = np.asarray(pu, dtype=np.int64)
    pa = np.asarray(pa, dtype=np.int64)
    pg = np.asarray(pg, dtype=np.int64)
    pw = np.asarray(pw, dtype=np.float64)
    pctx = np.asarray(pctx_rows, dtype=np.int64).reshape(len(pu), n_dims)
    sampleable = np.asarray([len(s) < n_apps for s in group_sets], dtype=bool)

    # dense observed mask speeds rejection sampling; fall back to sets when huge
    observed = None
    if len(group_sets) * n_apps <= 50_000_000:
        observed = np.zeros((len(group_sets), n_apps), dtype=bool)
        for g, s in enumerate(group_sets):
            observed[g, list(s)] = True

    freq = None
    if cfg.negative_sampling == "frequency":
        counts = np.asarray([cube.app_total(a) for a in model.apps], dtype=np.float64)
        freq = counts / counts.sum()

    kernel = _get_kernel()
    loss_trace = []
    # tail averaging of epoch-end iterates cancels the stationary SGD noise
    # while preserving consistent (planted) directions
    tail = max(1, cfg.epochs // 3)
    avg_U = avg_V = avg_b = avg_W = None
    for epoch in range(cfg.epochs):
        order = np.repeat(rng.permutation(len(pu)), cfg.negatives_per_positive)
        neg = _draw_negatives(rng, order, pg, group_sets, observed, sampleable, n_apps, freq)
        loss_sum, steps = kernel(model.U, model.V, model.b, Wall, pu, pa, pctx, pw,
                                 order, neg, cfg.learning_rate, cfg.regularization)
        mean_loss = loss_sum / max(steps, 1)
        if not np.isfinite(mean_loss):
            raise TrainingDivergedError(epoch)
        loss_trace.append(mean_loss)
        if epoch >= cfg.epochs - tail:
            if avg_U is None:
                avg_U, avg_V = model.U.copy(), model.V.copy()
                avg_b, avg_W = model.b.copy(), Wall.copy()
            else:
                avg_U += model.U
                avg_V += model.V
                avg_b += model.b
                avg_W += Wall

    if avg_U is not None:
        model.U = avg_U / tail
        model.V = avg_V / tail
        model.b = avg_b / tail
        Wall = avg_W / tail
    for dim in cfg.context_dims:
        o = offsets[dim]
        model.W[dim] = Wall[o:o + len(model.dim_values[dim])].copy()
    model.loss_trace = loss_trace
    return model


def mf_nocontext(cube: UsageCube, cfg: ModelConfig = ModelConfig()) -> FactorModel:
    """Ablation baseline: the same trainer with no context dimensions."""
    return train(cube, cfg.with_context_dims(()))


# -- count-based baselines -----------------------------------------------------


class PopularityScorer:
    """Ranks every request by global usage count."""

    def __init__(self, pop: ContextPopularity):
        self.pop = pop
        self.apps = list(pop.apps)

    @classmethod
    def from_cube(cls, cube: UsageCube) -> "PopularityScorer":
        return cls(ContextPopularity.from_cube(cube, ()))

    def known_user(self, user: str) -> bool:
        return True

    def score(self, user: str, app: str, context: ContextVector) -> float:
        return float(self.pop.global_counts.get(app, 0))

    def rank_candidates(self, user, context, candidates) -> list[tuple[str, float]]:
        return [(a, float(self.pop.global_counts.get(a, 0)))
                for a, _ in self.pop.rank(None, candidates)]

    def recommend(self, user, context, n=DEFAULT_TOP_N, exclude_installed=True,
                  installed=None) -> Recommendations:
        candidates = [a for a in self.apps if not (exclude_installed and a in set(installed or ()))]
        return Recommendations(items=_ranked_items(self.rank_candidates(user, context, candidates), n))


class ContextPopularityScorer:
    """Ranks by usage count restricted to tuples matching the request context
    on the modeled dimensions; global count breaks ties."""

    def __init__(self, pop: ContextPopularity):
        self.pop = pop
        self.apps = list(pop.apps)

    @classmethod
    def from_cube(cls, cube: UsageCube,
                  context_dims: Sequence[str] = DEFAULT_MODEL_DIMENSIONS) -> "ContextPopularityScorer":
        return cls(ContextPopularity.from_cube(cube, context_dims))

    def known_user(self, user: str) -> bool:
        return True

    def score(self, user: str, app: str, context: ContextVector) -> float:
        return float(self.pop.cell_counts(context).get(app, 0))

    def rank_candidates(self, user, context, candidates) -> list[tuple[str, float]]:
        return self.pop.rank(context, candidates)

    def recommend(self, user, context, n=DEFAULT_TOP_N, exclude_installed=True,
                  installed=None) -> Recommendations:
        candidates = [a for a in self.apps if not (exclude_installed and a in set(installed or ()))]
        return Recommendations(items=_ranked_items(self.rank_candidates(user, context, candidates), n))


def popularity(cube: UsageCube) -> PopularityScorer:
    return PopularityScorer.from_cube(cube)


def context_popularity(cube: UsageCube,
                       context_dims: Sequence[str] = DEFAULT_MODEL_DIMENSIONS) -> ContextPopularityScorer:
    return ContextPopularityScorer.from_cube(cube, context_dims)
