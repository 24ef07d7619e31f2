"""HTTP service: top-N recommendations with explanations, feedback log, analytics."""

from __future__ import annotations

import json
import struct
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from fastapi import FastAPI, HTTPException, Query
from fastapi.responses import HTMLResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from . import analytics, explain, model as model_mod
from .domain import (
    AppCatalog,
    DEFAULT_CONTEXT,
    DIMENSIONS,
    FEEDBACK_KINDS,
    ContextVector,
    DataError,
    InteractionEvent,
    validate_assignments,
)
from .ingest import UsageCube, parse_app_catalog, parse_tuples, sessionize

MAX_REQUEST_N = 50
EVENT_LOG_FSYNC_EVERY = 32


@dataclass
class ServerConfig:
    model_path: str | None = None
    data_path: str | None = None  # canonical tuples backing explanations/analytics
    apps_path: str | None = None  # app metadata (names, categories, languages)
    event_log_path: str = "events.log"
    baseline_model_path: str | None = None
    fallback: bool = True
    default_n: int = 21
    log_shown: bool = True
    wtf_rules: tuple[str, ...] = ()
    df_convention: str = "paper"
    ui_dir: str | None = None


class EventLog:
    """Append-only length-prefixed JSON record log; single writer, fsync batched."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._fh = open(self.path, "ab")
        self._pending = 0

    def append(self, record: Mapping) -> None:
        self.append_many((record,))

    def append_many(self, records) -> None:
        chunks = []
        for record in records:
            payload = json.dumps(record, sort_keys=True).encode("utf-8")
            chunks.append(struct.pack("<I", len(payload)) + payload)
        self._write_chunks(chunks)

    def append_shown(self, user: str, apps, timestamp: float, context) -> None:
        """Batch-log one shown record per served item; single serialization pass."""
        ctx_json = json.dumps(context.as_dict(), sort_keys=True, separators=(",", ":"))
        user_json = json.dumps(user)
        chunks = []
        for app in apps:
            # keys in sorted order, matching json.dumps(sort_keys=True) output
            payload = (f'{{"app":{json.dumps(app)},"context":{ctx_json},"kind":"shown",'
                       f'"session":null,"timestamp":{timestamp!r},"user":{user_json}}}').encode("utf-8")
            chunks.append(struct.pack("<I", len(payload)) + payload)
        self._write_chunks(chunks)

    def _write_chunks(self, chunks) -> None:
        if not chunks:
            return
        with self._lock:
            self._fh.write(b"".join(chunks))
            self._fh.flush()
            self._pending += len(chunks)
            if self._pending >= EVENT_LOG_FSYNC_EVERY:
                import os

                os.fsync(self._fh.fileno())
                self._pending = 0

    def flush(self) -> None:
        with self._lock:
            self._fh.flush()
            import os

            os.fsync(self._fh.fileno())
            self._pending = 0

    def close(self) -> None:
        with self._lock:
            self._fh.close()

    def read_events(self) -> list[InteractionEvent]:
        """Replay the log; a trailing partial record (crash artifact) is ignored."""
        self.flush()
        events = []
        data = self.path.read_bytes()
        off = 0
        while off + 4 <= len(data):
            (n,) = struct.unpack_from("<I", data, off)
            if off + 4 + n > len(data):
                break
            rec = json.loads(data[off + 4:off + 4 + n])
            off += 4 + n
            try:
                events.append(InteractionEvent(
                    user=rec["user"], app=rec["app"], kind=rec["kind"],
                    timestamp=float(rec["timestamp"]),
                    context=ContextVector.from_mapping(rec["context"]),
                    session=rec.get("session")))
            except DataError:
                continue  # tolerate foreign records rather than poisoning analytics
        return events


@dataclass
class ModelSnapshot:
    model: model_mod.FactorModel
    version: str


@dataclass
class ServerCore:
    """Shared state: swap-on-reload model snapshot, cube, event log."""

    config: ServerConfig
    snapshot: ModelSnapshot | None = None
    baseline: ModelSnapshot | None = None
    cube: UsageCube | None = None
    catalog: AppCatalog | None = None
    log: EventLog | None = None
    installed: dict[str, set[str]] = field(default_factory=dict)
    _install_lock: threading.Lock = field(default_factory=threading.Lock)

    def note_feedback(self, user: str, app: str, kind: str) -> None:
        with self._install_lock:
            apps = self.installed.setdefault(user, set())
            if kind == "installed":
                apps.add(app)
            elif kind == "uninstalled":
                apps.discard(app)


class RecommendBody(BaseModel):
    user: str
    context: dict[str, str] = Field(default_factory=dict)
    n: int | None = None
    exclude_installed: bool = True
    variant: str = "context"  # "context" | "baseline"


class FeedbackBody(BaseModel):
    user: str
    app: str
    kind: str
    context: dict[str, str] = Field(default_factory=dict)
    timestamp: float | None = None


class ReloadBody(BaseModel):
    path: str


def _resolve_context(partial: Mapping[str, str]) -> ContextVector:
    unknown = [k for k in partial if k not in DIMENSIONS]
    if unknown:
        raise HTTPException(status_code=400, detail=f"unknown context dimensions: {unknown}")
    assignments = {**DEFAULT_CONTEXT, **dict(partial)}
    violations = validate_assignments(assignments)
    if violations:
        raise HTTPException(status_code=400, detail=[str(v) for v in violations])
    return ContextVector.from_mapping(assignments)


def _load_snapshot(path: str) -> ModelSnapshot:
    m = model_mod.load(path)
    return ModelSnapshot(model=m, version=m.version())


def create_app(config: ServerConfig, core: ServerCore | None = None) -> FastAPI:
    """Build the service; models/cube load eagerly so startup fails fast."""
    if core is None:
        core = ServerCore(config=config)
        if config.model_path:
            core.snapshot = _load_snapshot(config.model_path)
        if config.baseline_model_path:
            core.baseline = _load_snapshot(config.baseline_model_path)
        if config.data_path:
            core.cube = parse_tuples(config.data_path)
        if config.apps_path:
            core.catalog = parse_app_catalog(config.apps_path)
        elif core.cube is not None:
            core.catalog = core.cube.catalog
        core.log = EventLog(config.event_log_path)

    app = FastAPI(title="ctxrec", version="0.1.0")
    app.state.core = core

    from functools import lru_cache

    @lru_cache(maxsize=8192)
    def cached_factors(app_id: str, ctx_values: tuple) -> tuple:
        # safe to cache: the cube is immutable for the server's lifetime
        if core.cube is None or core.cube.app_total(app_id) == 0:
            return ()
        return tuple(explain.select_factors(core.cube, app_id, ContextVector(ctx_values),
                                            df_convention=config.df_convention))

    @lru_cache(maxsize=8192)
    def cached_item_fragment(app_id: str, ctx_values: tuple) -> dict:
        """Context-dependent, model-independent response fields for one app."""
        factors = cached_factors(app_id, ctx_values)
        info = core.catalog.get(app_id) if core.catalog is not None else None
        return {
            "app": app_id,
            "name": info.display_name if info else app_id,
            "category": info.category if info else "unknown",
            "explanation": explain.render_explanation(factors),
            "factors": [f.as_dict() for f in factors],
        }

    def current_snapshot(variant: str) -> ModelSnapshot:
        snap = core.baseline if variant == "baseline" else core.snapshot
        if variant not in ("context", "baseline"):
            raise HTTPException(status_code=400, detail=f"unknown variant {variant!r}")
        if snap is None:
            raise HTTPException(status_code=503, detail=f"no {variant} model loaded")
        return snap

    @app.get("/health")
    async def health():
        return {"status": "ok",
                "model_version": core.snapshot.version if core.snapshot else None,
                "baseline_version": core.baseline.version if core.baseline else None}

    @app.get("/schema/context")
    async def context_schema():
        dims = []
        for d in DIMENSIONS.values():
            values = list(d.values)
            if d.open_vocabulary and core.cube is not None:
                # open vocabularies (country) grow with what the data contains
                values = sorted(set(values) | set(core.cube.observed_values(d.name)))
            dims.append({"name": d.name, "values": values, "open": d.open_vocabulary,
                         "default": DEFAULT_CONTEXT[d.name]})
        return {"dimensions": dims}

    @app.post("/recommend")
    async def recommend(body: RecommendBody):
        snap = current_snapshot(body.variant)  # one snapshot for the whole request
        n = body.n if body.n is not None else config.default_n
        if n < 1 or n > MAX_REQUEST_N:
            raise HTTPException(status_code=400, detail=f"n must be in [1, {MAX_REQUEST_N}]")
        context = _resolve_context(body.context)
        if not snap.model.known_user(body.user) and not config.fallback:
            raise HTTPException(status_code=404, detail=f"unknown user {body.user!r}")
        installed = core.installed.get(body.user, set())
        recs = snap.model.recommend(body.user, context, n=n,
                                    exclude_installed=body.exclude_installed,
                                    installed=installed)
        items = []
        for item in recs.items:
            fragment = dict(cached_item_fragment(item.app, context.values))
            fragment["score"] = item.score
            fragment["rank"] = item.rank
            items.append(fragment)
        if config.log_shown and core.log is not None:
            core.log.append_shown(body.user, [item.app for item in recs.items],
                                  time.time(), context)
        payload = {"items": items, "cold_start": recs.cold_start,
                   "model_version": snap.version, "variant": body.variant}
        # plain json.dumps skips the generic encoder on this hot path
        from fastapi import Response

        return Response(content=json.dumps(payload, separators=(",", ":")),
                        media_type="application/json")

    @app.post("/feedback")
    def feedback(body: FeedbackBody):
        if body.kind not in FEEDBACK_KINDS:
            raise HTTPException(status_code=400,
                                detail=f"kind must be one of {list(FEEDBACK_KINDS)}")
        context = _resolve_context(body.context)
        ts = body.timestamp if body.timestamp is not None else time.time()
        core.log.append({"user": body.user, "app": body.app, "kind": body.kind,
                         "timestamp": ts, "context": context.as_dict(), "session": None})
        core.note_feedback(body.user, body.app, body.kind)
        return {"ok": True}

    def _log_events(session_gap: float = 300.0) -> list[InteractionEvent]:
        return sessionize(core.log.read_events(), gap_seconds=session_gap)

    @app.get("/analytics/funnel")
    def analytics_funnel(window: float = Query(default=analytics.DEFAULT_DIRECT_USE_WINDOW_S),
                         min_installs: int = Query(default=analytics.DEFAULT_MIN_CATEGORY_INSTALLS)):
        report = analytics.funnel(_log_events(), catalog=core.catalog,
                                  direct_use_window=window, min_installs=min_installs)
        return report.as_dict()

    @app.get("/analytics/mosaic")
    def analytics_mosaic(rows: str = "category", cols: str = "location,isweekend",
                         kinds: str = "used", source: str = "log"):
        col_dims = tuple(c for c in cols.split(",") if c)
        try:
            if source == "data":
                if core.cube is None:
                    raise HTTPException(status_code=503, detail="no tuple data loaded")
                table = analytics.contingency(core.cube, rows=rows, cols=col_dims)
            elif source == "log":
                table = analytics.contingency(_log_events(), rows=rows, cols=col_dims,
                                              catalog=core.catalog,
                                              kinds=tuple(kinds.split(",")))
            else:
                raise HTTPException(status_code=400, detail="source must be log or data")
            return analytics.mosaic_export(table)
        except DataError as exc:
            raise HTTPException(status_code=400, detail=str(exc))

    @app.get("/analytics/uninstall")
    def analytics_uninstall():
        return analytics.uninstall_ttl(_log_events()).as_dict()

    @app.get("/analytics/location")
    def analytics_location():
        return analytics.location_share(_log_events()).as_dict()

    @app.get("/analytics/wtf")
    def analytics_wtf(n: int = 10):
        snap = core.snapshot
        if snap is None:
            raise HTTPException(status_code=503, detail="no model loaded")
        if core.catalog is None or not config.wtf_rules:
            return analytics.WtfReport(n=n, rules=tuple(config.wtf_rules),
                                       per_user={}, total=0, mean=0.0).as_dict()
        context = ContextVector.from_mapping(DEFAULT_CONTEXT)
        recs = {u: [i.app for i in snap.model.recommend(u, context, n=n).items]
                for u in snap.model.users}
        try:
            report = analytics.wtf_score(recs, {}, core.catalog,
                                         rules=config.wtf_rules, n=n)
        except DataError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return report.as_dict()

    @app.post("/admin/reload")
    def admin_reload(body: ReloadBody):
        try:
            new_snap = _load_snapshot(body.path)
        except (DataError, OSError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=f"model rejected: {exc}")
        core.snapshot = new_snap  # atomic swap; in-flight requests keep the old one
        return {"ok": True, "model_version": new_snap.version}

    if config.ui_dir and Path(config.ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=config.ui_dir, html=True), name="ui")
    else:
        @app.get("/ui", response_class=HTMLResponse)
        def ui_placeholder():
            return "<html><body><p>UI assets not built; see frontend/README.md.</p></body></html>"

    return app


def run(config: ServerConfig, host: str = "127.0.0.1", port: int = 8000) -> None:
    import uvicorn

    uvicorn.run(create_app(config), host=host, port=port, log_level="warning",
                access_log=False)
