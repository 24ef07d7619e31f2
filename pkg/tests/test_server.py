import json
import threading

import pytest
from fastapi.testclient import TestClient

from ctxrec import analytics, explain, ingest, model, simgen
from ctxrec.domain import DEFAULT_CONTEXT, ContextVector
from ctxrec.server import EventLog, ServerConfig, create_app


@pytest.fixture(scope="module")
def world(tmp_path_factory):
    """Small trained world shared by the server tests."""
    tmp = tmp_path_factory.mktemp("srv")
    spec = simgen.WorldSpec(n_users=30, n_apps=40, seed=1,
                            affinities=(simgen.Affinity("category:games", "isweekend", "weekend", 3.0),))
    sim = simgen.generate_usage(spec, 1500)
    cube = sim.truth.cube()
    data_path = tmp / "tuples.tsv"
    ingest.write_tuples(cube, data_path)

    cfg = model.ModelConfig(epochs=10, seed=1)
    m = model.train(cube, cfg)
    model_path = tmp / "model.bin"
    model.save(m, model_path)

    m2 = model.train(cube, model.ModelConfig(epochs=10, seed=2))
    alt_model_path = tmp / "model2.bin"
    model.save(m2, alt_model_path)

    baseline = model.mf_nocontext(cube, model.ModelConfig(epochs=5, seed=1))
    baseline_path = tmp / "baseline.bin"
    model.save(baseline, baseline_path)

    return {"tmp": tmp, "cube": cube, "model": m, "model_path": model_path,
            "alt_model_path": alt_model_path, "baseline_path": baseline_path,
            "data_path": data_path, "user": cube.users()[0]}


@pytest.fixture()
def client(world, tmp_path):
    config = ServerConfig(model_path=str(world["model_path"]),
                          data_path=str(world["data_path"]),
                          baseline_model_path=str(world["baseline_path"]),
                          event_log_path=str(tmp_path / "events.log"))
    app = create_app(config)
    with TestClient(app) as c:
        c.core = app.state.core
        yield c


def post_recommend(client, user, n=3, context=None, **kw):
    body = {"user": user, "n": n, "context": context or {}}
    body.update(kw)
    return client.post("/recommend", json=body)


def test_health_and_schema(client, world):
    health = client.get("/health").json()
    assert health["status"] == "ok" and health["model_version"]
    schema = client.get("/schema/context").json()
    names = [d["name"] for d in schema["dimensions"]]
    assert names[:3] == ["daytime", "weekday", "isweekend"]
    assert all("default" in d for d in schema["dimensions"])
    # the open country vocabulary is extended with values observed in the data
    country = next(d for d in schema["dimensions"] if d["name"] == "country")
    assert set(country["values"]) >= set(world["cube"].observed_values("country")) | {"unknown"}


def test_recommend_three_items_ranked(client, world):
    r = post_recommend(client, world["user"], n=3)
    assert r.status_code == 200
    body = r.json()
    assert len(body["items"]) == 3
    assert [i["rank"] for i in body["items"]] == [1, 2, 3]
    scores = [i["score"] for i in body["items"]]
    assert scores == sorted(scores, reverse=True)
    assert body["cold_start"] is False
    assert body["model_version"]
    for item in body["items"]:
        assert item["explanation"].startswith("Recommended")


def test_recommend_explanations_match_engine(client, world):
    ctx_body = {"isweekend": "weekend", "weekday": "sat"}
    r = post_recommend(client, world["user"], n=5, context=ctx_body)
    context = ContextVector.from_mapping({**DEFAULT_CONTEXT, **ctx_body})
    for item in r.json()["items"]:
        if world["cube"].app_total(item["app"]) == 0:
            continue
        expected = explain.select_factors(world["cube"], item["app"], context)
        assert item["explanation"] == explain.render_explanation(expected)
        assert item["factors"] == [f.as_dict() for f in expected]


def test_recommend_unknown_user_falls_back(client):
    r = post_recommend(client, "stranger", n=4)
    assert r.status_code == 200
    body = r.json()
    assert body["cold_start"] is True
    assert len(body["items"]) == 4


def test_recommend_unknown_user_404_when_fallback_disabled(world, tmp_path):
    config = ServerConfig(model_path=str(world["model_path"]),
                          data_path=str(world["data_path"]),
                          event_log_path=str(tmp_path / "e.log"), fallback=False)
    with TestClient(create_app(config)) as c:
        assert c.post("/recommend", json={"user": "stranger", "n": 3}).status_code == 404


def test_recommend_rejects_bad_n(client, world):
    assert post_recommend(client, world["user"], n=0).status_code == 400
    assert post_recommend(client, world["user"], n=51).status_code == 400


def test_recommend_rejects_bad_context(client, world):
    r = post_recommend(client, world["user"], context={"weather": "hail"})
    assert r.status_code == 400
    r = post_recommend(client, world["user"], context={"mood": "happy"})
    assert r.status_code == 400


def test_recommend_baseline_variant(client, world):
    r = post_recommend(client, world["user"], variant="baseline")
    assert r.status_code == 200
    rc = post_recommend(client, world["user"], variant="context")
    assert r.json()["model_version"] != rc.json()["model_version"]
    assert post_recommend(client, world["user"], variant="bogus").status_code == 400


def test_recommend_503_without_model(world, tmp_path):
    config = ServerConfig(data_path=str(world["data_path"]),
                          event_log_path=str(tmp_path / "e.log"))
    with TestClient(create_app(config)) as c:
        assert c.post("/recommend", json={"user": "u", "n": 1}).status_code == 503


def test_feedback_roundtrip_into_funnel(client, world):
    user = world["user"]
    app_id = world["cube"].apps()[0]
    for kind, t in (("viewed", 100.0), ("installed", 120.0)):
        r = client.post("/feedback", json={"user": user, "app": app_id, "kind": kind,
                                           "timestamp": 1362355200.0 + t})
        assert r.status_code == 200 and r.json()["ok"] is True
    report = client.get("/analytics/funnel").json()
    assert report["installed"] == 1
    assert report["viewed"] == 1
    assert report["attributed_installs"] == 1  # same 5-minute session window


def test_feedback_rejects_unknown_kind(client):
    r = client.post("/feedback", json={"user": "u", "app": "a", "kind": "liked"})
    assert r.status_code == 400
    r = client.post("/feedback", json={"user": "u", "app": "a", "kind": "used"})
    assert r.status_code == 400  # used comes from the sampling pipeline, not clients


def test_feedback_duplicates_are_kept(client):
    body = {"user": "u9", "app": "a9", "kind": "viewed", "timestamp": 1362355200.0}
    client.post("/feedback", json=body)
    client.post("/feedback", json=body)
    assert client.get("/analytics/funnel").json()["viewed"] == 2


def test_installed_apps_excluded_after_feedback(client, world):
    user = world["user"]
    first = post_recommend(client, user, n=3).json()
    top_app = first["items"][0]["app"]
    client.post("/feedback", json={"user": user, "app": top_app, "kind": "installed",
                                   "timestamp": 1362355200.0})
    second = post_recommend(client, user, n=3).json()
    assert top_app not in [i["app"] for i in second["items"]]
    # uninstall brings it back
    client.post("/feedback", json={"user": user, "app": top_app, "kind": "uninstalled",
                                   "timestamp": 1362355300.0})
    third = post_recommend(client, user, n=3).json()
    assert top_app in [i["app"] for i in third["items"]]


def test_mosaic_endpoint_layout(client):
    r = client.get("/analytics/mosaic", params={"rows": "category",
                                                "cols": "location,isweekend",
                                                "source": "data"})
    assert r.status_code == 200
    layout = r.json()
    for s in layout["slices"]:
        fracs = [t["width_fraction"] for t in layout["tiles"]
                 if t["slice"] == s["key"] and t["row"] == layout["rows"][0]]
        assert sum(fracs) == pytest.approx(1.0, abs=1e-9)


def test_mosaic_endpoint_bad_selector(client):
    r = client.get("/analytics/mosaic", params={"rows": "bogus", "cols": "location"})
    assert r.status_code == 400


def test_uninstall_and_location_endpoints(client):
    client.post("/feedback", json={"user": "u1", "app": "a1", "kind": "installed",
                                   "timestamp": 1362355200.0})
    client.post("/feedback", json={"user": "u1", "app": "a1", "kind": "uninstalled",
                                   "timestamp": 1362355200.0 + 1800})
    rep = client.get("/analytics/uninstall").json()
    assert rep["matched"] == 1 and rep["within_hour"] == 1.0
    loc = client.get("/analytics/location").json()
    assert set(loc["fractions"]) == {"home", "work", "other"}


def test_wtf_endpoint_zero_without_rules(client):
    rep = client.get("/analytics/wtf").json()
    assert rep["total"] == 0


def test_wtf_endpoint_with_language_rule(world, tmp_path):
    apps_path = tmp_path / "apps.tsv"
    ingest.write_app_catalog(world["cube"].catalog, apps_path)
    config = ServerConfig(model_path=str(world["model_path"]),
                          data_path=str(world["data_path"]),
                          apps_path=str(apps_path),
                          event_log_path=str(tmp_path / "e.log"),
                          wtf_rules=("language_mismatch",))
    with TestClient(create_app(config)) as c:
        rep = c.get("/analytics/wtf", params={"n": 10}).json()
        assert rep["rules"] == ["language_mismatch"]
        # the simulated catalog plants some non-English apps; default profiles are en
        non_en = [i for i in world["cube"].catalog if i.language not in ("en", "unknown")]
        if non_en:
            assert rep["total"] >= 0
            assert set(rep["per_user"]) == set(world["cube"].users())


def test_admin_reload_swaps_version(client, world):
    old = client.get("/health").json()["model_version"]
    r = client.post("/admin/reload", json={"path": str(world["alt_model_path"])})
    assert r.status_code == 200
    new = r.json()["model_version"]
    assert new != old
    served = post_recommend(client, world["user"]).json()["model_version"]
    assert served == new


def test_admin_reload_rejects_corrupt_file(client, world, tmp_path):
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"garbage")
    before = client.get("/health").json()["model_version"]
    r = client.post("/admin/reload", json={"path": str(bad)})
    assert r.status_code == 422
    assert client.get("/health").json()["model_version"] == before
    assert post_recommend(client, world["user"]).status_code == 200


def test_concurrent_reload_never_mixes_versions(client, world):
    """Responses under reload churn carry a version consistent with their items."""
    user = world["user"]
    paths = [str(world["model_path"]), str(world["alt_model_path"])]
    version_to_items = {}
    for p in paths:
        client.post("/admin/reload", json={"path": p})
        body = post_recommend(client, user, n=5).json()
        version_to_items[body["model_version"]] = [i["app"] for i in body["items"]]
    assert len(version_to_items) == 2

    stop = threading.Event()
    errors = []

    def reloader():
        i = 0
        while not stop.is_set():
            client.post("/admin/reload", json={"path": paths[i % 2]})
            i += 1

    def requester():
        for _ in range(30):
            body = post_recommend(client, user, n=5).json()
            expected = version_to_items.get(body["model_version"])
            if expected is None or [i["app"] for i in body["items"]] != expected:
                errors.append(body["model_version"])

    t = threading.Thread(target=reloader)
    workers = [threading.Thread(target=requester) for _ in range(4)]
    t.start()
    [w.start() for w in workers]
    [w.join() for w in workers]
    stop.set()
    t.join()
    assert errors == []


def test_event_log_survives_partial_tail(tmp_path):
    log = EventLog(tmp_path / "e.log")
    record = {"user": "u", "app": "a", "kind": "viewed", "timestamp": 1.0,
              "context": dict(DEFAULT_CONTEXT), "session": None}
    log.append(record)
    log.flush()
    with open(log.path, "ab") as fh:
        fh.write(b"\x40\x00\x00\x00partial")  # truncated record
    events = log.read_events()
    assert len(events) == 1


def test_funnel_endpoint_matches_cli_computation(client, world, tmp_path):
    for t, kind in ((0, "viewed"), (30, "installed")):
        client.post("/feedback", json={"user": "u2", "app": "a2", "kind": kind,
                                       "timestamp": 1362355200.0 + t})
    endpoint = client.get("/analytics/funnel").json()
    events = ingest.sessionize(client.core.log.read_events())
    direct = analytics.funnel(events, catalog=world["cube"].catalog)
    assert endpoint == direct.as_dict()
