"""Command-line entry point: ingest, train, recommend, explain, eval, analyze, simulate, serve."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import analytics, evaluation, explain, ingest, model as model_mod, simgen
from .domain import (
    DEFAULT_CONTEXT,
    DIMENSIONS,
    ConfigError,
    ContextVector,
    DataError,
    validate_assignments,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit code 1 instead of argparse's 2
        raise UsageError(f"{self.prog}: {message}")


def _parse_kv_file(path: str) -> dict[str, str]:
    values = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}: expected key=value, got {line!r}")
        k, _, v = line.partition("=")
        values[k.strip()] = v.strip()
    return values


def parse_context(pairs: str | None, profile_path: str | None = None) -> ContextVector:
    """Build a context from `dim=value,...` pairs over a profile file over defaults."""
    assignments = dict(DEFAULT_CONTEXT)
    if profile_path:
        for k, v in _parse_kv_file(profile_path).items():
            if k not in DIMENSIONS:
                raise ConfigError(f"profile: unknown context dimension {k!r}")
            assignments[k] = v
    if pairs:
        for item in pairs.split(","):
            if not item:
                continue
            if "=" not in item:
                raise UsageError(f"--context expects dim=value pairs, got {item!r}")
            k, _, v = item.partition("=")
            if k not in DIMENSIONS:
                raise UsageError(f"--context: unknown dimension {k!r}")
            assignments[k] = v
    violations = validate_assignments(assignments)
    if violations:
        raise DataError("invalid context: " + "; ".join(str(v) for v in violations))
    return ContextVector.from_mapping(assignments)


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _report(data: dict, fmt: str, out: str | None, tsv_rows=None) -> None:
    if fmt == "json":
        _emit(json.dumps(data, indent=2, sort_keys=True), out)
    else:
        if tsv_rows is None:
            tsv_rows = [[k, json.dumps(v) if isinstance(v, (dict, list)) else v]
                        for k, v in sorted(data.items())]
        _emit("\n".join("\t".join(str(c) for c in row) for row in tsv_rows), out)


def _model_config_from_args(args) -> model_mod.ModelConfig:
    dims = () if args.no_context else tuple(d for d in args.context_dims.split(",") if d)
    return model_mod.ModelConfig(
        latent_dim=args.latent_dim, learning_rate=args.learning_rate,
        regularization=args.regularization, epochs=args.epochs,
        negatives_per_positive=args.negatives, confidence_alpha=args.alpha,
        context_dims=dims, seed=args.seed, negative_sampling=args.negative_sampling)


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--latent-dim", type=int, default=16)
    p.add_argument("--learning-rate", type=float, default=0.05)
    p.add_argument("--regularization", type=float, default=0.01)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--negatives", type=int, default=4)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--context-dims", default=",".join(model_mod.DEFAULT_MODEL_DIMENSIONS))
    p.add_argument("--negative-sampling", choices=["uniform", "frequency"], default="uniform")
    p.add_argument("--no-context", action="store_true", help="ablation: drop all context dims")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> _Parser:
    parser = _Parser(prog="ctxrec", description=__doc__)
    parser.add_argument("--config", help="key=value file of flag defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="normalize datasets / enrich raw sample logs")
    ing = p.add_subparsers(dest="ingest_mode", required=True)
    pt = ing.add_parser("tuples", help="normalize an external tuple dataset")
    pt.add_argument("--data", required=True)
    pt.add_argument("--mapping", help="JSON column/value mapping config")
    pt.add_argument("--out", required=True)
    pt.add_argument("--failed-users", help="file with one flagged user per line")
    pt.add_argument("--clean-report")
    pr = ing.add_parser("raw", help="enrich raw minute samples into tuples + events")
    pr.add_argument("--samples", required=True)
    pr.add_argument("--apps", help="app metadata file (app/category/language)")
    pr.add_argument("--city-centers")
    pr.add_argument("--weather")
    pr.add_argument("--countries", help="key=value file user=country")
    pr.add_argument("--timezones", help="key=value file user=tz_offset_minutes")
    pr.add_argument("--min-days", type=int, default=ingest.DEFAULT_MIN_DAYS)
    pr.add_argument("--session-gap", type=float, default=ingest.DEFAULT_SESSION_GAP_S)
    pr.add_argument("--failed-users")
    pr.add_argument("--out-dir", required=True)

    p = sub.add_parser("train", help="fit the factorization recommender")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    _add_model_flags(p)

    p = sub.add_parser("recommend", help="top-N recommendations with explanations")
    p.add_argument("--model", required=True)
    p.add_argument("--user", required=True)
    p.add_argument("--context")
    p.add_argument("--profile", help="key=value context defaults file")
    p.add_argument("--n", type=int, default=21)
    p.add_argument("--data", help="tuple dataset for chi-square explanations")
    p.add_argument("--keep-installed", action="store_true")
    p.add_argument("--format", choices=["tsv", "json"], default="tsv")
    p.add_argument("--out")

    p = sub.add_parser("explain", help="chi-square explanation for one app")
    p.add_argument("--data", required=True)
    p.add_argument("--app", required=True)
    p.add_argument("--context")
    p.add_argument("--profile")
    p.add_argument("--max-factors", type=int, default=explain.MAX_FACTORS)
    p.add_argument("--p-threshold", type=float, default=explain.P_THRESHOLD)
    p.add_argument("--df-convention", choices=["paper", "conventional"], default="paper")
    p.add_argument("--format", choices=["tsv", "json"], default="tsv")
    p.add_argument("--out")

    p = sub.add_parser("eval", help="offline ranking comparison")
    p.add_argument("--data", required=True)
    p.add_argument("--ks", default="3,10,21")
    p.add_argument("--seeds", default="0")
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--strategy", choices=["per-user-random", "temporal"], default="per-user-random")
    p.add_argument("--models", default="context,nocontext,popularity,context_popularity")
    _add_model_flags(p)
    p.add_argument("--format", choices=["tsv", "json"], default="tsv")
    p.add_argument("--out")

    p = sub.add_parser("analyze", help="usage-centric reports")
    p.add_argument("what", choices=["funnel", "mosaic", "uninstall", "wtf", "location"])
    p.add_argument("--events", required=True)
    p.add_argument("--data", help="tuple dataset (catalog for categories)")
    p.add_argument("--apps", help="app metadata file (categories + languages for WTF rules)")
    p.add_argument("--rows", default="category")
    p.add_argument("--cols", default="location,isweekend")
    p.add_argument("--kinds", default="used")
    p.add_argument("--svg", help="write the mosaic as an SVG file")
    p.add_argument("--window", type=float, default=analytics.DEFAULT_DIRECT_USE_WINDOW_S)
    p.add_argument("--min-installs", type=int, default=analytics.DEFAULT_MIN_CATEGORY_INSTALLS)
    p.add_argument("--rules", default="", help="comma-separated WTF rule names")
    p.add_argument("--recs", help="TSV user/app/rank recommendation lists for WTF")
    p.add_argument("--profiles", help="TSV user/languages/tags profiles for WTF")
    p.add_argument("--wtf-n", type=int, default=10)
    p.add_argument("--format", choices=["tsv", "json"], default="tsv")
    p.add_argument("--out")

    p = sub.add_parser("simulate", help="synthetic usage and session generators")
    sim = p.add_subparsers(dest="sim_mode", required=True)
    pu = sim.add_parser("usage", help="raw samples with planted contextual effects")
    pu.add_argument("--out-dir", required=True)
    pu.add_argument("--n-events", type=int, required=True)
    pu.add_argument("--n-users", type=int, default=100)
    pu.add_argument("--n-apps", type=int, default=20)
    pu.add_argument("--n-days", type=int, default=14)
    pu.add_argument("--noise", type=float, default=0.0)
    pu.add_argument("--affinity", action="append", default=[],
                    help="target:dimension:value:gamma, e.g. category:games:isweekend:weekend:3")
    pu.add_argument("--seed", type=int, default=0)
    ps = sim.add_parser("sessions", help="funnel events with known conversion rates")
    ps.add_argument("--out", required=True)
    ps.add_argument("--n-sessions", type=int, required=True)
    ps.add_argument("--n-users", type=int, default=100)
    ps.add_argument("--n-apps", type=int, default=20)
    ps.add_argument("--p-view", type=float, default=0.2)
    ps.add_argument("--p-install", type=float, default=0.19)
    ps.add_argument("--p-direct", type=float, default=0.578)
    ps.add_argument("--p-uninstall", type=float, default=0.25)
    ps.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--model", required=True)
    p.add_argument("--data")
    p.add_argument("--apps", help="app metadata file (names, categories, languages)")
    p.add_argument("--baseline-model")
    p.add_argument("--event-log", default="events.log")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--default-n", type=int, default=21)
    p.add_argument("--no-fallback", action="store_true")
    p.add_argument("--no-shown-log", action="store_true")
    p.add_argument("--wtf-rules", default="")
    p.add_argument("--ui-dir")
    return parser


# -- command implementations ----------------------------------------------------


def _cmd_ingest(args) -> int:
    if args.ingest_mode == "tuples":
        mapping = ingest.ColumnMapping.from_json(args.mapping) if args.mapping else None
        cube = ingest.parse_tuples(args.data, mapping)
        failed = []
        if args.failed_users:
            failed = [l.strip() for l in Path(args.failed_users).read_text().splitlines() if l.strip()]
        cube, _, report = ingest.clean(cube, [], failed_users=failed)
        ingest.write_tuples(cube, args.out)
        if args.clean_report:
            report.write(args.clean_report)
        print(f"wrote {len(cube)} tuples ({cube.grand_total} usages) to {args.out}")
        return EXIT_OK

    samples = ingest.parse_raw_samples(args.samples)
    by_user: dict[str, list] = {}
    for s in samples:
        by_user.setdefault(s.user, []).append(s)
    tz = {k: int(v) for k, v in (_parse_kv_file(args.timezones) if args.timezones else {}).items()}
    labels = {u: ingest.infer_home_work(ss, min_days=args.min_days, tz_offset_min=tz.get(u, 0))
              for u, ss in by_user.items()}
    enricher = ingest.Enricher(
        labels=labels,
        city_centers=ingest.parse_city_centers(args.city_centers) if args.city_centers else (),
        weather=(ingest.FileWeatherProvider(args.weather) if args.weather
                 else ingest.ConstantWeatherProvider("unknown")),
        tz_offsets=tz,
        countries=_parse_kv_file(args.countries) if args.countries else {},
    )
    events = ingest.extract_usage_events(samples, enricher)
    events = ingest.sessionize(events, gap_seconds=args.session_gap)
    catalog = ingest.parse_app_catalog(args.apps) if args.apps else None
    cube = ingest.cube_from_events(events, catalog=catalog)
    failed = []
    if args.failed_users:
        failed = [l.strip() for l in Path(args.failed_users).read_text().splitlines() if l.strip()]
    cube, events, report = ingest.clean(cube, events, failed_users=failed)

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ingest.write_tuples(cube, out / "tuples.tsv")
    ingest.write_events(events, out / "events.tsv")
    report.write(out / "clean_report.txt")
    with open(out / "places.tsv", "w", encoding="utf-8") as fh:
        fh.write("user\thome\twork\thome_support\twork_support\n")
        for u in sorted(labels):
            l = labels[u]
            fh.write(f"{u}\t{l.home or ''}\t{l.work or ''}\t{l.home_support}\t{l.work_support}\n")
    print(f"wrote {len(cube)} tuples, {len(events)} events to {out} "
          f"(quality counters: {dict(enricher.counters)})")
    return EXIT_OK


def _cmd_train(args) -> int:
    cube = ingest.parse_tuples(args.data)
    cfg = _model_config_from_args(args)
    m = model_mod.train(cube, cfg)
    model_mod.save(m, args.out)
    final = f"{m.loss_trace[-1]:.6f}" if m.loss_trace else "n/a"
    print(f"trained on {len(cube)} tuples; final epoch loss {final}; "
          f"model {m.version()} -> {args.out}")
    return EXIT_OK


def _cmd_recommend(args) -> int:
    m = model_mod.load(args.model)
    context = parse_context(args.context, args.profile)
    cube = ingest.parse_tuples(args.data) if args.data else None
    recs = m.recommend(args.user, context, n=args.n,
                       exclude_installed=not args.keep_installed)
    rows = []
    payload = {"user": args.user, "cold_start": recs.cold_start,
               "model_version": m.version(), "items": []}
    for item in recs.items:
        factors = []
        if cube is not None and cube.app_total(item.app) > 0:
            factors = explain.select_factors(cube, item.app, context)
        text = explain.render_explanation(factors)
        payload["items"].append({"rank": item.rank, "app": item.app, "score": item.score,
                                 "explanation": text,
                                 "factors": [f.as_dict() for f in factors]})
        rows.append([item.rank, item.app, f"{item.score:.6f}", text])
    _report(payload, args.format, args.out, tsv_rows=rows)
    return EXIT_OK


def _cmd_explain(args) -> int:
    cube = ingest.parse_tuples(args.data)
    context = parse_context(args.context, args.profile)
    report = explain.explain_app(cube, args.app, context, max_factors=args.max_factors,
                                 p_threshold=args.p_threshold, df_convention=args.df_convention)
    rows = [["app", report.app], ["text", report.text]]
    for s in report.selected:
        rows.append([s.dimension, s.value, f"O={s.observed:g}", f"E={s.expected:.6f}",
                     f"chi2={s.chi2:.6f}", f"df={s.df}", f"p={s.p:.8f}"])
    _report(report.as_dict(), args.format, args.out, tsv_rows=rows)
    return EXIT_OK


def _cmd_eval(args) -> int:
    cfg = _model_config_from_args(args)
    ks = [int(k) for k in args.ks.split(",") if k]
    seeds = [int(s) for s in args.seeds.split(",") if s]
    factories = {
        "context": lambda tc: model_mod.train(tc, cfg),
        "nocontext": lambda tc: model_mod.mf_nocontext(tc, cfg),
        "popularity": model_mod.popularity,
        "context_popularity": lambda tc: model_mod.context_popularity(tc, cfg.context_dims),
    }
    chosen = {}
    for name in args.models.split(","):
        name = name.strip()
        if name not in factories:
            raise UsageError(f"unknown model {name!r} (choose from {sorted(factories)})")
        chosen[name] = factories[name]
    cube = ingest.parse_tuples(args.data)
    spec = evaluation.SplitSpec(strategy=args.strategy, test_fraction=args.test_fraction,
                                seed=seeds[0])
    report = evaluation.compare(chosen, cube, spec, ks=ks, seeds=seeds)
    data = report.as_dict()
    rows = [["seed", "model"] + [f"map@{k}" for k in ks]]
    for r in report.rows:
        rows.append([r.seed, r.model] + [f"{r.metrics[k].ap:.6f}" for k in ks])
    for name in report.models:
        rows.append(["mean", name] + [f"{report.mean(name, k):.6f}" for k in ks])
    for name in report.models[1:]:
        rows.append(["lift_vs", name] + [f"{report.lift(name, k):+.4f}" for k in ks])
    _report(data, args.format, args.out, tsv_rows=rows)
    return EXIT_OK


def _load_wtf_inputs(args):
    recs: dict[str, list[str]] = {}
    if args.recs:
        for line in Path(args.recs).read_text(encoding="utf-8").splitlines()[1:]:
            if not line.strip():
                continue
            user, app, rank = line.split("\t")
            recs.setdefault(user, []).append((int(rank), app))
        recs = {u: [a for _, a in sorted(v)] for u, v in recs.items()}
    profiles = {}
    if args.profiles:
        for line in Path(args.profiles).read_text(encoding="utf-8").splitlines()[1:]:
            if not line.strip():
                continue
            user, langs, tags = (line.split("\t") + ["", ""])[:3]
            profiles[user] = analytics.UserProfile(
                user=user,
                languages=frozenset(l for l in langs.split(",") if l) or frozenset({"en"}),
                tags=frozenset(t for t in tags.split(",") if t))
    return recs, profiles


def _cmd_analyze(args) -> int:
    events = ingest.parse_events(args.events)
    if args.apps:
        catalog = ingest.parse_app_catalog(args.apps)
    elif args.data:
        catalog = ingest.parse_tuples(args.data).catalog
    else:
        catalog = None

    if args.what == "funnel":
        report = analytics.funnel(events, catalog=catalog, direct_use_window=args.window,
                                  min_installs=args.min_installs)
        _report(report.as_dict(), args.format, args.out)
    elif args.what == "mosaic":
        table = analytics.contingency(events, rows=args.rows,
                                      cols=tuple(c for c in args.cols.split(",") if c),
                                      catalog=catalog, kinds=tuple(args.kinds.split(",")))
        layout = analytics.mosaic_export(table)
        if args.svg:
            Path(args.svg).write_text(analytics.mosaic_svg(layout), encoding="utf-8")
        rows = [["row", "col", "O", "E", "residual", "signif"]]
        for t in layout["tiles"]:
            rows.append([t["row"], "/".join(t["col"]), f"{t['observed']:g}",
                         f"{t['expected']:.4f}", f"{t['residual']:.4f}", t["signif"]])
        _report(layout, args.format, args.out, tsv_rows=rows)
    elif args.what == "uninstall":
        _report(analytics.uninstall_ttl(events).as_dict(), args.format, args.out)
    elif args.what == "location":
        _report(analytics.location_share(events).as_dict(), args.format, args.out)
    else:  # wtf
        if catalog is None:
            raise UsageError("analyze wtf requires --apps (or --data) for app metadata")
        recs, profiles = _load_wtf_inputs(args)
        if not recs:
            raise UsageError("analyze wtf requires --recs")
        rules = tuple(r for r in args.rules.split(",") if r)
        report = analytics.wtf_score(recs, profiles, catalog, rules=rules, n=args.wtf_n)
        _report(report.as_dict(), args.format, args.out)
    return EXIT_OK


def _parse_affinity(text: str) -> simgen.Affinity:
    parts = text.split(":")
    if len(parts) != 5:
        raise UsageError(f"--affinity expects target_kind:name:dimension:value:gamma, got {text!r}")
    return simgen.Affinity(target=f"{parts[0]}:{parts[1]}", dimension=parts[2],
                           value=parts[3], gamma=float(parts[4]))


def _cmd_simulate(args) -> int:
    if args.sim_mode == "usage":
        spec = simgen.WorldSpec(n_users=args.n_users, n_apps=args.n_apps, n_days=args.n_days,
                                location_noise=args.noise,
                                affinities=tuple(_parse_affinity(a) for a in args.affinity),
                                seed=args.seed)
        sim = simgen.generate_usage(spec, args.n_events)
        simgen.write_usage(sim, args.out_dir)
        # the canonical dataset and event log are what train/eval/analyze consume
        out = Path(args.out_dir)
        ingest.write_tuples(sim.truth.cube(), out / "tuples.tsv")
        from ctxrec.domain import InteractionEvent

        used = [InteractionEvent(e.user, e.app, "used", e.timestamp, e.context)
                for e in sim.truth.events]
        ingest.write_events(used, out / "events.tsv")
        print(f"wrote {len(sim.samples)} samples / {len(sim.truth.events)} events to {args.out_dir}")
        return EXIT_OK
    spec = simgen.WorldSpec(n_users=args.n_users, n_apps=args.n_apps, seed=args.seed)
    probs = simgen.SessionProbs(p_view=args.p_view, p_install=args.p_install,
                                p_direct_use=args.p_direct, p_uninstall=args.p_uninstall)
    events = simgen.simulate_sessions(spec, probs, args.n_sessions)
    ingest.write_events(events, args.out)
    print(f"wrote {len(events)} events to {args.out}")
    return EXIT_OK


def _cmd_serve(args) -> int:
    from . import server as server_mod

    config = server_mod.ServerConfig(
        model_path=args.model, data_path=args.data, apps_path=args.apps,
        baseline_model_path=args.baseline_model,
        event_log_path=args.event_log, fallback=not args.no_fallback,
        default_n=args.default_n, log_shown=not args.no_shown_log,
        wtf_rules=tuple(r for r in args.wtf_rules.split(",") if r),
        ui_dir=args.ui_dir)
    server_mod.run(config, host=args.host, port=args.port)
    return EXIT_OK


_COMMANDS = {
    "ingest": _cmd_ingest,
    "train": _cmd_train,
    "recommend": _cmd_recommend,
    "explain": _cmd_explain,
    "eval": _cmd_eval,
    "analyze": _cmd_analyze,
    "simulate": _cmd_simulate,
    "serve": _cmd_serve,
}


def _apply_config(argv: list[str]) -> list[str]:
    """Expand --config key=value entries into trailing flags; explicit flags win."""
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    if i + 1 >= len(argv):
        raise UsageError("--config requires a file path")
    path = argv[i + 1]
    argv = argv[:i] + argv[i + 2:]
    extra = []
    for key, value in _parse_kv_file(path).items():
        flag = "--" + key.replace("_", "-")
        if flag in argv:
            continue  # explicit flags take precedence
        if value.lower() in ("true", "false"):
            if value.lower() == "true":
                extra.append(flag)
        else:
            extra.extend([flag, value])
    return argv + extra


def main(argv=None) -> int:
    import sys as _sys

    parser = build_parser()
    try:
        argv = list(argv) if argv is not None else _sys.argv[1:]
        args = parser.parse_args(_apply_config(argv))
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except model_mod.TrainingDivergedError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
