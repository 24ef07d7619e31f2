#!/usr/bin/env python3
"""Funnel-fidelity experiment: simulate sessions at known conversion rates
and check what the analytics recover, including per-category rates and
uninstall lifetimes."""

import argparse

from ctxrec import analytics, simgen


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-sessions", type=int, default=2000)
    ap.add_argument("--n-users", type=int, default=250)
    ap.add_argument("--n-apps", type=int, default=150)
    ap.add_argument("--p-view", type=float, default=0.5)
    ap.add_argument("--p-install", type=float, default=0.19)
    ap.add_argument("--p-direct", type=float, default=0.578)
    ap.add_argument("--p-uninstall", type=float, default=0.25)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    spec = simgen.WorldSpec(n_users=args.n_users, n_apps=args.n_apps, seed=args.seed)
    probs = simgen.SessionProbs(p_view=args.p_view, p_install=args.p_install,
                                p_direct_use=args.p_direct, p_uninstall=args.p_uninstall)
    events = simgen.simulate_sessions(spec, probs, args.n_sessions)

    catalog = simgen.generate_usage(spec, 0).truth.catalog
    report = analytics.funnel(events, catalog=catalog)
    print(f"sessions={report.sessions} shown={report.shown} viewed={report.viewed} "
          f"installed={report.installed} uninstalled={report.uninstalled}")
    print(f"view->install     configured {args.p_install:.3f}  "
          f"measured {report.view_to_install:.4f}")
    print(f"install->direct   configured {args.p_direct:.3f}  "
          f"measured {report.install_to_direct_use:.4f}")
    print(f"installs/session  {report.installs_per_session:.3f}   "
          f"views/session {report.views_per_session:.3f}")
    if report.per_category:
        print("\nper-category view->install (min 10 installs):")
        for cat, conv in sorted(report.per_category.items()):
            print(f"  {cat:<16} {conv.rate:6.1%}  ({conv.installs}/{conv.views})")

    ttl = analytics.uninstall_ttl(events)
    if ttl.matched:
        print(f"\nuninstall TTLs: n={ttl.matched} within-hour {ttl.within_hour:.1%} "
              f"within-day {ttl.within_day:.1%}")


if __name__ == "__main__":
    main()
