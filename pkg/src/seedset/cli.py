"""Command-line interface: ``seedset {analyze,simulate,graph,oracle}``.

Exit codes: 0 success, 2 validation error, 3 the MLE does not exist for some
clique (too few samples or a singular clique covariance).
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from importlib import resources
from pathlib import Path

from . import __version__
from .graph import (
    GraphError,
    added_edges,
    all_decompositions,
    connected_components,
    is_connected,
    is_decomposable,
    maximal_cliques,
    oracle_graphical_seed_set,
    separator_collection,
    sort_labels,
    triangulate,
)
from .inference import InferenceError, Method, SeedSetEstimate, analyze
from .io import (
    ParseError,
    build_report,
    component_report,
    format_report_text,
    format_sets,
    graph_to_json,
    read_data_csv,
    read_graph,
    report_to_json,
    write_data_csv,
    write_graph,
)
from .numerics import LabelMismatchError, MleExistenceError, NumericsError

log = logging.getLogger("seedset")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_MLE = 3


class UsageError(ValueError):
    pass


def _prepare_graph(path, triangulate_flag: bool):
    g = read_graph(path)
    added = []
    if not is_decomposable(g):
        if not triangulate_flag:
            raise UsageError("graph is not decomposable; pass --triangulate to embed it in a chordal graph")
        t = triangulate(g)
        added = added_edges(g, t)
        log.warning("graph is not decomposable; triangulation added %d edge(s): %s",
                    len(added), " ".join(f"{u}-{v}" for u, v in added))
        g = t
    return g, added


def _select_components(g, mode: str):
    comps = connected_components(g)
    if len(comps) == 1:
        return comps
    if mode == "error":
        raise UsageError(f"graph has {len(comps)} connected components; use --component largest|all")
    if mode == "largest":
        best = max(comps, key=lambda c: (c.p, -comps.index(c)))
        log.warning("graph has %d components; analysing the largest (%d vertices)", len(comps), best.p)
        return [best]
    return comps


def cmd_analyze(args) -> int:
    started = time.perf_counter()
    g, added = _prepare_graph(args.graph, args.triangulate)
    x1 = read_data_csv(args.data1, transpose=args.transpose)
    x2 = read_data_csv(args.data2, transpose=args.transpose)
    for name, x in (("data1", x1), ("data2", x2)):
        if set(x.column_labels) != set(g.vertices):
            missing = sort_labels(set(g.vertices) - set(x.column_labels))
            extra = sort_labels(set(x.column_labels) - set(g.vertices))
            raise LabelMismatchError(
                f"{name}: columns do not match graph vertices (missing: {missing}, unexpected: {extra})"
            )
    if args.method != "bonferroni" and args.permutations < math.ceil(1 / args.alpha) - 1:
        log.warning("with B=%d permutations the smallest attainable p-value is %.3g > alpha=%g",
                    args.permutations, 1 / (args.permutations + 1), args.alpha)
    comps = _select_components(g, args.component)
    parts, unions, variables = [], [], set()
    for comp in comps:
        comp_added = [e for e in added if set(e) <= set(comp.vertices)]
        a = analyze(x1, x2, comp, alpha=args.alpha, permutations=args.permutations,
                    method=args.method, seed=args.seed, threads=args.threads)
        parts.append(component_report(a, comp, comp_added))
        unions.extend(a.estimate.per_decomposition_unions)
        variables |= a.estimate.variables
    B = 0 if args.method == "bonferroni" else args.permutations
    estimate = SeedSetEstimate(frozenset(variables), tuple(unions), args.alpha, args.method, B)
    settings = {"alpha": args.alpha, "permutations": B, "method": args.method, "seed": args.seed,
                "component": args.component, "triangulated": bool(added)}
    timing = {"seconds": round(time.perf_counter() - started, 6)} if args.timing else None
    report = build_report(parts, estimate, settings, timing)
    if not args.quiet:
        print(format_report_text(report))
        if not args.timing:
            print(f"elapsed: {time.perf_counter() - started:.2f} s")
    if args.out:
        Path(args.out).write_text(report_to_json(report), encoding="utf-8")
    return EXIT_OK


BUNDLED_CONFIGS = ("table1_desk", "smoke")


def _config_path(name: str) -> Path:
    p = Path(name)
    if p.exists():
        return p
    stem = p.stem if p.suffix == ".json" else name
    if stem in BUNDLED_CONFIGS:
        return Path(str(resources.files("seedset") / "configs" / f"{stem}.json"))
    raise UsageError(f"config file not found: {name}")


def cmd_simulate(args) -> int:
    from .simulation import (
        build_scenarios,
        load_study_config,
        metrics_to_json,
        run_study,
        sample_mvn,
        write_metrics_csv,
    )

    path = _config_path(args.config)
    cfg = load_study_config(path)
    if args.replicates is not None:
        cfg.replicates = args.replicates
    if args.seed is not None:
        cfg.seed = args.seed
    if args.workers is not None:
        cfg.workers = args.workers
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    metrics = run_study(cfg, base_dir=path.parent)
    write_metrics_csv(metrics, out / "metrics.csv")
    (out / "metrics.json").write_text(json.dumps(metrics_to_json(metrics, cfg), indent=2) + "\n",
                                      encoding="utf-8")
    if args.emit_data:
        g = cfg.build_graph(path.parent)
        write_graph(g, out / "graph.txt")
        cell = 0
        for sc in build_scenarios(cfg, g):
            for n in cfg.sample_sizes:
                stem = f"{sc.name}_n{n}"
                write_data_csv(sample_mvn(sc.control, n, cfg.seed, cell, 0, 1), out / f"{stem}_group1.csv")
                write_data_csv(sample_mvn(sc.post, n, cfg.seed, cell, 0, 2), out / f"{stem}_group2.csv")
                (out / f"{stem}_truth.json").write_text(json.dumps({
                    "seed_set": sort_labels(sc.seed_set.variables),
                    "graphical_seed_set": sort_labels(sc.oracle_dg),
                }) + "\n", encoding="utf-8")
                cell += 1
    if not args.quiet:
        print(f"{'scenario':<10} {'n':>4} {'exact':>7} {'(fp)':>7} {'failed':>6}")
        for m in metrics:
            print(f"{m.scenario:<10} {m.n:>4} {100 * m.exact_recovery_rate:>7.1f} "
                  f"({100 * m.false_positive_rate:>5.1f}) {m.failed:>6}")
        print(f"wrote {out / 'metrics.csv'} and {out / 'metrics.json'}")
    return EXIT_OK


def cmd_graph(args) -> int:
    g = read_graph(args.graph)
    action = args.action
    as_json = args.json
    if action == "check":
        dec = is_decomposable(g)
        conn = is_connected(g)
        info = {"decomposable": dec, "connected": conn, "components": len(connected_components(g)),
                "p": g.p, "edges": len(g.edges)}
        if dec:
            cl = maximal_cliques(g)
            info.update(k=len(cl), max_clique=max(len(c) for c in cl))
        if as_json:
            print(json.dumps(info))
        else:
            print("decomposable" if dec else "not decomposable")
            print(f"{'connected' if conn else 'disconnected'} ({info['components']} component(s))")
            print(f"p={g.p} edges={len(g.edges)}" + (f" k={info['k']} max clique={info['max_clique']}" if dec else ""))
        return EXIT_OK
    if action == "triangulate":
        t = triangulate(g)
        extra = added_edges(g, t)
        if as_json:
            print(json.dumps({**graph_to_json(t), "added_edges": [list(e) for e in extra]}))
        else:
            print("# added: " + (" ".join(f"{u}-{v}" for u, v in extra) or "none"))
            print("@vertices " + " ".join(t.vertices))
            for u, v in t.edge_list():
                print(f"{u} {v}")
        return EXIT_OK
    if not is_decomposable(g):
        raise UsageError("graph is not decomposable; run 'seedset graph FILE triangulate' first")
    if action == "cliques":
        cl = maximal_cliques(g)
        print(json.dumps([sort_labels(c) for c in cl]) if as_json else format_sets(cl))
    elif action == "separators":
        seps = [s for comp in connected_components(g) if comp.p > 1 for s in separator_collection(comp)]
        print(json.dumps([sort_labels(s) for s in seps]) if as_json else (format_sets(seps) or "(none)"))
    elif action == "decompositions":
        if not is_connected(g):
            raise UsageError("decompositions need a connected graph")
        ds = all_decompositions(g)
        if as_json:
            print(json.dumps([{"cliques": [sort_labels(c) for c in d.cliques],
                               "separators": [sort_labels(s) for s in d.separators]} for d in ds]))
        else:
            for i, d in enumerate(ds, start=1):
                seps = " ".join("{" + ",".join(sort_labels(s)) + "}" for s in d.separators[1:])
                print(f"{i}: {format_sets(d.cliques)} | separators: {seps or '(none)'}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    g = read_graph(args.graph)
    d = [v.strip() for v in ",".join(args.seed_set).split(",") if v.strip()]
    unknown = sorted(set(d) - set(g.vertices))
    if unknown:
        raise UsageError(f"unknown vertex/vertices in seed set: {', '.join(unknown)}")
    if not is_decomposable(g):
        raise UsageError("graph is not decomposable")
    if not is_connected(g):
        raise UsageError("graph is disconnected; the oracle needs a connected graph")
    dg = oracle_graphical_seed_set(g, d)
    print("{" + ",".join(sort_labels(dg)) + "}")
    return EXIT_OK


def _add_common(p):
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seedset", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="estimate the graphical seed set from two samples")
    a.add_argument("data1", help="CSV for condition 1 (header = vertex labels)")
    a.add_argument("data2", help="CSV for condition 2")
    a.add_argument("graph", help="graph file (edge list or JSON)")
    a.add_argument("--alpha", type=float, default=0.05)
    a.add_argument("-B", "--permutations", type=int, default=1000)
    a.add_argument("--method", choices=[m.value for m in Method], default="minp")
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: SEEDSET_THREADS or CPU count); results do not depend on it")
    a.add_argument("--triangulate", action="store_true", help="triangulate a non-decomposable graph")
    a.add_argument("--component", choices=["largest", "all", "error"], default="largest")
    a.add_argument("--transpose", action="store_true", help="CSV rows are variables, not samples")
    a.add_argument("--out", help="write the JSON report here")
    a.add_argument("--timing", action="store_true", help="record wall time in the JSON report")
    a.add_argument("-q", "--quiet", action="store_true")
    _add_common(a)
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("simulate", help="run a Monte Carlo study from a JSON config")
    s.add_argument("config", help="config path or bundled name (table1_desk, smoke)")
    s.add_argument("--out-dir", default="study_out")
    s.add_argument("--emit-data", action="store_true", help="also write one sampled data pair per cell")
    s.add_argument("--replicates", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--workers", type=int)
    s.add_argument("-q", "--quiet", action="store_true")
    _add_common(s)
    s.set_defaults(func=cmd_simulate)

    gp = sub.add_parser("graph", help="structural utilities")
    gp.add_argument("graph")
    gp.add_argument("action", choices=["cliques", "separators", "decompositions", "triangulate", "check"])
    gp.add_argument("--json", action="store_true")
    _add_common(gp)
    gp.set_defaults(func=cmd_graph)

    o = sub.add_parser("oracle", help="graphical seed set of a known seed set")
    o.add_argument("graph")
    o.add_argument("seed_set", nargs="+", help="vertices, comma or space separated")
    _add_common(o)
    o.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except MleExistenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MLE
    except (UsageError, ParseError, GraphError, NumericsError, InferenceError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
