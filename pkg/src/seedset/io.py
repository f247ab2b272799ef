"""Graph files, data CSVs and the JSON analysis report."""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .graph import (
    Graph,
    GraphError,
    build_graph,
    format_set,
    maximal_cliques,
    moralize,
    separator_collection,
    sort_labels,
)
from .inference import Analysis, SeedSetEstimate
from .numerics import DataMatrix, NumericsError

REPORT_SCHEMA = "seedset-report/1"


class ParseError(ValueError):
    def __init__(self, source, line, message):
        super().__init__(f"{source}:{line}: {message}" if line else f"{source}: {message}")
        self.line = line


# --------------------------------------------------------------------------
# graphs


def parse_edge_list(text: str, source: str = "<graph>") -> Graph:
    """Plain edge list: ``u v`` per line, ``#`` comments, optional ``@vertices`` line."""
    vertices: list[str] = []
    seen: set[str] = set()
    edges = []

    def add(v):
        if v not in seen:
            seen.add(v)
            vertices.append(v)

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        if parts[0] == "@vertices":
            for v in parts[1:]:
                add(v)
            continue
        if len(parts) != 2:
            raise ParseError(source, lineno, f"expected 'u v', got {raw.strip()!r}")
        u, v = parts
        if u == v:
            raise ParseError(source, lineno, f"self-loop on vertex {u!r}")
        add(u)
        add(v)
        edges.append((u, v))
    return build_graph(vertices, edges)


def parse_graph_json(text: str, source: str = "<graph>") -> Graph:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(source, exc.lineno, f"invalid JSON: {exc.msg}") from None
    if not isinstance(obj, dict) or "edges" not in obj:
        raise ParseError(source, 1, "expected an object with 'vertices' and 'edges'")
    edges = obj["edges"]
    if any(not isinstance(e, list) or len(e) != 2 for e in edges):
        raise ParseError(source, None, "every edge must be a two-element list")
    verts = obj.get("vertices")
    if verts is None:
        verts = []
        for e in edges:
            for v in e:
                if str(v) not in verts:
                    verts.append(str(v))
    try:
        if obj.get("directed", False):
            return moralize(verts, edges)
        return build_graph(verts, edges)
    except GraphError as exc:
        raise ParseError(source, None, str(exc)) from None


def read_graph(path: str | Path) -> Graph:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".json" or text.lstrip().startswith("{"):
        return parse_graph_json(text, str(path))
    try:
        return parse_edge_list(text, str(path))
    except GraphError as exc:
        raise ParseError(str(path), None, str(exc)) from None


def graph_to_json(g: Graph) -> dict:
    return {"vertices": list(g.vertices), "edges": [list(e) for e in g.edge_list()], "directed": False}


def write_graph(g: Graph, path: str | Path) -> None:
    path = Path(path)
    if path.suffix.lower() == ".json":
        path.write_text(json.dumps(graph_to_json(g), indent=1) + "\n", encoding="utf-8")
        return
    lines = ["@vertices " + " ".join(g.vertices)]
    lines += [f"{u} {v}" for u, v in g.edge_list()]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


# --------------------------------------------------------------------------
# data


def read_data_csv(path: str | Path, transpose: bool = False) -> DataMatrix:
    """Numeric CSV with a mandatory header row.

    By default rows are observations and the header holds vertex labels. With
    ``transpose=True`` rows are variables: the first column holds the vertex
    labels and the header holds sample names.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if any(c.strip() for c in r)]
    if not rows:
        raise ParseError(str(path), None, "empty file")
    header = [c.strip() for c in rows[0]]
    body = []
    for lineno, r in enumerate(rows[1:], start=2):
        if len(r) != len(header):
            raise ParseError(str(path), lineno, f"expected {len(header)} fields, got {len(r)}")
        body.append(r)
    if transpose:
        labels = [r[0].strip() for r in body]
        cells = [r[1:] for r in body]
    else:
        labels = header
        cells = body
    values = np.empty((len(cells), len(cells[0]) if cells else 0))
    for i, r in enumerate(cells):
        for j, c in enumerate(r):
            try:
                # float() ignores the locale: dot decimal separator only
                values[i, j] = float(c)
            except ValueError:
                raise ParseError(str(path), i + 2, f"non-numeric value {c!r}") from None
    if transpose:
        values = values.T
    try:
        return DataMatrix(values, labels)
    except NumericsError as exc:
        raise ParseError(str(path), None, str(exc)) from None


def write_data_csv(x: DataMatrix, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(x.column_labels)
        for row in x.values:
            w.writerow([repr(float(v)) for v in row])


# --------------------------------------------------------------------------
# report


def _labels(vs: Iterable[str]) -> list[str]:
    return sort_labels(vs)


def component_report(a: Analysis, g: Graph, added: Sequence[tuple[str, str]] = ()) -> dict:
    cliques = maximal_cliques(g)
    hyps = {h.key: h for h in a.hypotheses}
    table = []
    for no, r in enumerate(a.results, start=1):
        h = hyps[r.hypothesis]
        table.append({
            "no": no,
            "key": r.hypothesis,
            "target": _labels(h.target),
            "given": _labels(h.given),
            "statistic": r.statistic,
            "df": r.df,
            "asymptotic_p": r.asymptotic_p,
            "permutation_p": r.permutation_p,
            "adjusted_p": r.adjusted_p,
            "rejected": r.rejected,
        })
    decomps = []
    for d, u in zip(a.decompositions, a.estimate.per_decomposition_unions):
        decomps.append({
            "root": _labels(d.cliques[0]),
            "cliques": [_labels(c) for c in d.cliques],
            "separators": [_labels(s) for s in d.separators],
            "union": _labels(u),
        })
    return {
        "graph": {
            "p": g.p,
            "edges": len(g.edges),
            "k": len(cliques),
            "max_clique": max(len(c) for c in cliques),
            "separators": len(separator_collection(g)) if len(cliques) > 1 else 0,
            "vertices": list(g.vertices),
            "added_edges": [list(e) for e in added],
        },
        "global_test": {"statistic": a.global_test.statistic, "df": a.global_test.df,
                        "p_value": a.global_test.p_value},
        "local_test_count": a.local_test_count,
        "streaming": a.streaming,
        "hypotheses": table,
        "decompositions": decomps,
        "estimate": _labels(a.estimate.variables),
    }


def build_report(components: Sequence[dict], estimate: SeedSetEstimate, settings: dict,
                 timing: dict | None = None) -> dict:
    rep = {
        "schema": REPORT_SCHEMA,
        "settings": settings,
        "components": list(components),
        "estimate": {
            "variables": _labels(estimate.variables),
            "per_decomposition_unions": [_labels(u) for u in estimate.per_decomposition_unions],
            "alpha": estimate.alpha,
            "method": estimate.method,
            "permutations": estimate.permutations,
        },
    }
    if timing is not None:
        rep["timing"] = timing
    return rep


def report_to_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=False) + "\n"


def estimate_from_report(report: dict) -> SeedSetEstimate:
    if report.get("schema") != REPORT_SCHEMA:
        raise ValueError(f"unsupported report schema {report.get('schema')!r}")
    e = report["estimate"]
    return SeedSetEstimate(
        frozenset(e["variables"]),
        tuple(frozenset(u) for u in e["per_decomposition_unions"]),
        float(e["alpha"]),
        str(e["method"]),
        int(e["permutations"]),
    )


def _fmt_p(p) -> str:
    return "-" if p is None else f"{p:.3g}"


def format_report_text(report: dict) -> str:
    """Human-readable summary; rejected hypotheses are flagged with '*'."""
    out = []
    s = report["settings"]
    out.append(f"method={s['method']} alpha={s['alpha']} permutations={s['permutations']} seed={s['seed']}")
    for ci, comp in enumerate(report["components"], start=1):
        g = comp["graph"]
        out.append("")
        out.append(f"component {ci}: p={g['p']} k={g['k']} max clique={g['max_clique']} "
                   f"separators={g['separators']}")
        if g["added_edges"]:
            out.append("  triangulation added: " + " ".join(f"{u}-{v}" for u, v in g["added_edges"]))
        gt = comp["global_test"]
        out.append(f"  global LRT: statistic={gt['statistic']:.4g} df={gt['df']} p={gt['p_value']:.3g}")
        out.append(f"  {'':1} {'no':>3}  {'test':<30} {'stat':>10} {'df':>4} {'asym p':>9} "
                   f"{'perm p':>9} {'adj p':>9}")
        for h in comp["hypotheses"]:
            mark = "*" if h["rejected"] else " "
            out.append(
                f"  {mark} {h['no']:>3}  {h['key']:<30} {h['statistic']:>10.4g} {h['df']:>4} "
                f"{_fmt_p(h['asymptotic_p']):>9} {_fmt_p(h['permutation_p']):>9} "
                f"{_fmt_p(h['adjusted_p']):>9}"
            )
        for d in comp["decompositions"]:
            out.append(f"  root {{{','.join(d['root'])}}}: union {{{','.join(d['union'])}}}")
    est = report["estimate"]["variables"]
    out.append("")
    out.append("estimated graphical seed set: {" + ",".join(est) + "}")
    return "\n".join(out)


def format_sets(sets: Iterable[Iterable[str]]) -> str:
    return " ".join("{" + format_set(s) + "}" for s in sets)

