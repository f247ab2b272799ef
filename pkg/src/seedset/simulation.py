"""Scenario generation and the Monte Carlo study harness."""
from __future__ import annotations

import json
import math
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import rng
from .graph import (
    Graph,
    GraphError,
    SeedSetSpec,
    build_graph,
    maximal_cliques,
    oracle_graphical_seed_set,
    sort_labels,
)
from .inference import Method, analyze
from .numerics import (
    DataMatrix,
    GgmParams,
    NotPositiveDefiniteError,
    NumericsError,
    complete_to_graph,
)


def random_decomposable_graph(p: int, n_cliques: int, max_clique: int, seed: int) -> Graph:
    """Connected decomposable graph with exactly ``p`` vertices and ``n_cliques`` cliques.

    Grown as a random clique tree: each new clique shares a proper, nonempty
    subset of an existing clique and adds at least one fresh vertex, so every
    clique stays maximal. Clique sizes are between 2 and ``max_clique``; the
    root clique is as large as the other constraints allow.
    """
    if max_clique < 2 or n_cliques < 1:
        raise GraphError("need max_clique >= 2 and at least one clique")
    if n_cliques == 1:
        if p > max_clique:
            raise GraphError("a single clique cannot hold more than max_clique vertices")
        return build_graph(range(1, p + 1), [(a, b) for a in range(1, p + 1) for b in range(a + 1, p + 1)])
    gen = rng.stream(seed, 0x6EA9)
    lo = max(2, p - (n_cliques - 1) * (max_clique - 1))
    hi = min(max_clique, p - (n_cliques - 1))
    if lo > hi:
        raise GraphError(
            f"cannot build {n_cliques} cliques of size <= {max_clique} on {p} vertices"
        )
    first = hi  # root clique takes the largest admissible size
    fresh = np.ones(n_cliques - 1, dtype=int)
    extra = p - first - (n_cliques - 1)
    while extra > 0:
        room = np.flatnonzero(fresh < max_clique - 1)
        fresh[gen.choice(room)] += 1
        extra -= 1
    next_label = 1
    cliques = [list(range(next_label, next_label + first))]
    next_label += first
    for new in fresh:
        parent = cliques[int(gen.integers(len(cliques)))]
        top = min(len(parent) - 1, max_clique - int(new))
        shared_size = int(gen.integers(1, top + 1))
        shared = sorted(gen.choice(parent, size=shared_size, replace=False).tolist())
        cliques.append(shared + list(range(next_label, next_label + int(new))))
        next_label += int(new)
    edges = set()
    for c in cliques:
        for i, a in enumerate(c):
            for b in c[i + 1 :]:
                edges.add((min(a, b), max(a, b)))
    return build_graph(range(1, p + 1), sorted(edges))


def make_control(g: Graph, seed: int) -> GgmParams:
    """Control condition: N(0.5, 1) means; 0.4/1 equicorrelation completed to the graph."""
    gen = rng.stream(seed, 0xC0)
    mean = gen.normal(0.5, 1.0, size=g.p)
    omega = np.full((g.p, g.p), 0.4) + 0.6 * np.eye(g.p)
    return GgmParams(mean, complete_to_graph(omega, g), g)


def _within_clique(g: Graph, d: frozenset[str]) -> bool:
    return any(d <= c for c in maximal_cliques(g))


def intervene(control: GgmParams, d: SeedSetSpec | Sequence, mean_mult: float, var_mult: float) -> GgmParams:
    """Replace the marginal law of X_D, keeping X_rest | X_D fixed.

    D must lie within one maximal clique, which keeps the new joint Markov to
    the graph.
    """
    dset = d.variables if isinstance(d, SeedSetSpec) else frozenset(str(v) for v in d)
    g = control.graph
    if var_mult <= 0:
        raise ValueError("variance multiplier must be positive")
    if not dset:
        return control
    if not _within_clique(g, dset):
        raise GraphError(f"seed set {{{','.join(sort_labels(dset))}}} is not inside one clique")
    idx = control.index()
    di = [idx[v] for v in sort_labels(dset)]
    ri = [i for i in range(g.p) if i not in set(di)]
    sig, mu = control.covariance, control.mean
    s_d = sig[np.ix_(di, di)]
    s_rd = sig[np.ix_(ri, di)]
    coef = np.linalg.solve(s_d, s_rd.T).T
    cond = sig[np.ix_(ri, ri)] - coef @ s_rd.T
    new_sd = var_mult * s_d
    new = np.empty_like(sig)
    new[np.ix_(di, di)] = new_sd
    new[np.ix_(ri, di)] = coef @ new_sd
    new[np.ix_(di, ri)] = (coef @ new_sd).T
    new[np.ix_(ri, ri)] = cond + coef @ new_sd @ coef.T
    new_mu = mu.copy()
    new_mu[di] = mean_mult * mu[di]
    new_mu[ri] = mu[ri] + coef @ (new_mu[di] - mu[di])
    return GgmParams(new_mu, (new + new.T) / 2, g)


def perturb_seed_set(control: GgmParams, d: Sequence, seed: int) -> GgmParams:
    """Second condition whose minimal seed set is exactly ``d`` (any subset of V).

    Works in canonical parameters (K, h = K mu): only K_vv and h_v for v in D
    move, which leaves the law of X_rest | X_D untouched, keeps K Markov to
    the graph, and makes every vertex of D necessary.
    """
    dset = sort_labels(str(v) for v in d)
    if not dset:
        return control
    gen = rng.stream(seed, 0x9E27)
    idx = control.index()
    k = np.linalg.inv(control.covariance)
    k = (k + k.T) / 2
    h = k @ control.mean
    for v in dset:
        i = idx[v]
        k[i, i] *= 1.0 + gen.uniform(0.3, 1.0)
        h[i] += gen.choice([-1.0, 1.0]) * gen.uniform(0.5, 1.5)
    sigma = np.linalg.inv(k)
    sigma = (sigma + sigma.T) / 2
    return GgmParams(sigma @ h, sigma, control.graph)


def sample_mvn(params: GgmParams, n: int, seed: int, *path: int) -> DataMatrix:
    """n iid draws mu + L z with covariance = L L^T."""
    if n < 1:
        raise ValueError("sample size must be positive")
    try:
        chol = np.linalg.cholesky(params.covariance)
    except np.linalg.LinAlgError:
        raise NotPositiveDefiniteError("covariance is not positive definite") from None
    z = rng.stream(seed, 0x5A, *path).standard_normal((n, params.covariance.shape[0]))
    return DataMatrix(params.mean + z @ chol.T, params.graph.vertices)


@dataclass
class Scenario:
    name: str
    graph: Graph
    control: GgmParams
    post: GgmParams
    seed_set: SeedSetSpec
    oracle_dg: frozenset[str]
    mean_multiplier: float
    variance_multiplier: float


def make_scenario(
    name: str, g: Graph, control: GgmParams, d: Sequence, mean_mult: float, var_mult: float
) -> Scenario:
    if mean_mult == 1.0 and var_mult == 1.0:
        d = ()
    spec = SeedSetSpec.of(g, d)
    post = intervene(control, spec, mean_mult, var_mult)
    dg = oracle_graphical_seed_set(g, spec.variables) if spec.variables else frozenset()
    return Scenario(name, g, control, post, spec, dg, mean_mult, var_mult)


def pick_seed_pair(g: Graph, seed: int) -> list[str]:
    """Two adjacent vertices drawn from one random clique of size >= 2."""
    gen = rng.stream(seed, 0xD5)
    cliques = [c for c in maximal_cliques(g) if len(c) >= 2]
    if not cliques:
        raise GraphError("graph has no clique with two vertices")
    c = sort_labels(cliques[int(gen.integers(len(cliques)))])
    pick = sorted(gen.choice(len(c), size=2, replace=False).tolist())
    return [c[i] for i in pick]


# --------------------------------------------------------------------------
# study configuration

DEFAULT_SCENARIOS = (
    {"name": "none", "mean_multiplier": 1.0, "variance_multiplier": 1.0},
    {"name": "mild", "mean_multiplier": 1.1, "variance_multiplier": 0.5},
    {"name": "moderate", "mean_multiplier": 1.3, "variance_multiplier": 0.5},
    {"name": "strong", "mean_multiplier": 1.7, "variance_multiplier": 0.5},
)


class ConfigError(ValueError):
    pass


@dataclass
class StudyConfig:
    graph: dict
    seed_set: list | str = "auto"
    scenarios: list = field(default_factory=lambda: [dict(s) for s in DEFAULT_SCENARIOS])
    sample_sizes: list = field(default_factory=lambda: [50, 75, 100])
    replicates: int = 100
    alpha: float = 0.05
    permutations: int = 500
    method: str = "maxt"
    seed: int = 1
    workers: int = 1

    def build_graph(self, base_dir: Path | None = None) -> Graph:
        if "path" in self.graph:
            from .io import read_graph

            path = Path(self.graph["path"])
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            return read_graph(path)
        if "vertices" in self.graph:
            return build_graph(self.graph["vertices"], self.graph.get("edges", []))
        gen = self.graph.get("generator", self.graph)
        return random_decomposable_graph(
            int(gen["p"]), int(gen["cliques"]), int(gen["max_clique"]), int(gen.get("seed", self.seed))
        )


def _line_of(text: str, key: str) -> int:
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else 1


def parse_study_config(text: str, source: str = "<config>") -> StudyConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}:1: top level must be a JSON object")

    def fail(key, msg):
        raise ConfigError(f"{source}:{_line_of(text, key)}: {key}: {msg}")

    known = set(StudyConfig.__dataclass_fields__)
    for key in raw:
        if key not in known:
            fail(key, "unknown field")
    if "graph" not in raw or not isinstance(raw["graph"], dict):
        fail("graph", "required object (path, vertices/edges, or generator parameters)")
    g = raw["graph"]
    gen = g.get("generator", g)
    if not ("path" in g or "vertices" in g or all(k in gen for k in ("p", "cliques", "max_clique"))):
        fail("graph", "needs 'path', 'vertices', or generator fields p/cliques/max_clique")
    cfg = StudyConfig(**raw)
    checks = [
        ("replicates", isinstance(cfg.replicates, int) and cfg.replicates >= 1, "must be an integer >= 1"),
        ("permutations", isinstance(cfg.permutations, int) and cfg.permutations >= 1, "must be an integer >= 1"),
        ("alpha", isinstance(cfg.alpha, (int, float)) and 0 < cfg.alpha < 1, "must lie in (0, 1)"),
        ("sample_sizes", isinstance(cfg.sample_sizes, list) and cfg.sample_sizes
         and all(isinstance(n, int) and n >= 2 for n in cfg.sample_sizes), "must be a list of integers >= 2"),
        ("method", cfg.method in {m.value for m in Method}, "must be one of minp, maxt, bonferroni"),
        ("seed", isinstance(cfg.seed, int), "must be an integer"),
        ("workers", isinstance(cfg.workers, int) and cfg.workers >= 1, "must be an integer >= 1"),
        ("seed_set", cfg.seed_set == "auto" or isinstance(cfg.seed_set, list), "must be 'auto' or a list of vertices"),
    ]
    for key, ok, msg in checks:
        if not ok:
            fail(key, msg)
    if not isinstance(cfg.scenarios, list) or not cfg.scenarios:
        fail("scenarios", "must be a nonempty list")
    for s in cfg.scenarios:
        if not isinstance(s, dict) or "name" not in s:
            fail("scenarios", "each scenario needs a name")
        s.setdefault("mean_multiplier", 1.0)
        s.setdefault("variance_multiplier", 1.0)
        if s["variance_multiplier"] <= 0:
            fail("scenarios", f"scenario {s['name']!r}: variance_multiplier must be positive")
    return cfg


def load_study_config(path: str | Path) -> StudyConfig:
    path = Path(path)
    return parse_study_config(path.read_text(encoding="utf-8"), str(path))


@dataclass
class StudyMetrics:
    scenario: str
    n: int
    replicates: int
    failed: int
    exact_recovery_rate: float
    exact_recovery_se: float
    false_positive_rate: float
    false_positive_se: float
    mean_runtime: float
    seed_set: list
    oracle_dg: list

    CSV_FIELDS = (
        "scenario", "n", "replicates", "failed", "exact_recovery_rate",
        "exact_recovery_se", "false_positive_rate", "false_positive_se", "seed_set", "oracle_dg",
    )

    def csv_row(self) -> list[str]:
        d = asdict(self)
        out = []
        for f in self.CSV_FIELDS:
            v = d[f]
            if isinstance(v, list):
                out.append(" ".join(v))
            elif isinstance(v, float):
                out.append(f"{v:.6f}")
            else:
                out.append(str(v))
        return out


@dataclass
class ReplicateOutcome:
    exact: bool
    false_positive: bool
    failed: bool
    runtime: float
    estimate: frozenset[str] = frozenset()


def build_scenarios(cfg: StudyConfig, g: Graph) -> list[Scenario]:
    control = make_control(g, cfg.seed)
    d = pick_seed_pair(g, cfg.seed) if cfg.seed_set == "auto" else [str(v) for v in cfg.seed_set]
    return [
        make_scenario(s["name"], g, control, d, float(s["mean_multiplier"]), float(s["variance_multiplier"]))
        for s in cfg.scenarios
    ]


def run_replicate(sc: Scenario, n: int, cfg: StudyConfig, cell: int, r: int) -> ReplicateOutcome:
    x1 = sample_mvn(sc.control, n, cfg.seed, cell, r, 1)
    x2 = sample_mvn(sc.post, n, cfg.seed, cell, r, 2)
    perm_seed = int(rng.stream(cfg.seed, cell, r, 3).integers(2**63))
    t0 = time.perf_counter()
    try:
        res = analyze(x1, x2, sc.graph, alpha=cfg.alpha, permutations=cfg.permutations,
                      method=cfg.method, seed=perm_seed, threads=1)
    except NumericsError:
        return ReplicateOutcome(False, False, True, time.perf_counter() - t0)
    est = res.estimate.variables
    return ReplicateOutcome(
        est == sc.oracle_dg, not est <= sc.oracle_dg, False, time.perf_counter() - t0, est
    )


def _rate(k: int, m: int) -> tuple[float, float]:
    if m == 0:
        return float("nan"), float("nan")
    r = k / m
    return r, math.sqrt(r * (1 - r) / m)


def run_cell(sc: Scenario, n: int, cfg: StudyConfig, cell: int) -> StudyMetrics:
    def one(r):
        return run_replicate(sc, n, cfg, cell, r)

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            outs = list(pool.map(one, range(cfg.replicates)))
    else:
        outs = [one(r) for r in range(cfg.replicates)]
    ok = [o for o in outs if not o.failed]
    exact, exact_se = _rate(sum(o.exact for o in ok), len(ok))
    fp, fp_se = _rate(sum(o.false_positive for o in ok), len(ok))
    runtime = float(np.mean([o.runtime for o in outs])) if outs else 0.0
    return StudyMetrics(
        sc.name, n, cfg.replicates, len(outs) - len(ok), exact, exact_se, fp, fp_se, runtime,
        sort_labels(sc.seed_set.variables), sort_labels(sc.oracle_dg),
    )


def run_study(cfg: StudyConfig, base_dir: Path | None = None) -> list[StudyMetrics]:
    """One metrics row per (scenario, sample size) cell, in config order."""
    g = cfg.build_graph(base_dir)
    scenarios = build_scenarios(cfg, g)
    out = []
    cell = 0
    for sc in scenarios:
        for n in cfg.sample_sizes:
            out.append(run_cell(sc, n, cfg, cell))
            cell += 1
    return out


def write_metrics_csv(metrics: Sequence[StudyMetrics], path: str | Path) -> None:
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(StudyMetrics.CSV_FIELDS)
        for m in metrics:
            w.writerow(m.csv_row())


def metrics_to_json(metrics: Sequence[StudyMetrics], cfg: StudyConfig) -> dict:
    rows = []
    for m in metrics:
        d = asdict(m)
        for k, v in d.items():
            if isinstance(v, float) and math.isnan(v):
                d[k] = None
        rows.append(d)
    return {"schema": "seedset-study/1", "config": asdict(cfg), "cells": rows}
