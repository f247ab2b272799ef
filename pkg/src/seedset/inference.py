"""Local hypotheses, permutation step-down testing and the seed set estimator."""
from __future__ import annotations

import enum
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from . import kernels, rng
from .graph import Decomposition, Graph, all_decompositions, format_set, sort_labels
from .numerics import (
    DataMatrix,
    GgmParams,
    LabelMismatchError,
    MleExistenceError,
    SampleSizeError,
    chisq_sf_array,
    df_complete,
    global_df,
    pooled_covariance,
)

DEFAULT_MEMORY_BUDGET = 256 * 2**20
_TIE_RTOL = 1e-10


class Method(str, enum.Enum):
    MINP = "minp"
    MAXT = "maxt"
    BONFERRONI = "bonferroni"


class InferenceError(ValueError):
    pass


class MemoryBudgetError(InferenceError):
    pass


@dataclass(frozen=True)
class Hypothesis:
    target: frozenset[str]
    given: frozenset[str]
    key: str
    memberships: tuple[tuple[int, int], ...]

    @property
    def clique(self) -> frozenset[str]:
        return self.target | self.given


def hypothesis_key(target: Iterable[str], given: Iterable[str]) -> str:
    return f"{format_set(target)}|{format_set(given)}"


@dataclass(frozen=True)
class TestResult:
    hypothesis: str
    statistic: float
    df: int
    asymptotic_p: float
    permutation_p: float | None = None
    adjusted_p: float | None = None
    rejected: bool = False

    __test__ = False  # not a pytest class


@dataclass(frozen=True)
class SeedSetEstimate:
    variables: frozenset[str]
    per_decomposition_unions: tuple[frozenset[str], ...]
    alpha: float
    method: str
    permutations: int


def enumerate_hypotheses(decomps: Sequence[Decomposition]) -> list[Hypothesis]:
    """Distinct local hypotheses (C - S | S) in order of first appearance."""
    slots: dict[tuple[frozenset, frozenset], list[tuple[int, int]]] = {}
    for i, d in enumerate(decomps):
        for j, c, s in d.slots():
            slots.setdefault((c - s, s), []).append((i, j))
    return [
        Hypothesis(t, s, hypothesis_key(t, s), tuple(m)) for (t, s), m in slots.items()
    ]


def local_test_count(decomps: Sequence[Decomposition]) -> int:
    """k + sum over cliques of the number of distinct separators attached to it."""
    k = len(decomps)
    attached: dict[frozenset, set[frozenset]] = {}
    for d in decomps:
        for _, c, s in d.slots():
            if s:
                attached.setdefault(c, set()).add(s)
    return k + sum(len(v) for v in attached.values())


class LocalTests:
    """Precomputed index structure for evaluating every local statistic at once.

    The distinct cliques and separators are stored in CSR form over column
    indices so the kernels can take all block log-determinants in one call.
    """

    def __init__(self, hyps: Sequence[Hypothesis], labels: Sequence[str]):
        self.hypotheses = list(hyps)
        self.labels = tuple(labels)
        col = {v: i for i, v in enumerate(self.labels)}
        sets: list[frozenset[str]] = []
        where: dict[frozenset[str], int] = {}

        def slot(s: frozenset[str]) -> int:
            if not s:
                return -1
            if s not in where:
                where[s] = len(sets)
                sets.append(s)
            return where[s]

        self.c_index = np.array([slot(h.clique) for h in hyps], dtype=np.int64)
        self.s_index = np.array([slot(h.given) for h in hyps], dtype=np.int64)
        self.sets = sets
        self.offsets = np.zeros(len(sets) + 1, dtype=np.int64)
        members = []
        for i, s in enumerate(sets):
            members.extend(sorted(col[v] for v in s))
            self.offsets[i + 1] = len(members)
        self.members = np.array(members, dtype=np.int64)
        self.df = np.array(
            [df_complete(len(h.clique)) - df_complete(len(h.given)) for h in hyps], dtype=np.int64
        )
        self.max_block = max((len(s) for s in sets), default=0)

    @property
    def keys(self) -> list[str]:
        return [h.key for h in self.hypotheses]

    def logdets(self, cov: np.ndarray) -> np.ndarray:
        return kernels.block_logdets(cov, self.members, self.offsets)

    def _hypothesis_for(self, set_idx: int) -> Hypothesis:
        for h, c in zip(self.hypotheses, self.c_index):
            if c == set_idx:
                return h
        return next(h for h, s in zip(self.hypotheses, self.s_index) if s == set_idx)

    def statistics(self, ld_pooled, ld1, ld2, n1: int, n2: int) -> np.ndarray:
        for arr in (ld_pooled, ld1, ld2):
            bad = np.flatnonzero(~np.isfinite(arr))
            if bad.size:
                block = self.sets[bad[0]]
                h = self._hypothesis_for(bad[0])
                raise MleExistenceError(
                    f"MLE does not exist for clique {{{format_set(block)}}} "
                    f"(hypothesis {h.key}): its sample covariance is singular",
                    block,
                )
        lam = (n1 + n2) * ld_pooled - n1 * ld1 - n2 * ld2
        lam = np.concatenate([lam, [0.0]])  # index -1 -> empty set
        stat = lam[self.c_index] - lam[self.s_index]
        return np.maximum(stat, 0.0)


def _stacked(x1: DataMatrix, x2: DataMatrix, labels: Sequence[str]):
    a1 = DataMatrix(x1.columns(labels), labels)
    a2 = DataMatrix(x2.columns(labels), labels)
    return a1, a2, np.ascontiguousarray(np.vstack([a1.values, a2.values]))


def _check_sizes(tests: LocalTests, n1: int, n2: int) -> None:
    if min(n1, n2) <= tests.max_block:
        biggest = max(tests.sets, key=len)
        raise SampleSizeError(
            f"MLE does not exist: min(n1, n2) = {min(n1, n2)} must exceed the largest "
            f"clique size {len(biggest)} (clique {{{format_set(biggest)}}})",
            biggest,
        )


def _labels_of(hyps: Sequence[Hypothesis], x1: DataMatrix) -> list[str]:
    used = set().union(*(h.clique for h in hyps)) if hyps else set()
    missing = used - set(x1.column_labels)
    if missing:
        raise LabelMismatchError(f"data lacks columns for vertices {sort_labels(missing)}")
    return [c for c in x1.column_labels if c in used]


class _Engine:
    def __init__(self, hyps, x1: DataMatrix, x2: DataMatrix):
        if set(x1.column_labels) != set(x2.column_labels):
            raise LabelMismatchError("the two samples have different column labels")
        labels = _labels_of(hyps, x1)
        self.tests = LocalTests(hyps, labels)
        a1, a2, self.x = _stacked(x1, x2, labels)
        self.n1, self.n2 = a1.n, a2.n
        _check_sizes(self.tests, self.n1, self.n2)
        self.ld_pooled = self.tests.logdets(np.ascontiguousarray(pooled_covariance(a1, a2)))

    def stats_for(self, order: np.ndarray) -> np.ndarray:
        rows1 = np.ascontiguousarray(order[: self.n1], dtype=np.int64)
        rows2 = np.ascontiguousarray(order[self.n1 :], dtype=np.int64)
        ld1 = self.tests.logdets(kernels.group_covariance(self.x, rows1))
        ld2 = self.tests.logdets(kernels.group_covariance(self.x, rows2))
        return self.tests.statistics(self.ld_pooled, ld1, ld2, self.n1, self.n2)

    def observed(self) -> np.ndarray:
        return self.stats_for(np.arange(self.n1 + self.n2))

    def replicate(self, seed: int, b: int, identity: bool = False) -> np.ndarray:
        n = self.n1 + self.n2
        order = np.arange(n) if identity else rng.permutation(seed, b, n)
        return self.stats_for(order)


def compute_statistics(hyps: Sequence[Hypothesis], x1: DataMatrix, x2: DataMatrix) -> list[TestResult]:
    """Observed local LRT statistics with asymptotic chi-square p-values."""
    eng = _Engine(hyps, x1, x2)
    stat = eng.observed()
    p = chisq_sf_array(stat, eng.tests.df)
    return [
        TestResult(h.key, float(t), int(df), float(pv))
        for h, t, df, pv in zip(hyps, stat, eng.tests.df, p)
    ]


def resolve_threads(threads: int | None = None) -> int:
    if threads is None:
        env = os.environ.get("SEEDSET_THREADS")
        threads = int(env) if env else min(os.cpu_count() or 1, 8)
    return max(1, int(threads))


def _run_replicates(fn, B: int, threads: int):
    """Call ``fn(b)`` for b in 0..B-1; results come back indexed by b."""
    if threads == 1 or B < 2:
        return [fn(b) for b in range(B)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(B), chunksize=max(1, B // (4 * threads))))


def permutation_null(
    hyps: Sequence[Hypothesis],
    x1: DataMatrix,
    x2: DataMatrix,
    B: int,
    seed: int,
    *,
    threads: int | None = None,
    identity: bool = False,
    memory_budget: int = DEFAULT_MEMORY_BUDGET,
) -> np.ndarray:
    """B x H matrix of local statistics under random relabelling of the pooled rows.

    Replicate ``b`` draws its permutation from its own stream keyed by
    ``(seed, b)``, so the matrix does not depend on ``threads``.
    ``identity=True`` replaces every permutation by the identity (debugging).
    """
    if B < 1:
        raise InferenceError("number of permutations must be at least 1")
    if B * len(hyps) * 8 > memory_budget:
        raise MemoryBudgetError(
            f"B x H = {B} x {len(hyps)} null matrix exceeds the memory budget; "
            "use permutation_summary (streaming mode)"
        )
    eng = _Engine(hyps, x1, x2)
    rows = _run_replicates(lambda b: eng.replicate(seed, b, identity), B, resolve_threads(threads))
    return np.vstack(rows)


def _ge(values: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """values >= ref with a small relative tolerance for floating-point ties."""
    return values >= ref - _TIE_RTOL * np.maximum(1.0, np.abs(ref))


def _maxt_scores(stat: np.ndarray, df: np.ndarray) -> np.ndarray:
    # -log of the asymptotic p-value; comparable across different df
    return -kernels.chisq_logsf(np.ascontiguousarray(stat, dtype=np.float64),
                                np.ascontiguousarray(df, dtype=np.int64))


def _stepdown_order(primary: np.ndarray, keys: Sequence[str]) -> np.ndarray:
    """Indices sorted by ``primary`` ascending, ties broken by key."""
    return np.array(sorted(range(len(keys)), key=lambda h: (primary[h], keys[h])), dtype=np.int64)


@dataclass
class NullSummary:
    """Streaming reduction of the permutation null (maxT only).

    ``exceed[h]`` counts replicates whose statistic reaches the observed one;
    ``step_exceed[r]`` counts replicates whose successive maximum over the
    hypotheses from step ``r`` onward reaches the observed score at step ``r``.
    """

    B: int
    order: np.ndarray
    exceed: np.ndarray
    step_exceed: np.ndarray


def permutation_summary(
    hyps: Sequence[Hypothesis],
    x1: DataMatrix,
    x2: DataMatrix,
    B: int,
    seed: int,
    *,
    threads: int | None = None,
    identity: bool = False,
) -> NullSummary:
    if B < 1:
        raise InferenceError("number of permutations must be at least 1")
    eng = _Engine(hyps, x1, x2)
    df = eng.tests.df
    obs = eng.observed()
    obs_score = _maxt_scores(obs, df)
    order = _stepdown_order(-obs_score, eng.tests.keys)
    obs_sorted = obs_score[order]

    def one(b):
        t = eng.replicate(seed, b, identity)
        u = _maxt_scores(t, df)[order]
        succ = np.maximum.accumulate(u[::-1])[::-1]
        return _ge(t, obs).astype(np.int64), _ge(succ, obs_sorted).astype(np.int64)

    parts = _run_replicates(one, B, resolve_threads(threads))
    exceed = np.sum([p[0] for p in parts], axis=0)
    step = np.sum([p[1] for p in parts], axis=0)
    return NullSummary(B, order, exceed, step)


def _raw_permutation_p(observed: np.ndarray, null: np.ndarray) -> np.ndarray:
    B = null.shape[0]
    return (1.0 + _ge(null, observed[None, :]).sum(axis=0)) / (B + 1.0)


def _monotone(adj_sorted: np.ndarray) -> np.ndarray:
    return np.minimum(1.0, np.maximum.accumulate(adj_sorted))


def stepdown_adjust(
    observed: Sequence[TestResult],
    null_matrix: np.ndarray | NullSummary,
    method: Method | str = Method.MINP,
    alpha: float | None = None,
) -> list[TestResult]:
    """Westfall-Young step-down adjusted p-values (add-one convention).

    ``minp`` works on permutation p-values; ``maxt`` works on the per-hypothesis
    score -log(asymptotic p), which puts statistics with different degrees of
    freedom on a common scale.
    """
    method = Method(method)
    keys = [r.hypothesis for r in observed]
    H = len(observed)
    stat = np.array([r.statistic for r in observed], dtype=np.float64)
    df = np.array([r.df for r in observed], dtype=np.int64)

    if isinstance(null_matrix, NullSummary):
        if method is not Method.MAXT:
            raise InferenceError("streaming null summaries support only the maxt method")
        s = null_matrix
        raw = (1.0 + s.exceed) / (s.B + 1.0)
        adj_sorted = _monotone((1.0 + s.step_exceed) / (s.B + 1.0))
        order = s.order
    else:
        null = np.asarray(null_matrix, dtype=np.float64)
        if null.ndim != 2 or null.shape[1] != H:
            raise InferenceError(
                f"null matrix has shape {null.shape}, expected (B, {H}) for {method.value}"
            )
        B = null.shape[0]
        # snap near-ties to the observed value so all later comparisons are exact
        null = np.where(np.abs(null - stat) <= _TIE_RTOL * np.maximum(1.0, np.abs(stat)), stat, null)
        raw = _raw_permutation_p(stat, null)
        if method is Method.MINP:
            order = _stepdown_order(raw, keys)
            both = np.vstack([stat[None, :], null])
            # rank (count of values >= it) of each null statistic in its column,
            # observed included; dividing by B + 1 gives its permutation p-value
            null_rank = np.empty(null.shape, dtype=np.int64)
            for h in range(H):
                col = np.sort(both[:, h])
                null_rank[:, h] = len(col) - np.searchsorted(col, null[:, h], side="left")
            raw_rank = np.rint(raw * (B + 1)).astype(np.int64)
            q = np.minimum.accumulate(null_rank[:, order][:, ::-1], axis=1)[:, ::-1]
            counts = (q <= raw_rank[order][None, :]).sum(axis=0)
        else:
            score = _maxt_scores(stat, df)
            order = _stepdown_order(-score, keys)
            null_score = np.vstack([_maxt_scores(row, df) for row in null])
            m = np.maximum.accumulate(null_score[:, order][:, ::-1], axis=1)[:, ::-1]
            counts = _ge(m, score[order][None, :]).sum(axis=0)
        adj_sorted = _monotone((1.0 + counts) / (B + 1.0))

    adj = np.empty(H)
    adj[order] = adj_sorted
    adj = np.maximum(adj, raw)
    out = []
    for r, pr, pa in zip(observed, raw, adj):
        out.append(replace(r, permutation_p=float(pr), adjusted_p=float(pa),
                           rejected=bool(alpha is not None and pa <= alpha)))
    return out


def bonferroni_adjust(observed: Sequence[TestResult], factor: int, alpha: float | None = None):
    out = []
    for r in observed:
        pa = min(1.0, r.asymptotic_p * factor)
        out.append(replace(r, permutation_p=None, adjusted_p=pa,
                           rejected=bool(alpha is not None and pa <= alpha)))
    return out


def seed_set_from_decisions(decisions, decomps: Sequence[Decomposition]):
    """Intersection over decompositions of the union of rejected cliques."""
    unions = []
    for i, d in enumerate(decomps):
        u: set[str] = set()
        for j, c, _ in d.slots():
            if decisions[i][j]:
                u |= c
        unions.append(frozenset(u))
    if not unions or any(not u for u in unions):
        return frozenset(), tuple(unions)
    return frozenset.intersection(*unions), tuple(unions)


def decision_matrix(results: Sequence[TestResult], decomps: Sequence[Decomposition], alpha: float):
    by_key = {r.hypothesis: r for r in results}
    mat = np.zeros((len(decomps), max((d.k for d in decomps), default=0)), dtype=bool)
    for i, d in enumerate(decomps):
        for j, c, s in d.slots():
            key = hypothesis_key(c - s, s)
            if key not in by_key:
                raise InferenceError(f"no test result for slot ({i}, {j}) hypothesis {key}")
            r = by_key[key]
            p = r.adjusted_p if r.adjusted_p is not None else r.asymptotic_p
            mat[i, j] = p <= alpha
    return mat


def estimate_seed_set(
    results,
    decomps: Sequence[Decomposition],
    alpha: float = 0.05,
    *,
    method: str = Method.MINP.value,
    permutations: int = 0,
) -> SeedSetEstimate:
    """Graphical seed set estimate from test results or a 0/1 decision matrix.

    ``results`` is either a list of :class:`TestResult` (rejection means
    adjusted p <= alpha) or an array-like ``decisions[i][j]`` indexed by
    decomposition and position, such as the output of :func:`oracle_decisions`.
    """
    if len(results) and isinstance(results[0], TestResult):
        decisions = decision_matrix(results, decomps, alpha)
    elif not len(results):
        decisions = np.zeros((len(decomps), max((d.k for d in decomps), default=0)), dtype=bool)
    else:
        decisions = results
    variables, unions = seed_set_from_decisions(decisions, decomps)
    return SeedSetEstimate(variables, unions, alpha, str(Method(method).value), permutations)


def _conditional_law(p: GgmParams, target: Sequence[str], given: Sequence[str]):
    mu_b, sig_b = p.block(target)
    if not given:
        return [mu_b, sig_b]
    idx = p.index()
    ib = [idx[v] for v in target]
    is_ = [idx[v] for v in given]
    cov = p.covariance
    sig_bs = cov[np.ix_(ib, is_)]
    sig_s = cov[np.ix_(is_, is_)]
    coef = np.linalg.solve(sig_s, sig_bs.T).T
    intercept = mu_b - coef @ p.mean[is_]
    cond_cov = sig_b - coef @ sig_bs.T
    return [intercept, coef, cond_cov]


def oracle_decisions(p1: GgmParams, p2: GgmParams, decomps: Sequence[Decomposition], tol: float = 1e-9):
    """True decisions: slot (i, j) is 1 iff the law of X_{C-S} | X_S differs."""
    if p1.graph.vertices != p2.graph.vertices or p1.graph.edges != p2.graph.edges:
        raise InferenceError("parameter sets are defined on different graphs")
    k = max((d.k for d in decomps), default=0)
    out = np.zeros((len(decomps), k), dtype=bool)
    cache: dict[tuple, bool] = {}
    for i, d in enumerate(decomps):
        for j, c, s in d.slots():
            key = (c - s, s)
            if key not in cache:
                t, g = sort_labels(c - s), sort_labels(s)
                law1 = _conditional_law(p1, t, g)
                law2 = _conditional_law(p2, t, g)
                cache[key] = any(np.max(np.abs(a - b)) > tol for a, b in zip(law1, law2))
            out[i, j] = cache[key]
    return out


@dataclass
class GlobalTest:
    statistic: float
    df: int
    p_value: float


@dataclass
class Analysis:
    estimate: SeedSetEstimate
    results: list[TestResult]
    hypotheses: list[Hypothesis]
    decompositions: list[Decomposition]
    global_test: GlobalTest
    local_test_count: int
    streaming: bool = False
    extras: dict = field(default_factory=dict)


def analyze(
    x1: DataMatrix,
    x2: DataMatrix,
    g: Graph,
    *,
    alpha: float = 0.05,
    permutations: int = 1000,
    method: Method | str = Method.MINP,
    seed: int = 0,
    threads: int | None = None,
    memory_budget: int = DEFAULT_MEMORY_BUDGET,
) -> Analysis:
    """Full pipeline on one connected decomposable graph."""
    method = Method(method)
    decomps = all_decompositions(g)
    hyps = enumerate_hypotheses(decomps)
    observed = compute_statistics(hyps, x1, x2)
    m = local_test_count(decomps)
    streaming = False
    if method is Method.BONFERRONI:
        results = bonferroni_adjust(observed, m, alpha)
        B = 0
    else:
        B = permutations
        if B * len(hyps) * 8 > memory_budget:
            if method is not Method.MAXT:
                raise MemoryBudgetError(
                    f"minP needs the full {B} x {len(hyps)} null matrix, which exceeds the "
                    "memory budget; use --method maxt or fewer permutations"
                )
            null = permutation_summary(hyps, x1, x2, B, seed, threads=threads)
            streaming = True
        else:
            null = permutation_null(hyps, x1, x2, B, seed, threads=threads,
                                    memory_budget=memory_budget)
        results = stepdown_adjust(observed, null, method, alpha)
    estimate = estimate_seed_set(results, decomps, alpha, method=method.value, permutations=B)
    # the first decomposition's terms sum to the global LRT
    by_key = {r.hypothesis: r for r in observed}
    glob = sum(by_key[hypothesis_key(c - s, s)].statistic for _, c, s in decomps[0].slots())
    gdf = global_df(g)
    gp = float(chisq_sf_array(np.array([glob]), np.array([gdf]))[0])
    return Analysis(estimate, results, hyps, decomps, GlobalTest(float(glob), gdf, gp), m, streaming)
