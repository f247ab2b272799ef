"""Gaussian numerics: MLE moments, graph-constrained completion, LRT statistics.

All covariance estimates use the maximum likelihood divisor ``n`` rather than
the unbiased ``n - 1``. Determinants are only ever taken through Cholesky
factors, so a failed factorization doubles as the check that the MLE exists.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .graph import (
    Decomposition,
    Graph,
    NotDecomposableError,
    connected_components,
    format_set,
    is_decomposable,
    junction_tree,
)


class NumericsError(ValueError):
    pass


class NotPositiveDefiniteError(NumericsError):
    def __init__(self, message: str, block: Iterable[str] | None = None):
        super().__init__(message)
        self.block = frozenset(block) if block is not None else None


class MleExistenceError(NotPositiveDefiniteError):
    """The sample covariance of a clique is singular, so the MLE does not exist."""


class SampleSizeError(MleExistenceError):
    pass


class LabelMismatchError(NumericsError):
    pass


@dataclass(frozen=True)
class DataMatrix:
    values: np.ndarray
    column_labels: tuple[str, ...]

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=np.float64)
        if vals.ndim != 2:
            raise NumericsError("data matrix must be two-dimensional")
        labels = tuple(str(c) for c in self.column_labels)
        if vals.shape[1] != len(labels):
            raise LabelMismatchError(
                f"{vals.shape[1]} columns but {len(labels)} column labels"
            )
        if len(set(labels)) != len(labels):
            raise LabelMismatchError("duplicate column labels")
        if not np.all(np.isfinite(vals)):
            raise NumericsError("data matrix contains missing or non-finite values")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "column_labels", labels)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def index(self) -> dict[str, int]:
        return {c: i for i, c in enumerate(self.column_labels)}

    def columns(self, labels: Sequence[str]) -> np.ndarray:
        idx = self.index()
        try:
            cols = [idx[str(c)] for c in labels]
        except KeyError as exc:
            raise LabelMismatchError(f"unknown column {exc.args[0]!r}") from None
        return self.values[:, cols]

    def aligned(self, labels: Sequence[str]) -> "DataMatrix":
        """Reorder columns to ``labels``; they must match one-to-one."""
        labels = tuple(str(c) for c in labels)
        if set(labels) != set(self.column_labels) or len(labels) != self.p:
            missing = sorted(set(labels) - set(self.column_labels))
            extra = sorted(set(self.column_labels) - set(labels))
            raise LabelMismatchError(
                f"columns do not match graph vertices (missing: {missing}, unexpected: {extra})"
            )
        return DataMatrix(self.columns(labels), labels)


@dataclass(frozen=True)
class GgmParams:
    mean: np.ndarray
    covariance: np.ndarray
    graph: Graph

    @property
    def labels(self) -> tuple[str, ...]:
        return self.graph.vertices

    def index(self) -> dict[str, int]:
        return {v: i for i, v in enumerate(self.graph.vertices)}

    def block(self, vertices: Sequence[str]):
        idx = self.index()
        ix = [idx[v] for v in vertices]
        return self.mean[ix], self.covariance[np.ix_(ix, ix)]

    def markov_violation(self) -> float:
        return markov_violation(self.covariance, self.graph)

    def validate(self, tol: float = 1e-9) -> None:
        try:
            np.linalg.cholesky(self.covariance)
        except np.linalg.LinAlgError:
            raise NotPositiveDefiniteError("covariance is not positive definite") from None
        viol = self.markov_violation()
        if viol > tol:
            raise NumericsError(f"inverse covariance not Markov to the graph (max {viol:.3g})")


def markov_violation(sigma: np.ndarray, g: Graph) -> float:
    """Largest |K_uv| over missing edges after scaling K to unit diagonal."""
    k = np.linalg.inv(sigma)
    d = 1.0 / np.sqrt(np.diag(k))
    k = k * d[:, None] * d[None, :]
    idx = {v: i for i, v in enumerate(g.vertices)}
    worst = 0.0
    verts = g.vertices
    for a in range(len(verts)):
        for b in range(a + 1, len(verts)):
            if not g.has_edge(verts[a], verts[b]):
                worst = max(worst, abs(k[idx[verts[a]], idx[verts[b]]]))
    return worst


def sample_moments(x: DataMatrix | np.ndarray):
    vals = x.values if isinstance(x, DataMatrix) else np.asarray(x, dtype=np.float64)
    n = vals.shape[0]
    if n < 2:
        raise SampleSizeError(f"need at least 2 observations, got {n}")
    mean = vals.mean(axis=0)
    centered = vals - mean
    return mean, centered.T @ centered / n


def pooled_covariance(x1: DataMatrix, x2: DataMatrix) -> np.ndarray:
    """MLE of the common covariance under equality of both distributions."""
    if x1.column_labels != x2.column_labels:
        raise LabelMismatchError("the two samples have different column labels")
    n1, n2 = x1.n, x2.n
    mean = (n1 * x1.values.mean(axis=0) + n2 * x2.values.mean(axis=0)) / (n1 + n2)
    c1 = x1.values - mean
    c2 = x2.values - mean
    return (c1.T @ c1 + c2.T @ c2) / (n1 + n2)


def _pieces(g: Graph):
    """Cliques and junction-tree separators (with multiplicity) over all components."""
    cliques, seps = [], []
    for comp in connected_components(g):
        if comp.p == 1:
            cliques.append(frozenset(comp.vertices))
            continue
        tree = junction_tree(comp)
        cliques.extend(tree.cliques)
        seps.extend(s for _, _, s in tree.edges)
    return cliques, seps


def _chol_inv(block: np.ndarray, what: Iterable[str]) -> np.ndarray:
    try:
        chol = np.linalg.cholesky(block)
    except np.linalg.LinAlgError:
        raise NotPositiveDefiniteError(
            f"block {{{format_set(what)}}} is not positive definite", what
        ) from None
    inv_l = np.linalg.inv(chol)
    return inv_l.T @ inv_l


def concentration_from_blocks(omega: np.ndarray, g: Graph) -> np.ndarray:
    """K = sum of padded clique-block inverses minus padded separator-block inverses."""
    if not is_decomposable(g):
        raise NotDecomposableError("covariance completion needs a decomposable graph")
    omega = np.asarray(omega, dtype=np.float64)
    idx = {v: i for i, v in enumerate(g.vertices)}
    k = np.zeros_like(omega)
    cliques, seps = _pieces(g)
    for sign, sets in ((1.0, cliques), (-1.0, seps)):
        for c in sets:
            ix = [idx[v] for v in c]
            k[np.ix_(ix, ix)] += sign * _chol_inv(omega[np.ix_(ix, ix)], c)
    return k


def complete_to_graph(omega: np.ndarray, g: Graph) -> np.ndarray:
    """Covariance matching ``omega`` on every clique whose inverse is Markov to ``g``."""
    omega = np.asarray(omega, dtype=np.float64)
    if omega.shape != (g.p, g.p) or not np.allclose(omega, omega.T, rtol=0, atol=1e-12):
        raise NumericsError("omega must be a symmetric p x p matrix")
    try:
        np.linalg.cholesky(omega)
    except np.linalg.LinAlgError:
        raise NotPositiveDefiniteError("omega is not positive definite") from None
    k = concentration_from_blocks(omega, g)
    sigma = _chol_inv(k, g.vertices)
    return (sigma + sigma.T) / 2


def logdet(mat: np.ndarray, what: Iterable[str] = ()) -> float:
    try:
        chol = np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        raise NotPositiveDefiniteError(
            f"block {{{format_set(what)}}} is not positive definite", what
        ) from None
    return float(2.0 * np.log(np.diag(chol)).sum())


def graph_logdet(sigma: np.ndarray, d: Decomposition, labels: Sequence[str]) -> float:
    """log|sigma| from its clique and separator blocks along a decomposition."""
    idx = {v: i for i, v in enumerate(labels)}
    total = 0.0
    for _, c, s in d.slots():
        ic = [idx[v] for v in c]
        total += logdet(sigma[np.ix_(ic, ic)], c)
        if s:
            is_ = [idx[v] for v in s]
            total -= logdet(sigma[np.ix_(is_, is_)], s)
    return total


def df_complete(size: int) -> int:
    """Degrees of freedom for equality of an unconstrained ``size``-variate normal."""
    return 2 * size + size * (size - 1) // 2


@dataclass(frozen=True)
class LrtValue:
    statistic: float
    df: int
    target: frozenset[str]
    given: frozenset[str] = frozenset()

    @property
    def scope(self) -> str:
        return "conditional" if self.given else "marginal"

    @property
    def p_value(self) -> float:
        return chisq_sf(self.statistic, self.df)


def _check_sample_size(n1: int, n2: int, block: frozenset[str]) -> None:
    if min(n1, n2) <= len(block):
        raise SampleSizeError(
            f"MLE does not exist for {{{format_set(block)}}}: "
            f"min(n1, n2) = {min(n1, n2)} must exceed its size {len(block)}",
            block,
        )


def _lambda_raw(a: Sequence[str], x1: DataMatrix, x2: DataMatrix) -> float:
    if not a:
        return 0.0
    block = frozenset(a)
    _check_sample_size(x1.n, x2.n, block)
    a = list(a)
    s1 = x1.columns(a)
    s2 = x2.columns(a)
    n1, n2 = len(s1), len(s2)
    pooled = pooled_covariance(DataMatrix(s1, a), DataMatrix(s2, a))
    try:
        ld = logdet(pooled, block)
        ld1 = logdet(sample_moments(s1)[1], block)
        ld2 = logdet(sample_moments(s2)[1], block)
    except NotPositiveDefiniteError as exc:
        raise MleExistenceError(f"MLE does not exist: {exc}", block) from None
    return (n1 + n2) * ld - n1 * ld1 - n2 * ld2


def lrt_marginal(a: Iterable[str], x1: DataMatrix, x2: DataMatrix) -> LrtValue:
    """LRT for equal mean and covariance of the sub-vector indexed by ``a``."""
    a = frozenset(str(v) for v in a)
    stat = _lambda_raw(sorted(a), x1, x2)
    return LrtValue(max(stat, 0.0), df_complete(len(a)), a)


def lrt_conditional(c: Iterable[str], s: Iterable[str], x1: DataMatrix, x2: DataMatrix) -> LrtValue:
    """LRT for equality of the law of X_{c - s} given X_s (lambda(c) - lambda(s))."""
    c = frozenset(str(v) for v in c)
    s = frozenset(str(v) for v in s)
    if not s < c:
        raise NumericsError("conditioning set must be a proper subset of the clique")
    _check_sample_size(x1.n, x2.n, c)
    stat = _lambda_raw(sorted(c), x1, x2) - _lambda_raw(sorted(s), x1, x2)
    return LrtValue(max(stat, 0.0), df_complete(len(c)) - df_complete(len(s)), c - s, s)


def decomposed_lrt(x1: DataMatrix, x2: DataMatrix, d: Decomposition) -> float:
    """Sum of the local terms of one decomposition (the global LRT on the graph)."""
    return sum(lrt_conditional(c, s, x1, x2).statistic for _, c, s in d.slots())


def graph_constrained_lrt(x1: DataMatrix, x2: DataMatrix, g: Graph) -> float:
    """Global LRT from dense log-determinants of graph-completed MLEs.

    Independent of any decomposition; used to check the decomposed sum.
    """
    labels = list(g.vertices)
    a1, a2 = x1.aligned(labels), x2.aligned(labels)
    pooled = complete_to_graph(pooled_covariance(a1, a2), g)
    g1 = complete_to_graph(sample_moments(a1)[1], g)
    g2 = complete_to_graph(sample_moments(a2)[1], g)
    n1, n2 = a1.n, a2.n
    return (n1 + n2) * logdet(pooled) - n1 * logdet(g1) - n2 * logdet(g2)


def global_df(g: Graph) -> int:
    return len(g.edges) + 2 * g.p


def chisq_logsf(x: float, df: int) -> float:
    if x < 0:
        raise ValueError(f"chi-square quantile must be nonnegative, got {x}")
    if int(df) != df or df < 1:
        raise ValueError(f"degrees of freedom must be a positive integer, got {df}")
    return float(kernels.chisq_logsf(np.array([float(x)]), np.array([int(df)], dtype=np.int64))[0])


def chisq_sf(x: float, df: int) -> float:
    """Upper-tail probability of the chi-square distribution."""
    return min(1.0, math.exp(chisq_logsf(x, df)))


def chisq_sf_array(x: np.ndarray, df: np.ndarray) -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=np.float64)
    df = np.ascontiguousarray(df, dtype=np.int64)
    if np.any(x < 0):
        raise ValueError("chi-square quantiles must be nonnegative")
    return np.minimum(1.0, np.exp(kernels.chisq_logsf(x, df)))
