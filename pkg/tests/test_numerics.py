import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from seedset.graph import all_decompositions, build_graph, maximal_cliques
from seedset.numerics import (
    DataMatrix,
    LabelMismatchError,
    MleExistenceError,
    NotPositiveDefiniteError,
    NumericsError,
    SampleSizeError,
    chisq_sf,
    chisq_sf_array,
    complete_to_graph,
    decomposed_lrt,
    df_complete,
    global_df,
    graph_constrained_lrt,
    graph_logdet,
    logdet,
    lrt_conditional,
    lrt_marginal,
    markov_violation,
    pooled_covariance,
    sample_moments,
)

from conftest import gaussian_data, random_chordal


def equicorrelated(p, rho=0.4):
    return np.full((p, p), rho) + (1 - rho) * np.eye(p)


# -- data matrix -----------------------------------------------------------


def test_data_matrix_validation():
    with pytest.raises(NumericsError):
        DataMatrix(np.ones((3, 2)), ["a"])
    with pytest.raises(NumericsError):
        DataMatrix(np.array([[1.0, np.nan]]), ["a", "b"])
    with pytest.raises(NumericsError):
        DataMatrix(np.ones((2, 2)), ["a", "a"])


def test_data_matrix_alignment():
    x = DataMatrix(np.arange(6.0).reshape(2, 3), ["a", "b", "c"])
    assert x.aligned(["c", "a", "b"]).values[0].tolist() == [2.0, 0.0, 1.0]
    with pytest.raises(LabelMismatchError):
        x.columns(["z"])


# -- moments ---------------------------------------------------------------


def test_moments_trivial():
    _, cov = sample_moments(np.array([[1.0, 2.0], [1.0, 2.0]]))
    assert np.all(cov == 0)
    mean, cov = sample_moments(np.array([[0.0], [2.0]]))
    assert mean[0] == 1.0 and cov[0, 0] == 1.0


def test_moments_brute_force():
    x = np.random.default_rng(1).normal(size=(5, 3))
    mean, cov = sample_moments(x)
    m = [sum(x[i, j] for i in range(5)) / 5 for j in range(3)]
    c = [[sum((x[i, a] - m[a]) * (x[i, b] - m[b]) for i in range(5)) / 5 for b in range(3)] for a in range(3)]
    np.testing.assert_allclose(mean, m, atol=1e-15)
    np.testing.assert_allclose(cov, c, atol=1e-14)


def test_moments_need_two_rows():
    with pytest.raises(SampleSizeError):
        sample_moments(np.ones((1, 2)))


def test_pooled_covariance_identities():
    rng = np.random.default_rng(2)
    labels = ["a", "b", "c"]
    x1 = DataMatrix(rng.normal(size=(20, 3)), labels)
    np.testing.assert_allclose(pooled_covariance(x1, x1), sample_moments(x1)[1], atol=1e-14)
    x2 = DataMatrix(rng.normal(size=(13, 3)), labels)
    stacked = np.vstack([x1.values, x2.values])
    np.testing.assert_allclose(pooled_covariance(x1, x2), sample_moments(stacked)[1], atol=1e-14)
    c = 0.7
    shifted = DataMatrix(x1.values + c, labels)
    expected = sample_moments(x1)[1] + c * c / 4 * np.ones((3, 3))
    np.testing.assert_allclose(pooled_covariance(x1, shifted), expected, atol=1e-13)


def test_pooled_covariance_label_mismatch():
    with pytest.raises(LabelMismatchError):
        pooled_covariance(DataMatrix(np.ones((2, 1)), ["a"]), DataMatrix(np.ones((2, 1)), ["b"]))


# -- completion ------------------------------------------------------------


def test_completion_complete_and_empty():
    omega = equicorrelated(4)
    k4 = build_graph("abcd", [(a, b) for a in "abcd" for b in "abcd" if a < b])
    np.testing.assert_allclose(complete_to_graph(omega, k4), omega, atol=1e-14)
    empty = build_graph("abcd", [])
    np.testing.assert_allclose(complete_to_graph(omega, empty), np.eye(4), atol=1e-14)


def test_completion_fig1(fig1):
    omega = equicorrelated(5)
    sigma = complete_to_graph(omega, fig1)
    for c in maximal_cliques(fig1):
        ix = [int(v) - 1 for v in c]
        np.testing.assert_allclose(sigma[np.ix_(ix, ix)], omega[np.ix_(ix, ix)], atol=1e-12)
    k = np.linalg.inv(sigma)
    for a, b in [(0, 3), (0, 4), (1, 3), (1, 4)]:
        assert abs(k[a, b]) < 1e-12
    # path through vertex 3: 0.4 * 0.4 / 1
    assert sigma[0, 3] == pytest.approx(0.16, abs=1e-12)


def test_completion_rejects_indefinite(fig1):
    bad = np.eye(5)
    bad[0, 1] = bad[1, 0] = 2.0
    with pytest.raises(NotPositiveDefiniteError):
        complete_to_graph(bad, fig1)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 10), st.integers(0, 2**32 - 1))
def test_completion_properties(p, seed):
    rng = np.random.default_rng(seed)
    g = random_chordal(rng, p, density=0.3)
    a = rng.normal(size=(p, p))
    omega = a @ a.T + p * np.eye(p)
    sigma = complete_to_graph(omega, g)
    idx = {v: i for i, v in enumerate(g.vertices)}
    for c in maximal_cliques(g):
        ix = [idx[v] for v in c]
        np.testing.assert_allclose(sigma[np.ix_(ix, ix)], omega[np.ix_(ix, ix)], atol=1e-10)
    assert markov_violation(sigma, g) <= 1e-9
    dense = logdet(sigma)
    for d in all_decompositions(g):
        assert graph_logdet(sigma, d, g.vertices) == pytest.approx(dense, rel=1e-8, abs=1e-10)


def test_graph_logdet_trivial(fig1):
    (d, _) = all_decompositions(fig1)
    assert graph_logdet(np.eye(5), d, fig1.vertices) == pytest.approx(0.0, abs=1e-15)


# -- likelihood ratio statistics -------------------------------------------


def loglik_oracle(x, mean, cov):
    return stats.multivariate_normal(mean, cov).logpdf(x).sum()


def lrt_oracle(a, b):
    """2 * (max loglik with separate parameters - max loglik with shared ones)."""
    both = np.vstack([a, b])
    m0, c0 = both.mean(0), np.cov(both.T, bias=True)
    alt = sum(loglik_oracle(x, x.mean(0), np.cov(x.T, bias=True)) for x in (a, b))
    return 2 * (alt - loglik_oracle(both, m0, c0))


def test_df_formula():
    assert df_complete(1) == 2 and df_complete(3) == 9
    assert df_complete(4) - df_complete(2) == 9


def test_lrt_zero_when_identical():
    x = gaussian_data(np.random.default_rng(3), 30, ["a", "b", "c"])
    assert lrt_marginal("abc", x, x).statistic == pytest.approx(0.0, abs=1e-9)
    assert lrt_conditional("abc", "b", x, x).statistic == pytest.approx(0.0, abs=1e-9)


def test_lrt_bivariate_matches_likelihood_oracle():
    rng = np.random.default_rng(4)
    x1 = gaussian_data(rng, 40, ["u", "v"])
    x2 = gaussian_data(rng, 55, ["u", "v"], shift=0.4, scale=1.5)
    r = lrt_marginal(["u", "v"], x1, x2)
    assert r.df == 5 and r.scope == "marginal"
    assert r.statistic == pytest.approx(lrt_oracle(x1.values, x2.values), rel=1e-10)


def test_conditional_matches_likelihood_oracle():
    # the conditional statistic is the difference of two marginal oracles
    rng = np.random.default_rng(5)
    labels = ["a", "b", "c"]
    x1 = gaussian_data(rng, 50, labels)
    x2 = gaussian_data(rng, 45, labels, shift=0.3)
    r = lrt_conditional("abc", "c", x1, x2)
    expected = lrt_oracle(x1.values, x2.values) - lrt_oracle(x1.values[:, [2]], x2.values[:, [2]])
    assert r.statistic == pytest.approx(expected, rel=1e-10)
    assert r.df == 7 and r.scope == "conditional" and r.target == frozenset("ab")


def test_conditional_with_empty_given_is_marginal():
    rng = np.random.default_rng(6)
    x1, x2 = gaussian_data(rng, 30, list("ab")), gaussian_data(rng, 30, list("ab"), 0.5)
    assert lrt_conditional("ab", "", x1, x2) == lrt_marginal("ab", x1, x2)


def test_conditional_requires_proper_subset():
    x = gaussian_data(np.random.default_rng(7), 20, list("ab"))
    with pytest.raises(NumericsError):
        lrt_conditional("ab", "ab", x, x)


def test_mle_existence_errors():
    x = DataMatrix(np.random.default_rng(8).normal(size=(3, 3)), list("abc"))
    with pytest.raises(SampleSizeError):
        lrt_marginal("abc", x, x)
    dup = DataMatrix(np.repeat(np.random.default_rng(9).normal(size=(10, 1)), 2, axis=1), ["a", "b"])
    with pytest.raises(MleExistenceError) as info:
        lrt_marginal("ab", dup, dup)
    assert info.value.block == frozenset("ab")


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_lrt_affine_invariance(seed):
    rng = np.random.default_rng(seed)
    labels = list("abcd")
    x1 = gaussian_data(rng, 30, labels)
    x2 = gaussian_data(rng, 35, labels, shift=0.2)
    scale = rng.uniform(0.2, 5.0, size=4)
    loc = rng.normal(size=4)
    y1 = DataMatrix(x1.values * scale + loc, labels)
    y2 = DataMatrix(x2.values * scale + loc, labels)
    for c, s in [("abcd", ""), ("abc", "b"), ("bcd", "cd")]:
        a, b = lrt_conditional(c, s, x1, x2).statistic, lrt_conditional(c, s, y1, y2).statistic
        assert a >= 0.0
        assert b == pytest.approx(a, rel=1e-8, abs=1e-9)


def test_decomposed_lrt_matches_dense_fig1(fig1):
    rng = np.random.default_rng(10)
    x1 = gaussian_data(rng, 80, fig1.vertices)
    x2 = gaussian_data(rng, 90, fig1.vertices, shift=0.2)
    dense = graph_constrained_lrt(x1, x2, fig1)
    for d in all_decompositions(fig1):
        assert decomposed_lrt(x1, x2, d) == pytest.approx(dense, rel=1e-10)
    assert global_df(fig1) == 16


# -- chi-square tail -------------------------------------------------------


def test_chisq_closed_forms():
    assert chisq_sf(0.0, 3) == 1.0
    assert chisq_sf(2 * math.log(20), 2) == pytest.approx(0.05, abs=1e-15)
    assert chisq_sf(16.919, 9) == pytest.approx(0.05, abs=1e-3)


def test_chisq_against_scipy_grid():
    df = np.repeat(np.arange(1, 61), 81)
    x = np.tile(np.linspace(0, 200, 81), 60)
    np.testing.assert_allclose(chisq_sf_array(x, df), stats.chi2.sf(x, df), atol=1e-12, rtol=1e-9)


def test_chisq_far_tail_stays_positive():
    p = chisq_sf(2000.0, 3)
    assert 0.0 <= p < 1e-300 or p == pytest.approx(stats.chi2.sf(2000.0, 3), rel=1e-6)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 80), st.floats(0, 300), st.floats(0, 50))
def test_chisq_monotone_bounded(df, x, dx):
    a, b = chisq_sf(x, df), chisq_sf(x + dx, df)
    assert 0.0 <= b <= a <= 1.0


@pytest.mark.parametrize("x, df", [(-1.0, 2), (1.0, 0), (1.0, 1.5)])
def test_chisq_bad_arguments(x, df):
    with pytest.raises(ValueError):
        chisq_sf(x, df)
