"""Graphical seed set estimation for two-sample Gaussian graphical models."""
from .graph import (
    Decomposition,
    Graph,
    SeedSetSpec,
    all_decompositions,
    build_graph,
    connected_components,
    is_decomposable,
    maximal_cliques,
    moralize,
    oracle_graphical_seed_set,
    separates,
    separator_collection,
    triangulate,
)
from .inference import (
    Hypothesis,
    Method,
    SeedSetEstimate,
    TestResult,
    analyze,
    compute_statistics,
    enumerate_hypotheses,
    estimate_seed_set,
    oracle_decisions,
    permutation_null,
    stepdown_adjust,
)
from .kernels import BACKEND
from .numerics import (
    DataMatrix,
    GgmParams,
    LrtValue,
    chisq_sf,
    complete_to_graph,
    graph_logdet,
    lrt_conditional,
    lrt_marginal,
    pooled_covariance,
    sample_moments,
)

__version__ = "0.1.0"
