import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import planted_mixture
from sklearn.metrics import adjusted_rand_score

from phenokg.causal import CausalGraph
from phenokg.errors import TooFewStates, ZeroSignature
from phenokg.ingest import EncodedMatrix
from phenokg.phenotype import (
    ClusterConfig,
    ClusterModel,
    StandardPhenotypeDef,
    dominant_features,
    fit_clusters,
    hard_assign,
    map_to_standard,
    mixture_from_similarities,
    phenotype_state,
    soft_assign,
)


def model_with(centroids, T=1.0) -> ClusterModel:
    c = np.asarray(centroids, dtype=float)
    return ClusterModel(c, np.arange(len(c)), T, np.zeros(0), None)


def test_planted_mixture_recovered():
    X, y = planted_mixture(0)
    m = fit_clusters(X, ClusterConfig(seed=0))
    assert m.K == 4
    assert adjusted_rand_score(y, m.labels) >= 0.8


def test_golden_clusters_reported(golden_run):
    m = golden_run.clusters()
    # silhouette is reported for comparison only
    print(f"golden run: K={m.K} sizes={m.sizes()} silhouette={m.silhouette:.4f}")
    assert 2 <= m.K <= 10
    assert sum(m.sizes()) == 1000


def test_identical_states_force_lower_bound(caplog):
    m = fit_clusters(np.ones((20, 3)), ClusterConfig(k_min=2))
    assert m.K == 2
    assert m.degenerate
    assert "identical" in caplog.text


def test_too_few_states():
    with pytest.raises(TooFewStates):
        fit_clusters(np.random.default_rng(0).standard_normal((3, 2)), ClusterConfig(k_min=2))


def test_clustering_is_deterministic():
    X, _ = planted_mixture(4)
    a = fit_clusters(X, ClusterConfig(seed=11))
    b = fit_clusters(X, ClusterConfig(seed=11))
    assert a.labels.tobytes() == b.labels.tobytes()
    assert a.centroids.tobytes() == b.centroids.tobytes()


def test_every_state_has_one_cluster_and_centroids_are_means():
    X, _ = planted_mixture(2)
    m = fit_clusters(X)
    assert m.labels.shape == (400,)
    for k in range(m.K):
        np.testing.assert_allclose(m.centroids[k], X[m.labels == k].mean(axis=0))


def test_soft_assign_at_centroid():
    m = model_with([[0, 0], [10, 0], [0, 10], [10, 10]], T=25.0)
    assert int(np.argmax(soft_assign([0, 10], m).pi)) == 2


def test_soft_assign_equidistant_is_uniform():
    m = model_with([[1, 0], [-1, 0], [0, 1], [0, -1]], T=2.0)
    np.testing.assert_allclose(soft_assign([0, 0], m).pi, 0.25, atol=1e-12)


def test_soft_assign_midway():
    centroids = np.array([[0.0, 0.0], [4.0, 0.0], [2.0, 9.0], [-7.0, 5.0]])
    T = 6.0
    z = (centroids[0] + centroids[1]) / 2
    pi = soft_assign(z, model_with(centroids, T)).pi
    # direct evaluation of exp(-d^2 / T) normalized
    d2 = [4.0, 4.0, 81.0, 106.0]
    w = [math.exp(-x / T) for x in d2]
    np.testing.assert_allclose(pi, np.array(w) / sum(w), atol=1e-12)
    assert abs(pi[0] - pi[1]) < 1e-12
    assert min(pi[0], pi[1]) > max(pi[2], pi[3])


def test_soft_assign_argmax_is_nearest_centroid(golden_run):
    m, Z = golden_run.clusters(), golden_run.embeddings()
    for z in Z:
        assert int(np.argmax(soft_assign(z, m).pi)) == hard_assign(z, m)


def test_sp_softmax_two_phenotypes():
    mix = mixture_from_similarities(0, ["a", "b"], np.array([0.8, 0.2]), 0.5)
    oracle = 1 / (1 + math.exp(-(0.8 - 0.2) / 0.5))
    np.testing.assert_allclose(mix.omega, [0.769, 0.231], atol=1e-3)
    np.testing.assert_allclose(mix.omega, [oracle, 1 - oracle], atol=1e-12)


def test_sp_softmax_equal_scores_uniform():
    mix = mixture_from_similarities(0, list("abcd"), np.full(4, 0.3), 0.5)
    np.testing.assert_allclose(mix.omega, 0.25)


def encoded(values: np.ndarray, columns: list[str]) -> EncodedMatrix:
    f = values.shape[1]
    return EncodedMatrix(values, columns, ["numeric"] * f, {}, np.zeros(f), np.ones(f))


def test_map_to_standard_concentrates_at_low_temperature():
    cols = ["a", "b", "c"]
    X = np.array([[1.0, -1.0, 0.5], [1.2, -0.8, 0.4], [-1.0, 1.0, -0.5], [-1.2, 0.8, -0.4]])
    m = ClusterModel(np.zeros((2, 2)), np.array([0, 0, 1, 1]), 1.0, np.zeros(0), None)
    sps = [StandardPhenotypeDef("match", np.array([1.1, -0.9, 0.45]) / 1.2), StandardPhenotypeDef("other", np.array([0.0, 0.0, 1.0]))]
    mix = map_to_standard(m, encoded(X, cols), sps, T=1e-3)
    assert mix[0].omega[0] > 0.99
    for mx in map_to_standard(m, encoded(X, cols), sps, T=0.5):
        assert abs(mx.omega.sum() - 1) < 1e-9
        assert np.all(mx.omega > 0)


def test_zero_signature_rejected():
    with pytest.raises(ZeroSignature):
        StandardPhenotypeDef("empty", np.zeros(3))


@settings(max_examples=100)
@given(
    st.lists(st.floats(-1, 1), min_size=2, max_size=8),
    st.integers(0, 7),
    st.floats(1e-3, 0.5),
    st.floats(0.05, 2.0),
)
def test_sp_mixture_monotone_in_similarity(s, m, bump, T):
    s = np.array(s)
    m %= len(s)
    before = mixture_from_similarities(0, [str(i) for i in range(len(s))], s, T).omega[m]
    s2 = s.copy()
    s2[m] += bump
    after = mixture_from_similarities(0, [str(i) for i in range(len(s))], s2, T).omega[m]
    assert after > before


@settings(max_examples=100)
@given(st.integers(0, 10_000), st.integers(1, 8), st.integers(2, 6))
def test_soft_assignment_sums_to_one(seed, K, h):
    rng = np.random.default_rng(seed)
    m = model_with(rng.standard_normal((K, h)) * 5, T=float(rng.uniform(0.1, 10)))
    pi = soft_assign(rng.standard_normal(h) * 10, m).pi
    assert abs(pi.sum() - 1) < 1e-9
    assert np.all(pi >= 0)


def test_strong_feature_heads_dominant_list():
    prof = np.array([0.1, 2.0, -0.6, 0.3])
    dom = dominant_features(prof, ["a", "b", "c", "d"])
    assert dom[0] == ("b", 2.0)
    assert [n for n, _ in dom] == ["b", "c"]


def test_weak_profile_falls_back_to_top_three():
    dom = dominant_features(np.array([0.1, -0.3, 0.2, 0.05]), list("abcd"))
    assert [n for n, _ in dom] == ["b", "c", "a"]


def test_phenotype_state_with_empty_causal_graph():
    X = np.array([[2.0, 0.0], [2.0, 0.1], [-2.0, 0.0], [-2.0, -0.1]])
    m = ClusterModel(np.zeros((2, 2)), np.array([0, 0, 1, 1]), 1.0, np.zeros(0), None)
    mix = mixture_from_similarities(0, ["p", "q", "r"], np.array([0.1, 0.9, 0.5]), 0.5)
    cg = CausalGraph(0, ["a", "b"], np.zeros((2, 2)), np.zeros((2, 2)), 0.0)
    ps = phenotype_state(m, encoded(X, ["a", "b"]), mix, cg)
    assert ps.salient_edges == []
    assert ps.dominant_features[0][0] == "a"
    assert ps.context == ["q", "r"]


def test_anxiety_phenotype_links_anxiety_to_performance(golden_run):
    states = {ps.cluster_id: ps for ps in golden_run.states()}
    graphs = golden_run.graphs()
    with_anxiety = [k for k, ps in states.items() if "anxiety_score" in dict(ps.dominant_features)]
    assert with_anxiety
    # some anxiety-led phenotype carries the negative anxiety -> performance effect
    assert any(graphs[k].weight("anxiety_score", "academic_performance") < 0 for k in with_anxiety)
    salient = [e for ps in states.values() for e in ps.salient_edges if e[:2] == ("anxiety_score", "academic_performance")]
    assert salient and all(w < 0 for _, _, w in salient)
