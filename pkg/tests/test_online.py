import shutil

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import planted_mixture

from phenokg.errors import ValidationError, ZeroVector
from phenokg.ingest import load_dataset
from phenokg.kgraph import load
from phenokg.online import (
    AnomalyDetector,
    CandidateBuffer,
    MatchModel,
    OnlineConfig,
    OnlineState,
    buffer_candidate,
    decide,
    is_novel,
    make_state,
    score_state,
    state_from_embedding,
)
from phenokg.phenotype import ClusterModel
from phenokg.pipeline import Run, online_context, promote
from phenokg.synthetic import SyntheticLiterature

from conftest import golden_config

CFG = OnlineConfig()


def test_clear_winner_matches():
    d = decide([0.7, 0.2], CFG)
    assert (d.kind, d.cluster) == ("match", 0)


def test_low_scores_are_anomalous():
    assert decide([0.25, 0.2], CFG).kind == "anomaly"


def test_middle_band_soft_matches():
    d = decide([0.45, 0.42, 0.1], CFG)
    assert d.kind == "soft_match"
    assert set(d.weights) == {0, 1}
    assert d.weights[0] == pytest.approx(0.45 / 0.87)
    assert sum(d.weights.values()) == pytest.approx(1.0)


@settings(max_examples=300)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=10))
def test_decision_partition_is_total(scores):
    d = decide(scores, CFG)
    best = max(scores)
    expected = "match" if best >= 0.6 else "anomaly" if best < 0.3 else "soft_match"
    assert d.kind == expected


@settings(max_examples=200)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=6), st.floats(0.31, 0.99), st.floats(0.0, 0.5))
def test_raising_match_threshold_never_turns_anomaly_into_match(scores, tau, bump):
    lo = OnlineConfig(tau_match=tau)
    hi = OnlineConfig(tau_match=min(1.0, tau + bump))
    if decide(scores, lo).kind == "anomaly":
        assert decide(scores, hi).kind == "anomaly"
    if decide(scores, hi).kind == "match":
        assert decide(scores, lo).kind == "match"


def test_threshold_order_enforced():
    with pytest.raises(ValidationError):
        OnlineConfig(tau_anom=0.7, tau_match=0.6)


def toy_model() -> MatchModel:
    centroids = np.array([[2.0, 0.0], [0.0, 2.0], [-2.0, -2.0]])
    clusters = ClusterModel(centroids, np.array([0, 1, 2]), 1.0, np.zeros(0), None)
    omega = np.array([[0.8, 0.2], [0.2, 0.8], [0.5, 0.5]])
    return MatchModel(clusters, omega, np.zeros(2), np.full(2, 0.5))


def test_exact_match_scores_one():
    model = toy_model()
    s = OnlineState("s", np.zeros(0), model.clusters.centroids[1], np.array([0, 1.0, 0]), model.omega[1])
    scores = score_state(s, model, CFG)
    assert scores[1] == pytest.approx(1.0)
    assert int(np.argmax(scores)) == 1


def test_alpha_one_is_embedding_cosine_only():
    model = toy_model()
    z = np.array([1.0, 0.3])
    s = state_from_embedding("s", z, model)
    scores = score_state(s, model, OnlineConfig(alpha=1.0))
    for k, mu in enumerate(model.clusters.centroids):
        cos = z @ mu / (np.linalg.norm(z) * np.linalg.norm(mu))
        assert scores[k] == pytest.approx((cos + 1) / 2)


def test_zero_embedding_rejected():
    model = toy_model()
    with pytest.raises(ZeroVector):
        score_state(OnlineState("s", np.zeros(0), np.zeros(2), np.full(3, 1 / 3), np.full(2, 0.5)), model)


def test_sp_vector_is_a_distribution():
    model = toy_model()
    s = state_from_embedding("s", np.array([0.3, -1.2]), model)
    assert abs(s.pi.sum() - 1) < 1e-9
    assert abs(s.pi_sp.sum() - 1) < 1e-9


def test_training_state_replays_bit_for_bit(golden_run):
    ctx = online_context(golden_run)
    cfg = golden_run.cfg
    records = load_dataset(cfg.data_path, cfg.features).records
    Z = golden_run.embeddings()
    m, t, p = golden_run.encoded(), golden_run.template(), golden_run.encoder()
    for i in (0, 17, 999):
        s = make_state(str(i), records[i], m, t, p, ctx.model)
        assert s.z.tobytes() == Z[i].tobytes()


def test_centroid_is_an_inlier():
    X, y = planted_mixture(0)
    det = AnomalyDetector(CFG, seed=0).fit(X)
    assert det.indicator(X[y == 2].mean(axis=0))[0] == 1


def test_far_point_is_flagged():
    X, _ = planted_mixture(0)
    det = AnomalyDetector(CFG, seed=0).fit(X)
    assert det.indicator(np.full(8, -10.0))[0] == -1


def test_indicator_is_deterministic():
    X, _ = planted_mixture(3)
    probe = np.random.default_rng(0).standard_normal((50, 8)) * 4
    a = AnomalyDetector(CFG, seed=5).fit(X).indicator(probe)
    b = AnomalyDetector(CFG, seed=5).fit(X).indicator(probe)
    np.testing.assert_array_equal(a, b)


def test_novelty_needs_both_signals():
    anomaly = decide([0.2, 0.1], CFG)
    assert is_novel(anomaly, -1, CFG)
    assert not is_novel(anomaly, 1, CFG)
    assert not is_novel(decide([0.45, 0.1], CFG), -1, CFG)


def anomalous(sid: str, z) -> OnlineState:
    z = np.asarray(z, dtype=float)
    return OnlineState(sid, np.zeros(0), z, np.full(3, 1 / 3), np.full(2, 0.5))


def test_first_anomaly_opens_candidate():
    buf, promoted = buffer_candidate(anomalous("a", [10.0, 0.1]), CandidateBuffer(center=np.zeros(2)), CFG)
    assert promoted is None
    assert [c.n_c for c in buf.candidates] == [1]


def test_five_similar_anomalies_promote_once():
    buf = CandidateBuffer(center=np.zeros(2))
    rng = np.random.default_rng(0)
    promotions = []
    for i in range(8):
        buf, p = buffer_candidate(anomalous(f"a{i}", [10.0, 0.0] + rng.normal(0, 0.2, 2)), buf, CFG)
        promotions.append(p is not None)
    assert promotions == [False] * 4 + [True] + [False] * 3
    (cand,) = buf.candidates
    assert cand.n_c == 8 and cand.promoted and cand.exploratory


def test_far_apart_anomalies_open_two_candidates():
    buf = CandidateBuffer(center=np.zeros(2))
    buf, _ = buffer_candidate(anomalous("a", [10.0, 0.0]), buf, CFG)
    buf, _ = buffer_candidate(anomalous("b", [-10.0, 0.5]), buf, CFG)
    assert len(buf.candidates) == 2


def test_running_centroid_is_the_mean():
    buf = CandidateBuffer(center=np.zeros(2))
    pts = [[10.0, 0.0], [11.0, 1.0], [12.0, 0.5]]
    for i, z in enumerate(pts):
        buf, _ = buffer_candidate(anomalous(str(i), z), buf, CFG)
    np.testing.assert_allclose(buf.candidates[0].centroid, np.mean(pts, axis=0))


def test_buffer_round_trip():
    buf = CandidateBuffer(center=np.zeros(2))
    buf, _ = buffer_candidate(anomalous("a", [10.0, 0.0]), buf, CFG)
    back = CandidateBuffer.from_dict(buf.to_dict())
    np.testing.assert_array_equal(back.candidates[0].centroid, buf.candidates[0].centroid)
    assert back.candidates[0].exemplars == ["a"]


@pytest.fixture
def promotable_run(golden_dir, tmp_path):
    out = tmp_path / "run"
    shutil.copytree(golden_dir, out)
    cfg = golden_config(out)
    return Run(cfg, out, transport=SyntheticLiterature(cfg.aliases, seed=cfg.seed))


def promote_far_candidate(run: Run):
    ctx = online_context(run)
    Z = run.embeddings()
    direction = np.random.default_rng(1).standard_normal(Z.shape[1])
    far = ctx.model.z_center + 10 * Z.std(axis=0) * direction
    promoted = None
    for i in range(run.cfg.online.tau_nc):
        s = state_from_embedding(f"n{i}", far + 0.01 * i, ctx.model)
        ctx.buffer, p = buffer_candidate(s, ctx.buffer, run.cfg.online)
        promoted = promoted or p
    return ctx, promoted


def test_promotion_adds_only_exploratory_nodes(promotable_run):
    ctx, cand = promote_far_candidate(promotable_run)
    assert cand is not None and cand.n_c == promotable_run.cfg.online.tau_nc
    record = promote(ctx, cand)
    assert record["added_nodes"]
    assert len(record["hypotheses"]) <= promotable_run.cfg.online.max_hypotheses
    g = load(promotable_run.path("expand", "kg.jsonl"))
    for ntype, key in record["added_nodes"]:
        assert g.node(ntype, key).get("exploratory") is True, (ntype, key)
