"""Acceptance suite: one verdict line per criterion in the session summary."""

import json
import math
import time
from itertools import combinations

import numpy as np
import pytest
from acceptance_log import criterion
from oracles import (
    ancestral_sample,
    central_difference,
    conditional_mi,
    enum_posterior,
    expected_expansion,
    full_joint,
    graph_node_keys,
    linear_sem,
    pareto_oracle,
    planted_mixture,
    random_bn_tables,
    trace_expm_series,
)
from sklearn.metrics import adjusted_rand_score

from phenokg.causal import CausalGraph, acyclicity, fit_notears, structural_hamming_distance
from phenokg.cli import main
from phenokg.evidence import Claim, ScoredClaim
from phenokg.kgraph import dominates, expand, load, pareto_front
from phenokg.online import (
    AnomalyDetector,
    CandidateBuffer,
    OnlineConfig,
    OnlineState,
    buffer_candidate,
    decide,
    score_state,
    state_from_embedding,
)
from phenokg.phenotype import ClusterConfig, fit_clusters
from phenokg.pipeline import online_context, promote
from phenokg.probnet import BayesNet, fit_bn, fit_cpts, fit_discretization, influence, markov_blanket, posterior

from test_online import promotable_run, promote_far_candidate  # noqa: F401

# 1: structure recovery


def test_c1_notears_recovers_linear_sems():
    with criterion(1, "10 SEMs (d=10, 15 edges, n=1000)") as info:
        shd, worst_h, slowest = [], 0.0, 0.0
        for seed in range(10):
            W_true, X = linear_sem(np.random.default_rng(seed))
            t0 = time.perf_counter()
            g = fit_notears(X)
            slowest = max(slowest, time.perf_counter() - t0)
            shd.append(structural_hamming_distance(g.W, W_true))
            worst_h = max(worst_h, g.h_final)
        info["detail"] = f"mean SHD {np.mean(shd):.1f}, max h {worst_h:.1e}, slowest fit {slowest:.1f}s"
        assert np.mean(shd) <= 3
        assert worst_h <= 1e-8
        assert slowest < 60


# 2: acyclicity


def test_c2_acyclicity_value_and_gradient():
    with criterion(2, "h(0), two-cycle, 100 gradients") as info:
        h0, g0 = acyclicity(np.zeros((8, 8)))
        assert h0 == 0.0 and not np.any(g0)
        W = np.array([[0.0, 1.0], [1.0, 0.0]])
        h2, _ = acyclicity(W)
        assert abs(h2 - (trace_expm_series(W * W) - 2)) < 1e-9
        assert abs(h2 - (2 * math.cosh(1) - 2)) < 1e-9
        worst = 0.0
        for seed in range(100):
            M = np.random.default_rng(seed).uniform(-0.5, 0.5, (8, 8))
            _, g = acyclicity(M)
            fd = central_difference(lambda A: acyclicity(A)[0], M)
            worst = max(worst, float(np.max(np.abs(g - fd)) / np.max(np.abs(fd))))
        info["detail"] = f"h(two-cycle) {h2:.6f}, worst relative gradient error {worst:.1e}"
        assert worst <= 1e-4


# 3: exact inference


def fitted_net(seed: int) -> BayesNet:
    """Random structure, CPTs refitted from ancestral samples."""
    rng = np.random.default_rng(seed)
    n_nodes = 12 if seed % 5 == 0 else int(rng.integers(3, 12))
    parents, cpts, card = random_bn_tables(rng, n_nodes)
    data = ancestral_sample(rng, parents, cpts, card, 2000)
    return BayesNet(0, [f"v{i}" for i in range(n_nodes)], parents, fit_cpts(data, parents, card), card)


def test_c3_inference_and_markov_blanket():
    with criterion(3, "50 fitted networks up to 12 nodes") as info:
        worst_err, worst_cmi, queries = 0.0, 0.0, 0
        for seed in range(50):
            bn = fitted_net(seed)
            n = len(bn.card)
            joint = full_joint(bn.parents, bn.cpts, bn.card)
            rng = np.random.default_rng(10_000 + seed)
            for t in range(n):
                others = [v for v in range(n) if v != t]
                for size in (0, 1, min(3, len(others))):
                    chosen = rng.choice(others, size=size, replace=False).tolist()
                    ev = {int(v): int(rng.integers(0, bn.card[v])) for v in chosen}
                    worst_err = max(worst_err, float(np.max(np.abs(posterior(bn, t, ev) - enum_posterior(joint, t, ev)))))
                    queries += 1
                mb = sorted(bn.index(m) for m in markov_blanket(bn, t))
                rest = [v for v in others if v not in mb]
                if rest:
                    worst_cmi = max(worst_cmi, conditional_mi(joint, t, rest, mb))
        info["detail"] = f"{queries} queries, max error {worst_err:.1e}, max MB conditional MI {worst_cmi:.1e}"
        assert worst_err <= 1e-10
        assert worst_cmi < 1e-9


# 4: influence


def test_c4_influence_calibration():
    with criterion(4, "bounds, independence, copy") as info:
        lowest = min(
            influence(BayesNet(0, [f"v{i}" for i in range(len(c))], p, t, c), a, b)
            for seed in range(100)
            for p, t, c in [random_bn_tables(np.random.default_rng(seed), 5)]
            for a, b in combinations(range(5), 2)
        )
        assert lowest >= 0.0
        independent = []
        for seed in range(20):
            X = np.random.default_rng(seed).standard_normal((1000, 2))
            dag = CausalGraph(0, ["a", "b"], np.array([[0, 0.5], [0, 0]]), np.zeros((2, 2)), 0.0)
            independent.append(influence(fit_bn(X, dag, fit_discretization(X, ["a", "b"])), "a", "b"))
        x = np.random.default_rng(0).integers(0, 3, 1000)
        copy_fit = BayesNet(0, ["a", "b"], [[], [0]], fit_cpts(np.column_stack([x, x]), [[], [0]], [3, 3]), [3, 3])
        copy_exact = BayesNet(0, ["a", "b"], [[], [0]], [np.full(3, 1 / 3), np.eye(3)], [3, 3])
        fitted, exact = influence(copy_fit, "a", "b"), influence(copy_exact, "a", "b")
        info["detail"] = (
            f"min {lowest:.2e}, independent max {max(independent):.4f} over 20 seeds, "
            f"copy {exact:.3f} exact / {fitted:.3f} fitted"
        )
        assert max(independent) <= 0.02
        assert exact >= 0.9 and fitted >= 0.9


# 5: Pareto front


def scored(F: np.ndarray) -> list[ScoredClaim]:
    out = []
    for i, (r, y, u) in enumerate(F):
        c = Claim(f"c{i}", "h", "d", "a", "improves", "b", "a", "b", "cohort", 0.5)
        out.append(ScoredClaim(c, float(r), float(y), float(u), ["h"]))
    return out


def front_ids(F: np.ndarray) -> set[int]:
    claims = scored(F)
    keep = {id(c) for c in pareto_front(claims).front}
    return {i for i, c in enumerate(claims) if id(c) in keep}


def test_c5_pareto_front():
    with criterion(5, "oracle, partial order, monotone invariance") as info:
        for n in (10, 100, 1000):
            for seed in range(20):
                F = np.random.default_rng(1000 * n + seed).random((n, 3))
                assert front_ids(F) == pareto_oracle(F), (n, seed)
        rng = np.random.default_rng(0)
        # coarse grid so ties and equal coordinates actually occur
        T = rng.integers(0, 4, (10_000, 3, 3)) / 3
        for a, b, c in T:
            assert not dominates(a, a)
            assert not (dominates(a, b) and dominates(b, a))
            if dominates(a, b) and dominates(b, c):
                assert dominates(a, c)
        for seed in range(20):
            F = np.random.default_rng(seed).random((200, 3))
            G = np.column_stack([F[:, 0] ** 3, np.exp(F[:, 1]), 2 * F[:, 2] + 1])
            assert front_ids(F) == front_ids(G)
        info["detail"] = "60 random sets, 10000 triples, 20 transformed sets"


# 6: normalization


def test_c6_distributions_sum_to_one(golden_run):
    with criterion(6, "pi, omega, posteriors") as info:
        pi = np.load(golden_run.path("cluster", "soft_assignments.npy"))
        worst = float(np.max(np.abs(pi.sum(axis=1) - 1)))
        for mix in golden_run.mixtures():
            worst = max(worst, abs(float(mix.omega.sum()) - 1))
        n_post = 0
        for bn in golden_run.networks().values():
            for t in range(len(bn.card)):
                worst = max(worst, abs(float(posterior(bn, t).sum()) - 1))
                n_post += 1
                for v in bn.parents[t] + bn.children(t):
                    for val in range(bn.card[v]):
                        worst = max(worst, abs(float(posterior(bn, t, {v: val}).sum()) - 1))
                        n_post += 1
        info["detail"] = f"{pi.shape[0]} states, {n_post} posteriors, max deviation {worst:.1e}"
        assert worst <= 1e-9


# 7: phenotype discovery


def test_c7_planted_mixtures(golden_run):
    with criterion(7, "10 planted mixtures") as info:
        ks, aris = [], []
        for seed in range(10):
            X, y = planted_mixture(seed)
            m = fit_clusters(X, ClusterConfig(seed=seed))
            ks.append(m.K)
            aris.append(adjusted_rand_score(y, m.labels))
        golden = golden_run.clusters()
        info["detail"] = f"K={sorted(set(ks))}, min ARI {min(aris):.3f}, golden silhouette {golden.silhouette:.3f}"
        assert all(k == 4 for k in ks)
        assert min(aris) >= 0.8


# 8: expansion


def test_c8_expansion_matches_thresholds(golden_run):
    with criterion(8, "claims and documents, re-expansion") as info:
        w = golden_run.cfg.scores
        kg = golden_run.path("expand", "kg.jsonl")
        claims, docs = expected_expansion(golden_run.out, w.tau_c, w.tau_d)
        assert graph_node_keys(kg, "Claim") == claims
        assert graph_node_keys(kg, "Document") == docs
        g = load(kg)
        before, version = g.records(), g.version
        retrieved = {r.hypothesis_id: r.documents for r in golden_run.retrieval()}
        expand(g, pareto_front(golden_run.scored_claims()), retrieved, w)
        assert g.records() == before and g.version == version
        info["detail"] = f"{len(claims)} claims, {len(docs)} documents, re-expansion left v{version}"


# 9: online matching


def test_c9_decision_rule():
    with criterion(9, "threshold examples") as info:
        cfg = OnlineConfig()
        assert decide([0.7, 0.2], cfg).kind == "match"
        soft = decide([0.45, 0.42, 0.1], cfg)
        assert soft.kind == "soft_match" and set(soft.weights) == {0, 1}
        assert decide([0.2, 0.1], cfg).kind == "anomaly"
        info["detail"] = "0.7 match, 0.45 soft, 0.2 anomaly"


@pytest.mark.xfail(strict=True, reason="centred midpoints score above the match threshold; see decision notes")
def test_c9_midway_state_soft_matches(golden_run):
    with criterion(9, "midway states") as info:
        ctx = online_context(golden_run)
        mu = ctx.model.clusters.centroids
        kinds, top2 = [], 0
        for a, b in combinations(range(len(mu)), 2):
            s = state_from_embedding(f"{a}-{b}", (mu[a] + mu[b]) / 2, ctx.model)
            scores = score_state(s, ctx.model, golden_run.cfg.online)
            kinds.append(decide(scores, golden_run.cfg.online).kind)
            top2 += set(np.argsort(scores)[-2:].tolist()) == {a, b}
        info["detail"] = f"{kinds.count('soft_match')}/{len(kinds)} soft matches, top two correct in {top2}/{len(kinds)}"
        assert all(k == "soft_match" for k in kinds)


# 10: candidates and anomalies


def anomalous(sid: str, z) -> OnlineState:
    return OnlineState(sid, np.zeros(0), np.asarray(z, dtype=float), np.full(3, 1 / 3), np.full(2, 0.5))


def test_c10_lifecycle(promotable_run):  # noqa: F811
    with criterion(10, "promotion and determinism") as info:
        cfg = OnlineConfig()
        buf, fired = CandidateBuffer(center=np.zeros(2)), []
        rng = np.random.default_rng(0)
        for i in range(10):
            buf, p = buffer_candidate(anomalous(f"a{i}", [10.0, 0.0] + rng.normal(0, 0.2, 2)), buf, cfg)
            fired.append(p is not None)
        assert fired.index(True) == cfg.tau_nc - 1 and sum(fired) == 1

        ctx, cand = promote_far_candidate(promotable_run)
        assert cand is not None
        record = promote(ctx, cand)
        g = load(promotable_run.path("expand", "kg.jsonl"))
        assert record["added_nodes"]
        assert all(g.node(t, k).get("exploratory") is True for t, k in record["added_nodes"])

        probe = np.random.default_rng(1).standard_normal((100, 8)) * 5
        for seed in range(5):
            X, _ = planted_mixture(seed)
            a = AnomalyDetector(cfg, seed=seed).fit(X).indicator(probe)
            b = AnomalyDetector(cfg, seed=seed).fit(X).indicator(probe)
            assert np.array_equal(a, b)
        info["detail"] = f"one promotion at state {cfg.tau_nc}, {len(record['added_nodes'])} exploratory nodes"


def ten_sigma_point(means: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """A point in a random direction whose nearest planted mean is exactly 10 units away."""
    u = rng.standard_normal(means.shape[1])
    u /= np.linalg.norm(u)
    c = means.mean(axis=0)
    lo, hi = 0.0, 100.0
    for _ in range(100):
        r = (lo + hi) / 2
        if np.min(np.linalg.norm(means - (c + r * u), axis=1)) < 10:
            lo = r
        else:
            hi = r
    return c + hi * u


@pytest.mark.xfail(strict=True, reason="axis-parallel isolation trees miss off-axis outliers; see decision notes")
def test_c10_ten_sigma_detection():
    with criterion(10, "10 sigma outliers") as info:
        cfg = OnlineConfig()
        means = np.eye(8)[:4] * 6 / np.sqrt(2)
        hits = 0
        for seed in range(50):
            X, _ = planted_mixture(seed)
            point = ten_sigma_point(means, np.random.default_rng(1000 + seed))
            hits += int(AnomalyDetector(cfg, seed=seed).fit(X).indicator(point)[0] == -1)
        info["detail"] = f"{hits}/50 flagged"
        assert hits >= 0.95 * 50


# 11: end to end


def output_tree(root) -> dict[str, bytes]:
    files = {}
    for p in sorted(root.rglob("*")):
        if not p.is_file():
            continue
        if p.name == "manifest.json":
            man = json.loads(p.read_text())
            for stage in man["stages"].values():
                stage.pop("seconds", None)
            files[str(p.relative_to(root))] = json.dumps(man, sort_keys=True).encode()
        else:
            files[str(p.relative_to(root))] = p.read_bytes()
    return files


def test_c11_runtime_and_reproducibility(tmp_path):
    with criterion(11, "two full runs") as info:
        trees, times = [], []
        for name in ("a", "b"):
            t0 = time.perf_counter()
            assert main(["run", "--out", str(tmp_path / name)]) == 0
            times.append(time.perf_counter() - t0)
            trees.append(output_tree(tmp_path / name))
        differing = sorted(k for k in trees[0].keys() | trees[1].keys() if trees[0].get(k) != trees[1].get(k))
        info["detail"] = f"{max(times):.1f}s slowest, {len(trees[0])} files, {len(differing)} differ"
        assert max(times) < 300
        assert not differing, differing
