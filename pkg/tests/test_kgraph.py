import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import pareto_oracle

from phenokg.errors import CorruptFile, DanglingReference, VersionSkew
from phenokg.evidence import Claim, Document, ScoredClaim, ScoreWeights
from phenokg.hypothesis import Hypothesis
from phenokg.kgraph import (
    KnowledgeGraph,
    base_graph,
    changes_path,
    dominates,
    expand,
    export_graphml,
    load,
    pareto_front,
    persist,
    stratum,
)
from phenokg.phenotype import PhenotypeState, mixture_from_similarities

W = ScoreWeights(reference_year=2025)


def sc(vec, i=0, hid="h0:a->b", doc="d1") -> ScoredClaim:
    c = Claim(f"c{i}", hid, doc, "a", "improves", "b", "a", "b", "cohort", 0.7)
    return ScoredClaim(c, float(vec[0]), float(vec[1]), float(vec[2]), [hid])


def front_ids(vectors) -> set[int]:
    claims = [sc(v, i) for i, v in enumerate(vectors)]
    keep = {id(c) for c in pareto_front(claims).front}
    return {i for i, c in enumerate(claims) if id(c) in keep}


def test_axis_vectors_all_on_front():
    assert front_ids([(1, 0, 0), (0, 1, 0), (0, 0, 1)]) == {0, 1, 2}


def test_strict_dominance():
    assert front_ids([(0.9, 0.9, 0.9), (0.5, 0.5, 0.5)]) == {0}


def test_ties_are_kept():
    assert front_ids([(0.5, 0.5, 0.5), (0.5, 0.5, 0.5), (0.1, 0.1, 0.1)]) == {0, 1}


def test_empty_candidates():
    assert pareto_front([]).front == []


@pytest.mark.parametrize("n", [10, 100, 1000])
def test_front_matches_oracle(n):
    F = np.random.default_rng(n).random((n, 3))
    assert front_ids(F) == pareto_oracle(F)


def test_every_non_member_is_dominated_by_a_member():
    F = np.random.default_rng(1).random((300, 3))
    members = front_ids(F)
    for i in set(range(300)) - members:
        assert any(dominates(F[j], F[i]) for j in members)


vec = st.tuples(*[st.floats(0, 1)] * 3)


@settings(max_examples=300)
@given(vec, vec, vec)
def test_dominance_is_a_strict_partial_order(a, b, c):
    assert not dominates(a, a)
    assert not (dominates(a, b) and dominates(b, a))
    if dominates(a, b) and dominates(b, c):
        assert dominates(a, c)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 2), st.sampled_from(["cube", "exp", "affine"]))
def test_front_invariant_under_monotone_transform(seed, axis, kind):
    F = np.random.default_rng(seed).random((60, 3))
    G = F.copy()
    fn = {"cube": lambda x: x**3, "exp": np.exp, "affine": lambda x: 3 * x + 1}[kind]
    G[:, axis] = fn(G[:, axis])
    assert front_ids(F) == front_ids(G)


def test_trivial_claim_is_suppressed():
    # high support, lower novelty than an equally supported claim
    established = (0.9, 0.9, 0.2)
    novel = (0.9, 0.9, 0.6)
    assert front_ids([established, novel]) == {1}


def test_strata():
    assert stratum(sc((0.9, 0.9, 0.2))) == "established"
    assert stratum(sc((0.3, 0.3, 0.9))) == "high-novelty"
    assert stratum(sc((0.5, 0.5, 0.55))) == "balanced"


def small_graph() -> KnowledgeGraph:
    ps = PhenotypeState(0, [("a", 1.0)], [], ["sp"])
    mix = mixture_from_similarities(0, ["sp"], np.array([0.5]), 0.5)
    h = Hypothesis("h0:a->b", 0, "pop", "a", "b")
    return base_graph(["a", "b"], [ps], [mix], {}, [h], {"h0:a->b": 0.5})


def docs(*scores):
    return {"h0:a->b": [Document(f"d{i + 1}", "t", "", 2020, "cohort", s) for i, s in enumerate(scores)]}


def test_below_threshold_claim_not_added():
    g = small_graph()
    expand(g, pareto_front([sc((0.9, 0.39, 0.9))]), docs(0.8), W)
    assert g.nodes_of("Claim") == []


def test_expand_adds_claim_documents_and_edges():
    g = small_graph()
    v0 = g.version
    expand(g, pareto_front([sc((0.9, 0.6, 0.9))]), docs(0.8, 0.2), W)
    assert g.version == v0 + 1
    assert g.nodes_of("Claim") == ["c0"]
    assert g.nodes_of("Document") == ["d1"]
    assert (("Document", "d1"), ("Claim", "c0"), "") in g.edges_of("claims")


def test_expand_is_idempotent():
    g = small_graph()
    front = pareto_front([sc((0.9, 0.6, 0.9))])
    expand(g, front, docs(0.8), W)
    snap, v = g.records(), g.version
    expand(g, front, docs(0.8), W)
    assert g.records() == snap
    assert g.version == v


def test_unknown_hypothesis_rejects_batch():
    g = small_graph()
    before = g.records()
    bad = [sc((0.9, 0.6, 0.9)), sc((0.8, 0.7, 0.1), 1, hid="h9:x->y")]
    with pytest.raises(DanglingReference):
        expand(g, pareto_front(bad), docs(0.8), W)
    assert g.records() == before


def test_dangling_edge_rejected():
    g = KnowledgeGraph()
    g.add_node("Feature", "a")
    with pytest.raises(DanglingReference):
        g.add_edge("causal-edge", ("Feature", "a"), ("Feature", "b"))


def test_unlinked_entity_becomes_external():
    g = small_graph()
    c = Claim("cx", "h0:a->b", "d1", "gut microbiome", "improves", "b", None, "b", "cohort", 0.7)
    expand(g, pareto_front([ScoredClaim(c, 0.9, 0.6, 0.9, ["h0:a->b"])]), docs(0.8), W, exploratory=True)
    assert g.has("ExternalEntity", "gut microbiome")
    assert g.node("Claim", "cx")["exploratory"] is True


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1)), min_size=1, max_size=12))
def test_counts_never_decrease(batches):
    g = small_graph()
    prev_n, prev_e, prev_v = len(g.nodes), len(g.edges), g.version
    for i, v in enumerate(batches):
        expand(g, pareto_front([sc(v, i, doc="d1")]), docs(0.8), W)
        assert len(g.nodes) >= prev_n and len(g.edges) >= prev_e and g.version >= prev_v
        prev_n, prev_e, prev_v = len(g.nodes), len(g.edges), g.version


def test_empty_graph_round_trip(tmp_path):
    g = KnowledgeGraph()
    assert load(persist(g, tmp_path / "g.jsonl")).structurally_equal(g)


def test_large_graph_round_trip(tmp_path):
    g = KnowledgeGraph()
    for i in range(10_000):
        g.add_node("Feature", f"f{i}", weight=i / 7, tags=["x", i])
    for i in range(9_999):
        g.add_edge("causal-edge", ("Feature", f"f{i}"), ("Feature", f"f{i + 1}"), qualifier="0", weight=-i / 3)
    g.commit()
    path = persist(g, tmp_path / "big.jsonl")
    back = load(path)
    assert back.structurally_equal(g)
    header = json.loads(path.read_text().split("\n", 1)[0])
    assert header["n_nodes"] == 10_000 and len(header["sha256"]) == 64


def test_truncated_file_is_corrupt(tmp_path):
    path = persist(small_graph(), tmp_path / "g.jsonl")
    text = path.read_text()
    path.write_text(text[: len(text) // 2])
    with pytest.raises(CorruptFile):
        load(path)


def test_edited_record_fails_checksum(tmp_path):
    path = persist(small_graph(), tmp_path / "g.jsonl")
    path.write_text(path.read_text().replace('"nps":0.5', '"nps":0.9'))
    with pytest.raises(CorruptFile, match="checksum"):
        load(path)


def test_change_log_newer_than_snapshot(tmp_path):
    g = small_graph()
    path = persist(g, tmp_path / "g.jsonl")
    with changes_path(path).open("a") as fh:
        fh.write(json.dumps({"op": "add_node", "version": g.version + 5}) + "\n")
    with pytest.raises(VersionSkew):
        load(path)


def test_change_log_is_append_only(tmp_path):
    g = small_graph()
    path = persist(g, tmp_path / "g.jsonl")
    n1 = len(changes_path(path).read_text().splitlines())
    expand(g, pareto_front([sc((0.9, 0.6, 0.9))]), docs(0.8), W)
    persist(g, path)
    lines = changes_path(path).read_text().splitlines()
    assert len(lines) > n1
    versions = [json.loads(x)["version"] for x in lines]
    assert versions == sorted(versions)


def test_graphml_export(tmp_path):
    import networkx as nx

    g = small_graph()
    G = nx.read_graphml(export_graphml(g, tmp_path / "g.graphml"))
    assert G.number_of_nodes() == len(g.nodes)
    assert G.number_of_edges() == len(g.edges)
