"""Pareto selection of scored claims and the versioned knowledge graph.

Graph files are line-delimited JSON: a header line carrying the version and
a checksum of the body, then one node or edge record per line. Every batch
of additions is also appended to ``<file>.changes.jsonl``. The format is
described field by field in ``docs/graph_format.md``.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import networkx as nx
import numpy as np

from . import kernels
from .causal import CausalGraph
from .errors import CorruptFile, DanglingReference, VersionSkew
from .evidence import Document, ScoredClaim, ScoreWeights
from .hypothesis import Hypothesis
from .phenotype import PhenotypeState, SPMixture
from .text import normalize

logger = logging.getLogger(__name__)

FORMAT = "phenokg-graph"
FORMAT_VERSION = 1

NODE_TYPES = ("Feature", "Phenotype", "StandardPhenotype", "Hypothesis", "Document", "Claim", "ExternalEntity")
EDGE_TYPES = (
    "has-phenotype",
    "maps-to-sp",
    "hypothesizes",
    "supported-by",
    "claims",
    "subject-of",
    "object-of",
    "causal-edge",
)

NodeId = tuple[str, str]


def dominates(a: Sequence[float], b: Sequence[float]) -> bool:
    """``a`` is at least as good everywhere and strictly better somewhere."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return bool(np.all(a >= b) and np.any(a > b))


@dataclass
class ParetoFront:
    candidates: list[ScoredClaim]
    front: list[ScoredClaim]
    dominated_by: list[int]


def pareto_front(claims: Sequence[ScoredClaim]) -> ParetoFront:
    """Non-dominated claims in (R, Y, NPS); identical vectors are all kept."""
    claims = list(claims)
    if not claims:
        return ParetoFront([], [], [])
    F = np.array([c.objectives for c in claims], dtype=float)
    if not np.all(np.isfinite(F)):
        raise ValueError("objective vectors must be finite")
    counts = kernels.domination_counts(F)
    return ParetoFront(claims, [c for c, n in zip(claims, counts) if n == 0], [int(n) for n in counts])


def stratum(sc: ScoredClaim, margin: float = 0.15) -> str:
    """Coarse label: ``established`` when support outweighs novelty, ``high-novelty`` when the reverse."""
    support = (sc.R + sc.Y) / 2
    if sc.nps - support > margin:
        return "high-novelty"
    if support - sc.nps > margin:
        return "established"
    return "balanced"


def _canon(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


@dataclass
class KnowledgeGraph:
    """Typed property graph with union-only updates.

    Nodes are keyed by ``(type, natural key)``; edges by
    ``(type, source, target, qualifier)``. Adding an existing key is a no-op.
    """

    nodes: dict[NodeId, dict] = field(default_factory=dict)
    edges: dict[tuple[str, NodeId, NodeId, str], dict] = field(default_factory=dict)
    version: int = 0
    pending: list[dict] = field(default_factory=list, repr=False, compare=False)

    def has(self, ntype: str, key: str) -> bool:
        return (ntype, key) in self.nodes

    def node(self, ntype: str, key: str) -> dict:
        return self.nodes[(ntype, key)]

    def nodes_of(self, ntype: str) -> list[str]:
        return sorted(k for t, k in self.nodes if t == ntype)

    def edges_of(self, etype: str) -> list[tuple[NodeId, NodeId, str]]:
        return sorted((s, d, q) for t, s, d, q in self.edges if t == etype)

    def add_node(self, ntype: str, key: str, **attrs: Any) -> bool:
        if ntype not in NODE_TYPES:
            raise ValueError(f"unknown node type {ntype!r}")
        nid = (ntype, str(key))
        if nid in self.nodes:
            return False
        self.nodes[nid] = dict(attrs)
        self.pending.append({"op": "add_node", "type": ntype, "key": str(key), "attrs": dict(attrs)})
        return True

    def add_edge(self, etype: str, src: NodeId, dst: NodeId, qualifier: str = "", **attrs: Any) -> bool:
        if etype not in EDGE_TYPES:
            raise ValueError(f"unknown edge type {etype!r}")
        for end in (src, dst):
            if tuple(end) not in self.nodes:
                raise DanglingReference(f"{etype} edge references missing node {end}")
        eid = (etype, tuple(src), tuple(dst), str(qualifier))
        if eid in self.edges:
            return False
        self.edges[eid] = dict(attrs)
        self.pending.append(
            {"op": "add_edge", "type": etype, "src": list(src), "dst": list(dst), "qualifier": str(qualifier), "attrs": dict(attrs)}
        )
        return True

    def commit(self) -> bool:
        """Close the current batch; bumps the version only if it added anything."""
        uncommitted = [c for c in self.pending if "version" not in c]
        if not uncommitted:
            return False
        self.version += 1
        for c in uncommitted:
            c["version"] = self.version
        return True

    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for t, _ in self.nodes:
            out[t] = out.get(t, 0) + 1
        return dict(sorted(out.items()))

    def records(self) -> list[dict]:
        nodes = [{"kind": "node", "type": t, "key": k, "attrs": a} for (t, k), a in self.nodes.items()]
        edges = [
            {"kind": "edge", "type": t, "src": list(s), "dst": list(d), "qualifier": q, "attrs": a}
            for (t, s, d, q), a in self.edges.items()
        ]
        nodes.sort(key=lambda r: (r["type"], r["key"]))
        edges.sort(key=lambda r: (r["type"], r["src"], r["dst"], r["qualifier"]))
        return nodes + edges

    def structurally_equal(self, other: KnowledgeGraph) -> bool:
        return self.version == other.version and self.records() == other.records()


def feature_id(name: str) -> NodeId:
    return ("Feature", name)


def entity_node(g: KnowledgeGraph, text: str, feature: str | None, exploratory: bool) -> NodeId:
    if feature is not None and g.has("Feature", feature):
        return feature_id(feature)
    key = normalize(text)
    g.add_node("ExternalEntity", key, label=text, exploratory=exploratory)
    return ("ExternalEntity", key)


def base_graph(
    features: Sequence[str],
    states: Sequence[PhenotypeState],
    mixtures: Sequence[SPMixture],
    graphs: Mapping[int, CausalGraph],
    hypotheses: Sequence[Hypothesis],
    nps: Mapping[str, float] | None = None,
    g: KnowledgeGraph | None = None,
) -> KnowledgeGraph:
    """Phenotype layer: features, phenotypes, SP mappings, causal edges and hypotheses."""
    g = g or KnowledgeGraph()
    nps = nps or {}
    for f in features:
        g.add_node("Feature", f)
    for mix in mixtures:
        for name in mix.names:
            g.add_node("StandardPhenotype", name)
    for ps in states:
        pid = ("Phenotype", str(ps.cluster_id))
        g.add_node("Phenotype", str(ps.cluster_id), descriptor=ps.descriptor(), sp_labels=list(ps.context), exploratory=ps.exploratory)
        for name, dev in ps.dominant_features:
            g.add_edge("has-phenotype", feature_id(name), pid, deviation=round(float(dev), 12))
    for mix in mixtures:
        pid = ("Phenotype", str(mix.cluster_id))
        for name, om in zip(mix.names, mix.omega):
            g.add_edge("maps-to-sp", pid, ("StandardPhenotype", name), weight=float(om))
    for k in sorted(graphs):
        for s, t, w in graphs[k].edges:
            g.add_edge("causal-edge", feature_id(s), feature_id(t), qualifier=str(k), weight=float(w))
    for h in hypotheses:
        g.add_node(
            "Hypothesis",
            h.id,
            text=h.text(),
            population=h.population,
            intervention=h.intervention,
            comparison=h.comparison,
            outcome=h.outcome,
            provenance=h.provenance,
            nps=float(nps.get(h.id, 0.0)),
            exploratory=h.exploratory,
        )
        g.add_edge("hypothesizes", ("Phenotype", str(h.cluster_id)), ("Hypothesis", h.id))
    g.commit()
    return g


def selected_claims(front: ParetoFront, w: ScoreWeights) -> list[ScoredClaim]:
    return [sc for sc in front.front if sc.Y >= w.tau_c]


def expand(
    g: KnowledgeGraph,
    front: ParetoFront,
    docs: Mapping[str, Sequence[Document]],
    w: ScoreWeights,
    exploratory: bool = False,
) -> KnowledgeGraph:
    """Add the front claims with ``Y >= tau_c`` and the retained documents of their hypotheses.

    Args:
        g: graph to extend in place.
        front: Pareto front over the scored claims.
        docs: retrieved documents per hypothesis id; only those with
            ``match_score >= tau_d`` are attached.
        w: thresholds.
        exploratory: flag every node created by this batch.

    Raises:
        DanglingReference: a selected claim names a hypothesis missing from ``g``.
            Nothing is added in that case.
    """
    chosen = selected_claims(front, w)
    kept = {d.doc_id for hid in docs for d in docs[hid] if d.match_score >= w.tau_d}
    for sc in chosen:
        for hid in sc.hypothesis_ids or [sc.claim.hypothesis_id]:
            if not g.has("Hypothesis", hid):
                raise DanglingReference(f"claim {sc.claim.claim_id} references unknown hypothesis {hid}")
        if sc.claim.doc_id not in kept and not g.has("Document", sc.claim.doc_id):
            raise DanglingReference(f"claim {sc.claim.claim_id} cites {sc.claim.doc_id}, which is not a retained document")

    parents = sorted({hid for sc in chosen for hid in (sc.hypothesis_ids or [sc.claim.hypothesis_id])})
    for hid in parents:
        for d in docs.get(hid, []):
            if d.match_score < w.tau_d:
                continue
            g.add_node(
                "Document",
                d.doc_id,
                title=d.title,
                year=d.year,
                study_type=d.study_type,
                match_score=float(d.match_score),
                exploratory=exploratory,
            )
            g.add_edge("supported-by", ("Hypothesis", hid), ("Document", d.doc_id))

    for sc in chosen:
        c = sc.claim
        cid = ("Claim", c.claim_id)
        g.add_node(
            "Claim",
            c.claim_id,
            subject=c.subject,
            relation=c.relation,
            object=c.object,
            R=float(sc.R),
            Y=float(sc.Y),
            nps=float(sc.nps),
            stratum=stratum(sc),
            evidence_type=c.evidence_type,
            confidence=c.confidence,
            context=c.context,
            recommendation=c.recommendation,
            hypotheses=list(sc.hypothesis_ids),
            doc_id=c.doc_id,
            exploratory=exploratory,
        )
        for hid in sc.hypothesis_ids or [c.hypothesis_id]:
            g.add_edge("supported-by", ("Hypothesis", hid), cid)
        g.add_edge("claims", ("Document", c.doc_id), cid)
        g.add_edge("subject-of", entity_node(g, c.subject, c.subject_feature, exploratory), cid)
        g.add_edge("object-of", entity_node(g, c.object, c.object_feature, exploratory), cid)
    g.commit()
    return g


def _checksum(lines: Iterable[str]) -> str:
    h = hashlib.sha256()
    for line in lines:
        h.update(line.encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()


def changes_path(path: str | Path) -> Path:
    p = Path(path)
    return p.with_name(p.name + ".changes.jsonl")


def persist(g: KnowledgeGraph, path: str | Path) -> Path:
    """Write a snapshot and append the committed changes not yet logged."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = [_canon(r) for r in g.records()]
    header = {
        "format": FORMAT,
        "format_version": FORMAT_VERSION,
        "version": g.version,
        "n_nodes": len(g.nodes),
        "n_edges": len(g.edges),
        "sha256": _checksum(body),
    }
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text("\n".join([_canon(header)] + body) + "\n", encoding="utf-8")
    tmp.replace(path)
    committed = [c for c in g.pending if "version" in c]
    if committed:
        with changes_path(path).open("a", encoding="utf-8") as fh:
            for c in committed:
                fh.write(_canon(c) + "\n")
        g.pending = [c for c in g.pending if "version" not in c]
    return path


def _logged_version(path: Path) -> int:
    cp = changes_path(path)
    if not cp.exists():
        return 0
    last = 0
    with cp.open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                try:
                    last = max(last, int(json.loads(line)["version"]))
                except (json.JSONDecodeError, KeyError, ValueError) as exc:
                    raise CorruptFile(f"{cp}: unreadable change record") from exc
    return last


def load(path: str | Path) -> KnowledgeGraph:
    """Read a snapshot written by :func:`persist`.

    Raises:
        CorruptFile: truncated file, bad record, or checksum mismatch.
        VersionSkew: unsupported format version, or a change log newer than
            the snapshot.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise CorruptFile(f"{path}: no such file") from exc
    if not text.endswith("\n"):
        raise CorruptFile(f"{path}: truncated (no final newline)")
    lines = text[:-1].split("\n")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise CorruptFile(f"{path}: unreadable header") from exc
    if not isinstance(header, dict) or header.get("format") != FORMAT:
        raise CorruptFile(f"{path}: not a graph file")
    if header.get("format_version") != FORMAT_VERSION:
        raise VersionSkew(f"{path}: format version {header.get('format_version')}, expected {FORMAT_VERSION}")
    body = lines[1:]
    if len(body) != header["n_nodes"] + header["n_edges"]:
        raise CorruptFile(f"{path}: expected {header['n_nodes'] + header['n_edges']} records, found {len(body)}")
    if _checksum(body) != header["sha256"]:
        raise CorruptFile(f"{path}: checksum mismatch")
    logged = _logged_version(path)
    if logged > header["version"]:
        raise VersionSkew(f"{path}: snapshot at version {header['version']} but change log reaches {logged}")
    g = KnowledgeGraph(version=int(header["version"]))
    for line in body:
        r = json.loads(line)
        if r["kind"] == "node":
            g.nodes[(r["type"], r["key"])] = r["attrs"]
        else:
            g.edges[(r["type"], tuple(r["src"]), tuple(r["dst"]), r["qualifier"])] = r["attrs"]
    return g


def _graphml_value(v: Any) -> Any:
    if isinstance(v, bool) or isinstance(v, (int, float, str)):
        return v
    return _canon(v)


def to_networkx(g: KnowledgeGraph) -> nx.MultiDiGraph:
    G = nx.MultiDiGraph(version=g.version)
    for (t, k), attrs in sorted(g.nodes.items()):
        G.add_node(f"{t}:{k}", type=t, key=k, **{a: _graphml_value(v) for a, v in attrs.items() if v is not None})
    for (t, s, d, q), attrs in sorted(g.edges.items()):
        G.add_edge(f"{s[0]}:{s[1]}", f"{d[0]}:{d[1]}", key=f"{t}:{q}", type=t, qualifier=q,
                   **{a: _graphml_value(v) for a, v in attrs.items() if v is not None})
    return G


def export_graphml(g: KnowledgeGraph, path: str | Path) -> Path:
    path = Path(path)
    nx.write_graphml(to_networkx(g), path)
    return path
