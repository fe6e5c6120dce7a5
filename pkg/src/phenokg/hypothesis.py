"""PICO hypothesis generation and novelty-plausibility scoring (NPS)."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .backends import LLMBackend, round_floats
from .causal import CausalGraph, strongest_path
from .errors import BackendUnavailable, ValidationError
from .phenotype import PhenotypeState
from .probnet import BayesNet, influence, markov_blanket
from .text import EntityLinker, humanize

logger = logging.getLogger(__name__)

COMPONENTS = ("struct", "path", "prob", "mb", "var", "lit")
# components rescaled per batch; mb and lit already live in [0, 1]
MINMAX = ("struct", "path", "prob", "var")


@dataclass(frozen=True)
class NPSWeights:
    theta: tuple[float, ...] = (1 / 6,) * 6

    def __post_init__(self) -> None:
        if len(self.theta) != 6 or any(t < 0 for t in self.theta):
            raise ValidationError("nps weights: need six nonnegative values")
        if abs(sum(self.theta) - 1.0) > 1e-9:
            raise ValidationError(f"nps weights: theta sums to {sum(self.theta):.6g}, expected 1")

    def as_dict(self) -> dict[str, float]:
        return dict(zip(COMPONENTS, self.theta))


@dataclass
class Hypothesis:
    id: str
    cluster_id: int
    population: str
    intervention: str
    outcome: str
    sp_labels: list[str] = field(default_factory=list)
    comparison: str = "no intervention"
    provenance: str = "template"
    exploratory: bool = False

    def __post_init__(self) -> None:
        if self.intervention == self.outcome:
            raise ValidationError(f"hypothesis {self.id}: intervention equals outcome")

    @property
    def source_pair(self) -> tuple[str, str]:
        return (self.intervention, self.outcome)

    def text(self) -> str:
        return f"{humanize(self.intervention)} {humanize(self.outcome)} in {self.population}"

    def match_text(self) -> str:
        """Short rendering used for lexical document matching: I, O and the SP context."""
        ctx = " and ".join(humanize(x) for x in self.sp_labels) or "the population"
        return f"{humanize(self.intervention)} {humanize(self.outcome)} in individuals with {ctx}"

    def question(self) -> str:
        return f"Does {humanize(self.intervention)} affect {humanize(self.outcome)} in {self.population}?"

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "cluster_id": self.cluster_id,
            "population": self.population,
            "intervention": self.intervention,
            "comparison": self.comparison,
            "outcome": self.outcome,
            "sp_labels": self.sp_labels,
            "provenance": self.provenance,
            "exploratory": self.exploratory,
        }

    @classmethod
    def from_dict(cls, d: dict) -> Hypothesis:
        return cls(
            id=d["id"],
            cluster_id=int(d["cluster_id"]),
            population=d["population"],
            intervention=d["intervention"],
            outcome=d["outcome"],
            sp_labels=list(d.get("sp_labels", [])),
            comparison=d.get("comparison") or "no intervention",
            provenance=d.get("provenance", "template"),
            exploratory=bool(d.get("exploratory", False)),
        )


def hypothesis_id(cluster_id: int | str, src: str, dst: str) -> str:
    return f"h{cluster_id}:{src}->{dst}"


@dataclass
class NPSBreakdown:
    hypothesis_id: str
    raw: dict[str, float]
    normalized: dict[str, float]
    nps: float

    def to_dict(self) -> dict:
        return {"hypothesis_id": self.hypothesis_id, "raw": self.raw, "normalized": self.normalized, "nps": self.nps}

    @classmethod
    def from_dict(cls, d: dict) -> NPSBreakdown:
        return cls(d["hypothesis_id"], dict(d["raw"]), dict(d["normalized"]), float(d["nps"]))


def violates_direction(cg: CausalGraph, src: str, dst: str) -> bool:
    """True when ``dst -> src`` is an edge but ``src -> dst`` is not."""
    return cg.weight(dst, src) != 0 and cg.weight(src, dst) == 0


def raw_components(
    src: str,
    dst: str,
    cg: CausalGraph,
    bn: BayesNet,
    all_graphs: Sequence[CausalGraph],
    lit_support: float = 0.0,
) -> dict[str, float]:
    """Unnormalized NPS components for the pair ``src -> dst`` in one phenotype."""
    weights = [g.weight(src, dst) if src in g.features and dst in g.features else 0.0 for g in all_graphs]
    return {
        "struct": abs(cg.weight(src, dst)),
        "path": strongest_path(cg, src, dst)[1],
        "prob": influence(bn, src, dst),
        "mb": 0.0 if src in markov_blanket(bn, dst) else 1.0,
        "var": float(np.var(weights)) if len(weights) > 1 else 0.0,
        "lit": 1.0 - float(np.clip(lit_support, 0.0, 1.0)),
    }


def normalize_batch(raws: Sequence[Mapping[str, float]]) -> list[dict[str, float]]:
    """Min-max rescale the struct/path/prob/var columns across the batch.

    A column with zero spread keeps its raw value clipped to [0, 1].
    """
    out = [dict(r) for r in raws]
    for c in MINMAX:
        vals = np.array([r[c] for r in raws], dtype=float)
        if not len(vals):
            continue
        lo, hi = vals.min(), vals.max()
        for o, v in zip(out, vals):
            o[c] = float((v - lo) / (hi - lo)) if hi > lo else float(np.clip(v, 0.0, 1.0))
    for o in out:
        for c in ("mb", "lit"):
            o[c] = float(np.clip(o[c], 0.0, 1.0))
    return out


def combine(normalized: Mapping[str, float], w: NPSWeights, components: Sequence[str] = COMPONENTS) -> float:
    theta = w.as_dict()
    total = sum(theta[c] for c in components)
    if total <= 0:
        return 0.0
    return float(sum(theta[c] * normalized[c] for c in components) / total)


def score_batch(
    hypotheses: Sequence[Hypothesis],
    graphs: Mapping[int, CausalGraph],
    bns: Mapping[int, BayesNet],
    lit_support: Mapping[str, float],
    w: NPSWeights,
) -> list[NPSBreakdown]:
    """Final NPS for a batch, after retrieval has filled in literature support."""
    all_graphs = [graphs[k] for k in sorted(graphs)]
    raws = [
        raw_components(h.intervention, h.outcome, graphs[h.cluster_id], bns[h.cluster_id], all_graphs, lit_support.get(h.id, 0.0))
        for h in hypotheses
    ]
    norms = normalize_batch(raws)
    return [NPSBreakdown(h.id, r, n, combine(n, w)) for h, r, n in zip(hypotheses, raws, norms)]


def score_nps(
    h: Hypothesis,
    cg: CausalGraph,
    bn: BayesNet,
    all_graphs: Sequence[CausalGraph],
    lit_support: float,
    w: NPSWeights,
) -> NPSBreakdown:
    """Score one hypothesis on its own (a batch of size one)."""
    raw = raw_components(h.intervention, h.outcome, cg, bn, all_graphs, lit_support)
    norm = normalize_batch([raw])[0]
    return NPSBreakdown(h.id, raw, norm, combine(norm, w))


@dataclass(frozen=True)
class HypothesisConfig:
    max_hypotheses: int = 10
    weights: NPSWeights = NPSWeights()


def candidate_pairs(cg: CausalGraph) -> list[tuple[str, str]]:
    return [
        (a, b)
        for a in cg.features
        for b in cg.features
        if a != b and not violates_direction(cg, a, b)
    ]


def rank_pairs(
    ps: PhenotypeState,
    cg: CausalGraph,
    bn: BayesNet,
    all_graphs: Sequence[CausalGraph],
    w: NPSWeights,
) -> list[tuple[str, str, float]]:
    """Pre-retrieval ranking on every component except literature scarcity."""
    pairs = candidate_pairs(cg)
    raws = [raw_components(a, b, cg, bn, all_graphs) for a, b in pairs]
    norms = normalize_batch(raws)
    pre = [combine(n, w, COMPONENTS[:5]) for n in norms]
    ranked = sorted(zip(pairs, pre), key=lambda x: (-x[1], x[0]))
    return [(a, b, s) for (a, b), s in ranked]


def _template(ps: PhenotypeState, src: str, dst: str, cluster_key: int | str | None = None) -> Hypothesis:
    key = ps.cluster_id if cluster_key is None else cluster_key
    return Hypothesis(
        id=hypothesis_id(key, src, dst),
        cluster_id=ps.cluster_id,
        population=ps.descriptor(),
        intervention=src,
        outcome=dst,
        sp_labels=list(ps.context),
        exploratory=ps.exploratory,
    )


def backend_request(ps: PhenotypeState, cg: CausalGraph, bn: BayesNet, max_hypotheses: int) -> dict:
    return round_floats({
        "task": "hypotheses",
        "phenotype_state": ps.to_dict(),
        "population": ps.descriptor(),
        "edges": [[s, t, round(w, 6)] for s, t, w in cg.edges],
        "markov_blankets": {f: sorted(markov_blanket(bn, f)) for f in bn.features},
        "features": list(cg.features),
        "max_hypotheses": max_hypotheses,
    })


def _from_backend(
    response: dict,
    ps: PhenotypeState,
    cg: CausalGraph,
    linker: EntityLinker,
    limit: int,
) -> list[Hypothesis]:
    out: list[Hypothesis] = []
    seen = set()
    for item in response.get("hypotheses", []):
        if not isinstance(item, dict):
            continue
        src = linker.link(str(item.get("intervention", "")))
        dst = linker.link(str(item.get("outcome", "")))
        if src is None or dst is None or src == dst or (src, dst) in seen:
            logger.info("dropping backend hypothesis %r: entities not linkable", item)
            continue
        if violates_direction(cg, src, dst):
            logger.info("dropping backend hypothesis %s->%s: reverses a causal edge", src, dst)
            continue
        seen.add((src, dst))
        h = _template(ps, src, dst)
        h.population = str(item.get("population") or h.population)
        h.comparison = str(item.get("comparison") or "no intervention")
        h.provenance = "llm"
        out.append(h)
        if len(out) >= limit:
            break
    return out


def generate_hypotheses(
    ps: PhenotypeState,
    cg: CausalGraph,
    bn: BayesNet,
    all_graphs: Sequence[CausalGraph],
    cfg: HypothesisConfig | None = None,
    backend: LLMBackend | None = None,
    linker: EntityLinker | None = None,
    cluster_key: int | str | None = None,
) -> list[Hypothesis]:
    """Top-ranked, direction-consistent PICO hypotheses for one phenotype.

    With a backend, the service proposes the tuples and the same direction
    constraint filters them; an unavailable backend falls back to templates.
    """
    cfg = cfg or HypothesisConfig()
    if backend is not None:
        try:
            resp = backend.post("hypotheses", backend_request(ps, cg, bn, cfg.max_hypotheses))
            hyps = _from_backend(resp, ps, cg, linker or EntityLinker(cg.features), cfg.max_hypotheses)
            if hyps:
                return hyps
            logger.warning("backend returned no usable hypotheses for phenotype %s; using templates", ps.cluster_id)
        except BackendUnavailable as exc:
            logger.warning("hypothesis backend unavailable (%s); using templates", exc)
    ranked = rank_pairs(ps, cg, bn, all_graphs, cfg.weights)
    return [_template(ps, a, b, cluster_key) for a, b, _ in ranked[: cfg.max_hypotheses]]
