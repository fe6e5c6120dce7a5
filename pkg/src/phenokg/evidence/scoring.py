"""Relevance and validation scores for extracted claims."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable

from ..causal import CausalGraph, strongest_path
from ..phenotype import PhenotypeState
from ..probnet import BayesNet, influence, markov_blanket
from ..text import jaccard, tokens
from .claims import Claim
from .retrieval import Document
from .weights import ScoreWeights

logger = logging.getLogger(__name__)


def population_terms(ps: PhenotypeState) -> set[str]:
    """Tokens of the phenotype context: SP labels and dominant features."""
    out: set[str] = set()
    for label in ps.context:
        out |= tokens(label)
    for name, _ in ps.dominant_features:
        out |= tokens(name)
    return out


def relevance_parts(c: Claim, d: Document, ps: PhenotypeState, w: ScoreWeights) -> tuple[float, float, float]:
    f_llm = c.confidence
    f_pop = jaccard(tokens(c.context), population_terms(ps))
    design = d.study_type if d.study_type != "unknown" else c.evidence_type
    f_ev = w.evidence_strength(design)
    return f_llm, f_pop, f_ev


def relevance(c: Claim, d: Document, ps: PhenotypeState, w: ScoreWeights) -> float:
    """``omega . (f_LLM, f_pop, f_ev)``."""
    return float(sum(o * f for o, f in zip(w.omega, relevance_parts(c, d, ps, w))))


def causal_support(c: Claim, cg: CausalGraph) -> float:
    """Edge or strongest-path strength relative to the strongest edge; 0 if reversed or unlinked."""
    s, o = c.subject_feature, c.object_feature
    if s is None or o is None or s not in cg.features or o not in cg.features:
        return 0.0
    w_max = cg.max_abs_weight()
    if w_max <= 0:
        return 0.0
    direct = cg.weight(s, o)
    if direct != 0:
        return min(1.0, abs(direct) / w_max)
    if cg.weight(o, s) != 0:
        return 0.0
    return min(1.0, strongest_path(cg, s, o)[1] / w_max)


def probabilistic_support(c: Claim, bn: BayesNet) -> float:
    s, o = c.subject_feature, c.object_feature
    if s is None or o is None or s not in bn.features or o not in bn.features:
        return 0.0
    if s in markov_blanket(bn, o):
        return 1.0
    return influence(bn, s, o)


def validation(c: Claim, cg: CausalGraph, bn: BayesNet, w: ScoreWeights) -> float:
    """``beta_1 * f_causal + beta_2 * f_BN``."""
    b1, b2 = w.beta
    return float(b1 * causal_support(c, cg) + b2 * probabilistic_support(c, bn))


@dataclass
class ScoredClaim:
    claim: Claim
    R: float
    Y: float
    nps: float
    hypothesis_ids: list[str] = field(default_factory=list)

    @property
    def objectives(self) -> tuple[float, float, float]:
        return (self.R, self.Y, self.nps)

    def to_dict(self) -> dict:
        return {"claim": self.claim.to_dict(), "R": self.R, "Y": self.Y, "nps": self.nps, "hypothesis_ids": self.hypothesis_ids}

    @classmethod
    def from_dict(cls, d: dict) -> ScoredClaim:
        return cls(Claim.from_dict(d["claim"]), float(d["R"]), float(d["Y"]), float(d["nps"]), list(d["hypothesis_ids"]))


def merge_claims(scored: Iterable[ScoredClaim]) -> list[ScoredClaim]:
    """Collapse claims sharing a natural key.

    The copy from the parent hypothesis with the highest NPS wins; every
    parent hypothesis is kept for document attachment.
    """
    by_key: dict[str, ScoredClaim] = {}
    for sc in scored:
        key = sc.claim.claim_id
        prev = by_key.get(key)
        if prev is None:
            by_key[key] = ScoredClaim(sc.claim, sc.R, sc.Y, sc.nps, list(sc.hypothesis_ids or [sc.claim.hypothesis_id]))
            continue
        parents = sorted(set(prev.hypothesis_ids) | set(sc.hypothesis_ids or [sc.claim.hypothesis_id]))
        logger.info("claim %s reached from %d hypotheses; keeping max NPS", key, len(parents))
        wins = sc.nps > prev.nps or (sc.nps == prev.nps and sc.claim.hypothesis_id < prev.claim.hypothesis_id)
        best = sc if wins else prev
        by_key[key] = ScoredClaim(best.claim, best.R, best.Y, best.nps, parents)
    return [by_key[k] for k in sorted(by_key)]

