"""Structured claim extraction from retained documents."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Mapping

from ..backends import LLMBackend, round_floats
from ..causal import CausalGraph
from ..errors import BackendUnavailable, SchemaViolation
from ..hypothesis import Hypothesis
from ..phenotype import PhenotypeState
from ..text import EntityLinker, normalize
from .retrieval import STUDY_TYPES, Document

logger = logging.getLogger(__name__)

RELATIONS = ("increases", "decreases", "improves", "worsens", "associates", "mediates", "no-effect")


@dataclass(frozen=True)
class Claim:
    """A (subject, relation, object) statement with metadata.

    ``subject_feature``/``object_feature`` hold the linked schema feature or
    ``None`` for an entity outside the schema.
    """

    claim_id: str
    hypothesis_id: str
    doc_id: str
    subject: str
    relation: str
    object: str
    subject_feature: str | None
    object_feature: str | None
    evidence_type: str
    confidence: float
    context: str = ""
    recommendation: str = ""

    def to_dict(self) -> dict:
        return {
            "claim_id": self.claim_id,
            "hypothesis_id": self.hypothesis_id,
            "doc_id": self.doc_id,
            "subject": self.subject,
            "relation": self.relation,
            "object": self.object,
            "subject_feature": self.subject_feature,
            "object_feature": self.object_feature,
            "evidence_type": self.evidence_type,
            "confidence": self.confidence,
            "context": self.context,
            "recommendation": self.recommendation,
        }

    @classmethod
    def from_dict(cls, d: dict) -> Claim:
        return cls(**{**d, "confidence": float(d["confidence"])})


def claim_key(subject: str, relation: str, obj: str, doc_id: str) -> str:
    """Natural key: linked feature or normalized text for each entity, plus the document."""
    return f"{subject}|{relation}|{obj}|{doc_id}"


def parse_claim(
    raw: Mapping[str, Any],
    h: Hypothesis,
    d: Document,
    linker: EntityLinker,
) -> Claim:
    """Validate one backend record and link its entities.

    Raises:
        SchemaViolation: missing or empty entities, unknown relation,
            confidence outside [0, 1], or subject equal to object.
    """
    if not isinstance(raw, Mapping):
        raise SchemaViolation(f"claim record is not an object: {raw!r}")
    subj = str(raw.get("subject") or "").strip()
    obj = str(raw.get("object") or "").strip()
    rel = str(raw.get("relation") or "").strip().lower()
    if not normalize(subj) or not normalize(obj):
        raise SchemaViolation("claim without subject or object")
    if rel not in RELATIONS:
        raise SchemaViolation(f"relation {rel!r} not in vocabulary")
    try:
        conf = float(raw.get("confidence"))
    except (TypeError, ValueError) as exc:
        raise SchemaViolation(f"confidence {raw.get('confidence')!r} is not a number") from exc
    if not 0.0 <= conf <= 1.0:
        raise SchemaViolation(f"confidence {conf} outside [0, 1]")
    sf, of = linker.link(subj), linker.link(obj)
    s_key = sf or normalize(subj)
    o_key = of or normalize(obj)
    if s_key == o_key:
        raise SchemaViolation(f"subject equals object ({s_key})")
    ev = str(raw.get("evidence_type") or "unknown").strip().lower()
    if ev not in STUDY_TYPES:
        ev = "unknown"
    return Claim(
        claim_id=claim_key(s_key, rel, o_key, d.doc_id),
        hypothesis_id=h.id,
        doc_id=d.doc_id,
        subject=subj,
        relation=rel,
        object=obj,
        subject_feature=sf,
        object_feature=of,
        evidence_type=ev,
        confidence=conf,
        context=str(raw.get("context") or ""),
        recommendation=str(raw.get("recommendation") or ""),
    )


def claims_request(d: Document, h: Hypothesis, ps: PhenotypeState, cg: CausalGraph, mb: Mapping[str, list[str]]) -> dict:
    return round_floats({
        "task": "claims",
        "document": {"doc_id": d.doc_id, "title": d.title, "abstract": d.abstract},
        "hypothesis": h.to_dict(),
        "phenotype_state": ps.to_dict(),
        "edges": [[s, t, round(w, 6)] for s, t, w in cg.edges],
        "markov_blankets": dict(mb),
        "relations": list(RELATIONS),
    })


def extract_claims(
    d: Document,
    h: Hypothesis,
    ps: PhenotypeState,
    cg: CausalGraph,
    mb: Mapping[str, list[str]],
    backend: LLMBackend,
    linker: EntityLinker,
) -> list[Claim]:
    """Ask the backend for the claims in ``d``; invalid records are dropped.

    An unavailable backend skips the document.
    """
    try:
        resp = backend.post("claims", claims_request(d, h, ps, cg, mb))
    except BackendUnavailable as exc:
        logger.warning("claim extraction skipped for %s: %s", d.doc_id, exc)
        return []
    out: list[Claim] = []
    seen: set[str] = set()
    records = resp.get("claims", [])
    if not isinstance(records, list):
        logger.warning("claim response for %s has no claim list", d.doc_id)
        return []
    for raw in records:
        try:
            c = parse_claim(raw, h, d, linker)
        except SchemaViolation as exc:
            logger.info("dropping claim from %s: %s", d.doc_id, exc)
            continue
        if c.claim_id not in seen:
            seen.add(c.claim_id)
            out.append(c)
    return out
