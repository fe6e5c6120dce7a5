"""Literature evidence: retrieval, claim extraction and claim scoring."""

from .claims import RELATIONS, Claim, claim_key, extract_claims, parse_claim
from .retrieval import (
    STUDY_TYPES,
    Document,
    EutilsClient,
    RetrievalResult,
    build_query,
    lexical_relevance,
    lit_support,
    match_score,
    parse_efetch,
    recency,
    retained,
    retrieve,
    score_documents,
)
from .scoring import (
    ScoredClaim,
    causal_support,
    merge_claims,
    population_terms,
    probabilistic_support,
    relevance,
    validation,
)
from .weights import DEFAULT_EVIDENCE, ScoreWeights, check_group

__all__ = [
    "RELATIONS",
    "STUDY_TYPES",
    "DEFAULT_EVIDENCE",
    "Claim",
    "Document",
    "EutilsClient",
    "RetrievalResult",
    "ScoreWeights",
    "ScoredClaim",
    "build_query",
    "causal_support",
    "check_group",
    "claim_key",
    "extract_claims",
    "lexical_relevance",
    "lit_support",
    "match_score",
    "merge_claims",
    "parse_claim",
    "parse_efetch",
    "population_terms",
    "probabilistic_support",
    "recency",
    "relevance",
    "retained",
    "retrieve",
    "score_documents",
    "validation",
]
