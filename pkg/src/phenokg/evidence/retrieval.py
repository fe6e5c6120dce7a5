"""Literature retrieval over E-utilities and document matching scores."""

from __future__ import annotations

import json
import logging
import math
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from sklearn.feature_extraction.text import TfidfVectorizer

from ..backends import Transport
from ..errors import BackendUnavailable, ParseError
from ..hypothesis import Hypothesis
from ..text import humanize
from .weights import ScoreWeights

logger = logging.getLogger(__name__)

STUDY_TYPES = ("meta-analysis", "systematic-review", "rct", "cohort", "cross-sectional", "case-report", "unknown")

# publication types and MeSH descriptors, strongest design first
_DESIGN_MARKERS = (
    ("meta-analysis", ("meta-analysis",)),
    ("systematic-review", ("systematic review",)),
    ("rct", ("randomized controlled trial", "randomised controlled trial")),
    ("cohort", ("cohort studies", "prospective studies", "longitudinal studies", "observational study")),
    ("cross-sectional", ("cross-sectional studies", "cross-sectional study")),
    ("case-report", ("case reports",)),
)


@dataclass(frozen=True)
class Document:
    doc_id: str
    title: str
    abstract: str
    year: int | None
    study_type: str = "unknown"
    match_score: float = 0.0

    @property
    def text(self) -> str:
        return f"{self.title} {self.abstract}".strip()

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "title": self.title,
            "abstract": self.abstract,
            "year": self.year,
            "study_type": self.study_type,
            "match_score": self.match_score,
        }

    @classmethod
    def from_dict(cls, d: dict) -> Document:
        return cls(d["doc_id"], d["title"], d["abstract"], d["year"], d["study_type"], float(d["match_score"]))


@dataclass
class RetrievalResult:
    hypothesis_id: str
    query: str
    count: int
    documents: list[Document]
    lit_support: float
    skipped: int = 0


def study_type(pub_types: Sequence[str], mesh: Sequence[str] = ()) -> str:
    labels = {t.strip().lower() for t in list(pub_types) + list(mesh)}
    for name, markers in _DESIGN_MARKERS:
        if any(m in labels for m in markers):
            return name
    return "unknown"


def _year(article: ET.Element) -> int | None:
    for path in (
        "MedlineCitation/Article/Journal/JournalIssue/PubDate/Year",
        "MedlineCitation/Article/ArticleDate/Year",
        "MedlineCitation/Article/Journal/JournalIssue/PubDate/MedlineDate",
    ):
        node = article.find(path)
        if node is not None and node.text:
            m = re.search(r"(1[89]|20)\d\d", node.text)
            if m:
                return int(m.group(0))
    return None


def _text(node: ET.Element | None) -> str:
    return " ".join("".join(node.itertext()).split()) if node is not None else ""


def parse_article(article: ET.Element) -> Document:
    """One ``PubmedArticle`` element to a :class:`Document`.

    Raises:
        ParseError: no PMID, or neither a title nor an abstract.
    """
    pmid = article.findtext("MedlineCitation/PMID")
    if not pmid or not pmid.strip():
        raise ParseError("record without PMID")
    art = article.find("MedlineCitation/Article")
    title = _text(art.find("ArticleTitle")) if art is not None else ""
    parts = art.findall("Abstract/AbstractText") if art is not None else []
    abstract = " ".join(_text(p) for p in parts).strip()
    if not title and not abstract:
        raise ParseError(f"PMID {pmid.strip()}: no title or abstract")
    pub_types = [_text(p) for p in article.findall("MedlineCitation/Article/PublicationTypeList/PublicationType")]
    mesh = [_text(p) for p in article.findall("MedlineCitation/MeshHeadingList/MeshHeading/DescriptorName")]
    return Document(
        doc_id=f"pmid:{pmid.strip()}",
        title=title,
        abstract=abstract,
        year=_year(article),
        study_type=study_type(pub_types, mesh),
    )


def parse_efetch(body: bytes) -> tuple[list[Document], int]:
    """Parse a ``PubmedArticleSet``; returns documents and the number of skipped records."""
    try:
        root = ET.fromstring(body)
    except ET.ParseError as exc:
        raise ParseError(f"efetch response is not XML: {exc}") from exc
    docs, skipped = [], 0
    for article in root.iter("PubmedArticle"):
        try:
            docs.append(parse_article(article))
        except ParseError as exc:
            skipped += 1
            logger.info("skipping record: %s", exc)
    return docs, skipped


def _term(text: str) -> str:
    return f'"{humanize(text)}"'


def build_query(h: Hypothesis, n_population_terms: int = 2) -> str:
    """Boolean conjunction of the intervention, outcome and population terms."""
    q = f"{_term(h.intervention)} AND {_term(h.outcome)}"
    labels = [humanize(s) for s in h.sp_labels[:n_population_terms] if s]
    if labels:
        q += " AND (" + " OR ".join(labels) + ")"
    return q


class EutilsClient:
    """``esearch`` then ``efetch`` against PubMed through any transport."""

    def __init__(self, transport: Transport, db: str = "pubmed") -> None:
        self.transport = transport
        self.db = db

    def search(self, query: str, limit: int) -> tuple[int, list[str]]:
        payload = {"db": self.db, "term": query, "retmax": str(limit), "retmode": "json"}
        body = self.transport.call("eutils", "esearch", payload)
        try:
            res = json.loads(body.decode("utf-8"))["esearchresult"]
            count = int(res.get("count", 0))
            ids = [str(i) for i in res.get("idlist", [])]
        except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"unreadable esearch response: {exc}") from exc
        return count, ids[:limit]

    def fetch(self, ids: Sequence[str]) -> tuple[list[Document], int]:
        if not ids:
            return [], 0
        payload = {"db": self.db, "id": ",".join(ids), "retmode": "xml", "rettype": "abstract"}
        return parse_efetch(self.transport.call("eutils", "efetch", payload))


def retrieve(h: Hypothesis, client: EutilsClient, limit: int, w: ScoreWeights) -> RetrievalResult:
    """Search and fetch up to ``limit`` documents for one hypothesis.

    ``lit_support`` is the total hit count capped at ``w.lit_cap`` and scaled
    to [0, 1]. An unavailable backend is treated as zero hits.
    """
    query = build_query(h)
    try:
        count, ids = client.search(query, limit)
        docs, skipped = client.fetch(ids)
    except BackendUnavailable as exc:
        logger.warning("retrieval for %s unavailable: %s", h.id, exc)
        return RetrievalResult(h.id, query, 0, [], 0.0)
    except ParseError as exc:
        logger.warning("retrieval for %s unparseable: %s", h.id, exc)
        return RetrievalResult(h.id, query, 0, [], 0.0)
    if skipped:
        logger.warning("%s: %d malformed records skipped, %d kept", h.id, skipped, len(docs))
    return RetrievalResult(h.id, query, count, docs, lit_support(count, w.lit_cap), skipped)


def lit_support(count: int, cap: int) -> float:
    return min(1.0, max(0, count) / cap)


def recency(year: int | None, reference_year: int, half_life: float) -> float:
    """``exp(-age / half_life)``; an undated document scores 0."""
    if year is None:
        return 0.0
    return math.exp(-max(0, reference_year - year) / half_life)


def lexical_relevance(docs: Sequence[Document], query_text: str) -> np.ndarray:
    """TF-IDF cosine of each document against the query text.

    The IDF is fit on the query together with the documents.
    """
    if not docs:
        return np.zeros(0)
    corpus = [query_text] + [d.text for d in docs]
    try:
        X = TfidfVectorizer(lowercase=True, sublinear_tf=False, norm="l2").fit_transform(corpus)
    except ValueError:
        # empty vocabulary
        return np.zeros(len(docs))
    sims = (X[1:] @ X[0].T).toarray().ravel()
    return np.clip(sims, 0.0, 1.0)


def match_score(d: Document, h: Hypothesis, w: ScoreWeights, f_rel: float | None = None) -> float:
    """``alpha_1 * f_rel + alpha_2 * f_rec`` for one document."""
    if f_rel is None:
        f_rel = float(lexical_relevance([d], h.match_text())[0])
    a1, a2 = w.alpha
    return a1 * f_rel + a2 * recency(d.year, w.year, w.half_life)


def score_documents(docs: Sequence[Document], h: Hypothesis, w: ScoreWeights) -> list[Document]:
    """Attach match scores computed with one shared IDF per hypothesis."""
    rel = lexical_relevance(docs, h.match_text())
    return [replace(d, match_score=float(match_score(d, h, w, float(r)))) for d, r in zip(docs, rel)]


def retained(docs: Sequence[Document], tau_d: float) -> list[Document]:
    return [d for d in docs if d.match_score >= tau_d]
