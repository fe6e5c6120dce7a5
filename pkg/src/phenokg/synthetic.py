"""Deterministic stand-ins for the student dataset and the external services.

``student_records`` draws a 1000-row, 16-feature table from six latent
subpopulations, each with its own linear causal structure.
``SyntheticLiterature`` answers E-utilities and language-model requests with
plausible, hash-seeded content in the real wire formats, so that a run in
recording mode produces fixtures indistinguishable in shape from live ones.
"""

from __future__ import annotations

import csv
import hashlib
import json
import re
from pathlib import Path
from typing import Mapping, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .text import humanize

FEATURES: list[dict] = [
    {"name": "age", "kind": "numeric", "unit": "years"},
    {"name": "gender", "kind": "categorical"},
    {"name": "stress_level", "kind": "numeric", "unit": "0-10"},
    {"name": "anxiety_score", "kind": "numeric", "unit": "GAD-7"},
    {"name": "depression_score", "kind": "numeric", "unit": "PHQ-9"},
    {"name": "sleep_hours", "kind": "numeric", "unit": "hours/night"},
    {"name": "physical_activity", "kind": "numeric", "unit": "hours/week"},
    {"name": "social_support", "kind": "numeric", "unit": "1-5"},
    {"name": "screen_time", "kind": "numeric", "unit": "hours/day"},
    {"name": "study_hours", "kind": "numeric", "unit": "hours/week"},
    {"name": "attendance_rate", "kind": "numeric", "unit": "percent"},
    {"name": "academic_performance", "kind": "numeric", "unit": "GPA"},
    {"name": "peer_attachment", "kind": "numeric", "unit": "1-5"},
    {"name": "parent_attachment", "kind": "numeric", "unit": "1-5"},
    {"name": "diet_quality", "kind": "numeric", "unit": "1-10"},
    {"name": "counseling_sessions", "kind": "numeric", "unit": "count"},
    {"name": "emotional_journal", "kind": "text"},
]

NUMERIC = [f["name"] for f in FEATURES if f["kind"] != "text"]

# location, scale, lower, upper, decimals
_UNITS = {
    "age": (21.0, 2.0, 17, 30, 0),
    "stress_level": (5.0, 1.8, 0, 10, 1),
    "anxiety_score": (8.0, 3.5, 0, 21, 0),
    "depression_score": (9.0, 4.0, 0, 27, 0),
    "sleep_hours": (7.0, 1.1, 3, 11, 1),
    "physical_activity": (4.0, 2.0, 0, 15, 1),
    "social_support": (3.2, 0.8, 1, 5, 2),
    "screen_time": (5.0, 1.8, 0, 14, 1),
    "study_hours": (15.0, 5.0, 0, 45, 1),
    "attendance_rate": (82.0, 9.0, 20, 100, 1),
    "academic_performance": (3.0, 0.45, 0, 4, 2),
    "peer_attachment": (3.4, 0.7, 1, 5, 2),
    "parent_attachment": (3.5, 0.7, 1, 5, 2),
    "diet_quality": (6.0, 1.6, 1, 10, 1),
    "counseling_sessions": (2.0, 1.5, 0, 15, 0),
}

# parent -> child, base weight on the latent (standardized) scale
_EDGES = [
    ("screen_time", "sleep_hours", -0.8),
    ("sleep_hours", "stress_level", -0.7),
    ("physical_activity", "stress_level", -0.6),
    ("stress_level", "anxiety_score", 0.9),
    ("gender", "anxiety_score", 0.6),
    ("anxiety_score", "depression_score", 0.7),
    ("social_support", "depression_score", -0.7),
    ("diet_quality", "depression_score", -0.5),
    ("anxiety_score", "academic_performance", -0.8),
    ("attendance_rate", "academic_performance", 0.7),
    ("study_hours", "academic_performance", 0.6),
    ("parent_attachment", "social_support", 0.8),
    ("peer_attachment", "social_support", 0.6),
    ("depression_score", "counseling_sessions", 0.7),
    ("age", "study_hours", 0.5),
]

# latent intercepts per subpopulation, scaled by _SEPARATION
_SEPARATION = 1.3
_GROUPS = [
    {"stress_level": 1.6, "anxiety_score": 1.2, "study_hours": 1.6, "sleep_hours": -1.2, "academic_performance": 1.2},
    {"attendance_rate": -1.8, "social_support": -1.6, "depression_score": 1.2, "screen_time": 1.4, "academic_performance": -1.4},
    {"physical_activity": 1.8, "sleep_hours": 1.2, "diet_quality": 1.6, "stress_level": -1.4, "social_support": 0.8},
    {"stress_level": 1.4, "sleep_hours": -1.8, "screen_time": 1.8, "physical_activity": -1.4, "depression_score": 1.0},
    {"parent_attachment": 1.8, "peer_attachment": 1.8, "social_support": 1.0, "anxiety_score": -1.2, "age": 1.0},
    {"counseling_sessions": 2.2, "depression_score": 1.4, "diet_quality": -1.6, "age": -1.2, "attendance_rate": -0.8},
]
_GROUP_SIZES = [190, 178, 170, 160, 167, 135]
_GENDERS = ["female", "male", "nonbinary"]

_JOURNAL = [
    "Deadlines keep piling up and I can't switch off at night.",
    "Skipped most lectures this week, nobody really noticed.",
    "Went for a long run and cooked a proper dinner, felt good.",
    "Up until 3am on my phone again, exhausted all day.",
    "Called home and met friends for coffee, feeling supported.",
    "Had another counselling session; still feel low most days.",
]


def _topo(names: Sequence[str]) -> list[str]:
    parents = {n: [p for p, c, _ in _EDGES if c == n] for n in names}
    order, done = [], set()
    while len(order) < len(names):
        for n in names:
            if n not in done and all(p in done for p in parents[n]):
                order.append(n)
                done.add(n)
    return order


def student_records(seed: int = 0, n: int | None = None) -> list[dict[str, str]]:
    """Generate the synthetic student table as CSV-ready string records."""
    return student_table(seed, n)[0]


def student_table(seed: int = 0, n: int | None = None) -> tuple[list[dict[str, str]], np.ndarray]:
    """Records plus the planted subpopulation label of each row.

    Each subpopulation perturbs the shared edge weights (scaling by 0.6-1.4
    and dropping each edge with probability 0.15), so causal structure varies
    across phenotypes.
    """
    rng = np.random.default_rng(seed)
    sizes = list(_GROUP_SIZES)
    if n is not None:
        sizes = [max(1, round(s * n / sum(sizes))) for s in sizes]
        sizes[0] += n - sum(sizes)
    order = _topo(NUMERIC)
    rows: list[tuple[int, dict[str, str]]] = []
    for g, (size, means) in enumerate(zip(sizes, _GROUPS)):
        scale = rng.uniform(0.6, 1.4, len(_EDGES)) * (rng.random(len(_EDGES)) > 0.15)
        p_female = 0.45 + 0.08 * g
        u = rng.random(size)
        gender = np.where(u < p_female, 0, np.where(u < 0.93, 1, 2))
        lat = {}
        for name in order:
            if name == "gender":
                lat[name] = (gender == 0).astype(float)
                continue
            col = _SEPARATION * means.get(name, 0.0) + rng.standard_normal(size) * 0.8
            for (p, c, w), s in zip(_EDGES, scale):
                if c == name:
                    col = col + w * s * (lat[p] - _SEPARATION * means.get(p, 0.0))
            lat[name] = col
        for i in range(size):
            rec: dict[str, str] = {}
            for f in FEATURES:
                name = f["name"]
                if name == "gender":
                    rec[name] = _GENDERS[gender[i]]
                elif name == "emotional_journal":
                    rec[name] = _JOURNAL[g]
                else:
                    loc, sc, lo, hi, dec = _UNITS[name]
                    v = float(np.clip(loc + sc * lat[name][i], lo, hi))
                    rec[name] = f"{round(v, dec):.{dec}f}"
            rows.append((g, rec))
    perm = rng.permutation(len(rows))
    return [rows[i][1] for i in perm], np.array([rows[i][0] for i in perm])


def write_csv(records: Sequence[Mapping[str, str]], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = [f["name"] for f in FEATURES]
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=names, lineterminator="\n")
        w.writeheader()
        for r in records:
            w.writerow({k: r[k] for k in names})
    return path


def _rng(*parts: object) -> np.random.Generator:
    digest = hashlib.sha256("\x1f".join(map(str, parts)).encode("utf-8")).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


_PUB_TYPES = [
    (["Journal Article", "Meta-Analysis"], 0.08),
    (["Journal Article", "Systematic Review"], 0.1),
    (["Journal Article", "Randomized Controlled Trial"], 0.17),
    (["Journal Article", "Observational Study"], 0.25),
    (["Journal Article"], 0.3),
    (["Case Reports"], 0.1),
]

_RELATIONS_POS = ["increases", "worsens", "associates"]
_RELATIONS_NEG = ["decreases", "improves", "associates"]
_UNKNOWN_ENTITIES = ["gut microbiome", "robotic tutors", "mindfulness apps", "caffeine intake"]


class SyntheticLiterature:
    """Offline transport that fabricates literature and extraction responses.

    Responses depend only on the request (and, for ``efetch``, on the search
    that issued the ids), so replays are deterministic.
    """

    def __init__(self, aliases: Mapping[str, str] | None = None, seed: int = 0) -> None:
        self.seed = seed
        self.surface: dict[str, list[str]] = {}
        for alias, feat in sorted((aliases or {}).items()):
            self.surface.setdefault(feat, []).append(alias)
        self._topics: dict[str, tuple[str, list[str], int]] = {}

    def _names(self, feature: str) -> list[str]:
        return [humanize(feature)] + self.surface.get(feature, [])

    def call(self, service: str, endpoint: str, payload: dict) -> bytes:
        if service == "eutils" and endpoint == "esearch":
            return self._esearch(payload)
        if service == "eutils" and endpoint == "efetch":
            return self._efetch(payload)
        if service == "llm" and endpoint == "claims":
            return self._claims(payload)
        if service == "llm" and endpoint == "hypotheses":
            return self._hypotheses(payload)
        raise ValueError(f"synthetic backend has no {service}/{endpoint}")

    def _esearch(self, payload: dict) -> bytes:
        term = payload["term"]
        rng = _rng(self.seed, "esearch", term)
        # a long tail: many pairs are barely studied
        count = int(min(400, rng.pareto(1.2) * 6)) if rng.random() > 0.15 else 0
        retmax = int(payload.get("retmax", 20))
        base = 20_000_000 + int(rng.integers(0, 9_000_000))
        ids = [str(base + 7 * k) for k in range(min(count, retmax))]
        quoted = re.findall(r'"([^"]+)"', term)
        pop = re.findall(r"\(([^)]*)\)", term)
        pop_words = [w.strip() for w in pop[0].split(" OR ")] if pop else []
        for k, pmid in enumerate(ids):
            self._topics[pmid] = (quoted[0] if quoted else "", [quoted[1] if len(quoted) > 1 else ""] + pop_words, k)
        body = {
            "header": {"type": "esearch", "version": "0.3"},
            "esearchresult": {
                "count": str(count),
                "retmax": str(len(ids)),
                "retstart": "0",
                "idlist": ids,
                "querytranslation": term,
            },
        }
        return json.dumps(body, indent=1).encode("utf-8")

    def _article(self, pmid: str) -> str:
        rng = _rng(self.seed, "efetch", pmid)
        subj, rest, rank = self._topics.get(pmid, ("student wellbeing", ["academic outcomes"], 9))
        obj = rest[0] if rest else "outcomes"
        pop = [w for w in rest[1:] if w]
        # most of the literature is recent
        year = 2025 - min(35, int(rng.exponential(7.0)))
        types = _PUB_TYPES[int(rng.choice(len(_PUB_TYPES), p=[p for _, p in _PUB_TYPES]))][0]
        ptypes = "".join(f'<PublicationType UI="D0">{escape(t)}</PublicationType>' for t in types)
        if rng.random() < 0.07:
            # malformed: no title and no abstract
            return f"<PubmedArticle><MedlineCitation><PMID>{pmid}</PMID><Article></Article></MedlineCitation></PubmedArticle>"
        if rank >= 3 and rng.random() < 0.3:
            title = "Campus facilities planning and enrolment trends"
            abstract = "We review building utilization and course scheduling across departments."
        else:
            where = f" among university students with {' and '.join(pop)}" if pop else " among university students"
            title = f"{subj.capitalize()} and {obj}{where}"
            abstract = (
                f"Background: the role of {subj} in {obj} remains debated. "
                f"Methods: we studied {subj} and {obj}{where}. "
                f"Results: {subj} was associated with {obj} (adjusted effect {rng.uniform(0.1, 0.6):.2f})."
            )
        return (
            "<PubmedArticle><MedlineCitation Status=\"MEDLINE\">"
            f"<PMID Version=\"1\">{pmid}</PMID><Article>"
            f"<Journal><JournalIssue><PubDate><Year>{year}</Year></PubDate></JournalIssue></Journal>"
            f"<ArticleTitle>{escape(title)}</ArticleTitle>"
            f"<Abstract><AbstractText>{escape(abstract)}</AbstractText></Abstract>"
            f"<PublicationTypeList>{ptypes}</PublicationTypeList>"
            "</Article></MedlineCitation></PubmedArticle>"
        )

    def _efetch(self, payload: dict) -> bytes:
        ids = [i for i in str(payload["id"]).split(",") if i]
        body = "".join(self._article(i) for i in ids)
        return ('<?xml version="1.0" ?>\n<PubmedArticleSet>' + body + "</PubmedArticleSet>\n").encode("utf-8")

    def _claims(self, payload: dict) -> bytes:
        doc = payload["document"]
        h = payload["hypothesis"]
        ps = payload["phenotype_state"]
        rng = _rng(self.seed, "claims", doc["doc_id"], h["id"])
        src, dst = h["intervention"], h["outcome"]
        sign = next((w for s, t, w in payload.get("edges", []) if s == src and t == dst), None)
        rel_pool = _RELATIONS_NEG if sign is not None and sign < 0 else _RELATIONS_POS
        pop_terms = [humanize(x) for x in ps.get("context", [])] + [humanize(f) for f, _ in ps.get("dominant_features", [])[:2]]
        k = int(rng.integers(1, len(pop_terms) + 1)) if pop_terms else 0
        context = "university students" + (" with " + ", ".join(pop_terms[:k]) if k else "")

        def claim(s: str, r: str, o: str, conf: float) -> dict:
            return {
                "subject": s,
                "relation": r,
                "object": o,
                "confidence": round(conf, 3),
                "evidence_type": "unknown",
                "context": context,
                "recommendation": f"consider {s} when addressing {o}",
            }

        names_s, names_o = self._names(src), self._names(dst)
        out = [claim(names_s[int(rng.integers(len(names_s)))], str(rng.choice(rel_pool)),
                     names_o[int(rng.integers(len(names_o)))], rng.uniform(0.55, 0.95))]
        mb = [f for f in payload.get("markov_blankets", {}).get(dst, []) if f not in (src, dst)]
        if mb and rng.random() < 0.5:
            med = mb[int(rng.integers(len(mb)))]
            out.append(claim(self._names(med)[0], "mediates", names_o[0], rng.uniform(0.4, 0.85)))
        if rng.random() < 0.2:
            out.append(claim(_UNKNOWN_ENTITIES[int(rng.integers(len(_UNKNOWN_ENTITIES)))], "associates", names_o[0], rng.uniform(0.3, 0.7)))
        if rng.random() < 0.1:
            out.append(claim(names_o[0], "increases", names_o[0], 0.5))
        return json.dumps({"claims": out}, indent=1).encode("utf-8")

    def _hypotheses(self, payload: dict) -> bytes:
        rng = _rng(self.seed, "hypotheses", payload["phenotype_state"]["cluster_id"])
        edges = sorted(payload.get("edges", []), key=lambda e: (-abs(e[2]), e[0], e[1]))
        out = []
        for s, t, _ in edges[: payload.get("max_hypotheses", 10)]:
            out.append({
                "population": payload.get("population", ""),
                "intervention": self._names(s)[int(rng.integers(len(self._names(s))))],
                "comparison": "no intervention",
                "outcome": self._names(t)[0],
            })
        return json.dumps({"hypotheses": out}, indent=1).encode("utf-8")
