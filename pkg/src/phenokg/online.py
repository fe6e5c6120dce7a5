"""Matching new user states against the learned phenotypes.

A new state is scored against every phenotype by a mix of embedding and
standard-phenotype similarity, then matched, soft-matched or flagged as an
anomaly. Anomalies that the isolation forest also marks as outliers are
buffered as candidate phenotypes until enough similar ones accumulate.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from sklearn.ensemble import IsolationForest

from .embed import EncoderParams, encode_state
from .errors import ValidationError, ZeroVector
from .ingest import EdgeTemplate, EncodedMatrix, state_graph
from .phenotype import ClusterModel, SPMixture, soft_assign

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class OnlineConfig:
    alpha: float = 0.6
    tau_match: float = 0.6
    tau_anom: float = 0.3
    tau_nc: int = 5
    soft_ratio: float = 0.8
    n_trees: int = 100
    max_samples: int = 256
    anomaly_cutoff: float = 0.6
    merge_cosine: float = 0.9
    max_hypotheses: int = 3
    max_docs: int = 5

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ValidationError(f"online.alpha: must lie in [0, 1], got {self.alpha}")
        if not 0.0 <= self.tau_anom < self.tau_match <= 1.0:
            raise ValidationError(
                f"online thresholds: need 0 <= tau_anom < tau_match <= 1, got {self.tau_anom}, {self.tau_match}"
            )
        if self.tau_nc < 1:
            raise ValidationError(f"online.tau_nc: must be at least 1, got {self.tau_nc}")
        if not 0.0 < self.soft_ratio <= 1.0:
            raise ValidationError(f"online.soft_ratio: must lie in (0, 1], got {self.soft_ratio}")


@dataclass
class OnlineState:
    """``x`` standardized features, ``z`` embedding, ``pi`` phenotype weights, ``pi_sp`` SP weights."""

    state_id: str
    x: np.ndarray
    z: np.ndarray
    pi: np.ndarray
    pi_sp: np.ndarray


@dataclass
class MatchModel:
    """Everything retained from training that online scoring needs.

    ``z_center`` and ``sp_center`` are training means; both cosines are taken
    on centred vectors so that opposite profiles score near zero.
    """

    clusters: ClusterModel
    omega: np.ndarray
    z_center: np.ndarray
    sp_center: np.ndarray

    @property
    def K(self) -> int:
        return self.clusters.K


def sp_matrix(mixtures: Sequence[SPMixture]) -> np.ndarray:
    """Rows are the SP mixtures ``Omega_k`` in cluster order."""
    mix = sorted(mixtures, key=lambda m: m.cluster_id)
    return np.vstack([np.asarray(m.omega, dtype=float) for m in mix])


def build_match_model(clusters: ClusterModel, mixtures: Sequence[SPMixture], Z: np.ndarray) -> MatchModel:
    omega = sp_matrix(mixtures)
    Z = np.asarray(Z, dtype=float)
    pis = np.vstack([soft_assign(z, clusters).pi for z in Z])
    return MatchModel(clusters, omega, Z.mean(axis=0), (pis @ omega).mean(axis=0))


def make_state(
    state_id: str,
    record: Mapping[str, str],
    m: EncodedMatrix,
    template: EdgeTemplate,
    params: EncoderParams,
    model: MatchModel,
) -> OnlineState:
    """Encode a raw record with the training encoders and project into SP space."""
    x = m.transform([record])[0]
    z = encode_state(state_graph(-1, x, m.column_names, template), params).graph_vector
    return state_from_embedding(state_id, z, model, x)


def state_from_embedding(state_id: str, z: np.ndarray, model: MatchModel, x: np.ndarray | None = None) -> OnlineState:
    pi = soft_assign(z, model.clusters).pi
    return OnlineState(state_id, np.asarray(x if x is not None else []), np.asarray(z, dtype=float), pi, pi @ model.omega)


def _unit_cos(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine rescaled from [-1, 1] to [0, 1]; a zero vector counts as orthogonal."""
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.5
    return float((np.clip(a @ b / (na * nb), -1.0, 1.0) + 1.0) / 2.0)


def score_state(s: OnlineState, model: MatchModel, cfg: OnlineConfig | None = None) -> np.ndarray:
    """Per-phenotype score ``alpha * cos_z + (1 - alpha) * cos_sp``, both in [0, 1].

    Raises:
        ZeroVector: the state's embedding is all zeros.
    """
    cfg = cfg or OnlineConfig()
    if not np.any(s.z):
        raise ZeroVector(f"state {s.state_id}: embedding is the zero vector")
    zc = s.z - model.z_center
    sc = s.pi_sp - model.sp_center
    out = np.empty(model.K)
    for k in range(model.K):
        e = _unit_cos(zc, model.clusters.centroids[k] - model.z_center)
        p = _unit_cos(sc, model.omega[k] - model.sp_center)
        out[k] = cfg.alpha * e + (1.0 - cfg.alpha) * p
    return out


@dataclass
class MatchDecision:
    kind: str
    score: float
    scores: list[float]
    cluster: int | None = None
    weights: dict[int, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "score": self.score,
            "scores": self.scores,
            "cluster": self.cluster,
            "weights": {str(k): v for k, v in sorted(self.weights.items())},
        }


def decide(scores: Sequence[float], cfg: OnlineConfig | None = None) -> MatchDecision:
    """Match above ``tau_match``, anomaly below ``tau_anom``, soft match in between."""
    cfg = cfg or OnlineConfig()
    s = np.asarray(scores, dtype=float)
    if s.size == 0:
        raise ValueError("decide needs at least one score")
    k = int(np.argmax(s))
    best = float(s[k])
    if best >= cfg.tau_match:
        return MatchDecision("match", best, s.tolist(), cluster=k, weights={k: 1.0})
    if best < cfg.tau_anom:
        return MatchDecision("anomaly", best, s.tolist())
    members = [j for j in range(s.size) if s[j] >= cfg.soft_ratio * best]
    total = float(s[members].sum())
    return MatchDecision("soft_match", best, s.tolist(), cluster=k, weights={j: float(s[j]) / total for j in members})


class AnomalyDetector:
    """Isolation forest over training embeddings.

    The score is the normalized path-length score in (0, 1]; larger means
    easier to isolate.
    """

    def __init__(self, cfg: OnlineConfig | None = None, seed: int = 0) -> None:
        self.cfg = cfg or OnlineConfig()
        self.seed = seed
        self.forest: IsolationForest | None = None

    def fit(self, Z: np.ndarray) -> AnomalyDetector:
        Z = np.asarray(Z, dtype=float)
        self.forest = IsolationForest(
            n_estimators=self.cfg.n_trees,
            max_samples=min(self.cfg.max_samples, Z.shape[0]),
            random_state=self.seed,
        ).fit(Z)
        return self

    def score(self, z: np.ndarray) -> np.ndarray:
        if self.forest is None:
            raise RuntimeError("detector is not fitted")
        return -self.forest.score_samples(np.atleast_2d(np.asarray(z, dtype=float)))

    def indicator(self, z: np.ndarray) -> np.ndarray:
        """-1 for outliers, +1 for inliers."""
        return np.where(self.score(z) > self.cfg.anomaly_cutoff, -1, 1)


def is_novel(decision: MatchDecision, indicator: int, cfg: OnlineConfig | None = None) -> bool:
    """Both the forest and the score rule call the state anomalous."""
    cfg = cfg or OnlineConfig()
    return indicator == -1 and decision.score < cfg.tau_anom


@dataclass
class CandidatePhenotype:
    """A buffered group of anomalies; ``profile`` is the running mean of standardized features."""

    candidate_id: int
    exemplars: list[str]
    centroid: np.ndarray
    sp: np.ndarray
    n_c: int = 1
    promoted: bool = False
    exploratory: bool = True
    profile: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {
            "candidate_id": self.candidate_id,
            "exemplars": self.exemplars,
            "centroid": self.centroid.tolist(),
            "sp": self.sp.tolist(),
            "profile": None if self.profile is None else self.profile.tolist(),
            "n_c": self.n_c,
            "promoted": self.promoted,
            "exploratory": self.exploratory,
        }

    @classmethod
    def from_dict(cls, d: dict) -> CandidatePhenotype:
        return cls(
            int(d["candidate_id"]),
            list(d["exemplars"]),
            np.asarray(d["centroid"], dtype=float),
            np.asarray(d["sp"], dtype=float),
            int(d["n_c"]),
            bool(d["promoted"]),
            bool(d.get("exploratory", True)),
            None if d.get("profile") is None else np.asarray(d["profile"], dtype=float),
        )


@dataclass
class CandidateBuffer:
    candidates: list[CandidatePhenotype] = field(default_factory=list)
    center: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {
            "candidates": [c.to_dict() for c in self.candidates],
            "center": None if self.center is None else self.center.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> CandidateBuffer:
        center = d.get("center")
        return cls([CandidatePhenotype.from_dict(c) for c in d["candidates"]], None if center is None else np.asarray(center, dtype=float))


def _cos(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(a @ b / (na * nb))


def buffer_candidate(
    s: OnlineState,
    buffer: CandidateBuffer,
    cfg: OnlineConfig | None = None,
) -> tuple[CandidateBuffer, CandidatePhenotype | None]:
    """Add an anomalous state to the nearest candidate or open a new one.

    Returns the buffer and the candidate promoted by this call, if any. A
    candidate is promoted once, when its support first reaches ``tau_nc``.
    """
    cfg = cfg or OnlineConfig()
    center = buffer.center if buffer.center is not None else np.zeros_like(s.z)
    best, best_cos = None, -np.inf
    for c in buffer.candidates:
        cs = _cos(s.z - center, c.centroid - center)
        if cs > best_cos:
            best, best_cos = c, cs
    if best is None or best_cos < cfg.merge_cosine:
        profile = s.x.astype(float).copy() if s.x.size else None
        cand = CandidatePhenotype(len(buffer.candidates), [s.state_id], s.z.copy(), s.pi_sp.copy(), profile=profile)
        buffer.candidates.append(cand)
    else:
        cand = best
        cand.n_c += 1
        cand.exemplars.append(s.state_id)
        cand.centroid = cand.centroid + (s.z - cand.centroid) / cand.n_c
        cand.sp = cand.sp + (s.pi_sp - cand.sp) / cand.n_c
        if cand.profile is not None and s.x.size == cand.profile.size:
            cand.profile = cand.profile + (s.x - cand.profile) / cand.n_c
    if not cand.promoted and cand.n_c >= cfg.tau_nc:
        cand.promoted = True
        logger.info("candidate %d promoted after %d states", cand.candidate_id, cand.n_c)
        return buffer, cand
    return buffer, None
