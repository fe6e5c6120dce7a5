"""Phenotype discovery in embedding space and mapping to standard phenotypes."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.special import softmax
from sklearn.cluster import KMeans
from sklearn.metrics import silhouette_score
from sklearn.neighbors import NearestNeighbors

from .causal import CausalGraph
from .embed import GraphEmbedding, stack
from .errors import TooFewStates, ValidationError, ZeroSignature
from .ingest import EncodedMatrix
from .text import humanize

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ClusterConfig:
    knn: int = 15
    k_min: int = 2
    k_max: int = 10
    K: int | None = None
    seed: int = 0
    n_init: int = 10


@dataclass
class ClusterModel:
    centroids: np.ndarray
    labels: np.ndarray
    soft_temperature: float
    eigenvalues: np.ndarray
    silhouette: float | None
    knn: int = 15
    eigengap_range: tuple[int, int] = (2, 10)
    degenerate: bool = False

    @property
    def K(self) -> int:
        return self.centroids.shape[0]

    def members(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.labels == k)

    def sizes(self) -> list[int]:
        return [int((self.labels == k).sum()) for k in range(self.K)]

    def to_dict(self) -> dict:
        return {
            "centroids": self.centroids.tolist(),
            "labels": self.labels.tolist(),
            "soft_temperature": self.soft_temperature,
            "eigenvalues": self.eigenvalues.tolist(),
            "silhouette": self.silhouette,
            "knn": self.knn,
            "eigengap_range": list(self.eigengap_range),
            "degenerate": self.degenerate,
        }

    @classmethod
    def from_dict(cls, d: dict) -> ClusterModel:
        return cls(
            centroids=np.asarray(d["centroids"], dtype=float),
            labels=np.asarray(d["labels"], dtype=int),
            soft_temperature=float(d["soft_temperature"]),
            eigenvalues=np.asarray(d["eigenvalues"], dtype=float),
            silhouette=d["silhouette"],
            knn=int(d["knn"]),
            eigengap_range=tuple(d["eigengap_range"]),
            degenerate=bool(d["degenerate"]),
        )


def _as_matrix(embeddings: Sequence[GraphEmbedding] | np.ndarray) -> np.ndarray:
    if isinstance(embeddings, np.ndarray):
        return np.asarray(embeddings, dtype=float)
    return stack(list(embeddings))


def _knn_affinity(Z: np.ndarray, k: int) -> np.ndarray:
    n = Z.shape[0]
    k = min(k, n - 1)
    dist, idx = NearestNeighbors(n_neighbors=k + 1).fit(Z).kneighbors(Z)
    dist, idx = dist[:, 1:], idx[:, 1:]
    sigma = float(np.median(dist))
    if sigma <= 0:
        sigma = 1.0
    W = np.zeros((n, n))
    rows = np.repeat(np.arange(n), k)
    W[rows, idx.ravel()] = np.exp(-(dist.ravel() ** 2) / (2 * sigma**2))
    return np.maximum(W, W.T)


def laplacian_spectrum(W: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of ``I - D^-1/2 W D^-1/2`` (ascending)."""
    deg = W.sum(axis=1)
    inv = np.where(deg > 0, 1.0 / np.sqrt(np.where(deg > 0, deg, 1.0)), 0.0)
    L = np.eye(W.shape[0]) - W * inv[:, None] * inv[None, :]
    vals, vecs = np.linalg.eigh((L + L.T) / 2)
    return vals, vecs


def select_k(eigenvalues: np.ndarray, k_min: int, k_max: int) -> int:
    """Largest gap ``lambda_K - lambda_{K-1}`` for ``K`` in ``[k_min, k_max]``."""
    k_max = min(k_max, len(eigenvalues) - 1)
    gaps = {k: eigenvalues[k] - eigenvalues[k - 1] for k in range(k_min, k_max + 1)}
    return max(gaps, key=lambda k: (gaps[k], -k))


def _canonical_labels(labels: np.ndarray) -> np.ndarray:
    # relabel by first appearance so label ids do not depend on k-means internals
    mapping: dict[int, int] = {}
    for lab in labels:
        if int(lab) not in mapping:
            mapping[int(lab)] = len(mapping)
    return np.array([mapping[int(lab)] for lab in labels])


def fit_clusters(embeddings: Sequence[GraphEmbedding] | np.ndarray, cfg: ClusterConfig | None = None) -> ClusterModel:
    """Spectral clustering of graph vectors on a kNN similarity graph.

    ``K`` is chosen by the largest normalized-Laplacian eigengap in
    ``[k_min, k_max]`` unless ``cfg.K`` overrides it.
    """
    cfg = cfg or ClusterConfig()
    Z = _as_matrix(embeddings)
    n = Z.shape[0]
    k_lo = cfg.K if cfg.K is not None else cfg.k_min
    if n < 2 * k_lo:
        raise TooFewStates(f"{n} states, need at least {2 * k_lo}")

    if np.allclose(Z, Z[0]):
        K = k_lo
        logger.warning("fit_clusters: all states identical; forcing K=%d", K)
        labels = np.arange(n) % K
        centroids = np.vstack([Z[labels == k].mean(axis=0) for k in range(K)])
        return ClusterModel(centroids, labels, 1.0, np.zeros(0), None, cfg.knn, (cfg.k_min, cfg.k_max), degenerate=True)

    W = _knn_affinity(Z, cfg.knn)
    vals, vecs = laplacian_spectrum(W)
    K = cfg.K if cfg.K is not None else select_k(vals, cfg.k_min, cfg.k_max)
    U = vecs[:, :K]
    norms = np.linalg.norm(U, axis=1, keepdims=True)
    U = U / np.where(norms > 0, norms, 1.0)
    km = KMeans(n_clusters=K, n_init=cfg.n_init, random_state=cfg.seed).fit(U)
    labels = _canonical_labels(km.labels_)
    K = int(labels.max()) + 1
    centroids = np.vstack([Z[labels == k].mean(axis=0) for k in range(K)])

    sil = float(silhouette_score(Z, labels)) if 2 <= K < n else None
    if K > 1:
        diff = centroids[:, None, :] - centroids[None, :, :]
        d2 = (diff**2).sum(axis=2)[np.triu_indices(K, 1)]
        temp = float(np.median(d2))
    else:
        temp = 1.0
    if temp <= 0:
        temp = 1.0
    return ClusterModel(centroids, labels, temp, vals[: cfg.k_max + 2], sil, cfg.knn, (cfg.k_min, cfg.k_max))


@dataclass
class SoftAssignment:
    state_id: int
    pi: np.ndarray


def soft_assign(z: np.ndarray, model: ClusterModel, state_id: int = -1) -> SoftAssignment:
    d2 = ((model.centroids - np.asarray(z, dtype=float)) ** 2).sum(axis=1)
    return SoftAssignment(state_id, softmax(-d2 / model.soft_temperature))


def hard_assign(z: np.ndarray, model: ClusterModel) -> int:
    """Nearest-centroid phenotype."""
    d2 = ((model.centroids - np.asarray(z, dtype=float)) ** 2).sum(axis=1)
    return int(np.argmin(d2))


@dataclass(frozen=True)
class StandardPhenotypeDef:
    name: str
    signature: np.ndarray

    def __post_init__(self) -> None:
        sig = np.asarray(self.signature, dtype=float)
        if np.any(np.abs(sig) > 1):
            raise ValidationError(f"standard phenotype {self.name!r}: weights must lie in [-1, 1]")
        if not np.any(sig != 0):
            raise ZeroSignature(f"standard phenotype {self.name!r} has an all-zero signature")


def standard_phenotypes_from_config(entries: Sequence[Mapping], columns: Sequence[str]) -> list[StandardPhenotypeDef]:
    """Build SP definitions from ``[{name, weights: {feature: w}}]`` entries."""
    out = []
    for e in entries:
        weights = dict(e.get("weights", {}))
        unknown = sorted(set(weights) - set(columns))
        if unknown:
            logger.warning("standard phenotype %r: ignoring unknown features %s", e["name"], unknown)
        sig = np.array([float(weights.get(c, 0.0)) for c in columns])
        out.append(StandardPhenotypeDef(str(e["name"]), sig))
    return out


@dataclass
class SPMixture:
    cluster_id: int
    names: list[str]
    omega: np.ndarray
    similarities: np.ndarray
    temperature: float = 0.5

    def top(self, n: int = 2) -> list[str]:
        order = sorted(range(len(self.names)), key=lambda i: (-self.omega[i], i))
        return [self.names[i] for i in order[:n]]

    def to_dict(self) -> dict:
        return {
            "cluster_id": self.cluster_id,
            "names": self.names,
            "omega": self.omega.tolist(),
            "similarities": self.similarities.tolist(),
            "temperature": self.temperature,
        }

    @classmethod
    def from_dict(cls, d: dict) -> SPMixture:
        return cls(int(d["cluster_id"]), list(d["names"]), np.asarray(d["omega"]), np.asarray(d["similarities"]), float(d["temperature"]))


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(a @ b / (na * nb))


def mixture_from_similarities(cluster_id: int, names: list[str], s: np.ndarray, T: float) -> SPMixture:
    if T <= 0:
        raise ValidationError("SP temperature must be positive")
    s = np.asarray(s, dtype=float)
    return SPMixture(cluster_id, list(names), softmax(s / T), s, T)


def cluster_profile(model: ClusterModel, m: EncodedMatrix, k: int) -> np.ndarray:
    """Mean standardized feature vector of cluster ``k``."""
    return m.values[model.members(k)].mean(axis=0)


def map_to_standard(model: ClusterModel, m: EncodedMatrix, sps: Sequence[StandardPhenotypeDef], T: float = 0.5) -> list[SPMixture]:
    """Softmax over standard phenotypes of profile/signature cosine similarity."""
    if not sps:
        raise ValidationError("at least one standard phenotype definition is required")
    names = [sp.name for sp in sps]
    out = []
    for k in range(model.K):
        prof = cluster_profile(model, m, k)
        s = np.array([_cosine(prof, np.asarray(sp.signature, dtype=float)) for sp in sps])
        out.append(mixture_from_similarities(k, names, s, T))
    return out


@dataclass
class PhenotypeState:
    cluster_id: int
    dominant_features: list[tuple[str, float]]
    salient_edges: list[tuple[str, str, float]] = field(default_factory=list)
    context: list[str] = field(default_factory=list)
    exploratory: bool = False

    def descriptor(self) -> str:
        parts = [("elevated " if dev > 0 else "reduced ") + humanize(name) for name, dev in self.dominant_features]
        labels = " and ".join(self.context) if self.context else "no standard phenotype"
        return f"individuals in phenotype {self.cluster_id} characterized by {labels} with {', '.join(parts)}"

    def to_dict(self) -> dict:
        return {
            "cluster_id": self.cluster_id,
            "dominant_features": [list(x) for x in self.dominant_features],
            "salient_edges": [list(x) for x in self.salient_edges],
            "context": self.context,
            "exploratory": self.exploratory,
        }

    @classmethod
    def from_dict(cls, d: dict) -> PhenotypeState:
        return cls(
            int(d["cluster_id"]),
            [(str(a), float(b)) for a, b in d["dominant_features"]],
            [(str(a), str(b), float(c)) for a, b, c in d["salient_edges"]],
            list(d["context"]),
            bool(d.get("exploratory", False)),
        )


def dominant_features(profile: np.ndarray, columns: Sequence[str], min_dev: float = 0.5, max_n: int = 8, fallback_n: int = 3) -> list[tuple[str, float]]:
    order = sorted(range(len(columns)), key=lambda i: (-abs(profile[i]), i))
    picked = [i for i in order if abs(profile[i]) >= min_dev][:max_n]
    if not picked:
        picked = order[:fallback_n]
    return [(columns[i], float(profile[i])) for i in picked]


def phenotype_state(
    model: ClusterModel,
    m: EncodedMatrix,
    sp_mix: SPMixture,
    causal: CausalGraph | None,
    n_edges: int = 5,
) -> PhenotypeState:
    k = sp_mix.cluster_id
    dom = dominant_features(cluster_profile(model, m, k), m.column_names)
    edges: list[tuple[str, str, float]] = []
    if causal is not None:
        edges = sorted(causal.edges, key=lambda e: (-abs(e[2]), e[0], e[1]))[:n_edges]
    return PhenotypeState(k, dom, edges, sp_mix.top(2))
