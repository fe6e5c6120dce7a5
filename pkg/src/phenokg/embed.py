"""Deterministic message-passing encoder with mean-pool readout.

Node embeddings are ``act(A_hat^r L(V) P)`` where ``A_hat`` is the symmetric
normalized adjacency with self-loops, ``L`` a fixed node-feature map and
``P`` a seeded orthonormal projection. The graph vector is the column mean
of the node embeddings.

With the ``raw`` node map (``L(V) = V``) and a linear activation the graph
vector of every state lies on one line: the value column enters through a
single row of ``P`` and mean pooling sums it away. The default
``interaction`` map places each value in its feature's own channel,
``L(V) = [v * onehot | onehot]``, which keeps the graph vector a full-rank
function of the state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, ValidationError
from .ingest import StateGraph

ACTIVATIONS = ("identity", "relu")
NODE_MAPS = ("interaction", "raw")


@dataclass(frozen=True)
class EncoderParams:
    projection: np.ndarray
    h: int = 32
    rounds: int = 2
    seed: int = 0
    activation: str = "identity"
    node_map: str = "interaction"

    @property
    def in_dim(self) -> int:
        return self.projection.shape[0]

    @property
    def f(self) -> int:
        """Number of feature nodes the projection expects."""
        return self.in_dim // 2 if self.node_map == "interaction" else self.in_dim - 1


def lifted_width(f: int, node_map: str) -> int:
    return 2 * f if node_map == "interaction" else 1 + f


def lift(V: np.ndarray, node_map: str) -> np.ndarray:
    """Apply the node-feature map to a ``f x (1+f)`` matrix ``[value | onehot]``."""
    if node_map == "raw":
        return V
    return np.hstack([V[:, :1] * V[:, 1:], V[:, 1:]])


def make_encoder_params(
    f: int,
    h: int = 32,
    rounds: int = 2,
    seed: int = 0,
    activation: str = "identity",
    node_map: str = "interaction",
) -> EncoderParams:
    """Draw a Gaussian ``in_dim x h`` matrix from ``seed`` and orthonormalize it.

    ``in_dim`` is ``2f`` for the interaction map and ``1+f`` for the raw map.
    Columns are orthonormal when ``in_dim >= h``; otherwise (more outputs than
    inputs) the rows are orthonormal instead.
    """
    if activation not in ACTIVATIONS:
        raise ValidationError(f"unknown activation {activation!r}")
    if node_map not in NODE_MAPS:
        raise ValidationError(f"unknown node map {node_map!r}")
    if h < 1 or rounds < 0 or f < 1:
        raise ValidationError("need f >= 1, h >= 1 and rounds >= 0")
    in_dim = lifted_width(f, node_map)
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((in_dim, h))
    if in_dim >= h:
        Q, R = np.linalg.qr(G)
    else:
        Q, R = np.linalg.qr(G.T)
    # sign fix makes the factorization unique
    Q = Q * np.sign(np.diag(R))
    P = Q if in_dim >= h else Q.T
    return EncoderParams(np.ascontiguousarray(P), h, rounds, seed, activation, node_map)


def normalized_adjacency(A: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=float) + np.eye(A.shape[0])
    d = 1.0 / np.sqrt(A.sum(axis=1))
    return A * d[:, None] * d[None, :]


def propagation(A: np.ndarray, rounds: int) -> np.ndarray:
    return np.linalg.matrix_power(normalized_adjacency(A), rounds)


@dataclass
class GraphEmbedding:
    state_id: int
    node_embeddings: np.ndarray
    graph_vector: np.ndarray


def _encode(state_id: int, V: np.ndarray, S: np.ndarray, p: EncoderParams) -> GraphEmbedding:
    if V.shape != (p.f, p.f + 1):
        raise DimensionMismatch(f"state {state_id}: node features have shape {V.shape}, encoder expects {(p.f, p.f + 1)}")
    Z = S @ lift(V, p.node_map) @ p.projection
    if p.activation == "relu":
        Z = np.maximum(Z, 0.0)
    return GraphEmbedding(state_id, Z, Z.mean(axis=0))


def encode_state(g: StateGraph, p: EncoderParams) -> GraphEmbedding:
    return _encode(g.state_id, g.node_features, propagation(g.adjacency(), p.rounds), p)


def encode_corpus(graphs: list[StateGraph], p: EncoderParams) -> list[GraphEmbedding]:
    """Encode every graph in order, reusing the propagation matrix per edge set."""
    out: list[GraphEmbedding] = []
    cache: dict[tuple, np.ndarray] = {}
    for g in graphs:
        key = (len(g.nodes), g.edges)
        S = cache.get(key)
        if S is None:
            S = cache[key] = propagation(g.adjacency(), p.rounds)
        out.append(_encode(g.state_id, g.node_features, S, p))
    return out


def stack(embeddings: list[GraphEmbedding]) -> np.ndarray:
    if not embeddings:
        return np.empty((0, 0))
    return np.vstack([e.graph_vector for e in embeddings])
