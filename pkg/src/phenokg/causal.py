"""Per-phenotype linear DAG learning with the exponential acyclicity constraint.

``fit_notears`` solves

    min_W  1/(2n) ||X - X W||_F^2 + lambda1 * ||W||_1   s.t.  h(W) = 0,
    h(W) = tr(exp(W o W)) - d,

with an augmented Lagrangian outer loop. The L1 term is handled exactly by
splitting ``W = W+ - W-`` with nonnegative bounds, so each inner problem is a
smooth box-constrained problem solved by L-BFGS-B.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as slin
import scipy.optimize as sopt

from . import kernels
from .errors import DegenerateInput, NonFinite, ValidationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NotearsConfig:
    lambda1: float = 0.1
    h_tol: float = 1e-8
    rho_init: float = 1.0
    rho_mult: float = 10.0
    rho_max: float = 1e16
    inner_max_iter: int = 100
    edge_threshold: float = 0.3
    max_outer: int = 100

    def __post_init__(self) -> None:
        for name in ("lambda1", "h_tol", "rho_init", "rho_max", "edge_threshold"):
            if getattr(self, name) < 0:
                raise ValidationError(f"notears.{name} must be nonnegative")
        if self.rho_mult <= 1:
            raise ValidationError("notears.rho_mult must be > 1")
        if self.inner_max_iter < 1 or self.max_outer < 1:
            raise ValidationError("notears iteration caps must be positive")


@dataclass
class CausalGraph:
    """Weighted DAG for one phenotype.

    ``W[i, j]`` is the effect of feature ``i`` on feature ``j`` after
    thresholding and cycle repair; ``raw_W`` is the optimizer output.
    """

    cluster_id: int
    features: list[str]
    W: np.ndarray
    raw_W: np.ndarray
    h_final: float
    converged: bool = True
    _paths: tuple[np.ndarray, np.ndarray] | None = field(default=None, repr=False, compare=False)

    @property
    def edges(self) -> list[tuple[str, str, float]]:
        rows, cols = np.nonzero(self.W)
        return [(self.features[i], self.features[j], float(self.W[i, j])) for i, j in zip(rows, cols)]

    def index(self, name: str) -> int:
        return self.features.index(name)

    def weight(self, src: str, dst: str) -> float:
        return float(self.W[self.index(src), self.index(dst)])

    def max_abs_weight(self) -> float:
        return float(np.abs(self.W).max()) if self.W.size else 0.0

    def topological_order(self) -> list[int]:
        order = topological_sort(self.W != 0)
        if order is None:
            raise ValueError("causal graph is cyclic")
        return order

    def path_table(self) -> tuple[np.ndarray, np.ndarray]:
        if self._paths is None:
            self._paths = kernels.strongest_paths(np.abs(self.W), np.asarray(self.topological_order()))
        return self._paths

    def to_dict(self) -> dict:
        return {
            "cluster_id": self.cluster_id,
            "features": list(self.features),
            "W": self.W.tolist(),
            "raw_W": self.raw_W.tolist(),
            "h_final": self.h_final,
            "converged": self.converged,
            "edges": [{"source": s, "target": t, "weight": w} for s, t, w in self.edges],
        }

    @classmethod
    def from_dict(cls, d: dict) -> CausalGraph:
        return cls(
            cluster_id=int(d["cluster_id"]),
            features=list(d["features"]),
            W=np.asarray(d["W"], dtype=float),
            raw_W=np.asarray(d["raw_W"], dtype=float),
            h_final=float(d["h_final"]),
            converged=bool(d["converged"]),
        )


def acyclicity(W: np.ndarray) -> tuple[float, np.ndarray]:
    """Return ``h(W) = tr(exp(W o W)) - d`` and its gradient ``exp(W o W)^T o 2W``."""
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ValueError(f"acyclicity needs a square matrix, got shape {W.shape}")
    E = slin.expm(W * W)
    if not np.all(np.isfinite(E)):
        raise NonFinite("matrix exponential overflowed")
    h = float(np.trace(E) - W.shape[0])
    return h, E.T * W * 2.0


def smooth_objective(W: np.ndarray, X: np.ndarray, rho: float, alpha: float) -> tuple[float, np.ndarray]:
    """Least-squares loss plus augmented-Lagrangian penalty (no L1), with gradient."""
    n = X.shape[0]
    R = X - X @ W
    loss = 0.5 / n * float((R * R).sum())
    g_loss = -1.0 / n * (X.T @ R)
    h, g_h = acyclicity(W)
    obj = loss + 0.5 * rho * h * h + alpha * h
    return obj, g_loss + (rho * h + alpha) * g_h


def topological_sort(adj: np.ndarray) -> list[int] | None:
    """Kahn's algorithm on a boolean adjacency; ``None`` if a cycle exists."""
    adj = np.asarray(adj, dtype=bool)
    d = adj.shape[0]
    indeg = adj.sum(axis=0).astype(int)
    ready = [i for i in range(d) if indeg[i] == 0]
    order: list[int] = []
    while ready:
        ready.sort()
        i = ready.pop(0)
        order.append(i)
        for j in np.nonzero(adj[i])[0]:
            indeg[j] -= 1
            if indeg[j] == 0:
                ready.append(int(j))
    return order if len(order) == d else None


def _find_cycle(adj: np.ndarray) -> list[tuple[int, int]] | None:
    d = adj.shape[0]
    color = [0] * d
    parent = [-1] * d
    for root in range(d):
        if color[root]:
            continue
        stack = [(root, iter(np.nonzero(adj[root])[0]))]
        color[root] = 1
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                color[node] = 2
                stack.pop()
                continue
            nxt = int(nxt)
            if color[nxt] == 0:
                color[nxt] = 1
                parent[nxt] = node
                stack.append((nxt, iter(np.nonzero(adj[nxt])[0])))
            elif color[nxt] == 1:
                cycle = [(node, nxt)]
                cur = node
                while cur != nxt:
                    cycle.append((parent[cur], cur))
                    cur = parent[cur]
                return cycle
    return None


def threshold_to_dag(W: np.ndarray, w_min: float) -> np.ndarray:
    """Zero entries with ``|w| < w_min`` then drop the weakest edge of each cycle."""
    W = np.where(np.abs(W) < w_min, 0.0, W)
    np.fill_diagonal(W, 0.0)
    while True:
        cycle = _find_cycle(W != 0)
        if cycle is None:
            return W
        i, j = min(cycle, key=lambda e: (abs(W[e]), e))
        logger.debug("cycle repair: dropping %d->%d (|w|=%.3g)", i, j, abs(W[i, j]))
        W[i, j] = 0.0


def fit_notears(
    X: np.ndarray,
    cfg: NotearsConfig | None = None,
    features: list[str] | None = None,
    cluster_id: int = 0,
) -> CausalGraph:
    """Learn a weighted DAG from ``X`` (rows are samples).

    Columns are centered but not rescaled here; callers standardize within
    the phenotype. Raises ``DegenerateInput`` on a constant column.
    """
    cfg = cfg or NotearsConfig()
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    features = list(features) if features is not None else [f"x{i}" for i in range(d)]
    if len(features) != d:
        raise ValueError("feature names do not match column count")
    if n < 2 or np.any(X.std(axis=0) == 0):
        raise DegenerateInput("constant column or fewer than 2 samples")
    if n < d:
        logger.warning("fit_notears: n=%d < d=%d, structure is weakly identified", n, d)
    X = X - X.mean(axis=0)

    def adj(w: np.ndarray) -> np.ndarray:
        return (w[: d * d] - w[d * d:]).reshape(d, d)

    def fun(w: np.ndarray, rho: float, alpha: float) -> tuple[float, np.ndarray]:
        W = adj(w)
        try:
            obj, g = smooth_objective(W, X, rho, alpha)
        except NonFinite:
            return np.inf, np.zeros_like(w)
        g = g.ravel()
        obj += cfg.lambda1 * float(w.sum())
        return obj, np.concatenate([g + cfg.lambda1, -g + cfg.lambda1])

    bounds = [(0, 0) if i == j else (0, None) for _ in range(2) for i in range(d) for j in range(d)]
    w_est = np.zeros(2 * d * d)
    rho, alpha, h = cfg.rho_init, 0.0, np.inf
    for _ in range(cfg.max_outer):
        w_new, h_new = w_est, h
        while rho < cfg.rho_max:
            sol = sopt.minimize(
                fun, w_est, args=(rho, alpha), jac=True, method="L-BFGS-B",
                bounds=bounds, options={"maxiter": cfg.inner_max_iter},
            )
            w_new = sol.x
            h_new, _ = acyclicity(adj(w_new))
            if h_new > 0.25 * h:
                rho *= cfg.rho_mult
            else:
                break
        w_est, h = w_new, h_new
        alpha += rho * h
        if h <= cfg.h_tol or rho >= cfg.rho_max:
            break

    raw = adj(w_est)
    np.fill_diagonal(raw, 0.0)
    converged = bool(h <= cfg.h_tol)
    if not converged:
        logger.warning("fit_notears: stopped with h=%.3g > h_tol=%.3g", h, cfg.h_tol)
    W = threshold_to_dag(raw.copy(), cfg.edge_threshold)
    return CausalGraph(cluster_id=cluster_id, features=features, W=W, raw_W=raw, h_final=float(h), converged=converged)


def strongest_path(g: CausalGraph, src: str, dst: str) -> tuple[list[str], float]:
    """Maximum-product directed path from ``src`` to ``dst`` (``([], 0.0)`` if none)."""
    i, j = g.index(src), g.index(dst)
    strength, nxt = g.path_table()
    if i == j or strength[i, j] <= 0:
        return [], 0.0
    path = [i]
    while path[-1] != j:
        path.append(int(nxt[path[-1], j]))
    return [g.features[k] for k in path], float(strength[i, j])


def structural_hamming_distance(W_est: np.ndarray, W_true: np.ndarray) -> int:
    """Edge additions + deletions + reversals (a reversal counts once)."""
    B_est, B_true = np.asarray(W_est) != 0, np.asarray(W_true) != 0
    shd = 0
    d = B_est.shape[0]
    for i in range(d):
        for j in range(i + 1, d):
            est = (B_est[i, j], B_est[j, i])
            true = (B_true[i, j], B_true[j, i])
            if est != true:
                shd += 1
    return shd
