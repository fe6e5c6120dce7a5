"""Discrete Bayesian networks over a phenotype's causal DAG.

CPTs are Laplace-smoothed counts over quantile bins; queries are answered
exactly by variable elimination with a greedy min-fill order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .causal import CausalGraph, topological_sort
from .errors import PhenoKGError


class InconsistentEvidence(PhenoKGError):
    pass


@dataclass
class Discretization:
    """Per-feature inner bin edges; value ``x`` falls in bin ``#{edges < x}``."""

    features: list[str]
    edges: list[list[float]]

    @property
    def card(self) -> list[int]:
        return [len(e) + 1 for e in self.edges]

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.empty(X.shape, dtype=np.int64)
        for j, e in enumerate(self.edges):
            out[:, j] = np.searchsorted(np.asarray(e), X[:, j], side="left")
        return out

    def labels(self, j: int) -> list[str]:
        e = self.edges[j]
        if not e:
            return ["all"]
        lo = [f"<= {e[0]:.3g}"]
        mid = [f"({a:.3g}, {b:.3g}]" for a, b in zip(e, e[1:])]
        return lo + mid + [f"> {e[-1]:.3g}"]

    def to_dict(self) -> dict:
        return {"features": self.features, "edges": self.edges}

    @classmethod
    def from_dict(cls, d: dict) -> Discretization:
        return cls(list(d["features"]), [list(map(float, e)) for e in d["edges"]])


def fit_discretization(
    X: np.ndarray,
    features: Sequence[str],
    kinds: Sequence[str] | None = None,
    n_bins: int = 3,
) -> Discretization:
    """Quantile bins for numeric columns; one bin per distinct code for categoricals."""
    X = np.asarray(X, dtype=float)
    kinds = list(kinds) if kinds is not None else ["numeric"] * X.shape[1]
    edges = []
    for j in range(X.shape[1]):
        col = X[:, j]
        if kinds[j] == "categorical":
            vals = np.unique(col)
            e = ((vals[:-1] + vals[1:]) / 2).tolist()
        else:
            q = np.quantile(col, np.arange(1, n_bins) / n_bins)
            e = [float(v) for v in np.unique(q) if v < col.max()]
        edges.append(e)
    return Discretization(list(features), edges)


@dataclass
class BayesNet:
    """``cpts[i]`` has axes ``(*parents[i], i)`` and sums to 1 over the last axis."""

    cluster_id: int
    features: list[str]
    parents: list[list[int]]
    cpts: list[np.ndarray]
    card: list[int]
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def index(self, x: str | int) -> int:
        return x if isinstance(x, (int, np.integer)) else self.features.index(x)

    def children(self, i: int) -> list[int]:
        return [j for j, pa in enumerate(self.parents) if i in pa]

    @property
    def n_edges(self) -> int:
        return sum(len(p) for p in self.parents)

    def to_dict(self) -> dict:
        return {
            "cluster_id": self.cluster_id,
            "nodes": [
                {"name": self.features[i], "card": self.card[i], "parents": [self.features[p] for p in self.parents[i]], "cpt": self.cpts[i].tolist()}
                for i in range(len(self.features))
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> BayesNet:
        names = [n["name"] for n in d["nodes"]]
        return cls(
            int(d["cluster_id"]),
            names,
            [[names.index(p) for p in n["parents"]] for n in d["nodes"]],
            [np.asarray(n["cpt"], dtype=float) for n in d["nodes"]],
            [int(n["card"]) for n in d["nodes"]],
        )


def parent_sets(W: np.ndarray, max_parents: int = 4) -> list[list[int]]:
    """Parents from nonzero ``W[i, j]`` (edge ``i -> j``), keeping the strongest ``max_parents``."""
    W = np.asarray(W)
    out = []
    for j in range(W.shape[0]):
        pa = [int(i) for i in np.nonzero(W[:, j])[0]]
        pa = sorted(pa, key=lambda i: (-abs(W[i, j]), i))[:max_parents]
        out.append(sorted(pa))
    return out


def fit_cpts(data: np.ndarray, parents: list[list[int]], card: list[int], alpha: float = 1.0) -> list[np.ndarray]:
    data = np.asarray(data, dtype=np.int64)
    cpts = []
    for i, pa in enumerate(parents):
        shape = tuple(card[p] for p in pa) + (card[i],)
        counts = np.zeros(shape)
        if data.shape[0]:
            np.add.at(counts, tuple(data[:, p] for p in pa) + (data[:, i],), 1.0)
        counts += alpha
        cpts.append(counts / counts.sum(axis=-1, keepdims=True))
    return cpts


def fit_bn(
    X: np.ndarray,
    dag: CausalGraph,
    disc: Discretization,
    alpha: float = 1.0,
    max_parents: int = 4,
) -> BayesNet:
    """Fit smoothed CPTs on the discretized data over the causal DAG."""
    if topological_sort(dag.W != 0) is None:
        raise ValueError("fit_bn requires an acyclic causal graph")
    parents = parent_sets(dag.W, max_parents)
    data = disc.transform(X)
    return BayesNet(dag.cluster_id, list(dag.features), parents, fit_cpts(data, parents, disc.card, alpha), disc.card)


def _ancestral_set(bn: BayesNet, seeds: set[int]) -> set[int]:
    keep = set(seeds)
    stack = list(seeds)
    while stack:
        for p in bn.parents[stack.pop()]:
            if p not in keep:
                keep.add(p)
                stack.append(p)
    return keep


def _min_fill_order(scopes: list[set[int]], hidden: set[int]) -> list[int]:
    nbrs: dict[int, set[int]] = {}
    for s in scopes:
        for v in s:
            nbrs.setdefault(v, set()).update(s - {v})
    order = []
    remaining = set(hidden)
    while remaining:
        def fill(v: int) -> tuple[int, int, int]:
            nb = nbrs.get(v, set())
            missing = sum(1 for a in nb for b in nb if a < b and b not in nbrs.get(a, set()))
            return (missing, len(nb), v)

        v = min(remaining, key=fill)
        nb = nbrs.pop(v, set())
        for a in nb:
            nbrs[a].discard(v)
            nbrs[a].update(nb - {a})
        remaining.remove(v)
        order.append(v)
    return order


def posterior(bn: BayesNet, target: str | int, evidence: Mapping[str | int, int] | None = None) -> np.ndarray:
    """``P(target | evidence)`` by variable elimination on the ancestral subnetwork."""
    t = bn.index(target)
    ev = {bn.index(k): int(v) for k, v in (evidence or {}).items()}
    if t in ev:
        raise ValueError("target must not be part of the evidence")
    key = (t, tuple(sorted(ev.items())))
    if key in bn._cache:
        return bn._cache[key].copy()

    relevant = _ancestral_set(bn, {t} | set(ev))
    factors: list[tuple[np.ndarray, list[int]]] = []
    for i in sorted(relevant):
        scope = bn.parents[i] + [i]
        table = bn.cpts[i]
        idx = tuple(ev[v] if v in ev else slice(None) for v in scope)
        table = table[idx]
        scope = [v for v in scope if v not in ev]
        factors.append((table, scope))

    hidden = relevant - {t} - set(ev)
    for v in _min_fill_order([set(s) for _, s in factors], hidden):
        touching = [f for f in factors if v in f[1]]
        factors = [f for f in factors if v not in f[1]]
        out_scope = sorted({u for _, s in touching for u in s} - {v})
        ops: list = []
        for tab, s in touching:
            ops += [tab, s]
        factors.append((np.einsum(*ops, out_scope), out_scope))

    ops = []
    for tab, s in factors:
        ops += [tab, s]
    result = np.einsum(*ops, [t]) if ops else np.ones(bn.card[t])
    total = result.sum()
    if not total > 0:
        raise InconsistentEvidence(f"evidence {ev} has zero probability")
    result = result / total
    bn._cache[key] = result
    return result.copy()


def markov_blanket(bn: BayesNet, x: str | int) -> set[str]:
    """Parents, children and the children's other parents."""
    i = bn.index(x)
    mb = set(bn.parents[i])
    for c in bn.children(i):
        mb.add(c)
        mb.update(bn.parents[c])
    mb.discard(i)
    return {bn.features[j] for j in mb}


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def conditional_kl(bn: BayesNet, i: str | int, ii: str | int, value: int) -> float:
    """``KL(P(ii | i = value) || P(ii))`` for a single conditioning value."""
    return kl_divergence(posterior(bn, ii, {i: value}), posterior(bn, ii))


def mutual_information(bn: BayesNet, i: str | int, ii: str | int) -> float:
    """Expected conditional KL of ``ii`` given ``i``, i.e. ``I(X_i; X_ii)`` in nats."""
    a, b = bn.index(i), bn.index(ii)
    if a == b:
        raise ValueError("influence needs two distinct features")
    p_i = posterior(bn, a)
    marg = posterior(bn, b)
    mi = sum(float(p_i[x]) * kl_divergence(posterior(bn, b, {a: x}), marg) for x in range(bn.card[a]))
    return max(0.0, mi)


def influence(bn: BayesNet, i: str | int, ii: str | int) -> float:
    """Mutual information normalized by ``log card(ii)`` into ``[0, 1]``."""
    b = bn.index(ii)
    if bn.card[b] < 2:
        return 0.0
    return min(1.0, mutual_information(bn, i, ii) / np.log(bn.card[b]))
