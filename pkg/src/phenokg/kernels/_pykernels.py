"""Pure-Python/NumPy implementations of the hot kernels.

These are the reference fallback used when the compiled extension is not
built. Signatures and results must match ``_ckernels.pyx`` exactly.
"""

from __future__ import annotations

import numpy as np


def domination_counts(F: np.ndarray) -> np.ndarray:
    """Count, for each row of ``F``, how many other rows dominate it.

    Objectives are maximized. Row ``a`` dominates row ``b`` when it is at
    least as large everywhere and strictly larger somewhere.
    """
    F = np.ascontiguousarray(F, dtype=np.float64)
    n = F.shape[0]
    counts = np.zeros(n, dtype=np.int64)
    if n == 0:
        return counts
    # chunked to keep the n*n*m boolean block bounded
    step = max(1, 2_000_000 // max(1, n * F.shape[1]))
    for start in range(0, n, step):
        block = F[start:start + step]
        ge = (F[None, :, :] >= block[:, None, :]).all(axis=2)
        gt = (F[None, :, :] > block[:, None, :]).any(axis=2)
        counts[start:start + step] = (ge & gt).sum(axis=1)
    return counts


def edit_distance(a: str, b: str) -> int:
    """Levenshtein distance with unit insert/delete/substitute costs."""
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i] + [0] * len(b)
        for j, cb in enumerate(b, 1):
            cost = 0 if ca == cb else 1
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost)
        prev = cur
    return prev[-1]


def strongest_paths(absW: np.ndarray, order: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """All-pairs maximum-product directed paths on a DAG.

    Args:
        absW: ``d x d`` nonnegative edge strengths; ``absW[i, j] > 0`` is an
            edge ``i -> j``.
        order: a topological order of the nodes.

    Returns:
        ``(strength, next_hop)``. ``strength[i, j]`` is the largest product of
        edge strengths over directed paths ``i -> ... -> j`` (0 when ``j`` is
        unreachable or ``i == j``); ``next_hop[i, j]`` is the successor of ``i``
        on that path, or -1.
    """
    absW = np.asarray(absW, dtype=np.float64)
    d = absW.shape[0]
    best = np.zeros((d, d))
    nxt = np.full((d, d), -1, dtype=np.int64)
    for s in reversed([int(v) for v in order]):
        best[s, s] = 1.0
        for c in range(d):
            w = absW[s, c]
            if w <= 0.0:
                continue
            for t in range(d):
                if t == s:
                    continue
                cand = w * best[c, t]
                if cand > best[s, t]:
                    best[s, t] = cand
                    nxt[s, t] = c
    np.fill_diagonal(best, 0.0)
    return best, nxt
