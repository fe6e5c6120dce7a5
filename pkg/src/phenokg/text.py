"""Tokenization and entity linking helpers."""

from __future__ import annotations

import re
from typing import Mapping, Sequence

from . import kernels

STOPWORDS = frozenset(
    "a an and are as at be by for from has have in into is it its of on or that the their these this to was were with "
    "which who whom than then there those via vs among between during after before over under level levels score "
    "individuals phenotype characterized elevated reduced no".split()
)

_non_alnum = re.compile(r"[^0-9a-z]+")


def normalize(text: str) -> str:
    return _non_alnum.sub(" ", text.lower()).strip()


def humanize(feature: str) -> str:
    """``sleep_hours`` -> ``sleep hours``."""
    return normalize(feature)


def tokens(text: str) -> set[str]:
    return {t for t in normalize(text).split() if t and t not in STOPWORDS and not t.isdigit()}


def jaccard(a: set[str], b: set[str]) -> float:
    if not a and not b:
        return 0.0
    return len(a & b) / len(a | b)


def edit_similarity(a: str, b: str) -> float:
    """``1 - levenshtein / max(len)``; 1.0 for two empty strings."""
    if not a and not b:
        return 1.0
    return 1.0 - kernels.edit_distance(a, b) / max(len(a), len(b))


class EntityLinker:
    """Map free-text entity mentions to schema features.

    An exact hit on an alias or on the humanized feature name wins;
    otherwise the closest surface form by normalized edit similarity is taken
    if it reaches ``threshold``.
    """

    def __init__(self, features: Sequence[str], aliases: Mapping[str, str] | None = None, threshold: float = 0.85) -> None:
        self.features = list(features)
        self.threshold = threshold
        self.surface: dict[str, str] = {}
        for f in self.features:
            self.surface[humanize(f)] = f
        for alias, feat in (aliases or {}).items():
            if feat not in self.features:
                continue
            self.surface[normalize(alias)] = feat

    def link(self, mention: str) -> str | None:
        m = normalize(mention)
        if not m:
            return None
        if m in self.surface:
            return self.surface[m]
        best, best_sim = None, 0.0
        for form in sorted(self.surface):
            sim = edit_similarity(m, form)
            if sim > best_sim:
                best, best_sim = form, sim
        if best is not None and best_sim >= self.threshold:
            return self.surface[best]
        return None
