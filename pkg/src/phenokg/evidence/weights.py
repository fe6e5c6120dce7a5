"""Weights and thresholds for document, relevance and validation scoring."""

from __future__ import annotations

import datetime as _dt
from dataclasses import dataclass, field
from typing import Mapping

from ..errors import ValidationError

DEFAULT_EVIDENCE = {
    "meta-analysis": 1.0,
    "systematic-review": 0.9,
    "rct": 0.85,
    "cohort": 0.6,
    "cross-sectional": 0.5,
    "case-report": 0.3,
    "unknown": 0.4,
}


def check_group(key: str, values: tuple[float, ...]) -> None:
    """Raise unless ``values`` are nonnegative and sum to one."""
    if any(v < 0 for v in values):
        raise ValidationError(f"{key}: weights must be nonnegative, got {list(values)}")
    if abs(sum(values) - 1.0) > 1e-9:
        raise ValidationError(f"{key}: weights sum to {sum(values):.6g}, expected 1")


@dataclass(frozen=True)
class ScoreWeights:
    """Scoring coefficients.

    Attributes:
        alpha: document match weights (lexical relevance, recency).
        omega: claim relevance weights (backend confidence, population, evidence).
        beta: claim validation weights (causal support, probabilistic support).
        tau_d: document retention threshold on the match score.
        tau_c: claim admission threshold on validation.
        half_life: recency half-life in years.
        lit_cap: hit count at which literature support saturates.
        reference_year: "now" for recency; the current year when unset.
        evidence: study type to evidence-strength lookup.
    """

    alpha: tuple[float, float] = (0.7, 0.3)
    omega: tuple[float, float, float] = (0.4, 0.3, 0.3)
    beta: tuple[float, float] = (0.6, 0.4)
    tau_d: float = 0.35
    tau_c: float = 0.4
    half_life: float = 5.0
    lit_cap: int = 50
    reference_year: int | None = None
    evidence: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_EVIDENCE))

    def __post_init__(self) -> None:
        check_group("alpha", tuple(self.alpha))
        check_group("omega", tuple(self.omega))
        check_group("beta", tuple(self.beta))
        for key in ("tau_d", "tau_c"):
            v = getattr(self, key)
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"{key}: must lie in [0, 1], got {v}")
        if self.half_life <= 0:
            raise ValidationError(f"half_life: must be positive, got {self.half_life}")
        if self.lit_cap < 1:
            raise ValidationError(f"lit_cap: must be at least 1, got {self.lit_cap}")
        for k, v in self.evidence.items():
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"evidence.{k}: must lie in [0, 1], got {v}")
        if "unknown" not in self.evidence:
            raise ValidationError("evidence: table needs an 'unknown' entry")

    @property
    def year(self) -> int:
        return self.reference_year if self.reference_year is not None else _dt.date.today().year

    def evidence_strength(self, study_type: str) -> float:
        return float(self.evidence.get(study_type, self.evidence["unknown"]))
