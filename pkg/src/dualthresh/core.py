"""Validated probability-domain primitives shared by every other module.

Everything here is a pure function over immutable values: safe to call
from any number of threads and safe to pass between them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Clamp floor applied to probabilities before taking logs. -log(0) is
# infinite; a finite floor keeps scores orderable and serializable.
PROB_EPSILON = 1e-12

# Ingested probability rows carry rounded decimals; their sum may miss 1
# by up to this much.
PROB_SUM_TOL = 1e-6

# Slack on the [0, 1] element bounds for the same reason.
_BOUND_SLACK = 1e-9

SEVERITY_MIN = 0
SEVERITY_MAX = 5


class DegenerateLabelsError(ValueError):
    """A binary criterion collapsed to a single class (TPR or FPR undefined)."""


def as_logits(values) -> np.ndarray:
    """Validate a raw logit vector: at least two finite entries.

    Returns a read-only float64 copy.
    """
    z = np.array(values, dtype=np.float64)
    if z.ndim != 1:
        raise ValueError(f"logits must be one-dimensional, got shape {z.shape}")
    if z.size < 2:
        raise ValueError(f"need at least 2 classes, got {z.size}")
    if not np.all(np.isfinite(z)):
        raise ValueError("logits contain NaN or infinite entries")
    z.flags.writeable = False
    return z


def as_probabilities(values) -> np.ndarray:
    """Validate a categorical distribution: entries in [0, 1], summing to 1.

    Entries may miss the bounds by rounding slack (they are clipped back);
    the sum must be within PROB_SUM_TOL of 1. Returns a read-only float64
    copy.
    """
    p = np.array(values, dtype=np.float64)
    if p.ndim != 1:
        raise ValueError(f"probabilities must be one-dimensional, got shape {p.shape}")
    if p.size < 2:
        raise ValueError(f"need at least 2 classes, got {p.size}")
    if not np.all(np.isfinite(p)):
        raise ValueError("probabilities contain NaN or infinite entries")
    if np.any(p < -_BOUND_SLACK) or np.any(p > 1.0 + _BOUND_SLACK):
        raise ValueError("probabilities outside [0, 1]")
    total = float(p.sum())
    if abs(total - 1.0) > PROB_SUM_TOL:
        raise ValueError(f"probabilities sum to {total:.9f}, expected 1 within {PROB_SUM_TOL}")
    p = np.clip(p, 0.0, 1.0)
    p.flags.writeable = False
    return p


def softmax(logits) -> np.ndarray:
    """Exponentiate and normalize a logit vector.

    Computed as exp(z - max(z)) / sum(exp(z - max(z))), which is invariant
    under an additive shift of all logits and cannot overflow for finite
    input of any magnitude.
    """
    z = as_logits(logits)
    e = np.exp(z - z.max())
    p = e / e.sum()
    p.flags.writeable = False
    return p


def nonconformity(probs, label: int) -> float:
    """Score how atypical a labeled example is: -log p(label).

    The probability is clamped to [PROB_EPSILON, 1] first, so the score is
    always finite and nonnegative; lower means the model agreed more with
    the label.
    """
    p = as_probabilities(probs)
    if not 0 <= label < p.size:
        raise ValueError(f"label {label} out of range for {p.size} classes")
    return float(-np.log(min(max(float(p[label]), PROB_EPSILON), 1.0)))


@dataclass(frozen=True)
class LabeledSample:
    """One evaluation unit: a probability vector, its true label, and
    condition/severity tags describing where it came from.
    """

    sample_id: str
    label: int
    probs: np.ndarray
    condition: str = ""
    severity: int = 0

    def __post_init__(self):
        object.__setattr__(self, "probs", as_probabilities(self.probs))
        if not 0 <= self.label < self.probs.size:
            raise ValueError(
                f"label {self.label} out of range for {self.probs.size} classes"
            )
        if not SEVERITY_MIN <= self.severity <= SEVERITY_MAX:
            raise ValueError(
                f"severity must be in [{SEVERITY_MIN}, {SEVERITY_MAX}], got {self.severity}"
            )

    @property
    def k_classes(self) -> int:
        return self.probs.size

    @classmethod
    def from_logits(cls, sample_id, label, logits, condition="", severity=0):
        """Build a sample from raw logits, normalizing through softmax."""
        return cls(sample_id, label, softmax(logits), condition, severity)
