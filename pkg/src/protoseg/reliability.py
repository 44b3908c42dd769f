"""Reliability gating of pseudo-labels.

A point is reliable when the classifier agrees with its mined pseudo-label
confidently: the predicted primitive equals the pseudo-label AND the
probability assigned to it reaches the threshold. Reliable points form the
consistent set, the rest the ambiguous set; the two learning signals treat
those sets differently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .validation import as_int_vector, check_prob_matrix


def reliability_mask(
    probs: np.ndarray, pseudo_labels: np.ndarray, tau: float
) -> np.ndarray:
    """Boolean mask over points: argmax(probs) equals the pseudo-label and
    probs[i, pseudo_labels[i]] >= tau.

    Argmax ties resolve to the lowest class index, so a tied pseudo-label at
    a higher index counts as disagreement. Monotone in tau: raising the
    threshold can only shrink the mask.
    """
    if not 0.0 < tau < 1.0:
        raise ConfigError(f"tau must lie strictly in (0, 1), got {tau}")
    probs = check_prob_matrix(probs, "probs")
    pseudo = as_int_vector(pseudo_labels, "pseudo_labels", probs.shape[0])
    if pseudo.size and (pseudo.min() < 0 or pseudo.max() >= probs.shape[1]):
        raise ConfigError(
            f"pseudo_labels must index the {probs.shape[1]} probability columns"
        )
    agrees = np.argmax(probs, axis=1) == pseudo
    confident = probs[np.arange(probs.shape[0]), pseudo] >= tau
    return agrees & confident


@dataclass
class SplitSets:
    """Index arrays partitioning 0..N-1; consistent points carry reliable
    pseudo-labels."""

    consistent: np.ndarray
    ambiguous: np.ndarray

    @property
    def n_total(self) -> int:
        return self.consistent.size + self.ambiguous.size

    @property
    def consistent_fraction(self) -> float:
        return self.consistent.size / self.n_total if self.n_total else 0.0


def split(mask: np.ndarray) -> SplitSets:
    """Partition point indices by the reliability mask."""
    mask = np.asarray(mask, dtype=bool).ravel()
    return SplitSets(np.flatnonzero(mask), np.flatnonzero(~mask))
