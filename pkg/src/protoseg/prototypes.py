"""Prototype memories for the primitive classes.

Two banks with identical mechanics are kept per training run: one updated
from consistent-set centroids, one from ambiguous-set centroids. Each row is
an exponential moving average over the per-batch class centroids, so the
banks summarize feature structure across many batches instead of echoing the
current one. Rows of classes absent from a batch are left untouched.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .clustering import class_centroids
from .errors import ConfigError, DataError

log = logging.getLogger(__name__)

batch_centroids = class_centroids


@dataclass
class PrototypeBank:
    vectors: np.ndarray  # (C, D)

    @property
    def n_classes(self) -> int:
        return self.vectors.shape[0]

    def copy(self) -> "PrototypeBank":
        return PrototypeBank(self.vectors.copy())


def init_banks(centers: np.ndarray) -> tuple[PrototypeBank, PrototypeBank]:
    """Both banks start as copies of the clustering centers that mined the
    pseudo-labels, so early updates move them rather than rebuild them."""
    centers = np.asarray(centers, dtype=np.float64)
    if centers.ndim != 2:
        raise DataError("prototype centers must be a 2-d array")
    return PrototypeBank(centers.copy()), PrototypeBank(centers.copy())


def _blend(
    vectors: np.ndarray, centroids: np.ndarray, counts: np.ndarray, momentum: float
) -> np.ndarray:
    """momentum * old + (1 - momentum) * centroid on rows with count > 0.

    Single site for this arithmetic: the bank update and the prototypes fed
    to the losses must agree bitwise, not just within rounding.
    """
    if not 0.0 <= momentum < 1.0:
        raise ConfigError(f"momentum must lie in [0, 1), got {momentum}")
    if centroids.shape != vectors.shape:
        raise DataError(
            f"centroid shape {centroids.shape} does not match bank {vectors.shape}"
        )
    out = vectors.copy()
    present = np.asarray(counts) > 0
    out[present] = momentum * vectors[present] + (1.0 - momentum) * centroids[present]
    return out


def ema_update(
    bank: PrototypeBank, centroids: np.ndarray, counts: np.ndarray, momentum: float
) -> PrototypeBank:
    """New bank with present rows moved toward their batch centroid.

    Every updated row is a convex combination of the old row and the
    centroid, so banks never leave the convex hull of what they have seen.
    """
    absent = int((np.asarray(counts) == 0).sum())
    if absent:
        log.debug("ema_update: %d of %d classes absent, rows kept", absent, bank.n_classes)
    return PrototypeBank(_blend(bank.vectors, centroids, counts, momentum))


def effective_prototypes(
    bank: PrototypeBank, centroids: np.ndarray, counts: np.ndarray, momentum: float
) -> tuple[np.ndarray, np.ndarray]:
    """Prototype matrix the losses see this batch, plus the present-row mask.

    Values equal the post-update bank bitwise, but the bank rows are treated
    as constants: gradient reaches the network only through the
    (1 - momentum) * centroid term of present rows. Callers scale centroid
    gradients accordingly.
    """
    return (
        _blend(bank.vectors, centroids, counts, momentum),
        np.asarray(counts) > 0,
    )
