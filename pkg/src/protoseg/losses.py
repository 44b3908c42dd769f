"""Training objective: pseudo-label cross-entropy, the prototype structure
term, and the relation-matching term between the two prototype memories.

Every loss returns its exact analytic gradients; `objective` composes the
full batch computation into one scalar plus gradients with respect to the
network's two outputs (logits and normalized features). With the split and
pseudo-labels held fixed the composition is smooth, which is what the
finite-difference checks rely on.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .clustering import class_centroids
from .errors import ConfigError, DataError
from .network import log_softmax
from .prototypes import PrototypeBank, effective_prototypes
from .reliability import SplitSets
from .validation import as_int_vector

log = logging.getLogger(__name__)

EPS = 1e-12


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood of the labels; gradient in logit space is
    (softmax - onehot) / N."""
    n = logits.shape[0]
    labels = as_int_vector(labels, "labels", n)
    lp = log_softmax(logits)
    loss = float(-lp[np.arange(n), labels].mean())
    grad = np.exp(lp)
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n


def structure_loss(
    prototypes: np.ndarray,
    centroids: np.ndarray,
    present: np.ndarray,
    eps: float = EPS,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Sum over present classes of the smoothed distance
    sqrt(||prototype_k - centroid_k||^2 + eps).

    Pulls each batch centroid toward the memory of its class (and, through
    the blended prototype, slightly the other way). Returns gradients with
    respect to both matrices, zero on absent rows.
    """
    d = prototypes[present] - centroids[present]
    r = np.sqrt((d**2).sum(axis=1) + eps)
    g = d / r[:, None]
    grad_proto = np.zeros_like(prototypes)
    grad_cent = np.zeros_like(centroids)
    grad_proto[present] = g
    grad_cent[present] = -g
    return float(r.sum()), grad_proto, grad_cent


def structure_loss_per_point(
    prototypes: np.ndarray,
    features: np.ndarray,
    labels: np.ndarray,
    eps: float = EPS,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Per-point variant: mean smoothed distance from each feature to its
    class prototype. Stronger signal per point, quadratic-free near zero."""
    n = features.shape[0]
    if n == 0:
        return 0.0, np.zeros_like(prototypes), features.copy()
    d = prototypes[labels] - features
    r = np.sqrt((d**2).sum(axis=1) + eps)
    g = d / (n * r[:, None])
    grad_proto = np.zeros_like(prototypes)
    np.add.at(grad_proto, labels, g)
    return float(r.mean()), grad_proto, -g


@dataclass
class SimilarityMatrices:
    """Row-normalized self-similarity of the two prototype sets, restricted
    to the classes present in both."""

    class_ids: np.ndarray  # (K',) original class indices
    sim_consistent: np.ndarray  # (K', K') raw dot products
    sim_ambiguous: np.ndarray
    log_p: np.ndarray  # log row-softmax of sim_consistent / T
    log_q: np.ndarray
    p: np.ndarray
    q: np.ndarray


def similarity_matrices(
    consistent_rows: np.ndarray,
    ambiguous_rows: np.ndarray,
    class_ids: np.ndarray,
    temperature: float,
) -> SimilarityMatrices:
    """Dot-product self-similarity per set, each row turned into a
    distribution by a temperature softmax.

    The softmax keeps rows comparable even though averaged prototypes are
    not unit vectors, and makes the matching term below an exact KL
    divergence between row distributions.
    """
    if temperature <= 0:
        raise ConfigError(f"temperature must be positive, got {temperature}")
    if consistent_rows.shape != ambiguous_rows.shape:
        raise DataError("prototype sets must have matching shapes")
    e_c = consistent_rows @ consistent_rows.T
    e_a = ambiguous_rows @ ambiguous_rows.T
    log_p = log_softmax(e_c / temperature)
    log_q = log_softmax(e_a / temperature)
    return SimilarityMatrices(
        np.asarray(class_ids), e_c, e_a, log_p, log_q, np.exp(log_p), np.exp(log_q)
    )


def consistent_reasoning_loss(
    sims: SimilarityMatrices,
    temperature: float,
    stop_gradient_consistent: bool = False,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean KL divergence between matching rows of the two similarity
    distributions, pushing ambiguous-prototype relations toward the
    consistent ones.

    Returns (loss, grad wrt sim_consistent, grad wrt sim_ambiguous). With
    `stop_gradient_consistent` the consistent branch is treated as the fixed
    target and its gradient is zero.
    """
    k = sims.p.shape[0]
    diff = sims.log_p - sims.log_q
    row_kl = (sims.p * diff).sum(axis=1)
    # the sum is a KL divergence, nonnegative in exact arithmetic; rounding
    # on near-identical inputs can land it a hair below zero
    loss = max(0.0, float(row_kl.sum() / k**2))
    scale = 1.0 / (k**2 * temperature)
    grad_a = (sims.q - sims.p) * scale
    if stop_gradient_consistent:
        grad_c = np.zeros_like(grad_a)
    else:
        grad_c = sims.p * (diff - row_kl[:, None]) * scale
    return loss, grad_c, grad_a


def self_similarity_grad(grad_sim: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Chain a gradient on e = M M^T back to M: (G + G^T) M."""
    return (grad_sim + grad_sim.T) @ rows


@dataclass
class LossReport:
    total: float
    cross_entropy: float
    structure: float
    reasoning: float
    grad_logits: np.ndarray
    grad_features: np.ndarray
    n_shared_classes: int


def _scatter_centroid_grad(
    grad_features: np.ndarray,
    grad_centroids: np.ndarray,
    pseudo: np.ndarray,
    idx: np.ndarray,
    counts: np.ndarray,
) -> None:
    """Distribute a class-centroid gradient over the points that formed the
    centroid: each gets row_k / count_k."""
    if idx.size == 0:
        return
    labels = pseudo[idx]
    grad_features[idx] += grad_centroids[labels] / counts[labels][:, None]


def objective(
    features: np.ndarray,
    logits: np.ndarray,
    pseudo_labels: np.ndarray,
    sets: SplitSets,
    consistent_bank: PrototypeBank,
    ambiguous_bank: PrototypeBank,
    *,
    momentum: float,
    temperature: float,
    lambda_structure: float,
    lambda_reasoning: float,
    eps: float = EPS,
    structure_per_point: bool = False,
    stop_gradient_consistent: bool = False,
) -> LossReport:
    """Full batch objective and its gradients at the network outputs.

    total = CE + lambda_structure * structure + lambda_reasoning * reasoning.
    Bank rows are constants; gradient reaches the features through the batch
    centroids only, scaled by (1 - momentum) where it passes through a
    blended prototype. Component values are always computed (so logs can
    show a term before its lambda switches on) but a term's gradients are
    skipped while its lambda is zero.
    """
    n, n_classes = logits.shape
    pseudo = as_int_vector(pseudo_labels, "pseudo_labels", n)
    ce, grad_logits = cross_entropy(logits, pseudo)
    grad_features = np.zeros_like(features)

    ci, ai = sets.consistent, sets.ambiguous
    c_cent, c_counts = class_centroids(features[ci], pseudo[ci], n_classes)
    a_cent, a_counts = class_centroids(features[ai], pseudo[ai], n_classes)
    eff_c, present_c = effective_prototypes(consistent_bank, c_cent, c_counts, momentum)
    eff_a, present_a = effective_prototypes(ambiguous_bank, a_cent, a_counts, momentum)

    if structure_per_point:
        sl, g_proto, g_feat = structure_loss_per_point(eff_c, features[ci], pseudo[ci], eps)
        if lambda_structure != 0.0 and ci.size:
            grad_features[ci] += lambda_structure * g_feat
            _scatter_centroid_grad(
                grad_features, lambda_structure * (1.0 - momentum) * g_proto,
                pseudo, ci, c_counts,
            )
    else:
        sl, g_proto, g_cent = structure_loss(eff_c, c_cent, present_c, eps)
        if lambda_structure != 0.0:
            total_cent = (1.0 - momentum) * g_proto + g_cent
            _scatter_centroid_grad(
                grad_features, lambda_structure * total_cent, pseudo, ci, c_counts
            )

    shared = np.flatnonzero(present_c & present_a)
    cr = 0.0
    if shared.size >= 2:
        sims = similarity_matrices(eff_c[shared], eff_a[shared], shared, temperature)
        cr, g_ec, g_ea = consistent_reasoning_loss(sims, temperature, stop_gradient_consistent)
        if lambda_reasoning != 0.0:
            g_cent_c = np.zeros_like(c_cent)
            g_cent_a = np.zeros_like(a_cent)
            g_cent_c[shared] = (1.0 - momentum) * self_similarity_grad(g_ec, eff_c[shared])
            g_cent_a[shared] = (1.0 - momentum) * self_similarity_grad(g_ea, eff_a[shared])
            _scatter_centroid_grad(grad_features, lambda_reasoning * g_cent_c, pseudo, ci, c_counts)
            _scatter_centroid_grad(grad_features, lambda_reasoning * g_cent_a, pseudo, ai, a_counts)
    else:
        log.debug(
            "reasoning loss skipped: %d class(es) present in both sets", shared.size
        )

    total = ce + lambda_structure * sl + lambda_reasoning * cr
    return LossReport(total, ce, sl, cr, grad_logits, grad_features, int(shared.size))
