"""Unsupervised evaluation: optimal label alignment and segmentation scores.

Cluster ids carry no fixed meaning, so predictions are matched to ground
truth by solving a min-cost assignment over the prediction/ground-truth
contingency table before any score is computed. The assignment solver is
written out (potentials method, O(n^3)) with a deterministic lexicographic
tie-break so equal-cost matchings cannot make runs diverge.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clustering import kmeans
from .errors import DataError
from .validation import as_float_matrix, as_int_vector, check_finite


@dataclass
class Assignment:
    col_for_row: np.ndarray  # (n,) column assigned to each row
    total_cost: float


def _solve(cost: np.ndarray) -> tuple[np.ndarray, float]:
    """Min-cost perfect matching on a square matrix via shortest augmenting
    paths with row/column potentials."""
    n = cost.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    row_for_col = np.zeros(n + 1, dtype=np.int64)  # 0 means unmatched
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        row_for_col[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = row_for_col[j0]
            delta, j1 = np.inf, 0
            for j in range(1, n + 1):
                if used[j]:
                    continue
                cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta, j1 = minv[j], j
            for j in range(n + 1):
                if used[j]:
                    u[row_for_col[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if row_for_col[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            row_for_col[j0] = row_for_col[j1]
            j0 = j1
    cols = np.empty(n, dtype=np.int64)
    for j in range(1, n + 1):
        cols[row_for_col[j] - 1] = j - 1
    return cols, float(cost[np.arange(n), cols].sum())


def hungarian(cost: np.ndarray, lexicographic: bool = True) -> Assignment:
    """Minimum-cost assignment; among equally cheap matchings, return the one
    whose column sequence (row 0 first) is lexicographically smallest.

    The tie-break fixes rows greedily: row i takes the smallest column that
    still admits a completion at optimal cost, tested by re-solving the
    remaining subproblem. Optimality comparisons use a tolerance scaled to
    the cost magnitudes.
    """
    cost = as_float_matrix(cost, "cost")
    check_finite(cost, "cost")
    n = cost.shape[0]
    if cost.shape[1] != n:
        raise DataError(f"cost matrix must be square, got {cost.shape}")
    if n == 0:
        return Assignment(np.empty(0, dtype=np.int64), 0.0)
    cols, total = _solve(cost)
    if not lexicographic:
        return Assignment(cols, total)

    tol = 1e-9 * n * max(1.0, float(np.abs(cost).max()))
    free = list(range(n))
    fixed_cost = 0.0
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        rest_rows = np.arange(i + 1, n)
        for c in sorted(free):
            rest_cols = np.array([j for j in free if j != c], dtype=np.int64)
            rest = (
                _solve(cost[np.ix_(rest_rows, rest_cols)])[1] if rest_rows.size else 0.0
            )
            if fixed_cost + cost[i, c] + rest <= total + tol:
                out[i] = c
                fixed_cost += cost[i, c]
                free.remove(c)
                break
        else:  # pragma: no cover - the optimal column always qualifies
            raise DataError("assignment refinement failed to place a row")
    return Assignment(out, total)


# --- confusion and scores --------------------------------------------------


@dataclass
class ConfusionMatrix:
    """Counts with ground truth on rows, predictions on columns."""

    counts: np.ndarray

    @classmethod
    def from_labels(cls, gt, pred, n_classes: int) -> "ConfusionMatrix":
        gt = as_int_vector(gt, "gt")
        pred = as_int_vector(pred, "pred", gt.size)
        for name, v in (("gt", gt), ("pred", pred)):
            if v.size and (v.min() < 0 or v.max() >= n_classes):
                raise DataError(f"{name} labels must lie in [0, {n_classes})")
        counts = np.zeros((n_classes, n_classes), dtype=np.int64)
        np.add.at(counts, (gt, pred), 1)
        return cls(counts)

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if self.counts.shape != other.counts.shape:
            raise DataError("cannot add confusion matrices of different sizes")
        return ConfusionMatrix(self.counts + other.counts)


@dataclass
class MetricReport:
    overall_accuracy: float
    mean_accuracy: float
    mean_iou: float
    per_class_iou: np.ndarray  # nan for classes absent from gt and prediction
    confusion: ConfusionMatrix
    mapping: np.ndarray | None = None  # prediction id -> ground-truth id


def metrics_from_confusion(conf: ConfusionMatrix) -> MetricReport:
    """Overall accuracy, mean per-class recall, and mean IoU from an aligned
    confusion matrix.

    Mean accuracy averages over classes that occur in the ground truth; mean
    IoU averages over classes that occur in ground truth or prediction
    (classes in neither cannot be scored and are excluded).
    """
    c = conf.counts.astype(np.float64)
    total = c.sum()
    if total == 0:
        raise DataError("confusion matrix is empty")
    tp = np.diag(c)
    gt_count = c.sum(axis=1)
    pred_count = c.sum(axis=0)
    oa = tp.sum() / total
    in_gt = gt_count > 0
    macc = float((tp[in_gt] / gt_count[in_gt]).mean())
    union = gt_count + pred_count - tp
    scored = union > 0
    iou = np.full(c.shape[0], np.nan)
    iou[scored] = tp[scored] / union[scored]
    return MetricReport(float(oa), macc, float(iou[scored].mean()), iou, conf)


def contingency(gt, pred, n_classes: int) -> np.ndarray:
    """Counts with predictions on rows and ground truth on columns, the shape
    the alignment step consumes. Summable across scenes."""
    return ConfusionMatrix.from_labels(pred, gt, n_classes).counts


def align_contingency(cont: np.ndarray) -> tuple[np.ndarray, ConfusionMatrix]:
    """Optimal prediction->ground-truth relabeling (maximizing matched
    points) and the resulting aligned confusion matrix.

    Prediction rows are put in a content-derived order before the solve, so
    when several assignments tie at the optimum the tie-break cannot depend
    on the arbitrary prediction ids: relabeling the predictions yields the
    same aligned confusion matrix.
    """
    cont = np.asarray(cont)
    order = np.array(
        sorted(range(cont.shape[0]), key=lambda i: tuple(cont[i]), reverse=True),
        dtype=np.int64,
    )
    sub_mapping = hungarian(-cont[order].astype(np.float64)).col_for_row
    mapping = np.empty(cont.shape[0], dtype=np.int64)
    mapping[order] = sub_mapping
    inverse = np.empty_like(mapping)
    inverse[mapping] = np.arange(mapping.size)
    # confusion[g, c] = cont[p, g] for the prediction p relabeled to c
    return mapping, ConfusionMatrix(cont[inverse].T.copy())


def align_and_score(gt, pred, n_classes: int | None = None) -> MetricReport:
    """One-call evaluation: build the contingency table, align, score."""
    gt = as_int_vector(gt, "gt")
    pred = as_int_vector(pred, "pred", gt.size)
    if n_classes is None:
        n_classes = int(max(gt.max(), pred.max())) + 1
    mapping, confusion = align_contingency(contingency(gt, pred, n_classes))
    report = metrics_from_confusion(confusion)
    report.mapping = mapping
    return report


def primitives_to_categories(
    prototype_vectors: np.ndarray, n_categories: int, seed: int
) -> np.ndarray:
    """Compress primitive ids to category count by clustering the learned
    prototypes; entry p is the category of primitive p."""
    result = kmeans(prototype_vectors, n_categories, seed)
    return result.labels
