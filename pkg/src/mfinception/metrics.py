"""Classification metrics used by the evaluation protocol."""

import numpy as np

from .errors import StructuralError


def _check(y_true, y_pred, num_classes):
    y_true = np.asarray(y_true, dtype=np.int64).ravel()
    y_pred = np.asarray(y_pred, dtype=np.int64).ravel()
    if y_true.shape != y_pred.shape:
        raise StructuralError(
            f"{y_true.shape[0]} labels vs {y_pred.shape[0]} predictions"
        )
    if y_true.size == 0:
        raise StructuralError("metrics need at least one sample")
    if num_classes is None:
        num_classes = int(max(y_true.max(), y_pred.max())) + 1
    if y_true.min() < 0 or y_pred.min() < 0 or max(y_true.max(), y_pred.max()) >= num_classes:
        raise StructuralError(f"labels outside 0..{num_classes - 1}")
    return y_true, y_pred, num_classes


def confusion_matrix(y_true, y_pred, num_classes=None):
    """counts[i, j] = samples of true class i predicted as class j."""
    y_true, y_pred, num_classes = _check(y_true, y_pred, num_classes)
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (y_true, y_pred), 1)
    return counts


def per_class_f1(y_true, y_pred, num_classes=None):
    """F1 per class; a class with zero precision+recall scores 0."""
    counts = confusion_matrix(y_true, y_pred, num_classes)
    tp = np.diag(counts).astype(np.float64)
    fp = counts.sum(axis=0) - tp
    fn = counts.sum(axis=1) - tp
    denom = 2 * tp + fp + fn
    with np.errstate(invalid="ignore"):
        f1 = np.where(denom > 0, 2 * tp / np.where(denom > 0, denom, 1), 0.0)
    return f1


def macro_f1(y_true, y_pred, num_classes=None, weighted=False):
    """Mean per-class F1; `weighted` weights classes by true support."""
    y_true, y_pred, num_classes = _check(y_true, y_pred, num_classes)
    f1 = per_class_f1(y_true, y_pred, num_classes)
    if not weighted:
        return float(f1.mean())
    support = np.bincount(y_true, minlength=num_classes).astype(np.float64)
    return float((f1 * support).sum() / support.sum())


def accuracy(y_true, y_pred):
    y_true, y_pred, _ = _check(y_true, y_pred, None)
    return float((y_true == y_pred).mean())
