"""Confusion matrix and the OA / AA / Kappa accuracy indicators."""
from __future__ import annotations

import warnings

import numpy as np


class MetricError(ValueError):
    pass


def confusion_matrix(y_true, y_pred, classes: int) -> np.ndarray:
    """Counts with rows = true class, columns = predicted; labels are 1-based."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise MetricError(f"label arrays differ in shape: {y_true.shape} vs {y_pred.shape}")
    for name, y in (("true", y_true), ("predicted", y_pred)):
        if y.size and (y.min() < 1 or y.max() > classes):
            raise MetricError(f"{name} labels must lie in 1..{classes}")
    flat = (y_true - 1) * classes + (y_pred - 1)
    return np.bincount(flat, minlength=classes * classes).reshape(classes, classes)


def _as_cm(cm) -> np.ndarray:
    cm = np.asarray(cm, dtype=np.float64)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1]:
        raise MetricError(f"confusion matrix must be square, got {cm.shape}")
    if (cm < 0).any():
        raise MetricError("confusion matrix has negative counts")
    if cm.sum() <= 0:
        raise MetricError("confusion matrix is empty")
    return cm


def overall_accuracy(cm) -> float:
    cm = _as_cm(cm)
    return float(np.trace(cm) / cm.sum())


def average_accuracy(cm) -> float:
    """Mean per-class recall; classes with no true samples are skipped."""
    cm = _as_cm(cm)
    rows = cm.sum(axis=1)
    present = rows > 0
    if not present.all():
        missing = (np.flatnonzero(~present) + 1).tolist()
        warnings.warn(f"classes {missing} have no samples and are left out of AA", stacklevel=2)
    return float(np.mean(np.diag(cm)[present] / rows[present]))


def kappa(cm) -> float:
    """Cohen's kappa, ``(p_o - p_e) / (1 - p_e)``."""
    cm = _as_cm(cm)
    total = cm.sum()
    p_o = np.trace(cm) / total
    p_e = float(cm.sum(axis=1) @ cm.sum(axis=0)) / total**2
    if p_e >= 1.0:
        raise MetricError("kappa is undefined when chance agreement is 1")
    return float((p_o - p_e) / (1.0 - p_e))


def summarize(cm) -> dict[str, float]:
    return {"OA": overall_accuracy(cm), "AA": average_accuracy(cm), "Kappa": kappa(cm)}


def format_table(rows: dict[str, dict[str, float]]) -> str:
    """Render ``{run: {"OA":..,"AA":..,"Kappa":..}}`` as fractions to 4 places."""
    lines = [f"{'':<12}{'OA':>10}{'AA':>10}{'Kappa':>10}"]
    for name, m in rows.items():
        lines.append(f"{name:<12}" + "".join(f"{m[k]:>10.4f}" for k in ("OA", "AA", "Kappa")))
    return "\n".join(lines)
