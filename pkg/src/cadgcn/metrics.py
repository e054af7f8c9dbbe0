"""Confusion-matrix metrics: overall accuracy, average accuracy, Cohen's kappa."""

from dataclasses import dataclass

import numpy as np

from .errors import ContractError


@dataclass
class Metrics:
    confusion: np.ndarray  # rows = truth, columns = prediction, class k at index k-1
    per_class: np.ndarray  # recall per class, nan for classes absent from truth
    oa: float
    aa: float
    kappa: float

    def to_dict(self):
        return {
            "oa": self.oa,
            "aa": self.aa,
            "kappa": self.kappa,
            "per_class": [None if np.isnan(x) else float(x) for x in self.per_class],
            "confusion": self.confusion.tolist(),
        }

    def summary(self):
        lines = [f"OA    {self.oa:.4f}", f"AA    {self.aa:.4f}", f"kappa {self.kappa:.4f}"]
        for k, acc in enumerate(self.per_class, start=1):
            if not np.isnan(acc):
                lines.append(f"class {k:>3d} {acc:.4f}")
        return "\n".join(lines)


def metrics_from_confusion(confusion):
    conf = np.asarray(confusion, dtype=np.int64)
    if conf.ndim != 2 or conf.shape[0] != conf.shape[1]:
        raise ContractError(f"confusion must be square, got {conf.shape}")
    total = conf.sum()
    if total <= 0:
        raise ContractError("confusion matrix is empty")
    rows = conf.sum(axis=1)
    cols = conf.sum(axis=0)
    p_o = np.trace(conf) / total
    p_e = float(rows @ cols) / float(total) ** 2
    present = rows > 0
    per_class = np.full(len(rows), np.nan)
    per_class[present] = np.diag(conf)[present] / rows[present]
    aa = float(per_class[present].mean())
    # p_e == 1 only when truth and prediction are one and the same class
    kappa = 1.0 if p_e >= 1.0 else float((p_o - p_e) / (1.0 - p_e))
    return Metrics(conf, per_class, float(p_o), aa, kappa)


def compute_metrics(pred, truth, eval_idx, n_classes=None):
    """Metrics of per-pixel class ids ``pred`` against ``truth`` on ``eval_idx``."""
    eval_idx = np.asarray(eval_idx, dtype=np.int64)
    if eval_idx.size == 0:
        raise ContractError("eval_idx is empty")
    pred = np.asarray(pred).ravel()
    t = truth.flat() if hasattr(truth, "flat") and callable(truth.flat) else np.ravel(truth)
    y_true = t[eval_idx]
    y_pred = pred[eval_idx]
    if np.any(y_true <= 0):
        raise ContractError("eval_idx contains unlabeled pixels")
    if np.any(y_pred <= 0):
        raise ContractError("predictions must be class ids >= 1")
    c = int(max(y_true.max(), y_pred.max(), n_classes or 0))
    conf = np.zeros((c, c), dtype=np.int64)
    np.add.at(conf, (y_true - 1, y_pred - 1), 1)
    return metrics_from_confusion(conf)
