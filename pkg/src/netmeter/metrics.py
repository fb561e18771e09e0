"""Detection metrics with malicious as the positive class.

Scalar metrics are percentages.  A ratio whose denominator is zero is
:data:`UNDEFINED` rather than 0 or NaN.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .core_types import ConfusionCounts

_trapezoid = getattr(np, "trapezoid", None) or np.trapz


class _Undefined:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "undefined"

    def __bool__(self):
        return False


UNDEFINED = _Undefined()


class MetricsError(ValueError):
    pass


def confusion(labels, predictions=None, *, scores=None, threshold: float = 0.5) -> ConfusionCounts:
    """Counts from hard predictions, or from scores thresholded at ``score >= threshold``."""
    y = np.asarray(labels).astype(np.int64).reshape(-1)
    if scores is not None:
        s = np.asarray(scores, dtype=np.float64).reshape(-1)
        if s.size != y.size:
            raise MetricsError(f"length mismatch: {y.size} labels vs {s.size} scores")
        pred = (s >= threshold).astype(np.int64)
    else:
        pred = np.asarray(predictions).astype(np.int64).reshape(-1)
        if pred.size != y.size:
            raise MetricsError(f"length mismatch: {y.size} labels vs {pred.size} predictions")
    return ConfusionCounts(
        tp=int(np.sum((y == 1) & (pred == 1))),
        tn=int(np.sum((y == 0) & (pred == 0))),
        fp=int(np.sum((y == 0) & (pred == 1))),
        fn=int(np.sum((y == 1) & (pred == 0))),
    )


def _pct(num: int, den: int):
    return UNDEFINED if den == 0 else 100.0 * num / den


@dataclass(frozen=True)
class MetricReport:
    acc: object
    pr: object
    dr: object
    fa: object
    hd: object
    f1: object
    confusion: ConfusionCounts
    auc_roc: object = UNDEFINED
    auc_pr: object = UNDEFINED

    def to_dict(self) -> dict:
        def enc(v):
            return "undefined" if v is UNDEFINED else v

        out = {k: enc(getattr(self, k)) for k in ("acc", "pr", "dr", "fa", "hd", "f1", "auc_roc", "auc_pr")}
        c = self.confusion
        out["confusion"] = {"tp": c.tp, "tn": c.tn, "fp": c.fp, "fn": c.fn}
        return out


def scalar_metrics(c: ConfusionCounts) -> MetricReport:
    acc = _pct(c.tp + c.tn, c.total)
    pr = _pct(c.tp, c.tp + c.fp)
    dr = _pct(c.tp, c.tp + c.fn)
    fa = _pct(c.fp, c.fp + c.tn)
    hd = UNDEFINED if UNDEFINED in (dr, fa) else dr - fa
    if UNDEFINED in (pr, dr) or pr + dr == 0:
        f1 = UNDEFINED
    else:
        f1 = 2 * pr * dr / (pr + dr)
    return MetricReport(acc, pr, dr, fa, hd, f1, c)


def check_hd(dr: float, fa: float, printed_hd: float, tol: float = 0.005) -> tuple[float, bool]:
    """Recompute HD from DR and FA; flag a printed value that disagrees beyond rounding."""
    hd = dr - fa
    return hd, abs(hd - printed_hd) <= tol


def _sweep(labels, scores):
    y = np.asarray(labels).astype(np.int64).reshape(-1)
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    if y.size != s.size:
        raise MetricsError(f"length mismatch: {y.size} labels vs {s.size} scores")
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise MetricsError("curves need both classes present")
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    # last index of each run of equal scores: ties enter the curve together
    cuts = np.r_[np.flatnonzero(np.diff(s) != 0), y.size - 1]
    tp = np.cumsum(y == 1)[cuts]
    fp = np.cumsum(y == 0)[cuts]
    thresholds = s[cuts]
    return tp, fp, thresholds, n_pos, n_neg


@dataclass(frozen=True)
class Curve:
    x: np.ndarray
    y: np.ndarray
    thresholds: np.ndarray
    auc: float


def roc_curve(labels, scores) -> Curve:
    """(FPR, TPR) points from threshold +inf down to the smallest score; trapezoidal AUC."""
    tp, fp, thr, n_pos, n_neg = _sweep(labels, scores)
    tpr = np.r_[0.0, tp / n_pos]
    fpr = np.r_[0.0, fp / n_neg]
    thr = np.r_[np.inf, thr]
    return Curve(fpr, tpr, thr, float(_trapezoid(tpr, fpr)))


def pr_curve(labels, scores) -> Curve:
    """(recall, precision) points; the +inf threshold contributes (0, 1)."""
    tp, fp, thr, n_pos, _ = _sweep(labels, scores)
    recall = np.r_[0.0, tp / n_pos]
    precision = np.r_[1.0, tp / (tp + fp)]
    thr = np.r_[np.inf, thr]
    return Curve(recall, precision, thr, float(_trapezoid(precision, recall)))


def evaluate(labels, scores, threshold: float = 0.5) -> MetricReport:
    base = scalar_metrics(confusion(labels, scores=scores, threshold=threshold))
    roc = roc_curve(labels, scores)
    pr = pr_curve(labels, scores)
    return MetricReport(
        base.acc, base.pr, base.dr, base.fa, base.hd, base.f1, base.confusion, roc.auc, pr.auc
    )


def write_curve_csv(path, curve: Curve, x_name: str, y_name: str) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["threshold", x_name, y_name])
        for t, x, y in zip(curve.thresholds.tolist(), curve.x.tolist(), curve.y.tolist()):
            w.writerow([repr(t), repr(x), repr(y)])


def write_metrics_json(path, reports: dict) -> None:
    """``reports`` maps model names to :class:`MetricReport` (or plain dicts)."""
    payload = {k: (v.to_dict() if isinstance(v, MetricReport) else v) for k, v in reports.items()}
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
