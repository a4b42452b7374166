"""Pixel-level anomaly detection metrics.

Anomalies are positives. Scores are thresholded as ``score >= t`` and tied
scores always share a threshold, so every metric is invariant to pixel order.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .tensor_io import IGNORE, AnomalyMask, LabelMap, ScoreMap

TPR_TARGET_PERCENT = 95


class MetricsError(ValueError):
    pass


@dataclass
class EvalReport:
    auroc: float
    ap: float
    fpr95: float
    tpr95_threshold: float
    positives: int
    negatives: int
    ignored: int
    per_class_summary: dict | None = field(default=None)

    def to_dict(self) -> dict:
        out = asdict(self)
        if out["per_class_summary"] is None:
            del out["per_class_summary"]
        return out

    @classmethod
    def from_dict(cls, doc: dict) -> "EvalReport":
        return cls(
            auroc=float(doc["auroc"]),
            ap=float(doc["ap"]),
            fpr95=float(doc["fpr95"]),
            tpr95_threshold=float(doc["tpr95_threshold"]),
            positives=int(doc["positives"]),
            negatives=int(doc["negatives"]),
            ignored=int(doc["ignored"]),
            per_class_summary=doc.get("per_class_summary"),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def csv_row(self, label: str | None = None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        row = [repr(self.auroc), repr(self.ap), repr(self.fpr95)]
        writer.writerow(([label] if label is not None else []) + row)
        return buf.getvalue()


def _threshold_counts(scores: np.ndarray, is_pos: np.ndarray):
    """Distinct thresholds (descending) with cumulative TP and FP at ``score >= t``."""
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    pos = is_pos[order].astype(np.int64)
    # Last index of every run of equal scores.
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = np.cumsum(pos)[ends]
    fp = (ends + 1) - tp
    return s[ends], tp, fp


def pooled_metrics(scores: np.ndarray, labels: np.ndarray) -> tuple[float, float, float, float]:
    """AUROC, AP, FPR95 and the TPR95 threshold for flat score/label arrays (labels 0/1)."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    is_pos = np.asarray(labels).ravel() == 1
    P = int(is_pos.sum())
    N = int(is_pos.size - P)
    if P == 0:
        raise MetricsError("no positive (anomaly) pixels")
    if N == 0:
        raise MetricsError("no negative (in-distribution) pixels")
    thresholds, tp, fp = _threshold_counts(scores, is_pos)

    # Trapezoid over the tie-grouped ROC equals Mann-Whitney U with ties as 1/2.
    tp_prev = np.r_[0, tp[:-1]]
    fp_prev = np.r_[0, fp[:-1]]
    twice_u = int(np.sum((fp - fp_prev) * (tp + tp_prev)))
    auroc = twice_u / (2 * P * N)

    # Step-wise AP: recall increments weighted by precision, no interpolation.
    ap = np.sum(((tp - tp_prev) / P) * (tp / (tp + fp)))

    # Integer comparison keeps the TPR >= 0.95 test exact.
    reach = np.flatnonzero(100 * tp >= TPR_TARGET_PERCENT * P)
    k95 = int(reach[0])
    return float(auroc), float(ap), float(fp[k95] / N), float(thresholds[k95])


def _flatten_eval(anomaly_scores: ScoreMap, gt: AnomalyMask):
    if anomaly_scores.shape != gt.shape:
        raise MetricsError(f"shape mismatch: {anomaly_scores.shape} vs {gt.shape}")
    g = gt.data.ravel()
    keep = g != IGNORE
    return anomaly_scores.data.ravel()[keep], g[keep], int((~keep).sum())


def evaluate(anomaly_scores: ScoreMap | list[ScoreMap], gt: AnomalyMask | list[AnomalyMask]) -> EvalReport:
    """Evaluate one image, or pool several images under a single threshold."""
    if isinstance(anomaly_scores, ScoreMap):
        anomaly_scores, gt = [anomaly_scores], [gt]
    if len(anomaly_scores) != len(gt) or not anomaly_scores:
        raise MetricsError("score and ground-truth lists must be non-empty and paired")
    parts = [_flatten_eval(s, g) for s, g in zip(anomaly_scores, gt)]
    scores = np.concatenate([p[0] for p in parts])
    labels = np.concatenate([p[1] for p in parts])
    ignored = sum(p[2] for p in parts)
    auroc, ap, fpr95, thr = pooled_metrics(scores, labels)
    P = int((labels == 1).sum())
    return EvalReport(auroc, ap, fpr95, thr, P, int(labels.size - P), ignored)


def miou_with_rejection(
    preds: LabelMap, gt_labels: LabelMap, anomaly_scores: ScoreMap, threshold: float
) -> float:
    """Mean IoU after relabelling pixels with ``score >= threshold`` as rejected.

    Averages over classes present in the (non-ignored) ground truth.
    """
    if not (preds.shape == gt_labels.shape == anomaly_scores.shape):
        raise MetricsError("preds, gt_labels and anomaly_scores must share a shape")
    C = max(preds.class_count, gt_labels.class_count)
    p = preds.data.ravel().astype(np.int64)
    g = gt_labels.data.ravel().astype(np.int64)
    p = np.where(anomaly_scores.data.ravel() >= threshold, C, p)
    keep = g != IGNORE
    p, g = p[keep], g[keep]
    conf = np.bincount(g * (C + 1) + p, minlength=C * (C + 1)).reshape(C, C + 1)
    inter = np.diag(conf[:, :C])
    gt_total = conf.sum(axis=1)
    pred_total = conf[:, :C].sum(axis=0)
    union = gt_total + pred_total - inter
    present = gt_total > 0
    if not present.any():
        raise MetricsError("no labelled ground-truth pixels")
    return float(np.mean(inter[present] / union[present]))


def _summary(values: np.ndarray) -> dict | None:
    if values.size == 0:
        return None
    q1, q3 = np.quantile(values, [0.25, 0.75])
    return {"mean": float(values.mean()), "q1": float(q1), "q3": float(q3), "count": int(values.size)}


def per_class_distribution(scores: ScoreMap, preds: LabelMap, gt: AnomalyMask) -> dict:
    """Mean and quartiles of scores per predicted class, split by ground truth.

    Keys are class indices as strings (JSON friendly); classes never predicted
    are omitted and empty groups are ``None``.
    """
    if not (scores.shape == preds.shape == gt.shape):
        raise MetricsError("scores, preds and gt must share a shape")
    s = scores.data.ravel().astype(np.float64)
    p = preds.data.ravel()
    g = gt.data.ravel()
    out = {}
    for c in np.unique(p):
        sel = p == c
        out[str(int(c))] = {
            "in_distribution": _summary(s[sel & (g == 0)]),
            "anomaly": _summary(s[sel & (g == 1)]),
        }
    return out


def is_valid_rate(x: float) -> bool:
    return math.isfinite(x) and 0.0 <= x <= 1.0
