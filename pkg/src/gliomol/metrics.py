"""Classification metric suite for the multi-label evaluation reports.

Per-label: accuracy, F1, AUROC, balanced accuracy, average precision, and
the 2x2 confusion table at a 0.5 decision threshold (p >= 0.5 counts as a
positive call). Multi-label summaries: mAcc / mAP / mAUC are per-label
means; SubAcc is the fraction of examples with every label correct; ebF1
averages per-example F1; micF1 pools counts over all labels and examples.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

THRESHOLD = 0.5


class SingleClassError(ValueError):
    """Metric undefined because only one class is present."""


def _check_binary(labels: np.ndarray) -> None:
    labels = np.asarray(labels)
    if labels.min() == labels.max():
        raise SingleClassError("metric needs both classes present")


def roc_auc(scores, labels) -> float:
    """Probability that a random positive outscores a random negative,
    ties counted half, computed from tie-averaged ranks."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    _check_binary(labels)
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores), dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # average 1-based rank
        i = j + 1
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def average_precision(scores, labels) -> float:
    """Rectangle-rule area under precision-recall; tied scores step together."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    _check_binary(labels)
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    y = labels[order]
    n_pos = int(labels.sum())
    ap = 0.0
    tp = fp = 0
    prev_recall = 0.0
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and s[j + 1] == s[i]:
            j += 1
        tp += int(y[i : j + 1].sum())
        fp += int((~y[i : j + 1]).sum())
        recall = tp / n_pos
        precision = tp / (tp + fp)
        ap += (recall - prev_recall) * precision
        prev_recall = recall
        i = j + 1
    return float(ap)


def _hard_calls(scores) -> np.ndarray:
    return np.asarray(scores, dtype=np.float64) >= THRESHOLD


def confusion_counts(scores, labels) -> dict:
    pred = _hard_calls(scores)
    truth = np.asarray(labels).astype(bool)
    return {
        "tp": int((pred & truth).sum()),
        "fp": int((pred & ~truth).sum()),
        "fn": int((~pred & truth).sum()),
        "tn": int((~pred & ~truth).sum()),
    }


def accuracy(scores, labels) -> float:
    pred = _hard_calls(scores)
    truth = np.asarray(labels).astype(bool)
    return float((pred == truth).mean())


def f1_from_counts(tp: int, fp: int, fn: int) -> float:
    denom = 2 * tp + fp + fn
    return float(2 * tp / denom) if denom else 1.0


def f1_score(scores, labels) -> float:
    c = confusion_counts(scores, labels)
    return f1_from_counts(c["tp"], c["fp"], c["fn"])


def balanced_accuracy(scores, labels) -> float:
    """Mean of sensitivity and specificity at the 0.5 threshold."""
    truth = np.asarray(labels).astype(bool)
    _check_binary(truth)
    c = confusion_counts(scores, labels)
    sens = c["tp"] / (c["tp"] + c["fn"])
    spec = c["tn"] / (c["tn"] + c["fp"])
    return float((sens + spec) / 2.0)


@dataclass
class MetricReport:
    genes: tuple
    per_label: dict  # gene -> {accuracy, f1, auroc, balanced_accuracy, ap, confusion}
    m_acc: float
    m_ap: float
    m_auc: float
    sub_acc: float
    eb_f1: float
    mic_f1: float
    n_examples: int

    def to_dict(self) -> dict:
        return {
            "genes": list(self.genes),
            "per_label": self.per_label,
            "mAcc": self.m_acc,
            "mAP": self.m_ap,
            "mAUC": self.m_auc,
            "SubAcc": self.sub_acc,
            "ebF1": self.eb_f1,
            "micF1": self.mic_f1,
            "n_examples": self.n_examples,
        }


def multilabel_report(scores: np.ndarray, labels: np.ndarray, genes: tuple) -> MetricReport:
    """Full per-label and summary metric table for (N, L) score/label pairs."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    if scores.shape != labels.shape:
        raise ValueError(f"scores {scores.shape} vs labels {labels.shape}")
    n, l = scores.shape
    if len(genes) != l:
        raise ValueError("gene names must match label columns")

    per_label = {}
    for k, gene in enumerate(genes):
        per_label[gene] = {
            "accuracy": accuracy(scores[:, k], labels[:, k]),
            "f1": f1_score(scores[:, k], labels[:, k]),
            "auroc": roc_auc(scores[:, k], labels[:, k]),
            "balanced_accuracy": balanced_accuracy(scores[:, k], labels[:, k]),
            "ap": average_precision(scores[:, k], labels[:, k]),
            "confusion": confusion_counts(scores[:, k], labels[:, k]),
        }

    pred = _hard_calls(scores)
    sub_acc = float((pred == labels).all(axis=1).mean())

    eb = []
    for i in range(n):
        tp = int((pred[i] & labels[i]).sum())
        fp = int((pred[i] & ~labels[i]).sum())
        fn = int((~pred[i] & labels[i]).sum())
        eb.append(f1_from_counts(tp, fp, fn))
    eb_f1 = float(np.mean(eb))

    tp = int((pred & labels).sum())
    fp = int((pred & ~labels).sum())
    fn = int((~pred & labels).sum())
    mic_f1 = f1_from_counts(tp, fp, fn)

    return MetricReport(
        genes=tuple(genes),
        per_label=per_label,
        m_acc=float(np.mean([per_label[g]["accuracy"] for g in genes])),
        m_ap=float(np.mean([per_label[g]["ap"] for g in genes])),
        m_auc=float(np.mean([per_label[g]["auroc"] for g in genes])),
        sub_acc=sub_acc,
        eb_f1=eb_f1,
        mic_f1=mic_f1,
        n_examples=n,
    )
