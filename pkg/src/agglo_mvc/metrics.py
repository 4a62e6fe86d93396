"""External clustering scores: NMI, Rand index, purity and pair-counting P/R/F."""

import json
from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class MetricsReport:
    nmi: float
    rand_index: float
    purity: float
    precision: float
    recall: float
    f_score: float

    def to_dict(self):
        d = asdict(self)
        d["ri"] = d.pop("rand_index")
        return {key: d[key] for key in ("nmi", "ri", "purity", "precision", "recall", "f_score")}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)


def contingency(pred, truth):
    _, p = np.unique(pred, return_inverse=True)
    _, t = np.unique(truth, return_inverse=True)
    table = np.zeros((p.max() + 1, t.max() + 1), dtype=np.int64)
    np.add.at(table, (p, t), 1)
    return table


def _entropy(counts, n):
    p = counts[counts > 0] / n
    return float(-np.sum(p * np.log(p)))


def pair_counts(pred, truth):
    """``(TP, FP, FN, TN)`` over all unordered sample pairs."""
    table = contingency(pred, truth)
    n = int(table.sum())

    def comb2(x):
        x = np.asarray(x, dtype=np.int64)
        return int(np.sum(x * (x - 1) // 2))

    same_both = comb2(table)
    same_pred = comb2(table.sum(axis=1))
    same_truth = comb2(table.sum(axis=0))
    tp = same_both
    fp = same_pred - same_both
    fn = same_truth - same_both
    tn = n * (n - 1) // 2 - tp - fp - fn
    return tp, fp, fn, tn


def nmi(pred, truth):
    """Mutual information over the geometric mean of the two entropies (natural log).

    Defined as 0 when either labelling has a single cluster.
    """
    table = contingency(pred, truth)
    n = table.sum()
    h_pred = _entropy(table.sum(axis=1), n)
    h_truth = _entropy(table.sum(axis=0), n)
    if h_pred == 0.0 or h_truth == 0.0:
        return 0.0
    joint = table / n
    outer = np.outer(table.sum(axis=1), table.sum(axis=0)) / n**2
    nz = joint > 0
    mi = float(np.sum(joint[nz] * np.log(joint[nz] / outer[nz])))
    return float(min(1.0, max(0.0, mi / np.sqrt(h_pred * h_truth))))


def evaluate(pred, truth):
    pred = np.asarray(pred).ravel()
    truth = np.asarray(truth).ravel()
    if pred.shape != truth.shape:
        raise ValueError(f"label length mismatch: {pred.size} predicted vs {truth.size} true")
    n = pred.size
    if n < 2:
        raise ValueError("need at least two samples to evaluate a clustering")
    tp, fp, fn, tn = pair_counts(pred, truth)
    # no pair claimed (or none to find) means nothing was got wrong: score 1
    precision = tp / (tp + fp) if tp + fp else 1.0
    recall = tp / (tp + fn) if tp + fn else 1.0
    f_score = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    table = contingency(pred, truth)
    return MetricsReport(
        nmi=nmi(pred, truth),
        rand_index=(tp + tn) / (n * (n - 1) // 2),
        purity=float(table.max(axis=1).sum() / n),
        precision=float(precision),
        recall=float(recall),
        f_score=float(f_score),
    )
