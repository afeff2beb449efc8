# -*- encoding: utf-8 -*-
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, NamedTuple, Sequence, Union

import numpy as np
import pandas as pd

from .logger import logger
from .utils import ChurnLabError, mkdir

METRIC_KEYS = ("test_acc", "auc", "cohen_kappa", "mcc")


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


class RocPoint(NamedTuple):
    threshold: float
    fpr: float
    tpr: float


def _check_pair(labels: Sequence[int], probas: Sequence[float]):
    labels = np.asarray(labels, dtype=np.int64)
    probas = np.asarray(probas, dtype=np.float64)
    if labels.shape != probas.shape:
        raise MetricsError(f"labels {labels.shape} and probas {probas.shape} differ in length")
    if labels.size == 0:
        raise MetricsError("empty input")
    return labels, probas


def confusion(
    labels: Sequence[int], probas: Sequence[float], threshold: float = 0.5
) -> ConfusionMatrix:
    labels, probas = _check_pair(labels, probas)
    if not 0 < threshold < 1:
        raise MetricsError(f"threshold must be in (0, 1), got {threshold}")

    pred = probas > threshold
    pos = labels == 1
    return ConfusionMatrix(
        tp=int(np.sum(pred & pos)),
        fp=int(np.sum(pred & ~pos)),
        tn=int(np.sum(~pred & ~pos)),
        fn=int(np.sum(~pred & pos)),
    )


def _check_total(cm: ConfusionMatrix) -> None:
    if cm.total == 0:
        raise MetricsError("empty confusion matrix")


def accuracy(cm: ConfusionMatrix) -> float:
    _check_total(cm)
    return (cm.tp + cm.tn) / cm.total


def recall(cm: ConfusionMatrix) -> float:
    _check_total(cm)
    positives = cm.tp + cm.fn
    return cm.tp / positives if positives else 0.0


def auc(probas: Sequence[float], labels: Sequence[int]) -> float:
    """P(score of a churner > score of a non-churner), ties counted half.

    Equivalent to the full pairwise sum; each churner's wins and ties are
    counted against the sorted non-churner scores.
    """
    labels, probas = _check_pair(labels, probas)
    pos = probas[labels == 1]
    neg = np.sort(probas[labels == 0])
    if pos.size == 0 or neg.size == 0:
        raise MetricsError("AUC undefined for single-class labels")

    below = np.searchsorted(neg, pos, side="left")
    not_above = np.searchsorted(neg, pos, side="right")
    wins = below.sum() + 0.5 * (not_above - below).sum()
    return float(wins / (pos.size * neg.size))


def roc_points(probas: Sequence[float], labels: Sequence[int]) -> List[RocPoint]:
    """ROC vertices from (0, 0) to (1, 1), one per distinct score, thresholds descending.

    A row counts as positive at threshold t when its score is >= t.
    """
    labels, probas = _check_pair(labels, probas)
    n_pos = int(np.sum(labels == 1))
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricsError("ROC undefined for single-class labels")

    order = np.argsort(-probas, kind="stable")
    scores = probas[order]
    hits = labels[order] == 1
    tps = np.cumsum(hits)
    fps = np.cumsum(~hits)
    # last index of each run of equal scores
    ends = np.flatnonzero(np.r_[scores[1:] != scores[:-1], True])

    points = [RocPoint(math.inf, 0.0, 0.0)]
    for i in ends:
        points.append(RocPoint(float(scores[i]), fps[i] / n_neg, tps[i] / n_pos))
    return points


def roc_area(points: Sequence[RocPoint]) -> float:
    fpr = np.array([p.fpr for p in points])
    tpr = np.array([p.tpr for p in points])
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


def cohen_kappa(cm: ConfusionMatrix) -> float:
    _check_total(cm)
    n = cm.total
    p_o = (cm.tp + cm.tn) / n
    p_e = ((cm.tp + cm.fn) * (cm.tp + cm.fp) + (cm.tn + cm.fp) * (cm.tn + cm.fn)) / n**2
    if p_e == 1:
        logger.warning(f"[Metrics] kappa undefined for {cm}, returning 0")
        return 0.0
    return (p_o - p_e) / (1 - p_e)


def mcc(cm: ConfusionMatrix) -> float:
    _check_total(cm)
    denom = (cm.tp + cm.fp) * (cm.tp + cm.fn) * (cm.tn + cm.fp) * (cm.tn + cm.fn)
    if denom == 0:
        logger.warning(f"[Metrics] MCC undefined for {cm}, returning 0")
        return 0.0
    return (cm.tp * cm.tn - cm.fp * cm.fn) / math.sqrt(denom)


def is_degenerate(cm: ConfusionMatrix) -> bool:
    return (cm.tp + cm.fp) * (cm.tp + cm.fn) * (cm.tn + cm.fp) * (cm.tn + cm.fn) == 0


def evaluate_predictions(
    labels: Sequence[int], probas: Sequence[float], threshold: float = 0.5
) -> Dict[str, float]:
    """The comparison-table bundle: test_acc, auc, cohen_kappa, mcc."""
    cm = confusion(labels, probas, threshold)
    return {
        "test_acc": accuracy(cm),
        "auc": auc(probas, labels),
        "cohen_kappa": cohen_kappa(cm),
        "mcc": mcc(cm),
    }


def save_roc_csv(points: Sequence[RocPoint], save_path: Union[str, Path]) -> None:
    save_path = Path(save_path)
    mkdir(save_path.parent)
    frame = pd.DataFrame(points, columns=["threshold", "fpr", "tpr"])
    frame.to_csv(save_path, index=False, float_format="%.17g")


class MetricsError(ChurnLabError):
    pass
