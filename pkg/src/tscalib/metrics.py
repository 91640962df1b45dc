"""Classification and selection-quality metrics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np


def weighted_f1(predictions, truths, n_classes: int) -> float:
    """Support-weighted mean of per-class F1 scores.

    A class with no predicted and no actual positives scores F1 = 0 and,
    having zero support, carries zero weight. Classes with support but no
    correct predictions likewise score 0.
    """
    predictions = np.asarray(predictions, dtype=np.int64)
    truths = np.asarray(truths, dtype=np.int64)
    if predictions.size == 0:
        raise ValueError("empty input")
    if predictions.shape != truths.shape:
        raise ValueError("predictions and truths must align")
    total = 0.0
    n = truths.size
    for c in range(n_classes):
        support = int((truths == c).sum())
        if support == 0:
            continue
        tp = int(((predictions == c) & (truths == c)).sum())
        predicted = int((predictions == c).sum())
        if tp == 0:
            continue
        precision = tp / predicted
        recall = tp / support
        f1 = 2.0 * precision * recall / (precision + recall)
        total += (support / n) * f1
    return total


@dataclass
class SelectionQuality:
    """None means the metric is undefined (empty set), not zero."""

    certain_purity: Optional[float]
    hard_noise_recall: Optional[float]


def selection_metrics(partition, flip_mask) -> SelectionQuality:
    """Diagnose a partition against the planted flip mask.

    certain_purity: fraction of the certain set that was not flipped.
    hard_noise_recall: fraction of all flipped samples landing in the hard set.
    """
    flipped = np.asarray(flip_mask.flipped, dtype=bool)
    purity = None
    if partition.certain_ids.size:
        purity = float((~flipped[partition.certain_ids]).mean())
    recall = None
    n_flipped = int(flipped.sum())
    if n_flipped:
        recall = float(flipped[partition.hard_ids].sum() / n_flipped)
    return SelectionQuality(certain_purity=purity, hard_noise_recall=recall)
