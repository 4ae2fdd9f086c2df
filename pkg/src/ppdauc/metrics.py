"""AUC and related evaluation metrics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import ClassMissingError

__all__ = ["MetricSnapshot", "auc_binary", "auc_brute_force", "pairwise_loss_from_scores", "snapshot"]


@dataclass(frozen=True)
class MetricSnapshot:
    auc: float
    pairwise_loss: float
    n_pos: int
    n_neg: int
    step: int


def auc_binary(scores_pos, scores_neg, strict: bool = False) -> float:
    """Mann-Whitney AUC computed from midranks in O(n log n).

    Ties between a positive and a negative count 1/2. With ``strict=True``
    they count 1, i.e. the estimate of ``Pr(h(x+) >= h(x-))``.
    """
    sp = np.asarray(scores_pos, dtype=np.float64).reshape(-1)
    sn = np.asarray(scores_neg, dtype=np.float64).reshape(-1)
    n_pos, n_neg = sp.size, sn.size
    if n_pos == 0 or n_neg == 0:
        raise ClassMissingError("AUC needs at least one positive and one negative score")
    ranks = rankdata(np.concatenate([sp, sn]))
    # midranks are half-integers, so this sum is exact in float64
    u = float(np.sum(ranks[:n_pos])) - n_pos * (n_pos + 1) / 2.0
    if strict:
        u += 0.5 * _tie_pairs(sp, sn)
    return u / (n_pos * n_neg)


def _tie_pairs(sp, sn) -> int:
    vals, counts = np.unique(sn, return_counts=True)
    idx = np.searchsorted(vals, sp)
    idx_ok = idx < vals.size
    hit = np.zeros(sp.size, dtype=bool)
    hit[idx_ok] = vals[idx[idx_ok]] == sp[idx_ok]
    return int(np.sum(counts[idx[hit]]))


def auc_brute_force(scores_pos, scores_neg, strict: bool = False) -> float:
    """O(n_pos * n_neg) double loop; reference for :func:`auc_binary`."""
    sp = list(map(float, scores_pos))
    sn = list(map(float, scores_neg))
    if not sp or not sn:
        raise ClassMissingError("AUC needs at least one positive and one negative score")
    wins = 0.0
    for a in sp:
        for b in sn:
            if a > b:
                wins += 1.0
            elif a == b:
                wins += 1.0 if strict else 0.5
    return wins / (len(sp) * len(sn))


def pairwise_loss_from_scores(h_pos, h_neg) -> float:
    """Mean of ``(1 - h+ + h-)^2`` over all pairs via first and second moments."""
    h_pos = np.asarray(h_pos, dtype=np.float64)
    h_neg = np.asarray(h_neg, dtype=np.float64)
    if h_pos.size == 0 or h_neg.size == 0:
        raise ClassMissingError("pairwise loss needs both classes")
    mp, mn = h_pos.mean(), h_neg.mean()
    return float(1.0 + np.mean(h_pos ** 2) + np.mean(h_neg ** 2)
                 - 2.0 * mp + 2.0 * mn - 2.0 * mp * mn)


def snapshot(h, y, step: int = 0, strict: bool = False) -> MetricSnapshot:
    y = np.asarray(y)
    hp, hn = h[y == 1], h[y == -1]
    return MetricSnapshot(auc_binary(hp, hn, strict), pairwise_loss_from_scores(hp, hn),
                          int(hp.size), int(hn.size), int(step))
