"""Online estimates of the positive-class prior ``p`` and of ``p(1-p)``.

The tracker follows the recurrences::

    T+ += #positives,  T- += #negatives,  p_hat = T+ / (T+ + T-)
    y_bar = ((j+2) y_bar + sum I[y=1]) / (j+m+2)
    pq    = ((j+1) pq + sum (I[y=1] - y_bar)^2) / (j+m+1)

for a batch of ``m`` labels arriving at global index ``j``; ``y_bar`` is
updated first and the ``pq`` sum uses the updated value. Everything starts
at zero. The stored ``pq`` is never clamped; :meth:`PriorTracker.snapshot`
clamps it into ``[eps, 0.25]`` on the way out.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass

import numpy as np

from .errors import EstimatorNotReady, LabelError
from .objective import ClassPrior

log = logging.getLogger(__name__)

PQ_EPS = 1e-6


@dataclass(frozen=True)
class PriorTracker:
    T_plus: int = 0
    T_minus: int = 0
    p_hat: float = 0.0
    y_bar: float = 0.0
    pq_hat: float = 0.0
    j: int = 0

    def update(self, batch) -> "PriorTracker":
        labels = np.asarray(batch).reshape(-1)
        if labels.size == 0:
            return self
        if not np.all((labels == 1) | (labels == -1)):
            raise LabelError("the prior tracker only accepts -1/+1 labels")
        ind = (labels == 1).astype(np.float64)
        m = labels.size
        t_plus = self.T_plus + int(ind.sum())
        t_minus = self.T_minus + (m - int(ind.sum()))
        j = self.j
        y_bar = ((j + 2) * self.y_bar + ind.sum()) / (j + m + 2)
        pq = ((j + 1) * self.pq_hat + np.sum((ind - y_bar) ** 2)) / (j + m + 1)
        return PriorTracker(t_plus, t_minus, t_plus / (t_plus + t_minus), float(y_bar), float(pq), j + m)

    @property
    def ready(self) -> bool:
        return self.T_plus > 0 and self.T_minus > 0

    def snapshot(self) -> ClassPrior:
        if not self.ready:
            raise EstimatorNotReady("need at least one positive and one negative label")
        pq = self.pq_hat
        if pq < PQ_EPS:
            log.info("pq estimate %.3g clamped to %g", pq, PQ_EPS)
            pq = PQ_EPS
        return ClassPrior(self.p_hat, min(pq, 0.25))

    def to_json(self) -> str:
        return json.dumps(asdict(self))

    @classmethod
    def from_json(cls, text: str) -> "PriorTracker":
        return cls(**json.loads(text))


def update(tr: PriorTracker, batch) -> PriorTracker:
    return tr.update(batch)


def snapshot(tr: PriorTracker) -> ClassPrior:
    return tr.snapshot()


def recompute(history, batch_sizes) -> tuple[float, float, float]:
    """Closed-form ``(p_hat, y_bar, pq)`` for a full label history.

    Uses ``(j+2) y_bar_j = #positives so far`` and
    ``(j+1) pq_j = sum_b sum_{i in b} (I_i - y_bar_after_b)^2``, which is what
    the recurrences unroll to from zero initial values.
    """
    ind = (np.asarray(history).reshape(-1) == 1).astype(np.float64)
    total, n = 0.0, 0
    for m in batch_sizes:
        chunk = ind[n:n + m]
        n += m
        y_bar_after = ind[:n].sum() / (n + 2)
        total += float(np.sum((chunk - y_bar_after) ** 2))
    return float(ind[:n].mean()), float(ind[:n].sum() / (n + 2)), total / (n + 1)
