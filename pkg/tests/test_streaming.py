import logging
from fractions import Fraction

import numpy as np
import pytest

from ppdauc.errors import EstimatorNotReady, LabelError
from ppdauc.numerics import make_rng
from ppdauc.streaming import PQ_EPS, PriorTracker, recompute, snapshot, update


def test_examples():
    t = update(PriorTracker(), [1])
    assert t.T_plus == 1 and t.p_hat == 1.0
    t = PriorTracker().update([1, -1, 1, -1, -1, 1])
    assert t.p_hat == 0.5
    assert snapshot(PriorTracker().update([1, -1])).p == 0.5


def test_not_ready_and_bad_label():
    with pytest.raises(EstimatorNotReady):
        PriorTracker().update([1, 1]).snapshot()
    with pytest.raises(LabelError):
        PriorTracker().update([1, 0])


def test_clamp_only_at_snapshot(caplog):
    # y_bar after [+1, -1] is 1/4, pq = ((3/4)^2 + (1/4)^2) / 3 > 0, so build a tiny raw value by hand
    t = PriorTracker(T_plus=1, T_minus=1, p_hat=0.5, y_bar=0.25, pq_hat=0.0, j=2)
    with caplog.at_level(logging.INFO, logger="ppdauc.streaming"):
        prior = t.snapshot()
    assert prior.p_times_q == PQ_EPS
    assert t.pq_hat == 0.0
    assert any("clamped" in r.getMessage() for r in caplog.records)


def test_value_semantics():
    t = PriorTracker().update([1, -1])
    snap = t.snapshot()
    t.update([1, 1, 1])
    assert t.snapshot() == snap


def test_p_hat_is_exact_fraction():
    rng = make_rng(0)
    t = PriorTracker()
    labels = []
    for _ in range(50):
        b = list(np.where(rng.random(int(rng.integers(1, 6))) < 0.4, 1, -1))
        labels += b
        t = t.update(b)
        frac = Fraction(labels.count(1), len(labels))
        assert Fraction(t.p_hat).limit_denominator(10**6) == frac


@pytest.mark.parametrize("seed", range(5))
def test_streaming_equals_recomputation(seed):
    rng = make_rng(seed, "hist")
    t = PriorTracker()
    hist, sizes = [], []
    while len(hist) < 1000:
        m = int(rng.integers(1, 9))
        b = list(np.where(rng.random(m) < 0.3, 1, -1))
        t = t.update(b)
        hist += b
        sizes.append(m)
        p, yb, pq = recompute(hist, sizes)
        assert abs(t.p_hat - p) <= 1e-12
        assert abs(t.y_bar - yb) <= 1e-12
        assert abs(t.pq_hat - pq) <= 1e-12


def test_json_round_trip():
    t = PriorTracker().update([1, -1, -1]).update([1])
    assert PriorTracker.from_json(t.to_json()) == t
