"""Per-run metric traces and their CSV / JSON forms."""
from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from ..metrics import auc_binary, pairwise_loss_from_scores
from ..model import Arch, scores

__all__ = ["TraceRecord", "RunTrace", "Monitor", "CSV_HEADER"]

CSV_HEADER = ("step", "stage", "samples", "train_auc", "test_auc", "pairwise_loss", "elapsed_s")


@dataclass(frozen=True)
class TraceRecord:
    step: int
    stage: int
    samples: int
    train_auc: float | None
    test_auc: float | None
    pairwise_loss: float | None
    elapsed_s: float | None


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass
class RunTrace:
    name: str = ""
    records: list[TraceRecord] = field(default_factory=list)
    events: list[dict] = field(default_factory=list)
    stages: list[dict] = field(default_factory=list)

    def event(self, kind: str, step: int, **detail) -> None:
        self.events.append({"kind": kind, "step": int(step), **detail})

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in self.records:
            writer.writerow([_cell(getattr(r, k)) for k in CSV_HEADER])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, name: str = "") -> "RunTrace":
        rows = list(csv.DictReader(io.StringIO(text)))
        recs = []
        for row in rows:
            def num(key, cast=float):
                return None if row[key] == "" else cast(row[key])
            recs.append(TraceRecord(num("step", int), num("stage", int), num("samples", int),
                                    num("train_auc"), num("test_auc"), num("pairwise_loss"),
                                    num("elapsed_s")))
        return cls(name, recs)

    @property
    def final(self) -> TraceRecord | None:
        return self.records[-1] if self.records else None

    def samples_to_target(self, target: float, key: str = "test_auc") -> int | None:
        for r in self.records:
            v = getattr(r, key)
            if v is not None and v >= target:
                return r.samples
        return None

    def summary(self) -> dict:
        last = self.final
        return {
            "optimizer": self.name,
            "final": None if last is None else asdict(last),
            "num_records": len(self.records),
            "stages": self.stages,
            "events": self.events,
        }


class Monitor:
    """Evaluates the current weights every ``every`` consumed samples.

    Train AUC and the pairwise loss use ``train``; test AUC uses ``test``.
    With ``track="average"`` the staged solvers report their running
    within-stage average (the point a stage would return if it ended now)
    instead of the last iterate. Wall-clock time is only recorded when ``timing`` is set, so that traces
    stay byte-identical across repeated runs by default.
    """

    def __init__(self, arch: Arch, train=None, test=None, every: int = 0, timing: bool = False,
                 strict_ties: bool = False, track: str = "iterate"):
        if track not in ("iterate", "average"):
            raise ValueError(f"track must be 'iterate' or 'average', got {track!r}")
        self.arch = arch
        self.track = track
        self.train = train
        self.test = test
        self.every = int(every)
        self.timing = timing
        self.strict_ties = strict_ties
        self._next = self.every if self.every > 0 else math.inf
        self._t0 = time.perf_counter()

    def reset(self) -> None:
        self._next = self.every if self.every > 0 else math.inf
        self._t0 = time.perf_counter()

    def _auc(self, d, w):
        if d is None or d.n_pos == 0 or d.n_neg == 0:
            return None, None
        h = scores(self.arch, w, d.X)
        hp, hn = h[d.y == 1], h[d.y == -1]
        return auc_binary(hp, hn, self.strict_ties), pairwise_loss_from_scores(hp, hn)

    def evaluate(self, trace: RunTrace, step: int, stage: int, samples: int, w: np.ndarray) -> None:
        train_auc, loss = self._auc(self.train, w)
        test_auc, test_loss = self._auc(self.test, w)
        if loss is None:
            loss = test_loss
        elapsed = time.perf_counter() - self._t0 if self.timing else None
        trace.records.append(TraceRecord(int(step), int(stage), int(samples), train_auc, test_auc, loss, elapsed))

    def maybe(self, trace: RunTrace, step: int, stage: int, samples: int, w: np.ndarray,
              average=None) -> None:
        """Record if a cadence point was crossed.

        ``average`` is a zero-argument callable returning the running stage
        average of the weights; it is only called when needed.
        """
        if samples >= self._next:
            if self.track == "average" and average is not None:
                w = average()
            self.evaluate(trace, step, stage, samples, w)
            while self._next <= samples:
                self._next += self.every
