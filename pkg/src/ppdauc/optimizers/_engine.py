"""Sampling, class-prior bookkeeping and calibration shared by the solvers."""
from __future__ import annotations

import numpy as np

from ..errors import ConfigError, NumericError
from ..model import Arch, scores, scores_and_jac
from ..objective import ClassPrior, batch_grads
from ..streaming import PriorTracker
from .trace import Monitor, RunTrace

CALIBRATION_STEPS = 100


class Oracle:
    """Stochastic gradients of ``F`` drawn from a stream.

    With ``prior=None`` the class prior is tracked online and every gradient
    uses the estimate frozen *before* its own minibatch is absorbed. Until the
    tracker has seen both labels, ``prior_guess`` stands in.
    """

    def __init__(self, arch: Arch, source, batch_size: int = 1, prior: ClassPrior | float | None = None,
                 prior_guess: float = 0.5):
        if batch_size < 1:
            raise ConfigError("must be >= 1", "batch_size")
        self.arch = arch
        self.source = source
        self.batch_size = int(batch_size)
        if isinstance(prior, (int, float)):
            prior = ClassPrior(float(prior))
        self.known_prior = prior
        self.tracker = None if prior is not None else PriorTracker()
        self.guess = ClassPrior(prior_guess)
        self._start = source.consumed

    @property
    def samples(self) -> int:
        return self.source.consumed - self._start

    def prior(self) -> ClassPrior:
        if self.known_prior is not None:
            return self.known_prior
        if self.tracker.ready:
            return self.tracker.snapshot()
        return self.guess

    def p_for_schedule(self) -> float | None:
        if self.known_prior is not None:
            return self.known_prior.p
        return self.tracker.p_hat if self.tracker.ready else None

    def draw(self, n: int):
        X, y = self.source.draw(n)
        if self.tracker is not None:
            self.tracker = self.tracker.update(y)
        return X, y

    def grads(self, w, a, b, alpha):
        prior = self.prior()
        X, y = self.draw(self.batch_size)
        h, jac = scores_and_jac(self.arch, w, X)
        return batch_grads(h, jac, y, a, b, alpha, prior)

    def dual_restart(self, w, m: int, prev_alpha: float, trace: RunTrace, step: int) -> float:
        """Re-estimate ``alpha`` as mean negative score minus mean positive score.

        A minibatch without one of the classes keeps ``prev_alpha``.
        """
        X, y = self.draw(m)
        alpha, ok = estimate_alpha(self.arch, w, X, y)
        if not ok:
            trace.event("dual_restart_fallback", step, batch=int(m), n_pos=int(np.sum(y == 1)))
            return prev_alpha
        return alpha


def estimate_alpha(arch: Arch, w, X, y) -> tuple[float, bool]:
    h = scores(arch, w, X)
    pos = y == 1
    neg = y == -1
    if not pos.any() or not neg.any():
        return float("nan"), False
    return float(h[neg].mean() - h[pos].mean()), True


def calibrate(oracle: Oracle, w, a, b, alpha, steps: int = CALIBRATION_STEPS) -> dict:
    """Empirical gradient and score statistics on a prefix of the stream.

    Returns the largest ``||g||_2`` and ``||g||_inf`` of the primal-dual
    gradient at the given point, the larger conditional score variance, and
    the largest ``||dh/dw||`` seen.
    """
    X, y = oracle.draw(steps)
    prior = oracle.prior()
    h, jac = scores_and_jac(oracle.arch, w, X)
    g2 = ginf = 0.0
    for i in range(steps):
        g_w, g_a, g_b, g_al = batch_grads(h[i:i + 1], jac[i:i + 1], y[i:i + 1], a, b, alpha, prior)
        g = np.concatenate([g_w, [g_a, g_b, -g_al]])
        g2 = max(g2, float(np.linalg.norm(g)))
        ginf = max(ginf, float(np.max(np.abs(g))))
    variances = [float(np.var(h[y == c])) for c in (1, -1) if np.any(y == c)]
    return {
        "G": g2,
        "g_inf": ginf,
        "sigma2": max(variances) if variances else 0.0,
        "L_tilde": float(np.max(np.linalg.norm(jac, axis=1))),
    }


def check_finite(step: int, *arrays) -> None:
    for arr in arrays:
        if not np.all(np.isfinite(arr)):
            raise NumericError(f"non-finite iterate at step {step}", step=step)


def require_sigmoid(arch: Arch) -> None:
    if not arch.sigmoid_output:
        raise ConfigError("min-max solvers need a sigmoid-output model kind", "model.kind")


def new_monitor(monitor: Monitor | None, arch: Arch) -> Monitor:
    if monitor is None:
        return Monitor(arch)
    monitor.reset()
    return monitor
