"""Comparison solvers: proximally guided PGA, single-loop OAUC, cross-entropy SGD."""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from ..errors import ConfigError, LabelError
from ..model import ModelParams, scores_and_jac
from ..numerics import make_rng
from ..objective import PrimalDualState
from . import _engine
from .schedules import ScheduleParams
from .trace import Monitor, RunTrace

__all__ = ["pga_run", "pga_schedule", "project_ball", "oauc_run", "oauc_step_size", "ce_sgd_run", "ce_step_size",
           "ce_gradient", "CE_EPS"]

CE_EPS = 1e-12


def project_ball(v: np.ndarray, radius: float) -> np.ndarray:
    norm = float(np.linalg.norm(v))
    if norm <= radius:
        return v
    return v * (radius / norm)


def pga_schedule(eta0: float, T0: int, k: int) -> tuple[float, int]:
    """Polynomial schedule ``(eta0 / k, T0 * k**2)``."""
    return eta0 / k, int(T0) * k * k


def pga_run(model: ModelParams, source, sp: ScheduleParams, R1: float, R2: float, rng=None, *, p=None,
            batch_size: int = 1, monitor: Monitor | None = None, init: PrimalDualState | None = None,
            max_samples: int | None = None, callback=None, name: str = "pga"):
    """Proximally guided stochastic primal-dual method with ball constraints.

    Uses ``sp.eta0``, ``sp.T0``, ``sp.K`` and ``sp.gamma``; the step and stage
    length follow the polynomial schedule regardless of ``sp.mode``. Both the
    primal and dual iterates are averaged per stage (over ``t = 1..T_k``) and
    the returned state is the average of a stage drawn uniformly at random.
    """
    _engine.require_sigmoid(model.arch)
    sp.validate()
    if not (R1 > 0 and R2 > 0):
        raise ConfigError("ball radii must be positive", "R1" if not R1 > 0 else "R2")
    rng = make_rng(0, "pga") if rng is None else rng
    arch = model.arch
    oracle = _engine.Oracle(arch, source, batch_size, p)
    trace = RunTrace(name)
    monitor = _engine.new_monitor(monitor, arch)
    if init is not None:
        v_bar, alpha_bar = init.v.copy(), init.alpha
    else:
        v_bar, alpha_bar = np.concatenate([model.w, [0.0, 0.0]]), 0.0
    v_bar = project_ball(v_bar, R1)
    alpha_bar = float(np.clip(alpha_bar, -R2, R2))
    inv_gamma = sp.inv_gamma
    outputs = []
    step = 0
    monitor.evaluate(trace, step, 0, oracle.samples, v_bar[:-2])
    g_v = np.empty_like(v_bar)
    stopped = False
    for k in range(1, sp.K + 1):
        eta, T = pga_schedule(sp.eta0, sp.T0, k)
        v0 = v_bar.copy()
        v = v0.copy()
        alpha = alpha_bar
        v_sum = np.zeros_like(v)
        a_sum = 0.0
        n_avg = 0
        for _ in range(T):
            g_w, g_a, g_b, g_al = oracle.grads(v[:-2], v[-2], v[-1], alpha)
            g_v[:-2] = g_w
            g_v[-2] = g_a
            g_v[-1] = g_b
            v = project_ball(v - eta * (g_v + inv_gamma * (v - v0)), R1)
            alpha = min(R2, max(-R2, alpha + eta * g_al))
            step += 1
            v_sum += v
            a_sum += alpha
            n_avg += 1
            _engine.check_finite(step, v, alpha)
            if callback is not None:
                callback(step, k, v, alpha)
            monitor.maybe(trace, step, k, oracle.samples, v[:-2], lambda: v_sum[:-2] / n_avg)
            if max_samples is not None and oracle.samples >= max_samples:
                trace.event("budget_exhausted", step, samples=oracle.samples)
                stopped = True
                break
        v_bar = v_sum / n_avg
        alpha_bar = a_sum / n_avg
        outputs.append((v_bar, alpha_bar))
        trace.stages.append({"k": k, "eta": eta, "T": T, "averaged": n_avg, "samples": oracle.samples})
        if stopped:
            break
    tau = int(rng.integers(1, len(outputs) + 1))
    v_out, alpha_out = outputs[tau - 1]
    trace.event("output_stage", step, stage=tau)
    monitor.evaluate(trace, step, k, oracle.samples, v_out[:-2])
    return PrimalDualState.from_v(v_out, alpha_out), trace


def oauc_step_size(eta0: float, t: int) -> float:
    """Step for update ``t`` (1-based)."""
    return eta0 / math.sqrt(t)


def oauc_run(model: ModelParams, source, eta0: float, total_steps: int, rng=None, *, p=None,
             batch_size: int = 1, monitor: Monitor | None = None, init: PrimalDualState | None = None,
             constant_step: bool = False, callback=None, name: str = "oauc"):
    """Single-loop primal-dual SGD with step ``eta0 / sqrt(t)``.

    ``constant_step=True`` keeps ``eta0`` throughout, which makes the run
    coincide with one proximal stage of infinite ``gamma``.
    """
    _engine.require_sigmoid(model.arch)
    if total_steps < 1:
        raise ConfigError("must be >= 1", "total_steps")
    if not eta0 > 0:
        raise ConfigError("must be positive", "eta0")
    arch = model.arch
    oracle = _engine.Oracle(arch, source, batch_size, p)
    trace = RunTrace(name)
    monitor = _engine.new_monitor(monitor, arch)
    if init is not None:
        v, alpha = init.v.copy(), init.alpha
    else:
        v, alpha = np.concatenate([model.w, [0.0, 0.0]]), 0.0
    g_v = np.empty_like(v)
    monitor.evaluate(trace, 0, 0, oracle.samples, v[:-2])
    for t in range(1, int(total_steps) + 1):
        eta = eta0 if constant_step else oauc_step_size(eta0, t)
        g_w, g_a, g_b, g_al = oracle.grads(v[:-2], v[-2], v[-1], alpha)
        g_v[:-2] = g_w
        g_v[-2] = g_a
        g_v[-1] = g_b
        v = v - eta * g_v
        alpha = alpha + eta * g_al
        _engine.check_finite(t, v, alpha)
        if callback is not None:
            callback(t, 1, v, alpha)
        monitor.maybe(trace, t, 1, oracle.samples, v[:-2])
    monitor.evaluate(trace, int(total_steps), 1, oracle.samples, v[:-2])
    return PrimalDualState.from_v(v, alpha), trace


def ce_step_size(eta0: float, decay_steps: Sequence[int], t: int) -> float:
    """Step for update ``t`` (1-based): divided by 10 once per decay step already passed."""
    passed = sum(1 for s in decay_steps if t > s)
    return eta0 / 10 ** passed


def ce_sgd_run(model: ModelParams, source, eta0: float, decay_steps: Sequence[int], total_steps: int,
               rng=None, *, batch_size: int = 1, monitor: Monitor | None = None, callback=None,
               name: str = "ce_sgd"):
    """SGD on the binary cross-entropy ``-log h`` (y=+1) / ``-log(1-h)`` (y=-1).

    Scores are clipped to ``[1e-12, 1 - 1e-12]`` before taking logs; the number
    of clipped evaluations is reported as an event.
    """
    _engine.require_sigmoid(model.arch)
    if total_steps < 1:
        raise ConfigError("must be >= 1", "total_steps")
    arch = model.arch
    trace = RunTrace(name)
    monitor = _engine.new_monitor(monitor, arch)
    start = source.consumed
    w = model.w.copy()
    clipped = 0
    monitor.evaluate(trace, 0, 0, 0, w)
    decays = sorted(int(s) for s in decay_steps)
    for t in range(1, int(total_steps) + 1):
        eta = ce_step_size(eta0, decays, t)
        X, y = source.draw(batch_size)
        if not np.all((y == 1) | (y == -1)):
            raise LabelError("cross-entropy SGD needs -1/+1 labels")
        h, jac = scores_and_jac(arch, w, X)
        hc = np.clip(h, CE_EPS, 1.0 - CE_EPS)
        clipped += int(np.sum(hc != h))
        dldh = np.where(y == 1, -1.0 / hc, 1.0 / (1.0 - hc))
        w = w - eta * (dldh @ jac) / y.size
        _engine.check_finite(t, w)
        if callback is not None:
            callback(t, 1, w, None)
        monitor.maybe(trace, t, 1, source.consumed - start, w)
    if clipped:
        trace.event("ce_clipped_scores", int(total_steps), count=clipped)
    monitor.evaluate(trace, int(total_steps), 1, source.consumed - start, w)
    return model.with_w(w), trace


def ce_gradient(model: ModelParams, x, y: int) -> np.ndarray:
    """Cross-entropy gradient for one example (clipped scores)."""
    h, jac = scores_and_jac(model.arch, model.w, x)
    hc = float(np.clip(h[0], CE_EPS, 1.0 - CE_EPS))
    return (-1.0 / hc if y == 1 else 1.0 / (1.0 - hc)) * jac[0]
