"""Proximal primal-dual solvers with geometric stage schedules.

Both methods run ``K`` stages. Stage ``k`` starts from the previous stage's
averaged primal point ``v0`` (the proximal anchor) and dual value, runs an
inner loop on ``f(v, alpha) + ||v - v0||^2 / (2 gamma)``, averages the primal
iterates including the starting point, and finally re-estimates ``alpha``
from a fresh minibatch through its closed-form maximiser.

The primal block is ``v = (w, a, b)``; ``u = (v, alpha)``.
"""
from __future__ import annotations

import dataclasses
import math

import numpy as np

from ..model import ModelParams
from ..objective import PrimalDualState
from . import _engine
from .schedules import ScheduleParams, StagePlan, plan_stage
from .trace import Monitor, RunTrace

__all__ = ["ppd_sg_run", "ppd_adagrad_run", "adagrad_update", "stopping_threshold", "resolve_constants"]


def resolve_constants(sp: ScheduleParams, oracle: _engine.Oracle, v: np.ndarray, alpha: float,
                      trace: RunTrace, need: tuple[str, ...]) -> ScheduleParams:
    """Fill unset constants in ``need`` from a calibration prefix of the stream."""
    missing = [name for name in need if getattr(sp, name) is None]
    if not missing:
        return sp
    stats = _engine.calibrate(oracle, v[:-2], v[-2], v[-1], alpha)
    values = {}
    for name in missing:
        if name == "delta":
            values[name] = 1.1 * stats["g_inf"] if stats["g_inf"] > 0 else 1.0
        elif name == "sigma2":
            # Var of a [0,1]-valued score is at most 1/4
            values[name] = stats["sigma2"] if stats["sigma2"] > 0 else 0.25
        else:
            values[name] = stats[name] if stats[name] > 0 else 1.0
    trace.event("calibrated", 0, samples=oracle.samples, **values)
    return dataclasses.replace(sp, **values)


def _initial_v(model: ModelParams, init: PrimalDualState | None):
    if init is not None:
        return init.v.copy(), init.alpha
    return np.concatenate([model.w, [0.0, 0.0]]), 0.0


def _stop_budget(oracle, max_samples, trace, step) -> bool:
    if max_samples is not None and oracle.samples >= max_samples:
        trace.event("budget_exhausted", step, samples=oracle.samples)
        return True
    return False


def ppd_sg_run(model: ModelParams, source, sp: ScheduleParams, rng=None, *, p=None,
               batch_size: int = 1, monitor: Monitor | None = None, init: PrimalDualState | None = None,
               max_samples: int | None = None, callback=None, name: str = "ppd_sg"):
    """Proximal primal-dual stochastic gradient.

    ``p`` is the known positive-class prior (a float or ``ClassPrior``); with
    ``None`` it is estimated online. ``callback(step, stage, v, alpha)`` is
    invoked after every inner update. Returns the final averaged state and
    the run trace.
    """
    _engine.require_sigmoid(model.arch)
    sp.validate()
    arch = model.arch
    oracle = _engine.Oracle(arch, source, batch_size, p)
    trace = RunTrace(name)
    monitor = _engine.new_monitor(monitor, arch)
    v_bar, alpha_bar = _initial_v(model, init)
    if sp.mode == "theoretical":
        sp = resolve_constants(sp, oracle, v_bar, alpha_bar, trace, ("L_tilde", "G", "sigma2"))
    inv_gamma = sp.inv_gamma
    step = 0
    monitor.evaluate(trace, step, 0, oracle.samples, v_bar[:-2])
    stopped = False
    for k in range(1, sp.K + 1):
        plan = plan_stage(sp, k, oracle.p_for_schedule(), "sg")
        eta = plan.eta_k
        v0 = v_bar.copy()
        v = v0.copy()
        alpha = alpha_bar
        v_sum = v.copy()
        g_v = np.empty_like(v)
        n_avg = 1
        for _ in range(1, plan.T_k):
            g_w, g_a, g_b, g_al = oracle.grads(v[:-2], v[-2], v[-1], alpha)
            g_v[:-2] = g_w
            g_v[-2] = g_a
            g_v[-1] = g_b
            v = v - eta * (g_v + inv_gamma * (v - v0))
            alpha = alpha + eta * g_al
            step += 1
            v_sum += v
            n_avg += 1
            _engine.check_finite(step, v, alpha)
            if callback is not None:
                callback(step, k, v, alpha)
            monitor.maybe(trace, step, k, oracle.samples, v[:-2], lambda: v_sum[:-2] / n_avg)
            if _stop_budget(oracle, max_samples, trace, step):
                stopped = True
                break
        v_bar = v_sum / n_avg
        if not stopped:
            # the restart only feeds the next stage
            alpha_bar = oracle.dual_restart(v_bar[:-2], plan.m_k, alpha_bar, trace, step)
        trace.stages.append({"k": k, "eta": eta, "T": plan.T_k, "m": plan.m_k,
                             "averaged": n_avg, "samples": oracle.samples})
        if stopped:
            break
    monitor.evaluate(trace, step, k, oracle.samples, v_bar[:-2])
    return PrimalDualState.from_v(v_bar, alpha_bar), trace


def adagrad_update(u0: np.ndarray, grad_sum: np.ndarray, s: np.ndarray, delta: float, eta: float) -> np.ndarray:
    """Closed-form diagonal dual-averaging step.

    Minimises ``eta <grad_sum/t, u> + (1/(2t)) (u-u0)' (delta I + diag s) (u-u0)``,
    whose solution does not depend on ``t``.
    """
    return u0 - eta * grad_sum / (delta + s)


def stopping_threshold(s: np.ndarray, delta: float, M: float, c: float, L_tilde: float) -> float:
    """Right-hand side of the stage stopping rule ``tau >= threshold``."""
    top = delta + float(np.max(s))
    first = top * max(1.0, 8.0 * L_tilde ** 2) / c
    second = 2.0 * c * (float(np.sum(s)) + s.size * top)
    return M * max(first, second)


def ppd_adagrad_run(model: ModelParams, source, sp: ScheduleParams, rng=None, *, p=None,
                    batch_size: int = 1, monitor: Monitor | None = None, init: PrimalDualState | None = None,
                    max_samples: int | None = None, callback=None, name: str = "ppd_adagrad"):
    """Proximal primal-dual AdaGrad.

    In theoretical mode each stage ends at the first ``tau`` with
    ``tau >= M_k * max(...)`` (capped at ``sp.T_max``); in practical mode
    stages have the fixed geometric length ``T0 * 3**(k-1)``. Per-stage
    records keep the accumulated norms ``s`` at ``T_k`` and ``T_k - 1`` so the
    stopping rule can be re-checked from the trace.
    """
    _engine.require_sigmoid(model.arch)
    sp.validate()
    arch = model.arch
    oracle = _engine.Oracle(arch, source, batch_size, p)
    trace = RunTrace(name)
    monitor = _engine.new_monitor(monitor, arch)
    v_bar, alpha_bar = _initial_v(model, init)
    theoretical = sp.mode == "theoretical"
    need = ("delta", "L_tilde", "sigma2") if theoretical else ("delta",)
    sp = resolve_constants(sp, oracle, v_bar, alpha_bar, trace, need)
    delta = float(sp.delta)
    inv_gamma = sp.inv_gamma
    n_u = v_bar.size + 1
    c = 1.0 / math.sqrt(n_u)
    step = 0
    monitor.evaluate(trace, step, 0, oracle.samples, v_bar[:-2])
    stopped = False
    for k in range(1, sp.K + 1):
        plan: StagePlan = plan_stage(sp, k, oracle.p_for_schedule(), "adagrad", dim=n_u - 3)
        eta = plan.eta_k
        u0 = np.concatenate([v_bar, [alpha_bar]])
        v0 = v_bar
        u = u0.copy()
        sq = np.zeros(n_u)
        grad_sum = np.zeros(n_u)
        s = np.zeros(n_u)
        s_prev = s
        u_sum = u.copy()
        n_avg = 1
        g = np.empty(n_u)
        warned = False
        cap_hit = False
        tau = 0
        while True:
            if not theoretical and tau >= plan.T_k - 1:
                break
            tau += 1
            v = u[:-1]
            g_w, g_a, g_b, g_al = oracle.grads(v[:-2], v[-2], v[-1], u[-1])
            g[:-3] = g_w
            g[-3] = g_a
            g[-2] = g_b
            g[:-1] += inv_gamma * (v - v0)
            g[-1] = -g_al
            if theoretical and not warned and float(np.max(np.abs(g))) > delta:
                trace.event("delta_below_grad_inf", step, stage=k, g_inf=float(np.max(np.abs(g))))
                warned = True
            sq += g * g
            grad_sum += g
            s_prev = s
            s = np.sqrt(sq)
            if theoretical:
                if tau >= stopping_threshold(s, delta, plan.M_k, c, sp.L_tilde):
                    break
                if tau >= sp.T_max:
                    cap_hit = True
                    trace.event("stopping_cap", step, stage=k, T_max=int(sp.T_max))
                    break
            u = adagrad_update(u0, grad_sum, s, delta, eta)
            step += 1
            u_sum += u
            n_avg += 1
            _engine.check_finite(step, u)
            if callback is not None:
                callback(step, k, u[:-1], u[-1])
            monitor.maybe(trace, step, k, oracle.samples, u[:-3], lambda: u_sum[:-3] / n_avg)
            if _stop_budget(oracle, max_samples, trace, step):
                stopped = True
                break
        v_bar = (u_sum / n_avg)[:-1]
        if not stopped:
            # the restart only feeds the next stage
            alpha_bar = oracle.dual_restart(v_bar[:-2], plan.m_k, alpha_bar, trace, step)
        record = {"k": k, "eta": eta, "T": n_avg, "m": plan.m_k, "averaged": n_avg,
                  "samples": oracle.samples, "delta": delta}
        if theoretical:
            record.update({"M": plan.M_k, "c": c, "L_tilde": sp.L_tilde, "cap_hit": cap_hit,
                           "s_T": s.tolist(), "s_T_minus_1": s_prev.tolist()})
        trace.stages.append(record)
        if stopped:
            break
    monitor.evaluate(trace, step, k, oracle.samples, v_bar[:-2])
    return PrimalDualState.from_v(v_bar, alpha_bar), trace
