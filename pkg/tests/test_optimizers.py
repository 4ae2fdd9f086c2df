import math

import numpy as np
import pytest
from scipy.optimize import brentq

from ppdauc.data import StreamSource, gen_two_gaussians
from ppdauc.errors import ConfigError, NumericError
from ppdauc.model import Arch, init_params, scores_and_jac
from ppdauc.numerics import make_rng
from ppdauc.objective import ClassPrior, PrimalDualState, batch_grads, fit_pairwise, pairwise_auc_loss
from ppdauc.optimizers import (
    ScheduleParams,
    adagrad_update,
    ce_gradient,
    ce_sgd_run,
    ce_step_size,
    oauc_run,
    oauc_step_size,
    pga_run,
    pga_schedule,
    ppd_adagrad_run,
    ppd_sg_run,
    project_ball,
    stopping_threshold,
)
from ppdauc.optimizers._engine import Oracle

D = 4
ARCH = Arch("linear", D)


@pytest.fixture(scope="module")
def data():
    return gen_two_gaussians(600, D, 0.5, -0.5, 1.0, 0.3, make_rng(11, "opt-data"))


def constant_source(label=1, dim=D):
    """Every example is x=0 with the given label: all weight gradients vanish."""
    def sampler(g, n):
        return np.zeros((n, dim)), np.full(n, label, dtype=np.int64)
    return StreamSource(sampler, make_rng(0, "const"), dim)


def zero_model():
    return init_params(ARCH, zero=True)


def recorder():
    log = []

    def cb(step, stage, v, alpha):
        log.append((step, stage, np.array(v, copy=True), alpha))
    return log, cb


# --- PPD-SG ---------------------------------------------------------------

def test_single_point_stage_keeps_initial_primal(data):
    m = init_params(ARCH, make_rng(1, "w"))
    sp = ScheduleParams(eta0=0.1, T0=1, m0=200, K=1, gamma=1.0)
    st, trace = ppd_sg_run(m, data.stream(make_rng(2)), sp, p=0.3)
    assert np.array_equal(st.w, m.w)
    assert st.a == 0.0 and st.b == 0.0
    assert st.alpha != 0.0  # only the dual restart acted
    assert trace.stages[0]["averaged"] == 1


def _plain_pd_sgd(w, a, b, alpha, X, y, p, eta):
    """Reference primal-dual SGD for the linear-sigmoid model, one example at a time."""
    out = []
    w = [float(c) for c in w]
    for x, label in zip(X, y):
        z = sum(wi * xi for wi, xi in zip(w, x))
        h = 1.0 / (1.0 + math.exp(-z))
        pos, neg = (1.0, 0.0) if label == 1 else (0.0, 1.0)
        coef = 2 * (1 - p) * (h - a) * pos + 2 * p * (h - b) * neg + 2 * (1 + alpha) * (p * neg - (1 - p) * pos)
        gw = [coef * h * (1 - h) * xi for xi in x]
        ga = -2 * (1 - p) * (h - a) * pos
        gb = -2 * p * (h - b) * neg
        gal = 2 * (p * h * neg - (1 - p) * h * pos) - 2 * p * (1 - p) * alpha
        w = [wi - eta * gi for wi, gi in zip(w, gw)]
        a, b, alpha = a - eta * ga, b - eta * gb, alpha + eta * gal
        out.append((np.array(w + [a, b]), alpha))
    return out


def test_infinite_gamma_matches_plain_pd_sgd(data):
    m = init_params(ARCH, make_rng(3, "w"))
    sp = ScheduleParams(eta0=0.2, T0=101, m0=10, K=1, gamma=math.inf)
    log, cb = recorder()
    ppd_sg_run(m, data.stream(make_rng(4, "s")), sp, p=0.3, callback=cb)
    X, y = data.stream(make_rng(4, "s")).draw(100)
    ref = _plain_pd_sgd(m.w, 0.0, 0.0, 0.0, X, y, 0.3, 0.2)
    assert len(log) == 100
    diff = max(max(np.max(np.abs(v - rv)), abs(al - ral)) for (_, _, v, al), (rv, ral) in zip(log, ref))
    assert diff <= 1e-12


def test_ppd_sg_deterministic(data):
    sp = ScheduleParams(eta0=0.3, T0=50, m0=20, K=3, gamma=1.0)

    def go():
        from ppdauc.optimizers import Monitor
        mon = Monitor(ARCH, data, data, every=40)
        st, tr = ppd_sg_run(zero_model(), data.stream(make_rng(9, "s")), sp, p=None, monitor=mon)
        return st, tr

    (s1, t1), (s2, t2) = go(), go()
    assert t1.to_csv() == t2.to_csv()
    assert t1.events == t2.events
    assert np.array_equal(s1.u, s2.u)


def test_zero_gradient_is_fixed_point():
    init = PrimalDualState(np.full(D, 0.7), 0.5, 0.5, 0.0)
    log, cb = recorder()
    sp = ScheduleParams(eta0=0.5, T0=30, m0=5, K=1, gamma=1.0)
    ppd_sg_run(zero_model(), constant_source(1), sp, p=0.5, init=init, callback=cb)
    assert len(log) == 29
    for _, _, v, _ in log:
        assert np.array_equal(v, init.v)
    # later anchors are stage averages, equal to v0 up to summation rounding
    st, _ = ppd_sg_run(zero_model(), constant_source(1), ScheduleParams(eta0=0.5, T0=30, m0=5, K=3, gamma=1.0),
                       p=0.5, init=init)
    assert np.allclose(st.v, init.v, rtol=0, atol=1e-14)


def test_stage_average_uses_T_k_points(data):
    sp = ScheduleParams(eta0=0.2, T0=7, m0=10, K=3, gamma=1.0)
    log, cb = recorder()
    st, trace = ppd_sg_run(zero_model(), data.stream(make_rng(5)), sp, p=0.3, callback=cb)
    for rec in trace.stages:
        assert rec["averaged"] == rec["T"] == 7 * 3 ** (rec["k"] - 1)
        assert sum(1 for e in log if e[1] == rec["k"]) == rec["T"] - 1
    # reconstruct the last stage average from its anchor and iterates
    sp1 = ScheduleParams(eta0=0.2, T0=7, m0=10, K=1, gamma=1.0)
    log1, cb1 = recorder()
    st1, _ = ppd_sg_run(zero_model(), data.stream(make_rng(5)), sp1, p=0.3, callback=cb1)
    pts = [np.zeros(D + 2)] + [v for _, _, v, _ in log1]
    assert np.allclose(st1.v, np.mean(pts, axis=0), rtol=0, atol=1e-15)


def test_dual_restart_fallback_keeps_alpha():
    init = PrimalDualState(np.zeros(D), 0.5, 0.5, -0.25)
    sp = ScheduleParams(eta0=0.1, T0=3, m0=8, K=2, gamma=1.0)
    st, trace = ppd_sg_run(zero_model(), constant_source(1), sp, p=0.5, init=init)
    kinds = [e["kind"] for e in trace.events]
    assert kinds.count("dual_restart_fallback") == 2
    assert st.alpha == -0.25


def test_divergence_raises_numeric_error(data):
    sp = ScheduleParams(eta0=1e3, T0=1000, K=1, gamma=1.0)
    with np.errstate(over="ignore", invalid="ignore"), pytest.raises(NumericError) as info:
        ppd_sg_run(zero_model(), data.stream(make_rng(6)), sp, p=0.3)
    assert info.value.step >= 1


def test_budget_stops_without_extra_draws(data):
    sp = ScheduleParams(eta0=0.1, T0=100, m0=50, K=5, gamma=1.0)
    src = data.stream(make_rng(7))
    _, trace = ppd_sg_run(zero_model(), src, sp, p=0.3, max_samples=250)
    assert src.consumed == 250
    assert trace.events[-1]["kind"] == "budget_exhausted"


def test_convergence_to_best_linear_model():
    d = gen_two_gaussians(2000, 5, 0.5, -0.5, 1.0, 0.3, make_rng(2, "d"))
    m = init_params(Arch("linear", 5), zero=True)
    best = pairwise_auc_loss(fit_pairwise(m, d), d)
    sp = ScheduleParams(eta0=1.0, T0=1000, m0=100, K=4, gamma=100.0)
    st, _ = ppd_sg_run(m, d.stream(make_rng(3, "s")), sp, p=d.positive_fraction())
    assert pairwise_auc_loss(m.with_w(st.w), d) - best <= 1e-2


def test_unknown_prior_uses_estimate_before_each_sample(data):
    src, twin = data.stream(make_rng(8)), data.stream(make_rng(8))
    oracle = Oracle(ARCH, src, 1, None)
    w = np.full(D, 0.3)
    seen = []
    for _ in range(30):
        prior = oracle.prior()
        got = oracle.grads(w, 0.2, 0.4, -0.1)
        X, y = twin.draw(1)
        seen.extend(y.tolist())
        h, jac = scores_and_jac(ARCH, w, X)
        want = batch_grads(h, jac, y, 0.2, 0.4, -0.1, prior)
        assert np.array_equal(got[0], want[0]) and got[1:] == want[1:]
    if 1 in seen and -1 in seen:
        assert oracle.prior().p == pytest.approx(seen.count(1) / len(seen))


def test_theoretical_mode_requires_mu_and_L():
    with pytest.raises(ConfigError) as info:
        ScheduleParams(mode="theoretical", L=1.0).validate()
    assert info.value.field == "mu"
    with pytest.raises(ConfigError):
        ScheduleParams(mode="theoretical", mu=1.0, L=1.0, gamma=2.0).validate()


# --- PPD-AdaGrad ----------------------------------------------------------

def test_adagrad_hand_example():
    eta = 0.3
    s = np.sqrt(np.array([2.0]))
    u3 = adagrad_update(np.zeros(1), np.array([2.0]), s, 1.0, eta)
    assert u3[0] == pytest.approx(-eta * 2 / (1 + math.sqrt(2)), abs=1e-15)


def test_adagrad_matches_scalar_argmin(rng):
    for _ in range(100):
        n = int(rng.integers(1, 8))
        t = int(rng.integers(1, 50))
        grads = rng.normal(size=(t, n))
        u0 = rng.normal(size=n)
        delta = float(rng.uniform(0.1, 3.0))
        eta = float(rng.uniform(0.01, 2.0))
        gsum = grads.sum(0)
        s = np.sqrt((grads ** 2).sum(0))
        u = adagrad_update(u0, gsum, s, delta, eta)
        for i in range(n):
            # first-order condition of eta*<gbar,u> + (delta+s)(u-u0)^2/(2t)
            def dphi(x):
                return eta * gsum[i] / t + (delta + s[i]) * (x - u0[i]) / t
            ref = brentq(dphi, u0[i] - 1e3, u0[i] + 1e3, xtol=1e-14, rtol=1e-15)
            assert abs(u[i] - ref) <= 1e-10


def test_adagrad_zero_gradients_stay_put():
    u0 = np.array([0.3, -1.0, 2.0])
    assert np.array_equal(adagrad_update(u0, np.zeros(3), np.zeros(3), 0.5, 1.0), u0)
    init = PrimalDualState(np.full(D, -0.2), 0.5, 0.5, -1.0)
    log, cb = recorder()
    sp = ScheduleParams(eta0=0.5, T0=20, K=1, gamma=1.0, delta=1.0)
    ppd_adagrad_run(zero_model(), constant_source(1), sp, p=0.5, init=init, callback=cb)
    assert len(log) == 19
    for _, _, v, alpha in log:
        assert np.array_equal(v, init.v) and alpha == -1.0


def test_adagrad_stopping_time_rechecks(data):
    sp = ScheduleParams(eta0=0.5, K=3, mode="theoretical", mu=1.0, L=5.0, gamma=None)
    _, trace = ppd_adagrad_run(zero_model(), data.stream(make_rng(12)), sp, p=0.3)
    assert len(trace.stages) == 3
    for rec in trace.stages:
        assert not rec["cap_hit"]
        T = rec["T"]
        s_T, s_prev = np.array(rec["s_T"]), np.array(rec["s_T_minus_1"])
        assert T >= stopping_threshold(s_T, rec["delta"], rec["M"], rec["c"], rec["L_tilde"])
        assert T - 1 < stopping_threshold(s_prev, rec["delta"], rec["M"], rec["c"], rec["L_tilde"])
        assert np.all(s_T >= s_prev) and np.all(s_prev >= 0)


def test_adagrad_practical_stage_lengths(data):
    sp = ScheduleParams(eta0=0.5, T0=10, K=3, gamma=1.0, delta=2.0)
    _, trace = ppd_adagrad_run(zero_model(), data.stream(make_rng(13)), sp, p=0.3)
    assert [r["averaged"] for r in trace.stages] == [10, 30, 90]


def test_adagrad_cap_is_reported(data):
    sp = ScheduleParams(eta0=0.5, K=1, mode="theoretical", mu=1.0, L=5.0, gamma=None, T_max=5)
    _, trace = ppd_adagrad_run(zero_model(), data.stream(make_rng(14)), sp, p=0.3)
    assert trace.stages[0]["cap_hit"]
    assert any(e["kind"] == "stopping_cap" for e in trace.events)


# --- PGA ------------------------------------------------------------------

def test_pga_schedule():
    assert pga_schedule(0.9, 10, 3) == (0.3, 90)
    assert pga_schedule(0.9, 10, 1) == (0.9, 10)


def test_project_ball_rescales_to_radius():
    v = np.array([3.0, 4.0])
    out = project_ball(v, 2.5)
    assert np.linalg.norm(out) == pytest.approx(2.5, abs=1e-15)
    assert np.array_equal(project_ball(v, 10.0), v)


def test_pga_iterates_respect_constraints(data):
    R1, R2 = 0.8, 0.05
    log, cb = recorder()
    sp = ScheduleParams(eta0=1.0, T0=20, K=3, gamma=1.0)
    st, trace = pga_run(init_params(ARCH, make_rng(3)), data.stream(make_rng(15)), sp, R1, R2,
                        make_rng(16), p=0.3, callback=cb)
    assert len(log) == 20 * (1 + 4 + 9)
    for _, _, v, alpha in log:
        assert np.linalg.norm(v) <= R1 + 1e-12
        assert abs(alpha) <= R2
    assert [r["T"] for r in trace.stages] == [20, 80, 180]
    out = [e for e in trace.events if e["kind"] == "output_stage"]
    assert len(out) == 1 and 1 <= out[0]["stage"] <= 3


def test_pga_rejects_bad_radius(data):
    with pytest.raises(ConfigError):
        pga_run(zero_model(), data.stream(make_rng(0)), ScheduleParams(), 0.0, 1.0)


# --- OAUC -----------------------------------------------------------------

def test_oauc_step_size():
    assert oauc_step_size(0.6, 4) == 0.3
    assert oauc_step_size(0.6, 1) == 0.6


def test_oauc_zero_gradient_step_is_identity():
    # x=0, a=b=h=0.5 and alpha=-1 zero every component for positives at p=0.5
    init = PrimalDualState(np.zeros(D), 0.5, 0.5, -1.0)
    st, _ = oauc_run(zero_model(), constant_source(1), 0.7, 1, p=0.5, init=init)
    assert np.array_equal(st.u, init.u)


def test_oauc_constant_step_matches_single_ppd_stage(data):
    m = init_params(ARCH, make_rng(17))
    log_a, cb_a = recorder()
    log_b, cb_b = recorder()
    oauc_run(m, data.stream(make_rng(18)), 0.2, 60, p=0.3, constant_step=True, callback=cb_a)
    ppd_sg_run(m, data.stream(make_rng(18)), ScheduleParams(eta0=0.2, T0=61, K=1, gamma=math.inf),
               p=0.3, callback=cb_b)
    assert len(log_a) == len(log_b) == 60
    for (_, _, va, aa), (_, _, vb, ab) in zip(log_a, log_b):
        assert np.array_equal(va, vb) and aa == ab


# --- cross-entropy SGD ----------------------------------------------------

def test_ce_gradient_at_half():
    x = np.array([1.0, -2.0, 0.5, 3.0])
    assert np.allclose(ce_gradient(zero_model(), x, 1), -0.5 * x, rtol=0, atol=1e-15)
    assert np.allclose(ce_gradient(zero_model(), x, -1), 0.5 * x, rtol=0, atol=1e-15)


def test_ce_gradient_vanishes_in_expectation_on_symmetric_data():
    d = gen_two_gaussians(20000, D, 0.0, 0.0, 1.0, 0.5, make_rng(19))
    g = np.array([ce_gradient(zero_model(), x, int(y)) for x, y in zip(d.X, d.y)])
    se = g.std(axis=0, ddof=1) / math.sqrt(len(g))
    assert np.all(np.abs(g.mean(axis=0)) <= 3 * se)


def test_ce_step_decay():
    assert ce_step_size(0.5, [100, 200], 100) == 0.5
    assert ce_step_size(0.5, [100, 200], 101) == 0.5 / 10
    assert ce_step_size(0.5, [100, 200], 201) == 0.5 / 100


def test_ce_sgd_improves_auc(data):
    from ppdauc.optimizers import Monitor
    mon = Monitor(ARCH, None, data, every=500)
    _, trace = ce_sgd_run(zero_model(), data.stream(make_rng(20)), 0.5, [1500], 2000, monitor=mon)
    assert trace.records[0].test_auc == 0.5
    assert trace.final.test_auc > 0.7


def test_solvers_need_sigmoid_output(data):
    m = init_params(Arch("leaky", D), zero=True)
    with pytest.raises(ConfigError):
        ppd_sg_run(m, data.stream(make_rng(0)), ScheduleParams(), p=0.3)


def test_prior_object_accepted(data):
    sp = ScheduleParams(eta0=0.1, T0=5, K=1, gamma=1.0)
    a, _ = ppd_sg_run(zero_model(), data.stream(make_rng(21)), sp, p=ClassPrior(0.3))
    b, _ = ppd_sg_run(zero_model(), data.stream(make_rng(21)), sp, p=0.3)
    assert np.array_equal(a.u, b.u)

