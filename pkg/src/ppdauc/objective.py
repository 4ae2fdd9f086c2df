"""Saddle-point surrogate of the pairwise squared AUC loss.

For a scorer ``h`` and class prior ``p`` the per-example function is::

    F(w, a, b, alpha; x, y) = (1-p)(h-a)^2 [y=1] + p(h-b)^2 [y=-1]
                              + 2(1+alpha)(p h [y=-1] - (1-p) h [y=1])
                              - p(1-p) alpha^2

Minimising ``E F`` over ``(w, a, b)`` and maximising over ``alpha`` is
equivalent to minimising the pairwise loss ``E(1 - h(x+) + h(x-))^2``.
When the prior comes from a streaming estimate, the coefficient of
``alpha^2`` is the separate ``p(1-p)`` estimate, not ``p_hat (1 - p_hat)``.

Batch functions take raw arrays (``h``, Jacobian, labels) so the optimizers
can reuse one forward pass; the ``Example``-level wrappers mirror them.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, Example
from .errors import ClassMissingError, ConfigError, DimensionError, LabelError, NumericError
from .model import ModelParams, scores, scores_and_jac

__all__ = [
    "PrimalDualState",
    "ClassPrior",
    "MultiClassState",
    "loss_F",
    "grad_v",
    "grad_alpha",
    "batch_loss",
    "batch_grads",
    "mean_loss_F",
    "optimal_ab_alpha",
    "conditional_means",
    "pairwise_auc_loss",
    "saddle_equivalence_check",
    "pairwise_value_and_grad",
    "fit_pairwise",
    "multiclass_loss_Fij",
    "multiclass_grads",
    "multiclass_objective",
    "multiclass_auc",
]


@dataclass(frozen=True)
class PrimalDualState:
    w: np.ndarray
    a: float = 0.0
    b: float = 0.0
    alpha: float = 0.0

    def __post_init__(self):
        w = np.array(self.w, dtype=np.float64).reshape(-1)
        if not (np.all(np.isfinite(w)) and np.isfinite([self.a, self.b, self.alpha]).all()):
            raise NumericError("primal-dual state has non-finite entries")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "alpha", float(self.alpha))

    @property
    def v(self) -> np.ndarray:
        """Primal block ``(w, a, b)`` as one vector."""
        return np.concatenate([self.w, [self.a, self.b]])

    @property
    def u(self) -> np.ndarray:
        return np.concatenate([self.w, [self.a, self.b, self.alpha]])

    @classmethod
    def from_v(cls, v, alpha: float) -> "PrimalDualState":
        v = np.asarray(v, dtype=np.float64)
        return cls(v[:-2], v[-2], v[-1], alpha)

    @classmethod
    def from_u(cls, u) -> "PrimalDualState":
        u = np.asarray(u, dtype=np.float64)
        return cls(u[:-3], u[-3], u[-2], u[-1])


@dataclass(frozen=True)
class ClassPrior:
    p: float
    p_times_q: float | None = None

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ConfigError(f"class prior must lie in (0, 1), got {self.p}", "p")
        pq = self.p * (1.0 - self.p) if self.p_times_q is None else float(self.p_times_q)
        if not 0.0 < pq <= 0.25 + 1e-15:
            raise ConfigError(f"p(1-p) estimate must lie in (0, 0.25], got {pq}", "p_times_q")
        object.__setattr__(self, "p", float(self.p))
        object.__setattr__(self, "p_times_q", pq)

    @classmethod
    def from_dataset(cls, d: Dataset) -> "ClassPrior":
        return cls(d.positive_fraction())


def _indicators(y):
    y = np.asarray(y)
    pos = y == 1
    neg = y == -1
    if not np.all(pos | neg):
        raise LabelError("the binary objective needs labels in {-1, +1}")
    return pos.astype(np.float64), neg.astype(np.float64)


def batch_loss(h, y, a, b, alpha, prior: ClassPrior) -> np.ndarray:
    """Per-example ``F`` given precomputed scores ``h``."""
    pos, neg = _indicators(y)
    p, pq = prior.p, prior.p_times_q
    return ((1 - p) * (h - a) ** 2 * pos + p * (h - b) ** 2 * neg
            + 2 * (1 + alpha) * (p * h * neg - (1 - p) * h * pos) - pq * alpha ** 2)


def batch_grads(h, jac, y, a, b, alpha, prior: ClassPrior):
    """Minibatch-mean gradients ``(g_w, g_a, g_b, g_alpha)`` of ``F``."""
    pos, neg = _indicators(y)
    p, pq = prior.p, prior.p_times_q
    ra = (h - a) * pos
    rb = (h - b) * neg
    coef = 2 * (1 - p) * ra + 2 * p * rb + 2 * (1 + alpha) * (p * neg - (1 - p) * pos)
    n = h.shape[0]
    g_w = coef @ jac / n
    g_a = -2 * (1 - p) * ra.sum() / n
    g_b = -2 * p * rb.sum() / n
    g_alpha = 2 * (p * (h * neg).sum() - (1 - p) * (h * pos).sum()) / n - 2 * pq * alpha
    return g_w, float(g_a), float(g_b), float(g_alpha)


def _check_state(s: PrimalDualState, m: ModelParams):
    if s.w.size != m.arch.n_params:
        raise DimensionError(f"state has {s.w.size} weights, model needs {m.arch.n_params}")


def loss_F(s: PrimalDualState, prior: ClassPrior, z: Example, m: ModelParams) -> float:
    """``F`` at one example; ``m`` supplies the architecture, ``s.w`` the weights."""
    _check_state(s, m)
    h = scores(m.arch, s.w, z.x)
    return float(batch_loss(h, [z.y], s.a, s.b, s.alpha, prior)[0])


def grad_v(s: PrimalDualState, prior: ClassPrior, z: Example, m: ModelParams):
    _check_state(s, m)
    h, jac = scores_and_jac(m.arch, s.w, z.x)
    g_w, g_a, g_b, _ = batch_grads(h, jac, [z.y], s.a, s.b, s.alpha, prior)
    return g_w, g_a, g_b


def grad_alpha(s: PrimalDualState, prior: ClassPrior, z: Example, m: ModelParams) -> float:
    _check_state(s, m)
    h = scores(m.arch, s.w, z.x)
    pos, neg = _indicators([z.y])
    return float(2 * (prior.p * h[0] * neg[0] - (1 - prior.p) * h[0] * pos[0])
                 - 2 * prior.p_times_q * s.alpha)


def mean_loss_F(s: PrimalDualState, prior: ClassPrior, d: Dataset, m: ModelParams) -> float:
    _check_state(s, m)
    h = scores(m.arch, s.w, d.X)
    return float(np.mean(batch_loss(h, d.y, s.a, s.b, s.alpha, prior)))


def conditional_means(h, y) -> tuple[float, float]:
    """Mean score over positives and over negatives."""
    pos = np.asarray(y) == 1
    neg = np.asarray(y) == -1
    if not pos.any():
        raise ClassMissingError("no positive examples")
    if not neg.any():
        raise ClassMissingError("no negative examples")
    return float(np.mean(h[pos])), float(np.mean(h[neg]))


def optimal_ab_alpha(m: ModelParams, d: Dataset) -> tuple[float, float, float]:
    """Closed-form ``(a*, b*, alpha*)`` on the empirical measure of ``d``."""
    h = scores(m.arch, m.w, d.X)
    a_star, b_star = conditional_means(h, d.y)
    return a_star, b_star, b_star - a_star


def pairwise_auc_loss(m: ModelParams, d: Dataset, chunk: int = 2048) -> float:
    """Average of ``(1 - h(x+) + h(x-))^2`` over every positive/negative pair."""
    h = scores(m.arch, m.w, d.X)
    hp, hn = h[d.y == 1], h[d.y == -1]
    if hp.size == 0 or hn.size == 0:
        raise ClassMissingError("pairwise loss needs both classes")
    total = 0.0
    for start in range(0, hp.size, chunk):
        block = 1.0 - hp[start:start + chunk, None] + hn[None, :]
        total += float(np.sum(block * block))
    return total / (hp.size * hn.size)


def saddle_equivalence_check(m: ModelParams, d: Dataset) -> float:
    """Residual of ``pairwise = 1 + min_ab max_alpha mean F / (p(1-p))``.

    Evaluated on the empirical measure with ``p`` the positive fraction of
    ``d``; exact up to rounding.
    """
    a_star, b_star, alpha_star = optimal_ab_alpha(m, d)
    p_hat = d.positive_fraction()
    prior = ClassPrior(p_hat)
    state = PrimalDualState(m.w, a_star, b_star, alpha_star)
    mean_F = mean_loss_F(state, prior, d, m)
    return abs(pairwise_auc_loss(m, d) - 1.0 - mean_F / (p_hat * (1.0 - p_hat)))


def pairwise_value_and_grad(arch, w, X_pos, X_neg) -> tuple[float, np.ndarray]:
    """Pairwise loss and its gradient via class moments, O(n) instead of O(n+ n-)."""
    hp, Jp = scores_and_jac(arch, w, X_pos)
    hn, Jn = scores_and_jac(arch, w, X_neg)
    mp, mn = hp.mean(), hn.mean()
    gp, gn = Jp.mean(axis=0), Jn.mean(axis=0)
    # E(1 - hp + hn)^2 = 1 + E hp^2 + E hn^2 - 2 mp + 2 mn - 2 mp mn
    f = 1.0 + np.mean(hp * hp) + np.mean(hn * hn) - 2.0 * mp + 2.0 * mn - 2.0 * mp * mn
    g = 2.0 * (hp @ Jp) / hp.size + 2.0 * (hn @ Jn) / hn.size - 2.0 * gp + 2.0 * gn - 2.0 * (mn * gp + mp * gn)
    return float(f), g


def fit_pairwise(m: ModelParams, d: Dataset, max_iter: int = 5000, gtol: float = 1e-10) -> ModelParams:
    """Full-batch L-BFGS on the pairwise loss, starting from ``m``.

    Used as the long-run reference when judging how close a stochastic
    solver got.
    """
    from scipy.optimize import minimize

    Xp, Xn = d.X[d.y == 1], d.X[d.y == -1]
    if Xp.shape[0] == 0 or Xn.shape[0] == 0:
        raise ClassMissingError("pairwise fit needs both classes")
    res = minimize(lambda w: pairwise_value_and_grad(m.arch, w, Xp, Xn), m.w, jac=True,
                   method="L-BFGS-B", options={"maxiter": max_iter, "gtol": gtol})
    return m.with_w(res.x)


@dataclass(frozen=True)
class MultiClassState:
    """Per-class weights plus ``c x c`` matrices; diagonals are unused."""

    w: tuple
    a: np.ndarray
    b: np.ndarray
    alpha: np.ndarray
    priors: np.ndarray = field(default=None)

    def __post_init__(self):
        c = len(self.w)
        ws = tuple(np.array(wi, dtype=np.float64).reshape(-1) for wi in self.w)
        mats = []
        for name in ("a", "b", "alpha"):
            M = np.array(getattr(self, name), dtype=np.float64)
            if M.shape != (c, c):
                raise DimensionError(f"{name} must be {c}x{c}, got {M.shape}")
            if not np.all(np.isfinite(M)):
                raise NumericError(f"{name} has non-finite entries")
            mats.append(M)
        pri = np.full(c, 1.0 / c) if self.priors is None else np.array(self.priors, dtype=np.float64)
        if pri.shape != (c,) or np.any(pri < 0) or abs(pri.sum() - 1.0) > 1e-12:
            raise ConfigError("priors must be c nonnegative numbers summing to 1", "priors")
        object.__setattr__(self, "w", ws)
        object.__setattr__(self, "a", mats[0])
        object.__setattr__(self, "b", mats[1])
        object.__setattr__(self, "alpha", mats[2])
        object.__setattr__(self, "priors", pri)

    @property
    def num_classes(self) -> int:
        return len(self.w)

    @classmethod
    def zeros(cls, ws, priors=None) -> "MultiClassState":
        c = len(ws)
        return cls(tuple(ws), np.zeros((c, c)), np.zeros((c, c)), np.zeros((c, c)), priors)


def _pair_check(state: MultiClassState, i: int, j: int):
    c = state.num_classes
    if not (0 <= i < c and 0 <= j < c):
        raise IndexError(f"class indices ({i}, {j}) outside 0..{c - 1}")
    if i == j:
        raise IndexError("class pair needs i != j")


def multiclass_loss_Fij(state: MultiClassState, i: int, j: int, z: Example, m: ModelParams) -> float:
    """Pair objective ``F_ij``; ``m`` supplies the architecture shared by every class."""
    _pair_check(state, i, j)
    h = float(scores(m.arch, state.w[i], z.x)[0])
    pi, pj = state.priors[i], state.priors[j]
    a, b, al = state.a[i, j], state.b[i, j], state.alpha[i, j]
    Ii, Ij = float(z.y == i), float(z.y == j)
    return (pj * (h - a) ** 2 * Ii + pi * (h - b) ** 2 * Ij
            + 2 * (1 + al) * (pi * h * Ij - pj * h * Ii) - pi * pj * al ** 2)


def multiclass_grads(state: MultiClassState, i: int, j: int, z: Example, m: ModelParams):
    """Gradients of ``F_ij`` w.r.t. ``(w_i, a_ij, b_ij, alpha_ij)``."""
    _pair_check(state, i, j)
    h, jac = scores_and_jac(m.arch, state.w[i], z.x)
    h, jac = float(h[0]), jac[0]
    pi, pj = state.priors[i], state.priors[j]
    a, b, al = state.a[i, j], state.b[i, j], state.alpha[i, j]
    Ii, Ij = float(z.y == i), float(z.y == j)
    coef = 2 * pj * (h - a) * Ii + 2 * pi * (h - b) * Ij + 2 * (1 + al) * (pi * Ij - pj * Ii)
    g_a = -2 * pj * (h - a) * Ii
    g_b = -2 * pi * (h - b) * Ij
    g_alpha = 2 * (pi * h * Ij - pj * h * Ii) - 2 * pi * pj * al
    return coef * jac, g_a, g_b, g_alpha


def multiclass_objective(state: MultiClassState, d: Dataset, m: ModelParams) -> float:
    """``1/(c(c-1)) sum_{i != j} mean_z F_ij`` over the dataset."""
    c = state.num_classes
    total = 0.0
    for i in range(c):
        h = scores(m.arch, state.w[i], d.X)
        Ii = (d.y == i).astype(np.float64)
        for j in range(c):
            if i == j:
                continue
            Ij = (d.y == j).astype(np.float64)
            pi, pj = state.priors[i], state.priors[j]
            a, b, al = state.a[i, j], state.b[i, j], state.alpha[i, j]
            F = (pj * (h - a) ** 2 * Ii + pi * (h - b) ** 2 * Ij
                 + 2 * (1 + al) * (pi * h * Ij - pj * h * Ii) - pi * pj * al ** 2)
            total += float(np.mean(F))
    return total / (c * (c - 1))


def multiclass_auc(models, d: Dataset, strict: bool = False) -> float:
    """Average over ordered class pairs ``(i, j)`` of the AUC of scorer ``i``.

    Ties count one half unless ``strict`` is set, in which case they count
    as wins (the ``>=`` convention).
    """
    from .metrics import auc_binary

    c = len(models)
    total = 0.0
    for i in range(c):
        h = scores(models[i].arch, models[i].w, d.X)
        for j in range(c):
            if i == j:
                continue
            si, sj = h[d.y == i], h[d.y == j]
            if si.size == 0 or sj.size == 0:
                raise ClassMissingError(f"class pair ({i}, {j}) is not represented")
            total += auc_binary(si, sj, strict=strict)
    return total / (c * (c - 1))
