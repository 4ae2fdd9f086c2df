"""Numerical checks of the Polyak-Lojasiewicz machinery.

* :func:`mu_transfer` turns a PL constant of the pairwise objective into one
  for the primal function of the min-max problem.
* :func:`mu_one_hidden_layer` is the closed-form PL constant of the pairwise
  loss of ``h(w; x) = sigma(w.x)`` with a Leaky-ReLU ``sigma`` and centred,
  class-conditionally uncorrelated inputs.
* :func:`audit_pl` evaluates ``2 mu (f - f*) / ||grad f||^2`` on probe points;
  a ratio above one is a counterexample to the claimed constant.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from .data import Dataset
from .errors import ConfigError
from .numerics import make_rng

__all__ = [
    "PlReport",
    "mu_transfer",
    "mu_one_hidden_layer",
    "audit_pl",
    "LeakyPairwiseObjective",
    "second_moments",
    "gd_minimum",
    "leaky_relu_audit",
]


@dataclass(frozen=True)
class PlReport:
    mu_claimed: float
    worst_ratio: float
    num_probes: int
    violations: int
    skipped: int = 0
    f_star: float | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def mu_transfer(mu_prime: float, L_tilde: float, p: float) -> float:
    """PL constant of ``phi(v)`` implied by a PL constant ``mu_prime`` of ``P(w)``."""
    if not (mu_prime > 0 and L_tilde > 0):
        raise ConfigError("mu_prime and L_tilde must be positive", "mu_prime" if not mu_prime > 0 else "L_tilde")
    if not 0.0 < p < 1.0:
        raise ConfigError(f"must lie in (0, 1), got {p}", "p")
    q = min(p, 1.0 - p)
    first = 1.0 / (2.0 * q) + 2.0 * L_tilde ** 2 / (mu_prime * q * q)
    return 1.0 / max(first, 2.0 / mu_prime)


def _lambda_min(cov, name):
    cov = np.asarray(cov, dtype=np.float64)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ConfigError("must be a square matrix", name)
    if not np.allclose(cov, cov.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(cov).max())):
        raise ConfigError("must be symmetric", name)
    lam = float(np.linalg.eigvalsh(0.5 * (cov + cov.T))[0])
    if lam < -1e-10 * max(1.0, np.abs(cov).max()):
        raise ConfigError(f"must be positive semidefinite (smallest eigenvalue {lam:g})", name)
    return max(lam, 0.0)


def mu_one_hidden_layer(c1: float, c2: float, cov_pos, cov_neg) -> float:
    """``2 min(c1^2, c2^2) (lambda_min(E[xx'|+]) + lambda_min(E[xx'|-]))``."""
    return 2.0 * min(c1 * c1, c2 * c2) * (_lambda_min(cov_pos, "cov_pos") + _lambda_min(cov_neg, "cov_neg"))


def audit_pl(f: Callable, grad: Callable, probes: Sequence, f_star: float, mu: float,
             tol: float = 1e-9) -> PlReport:
    """Check ``mu (f(w) - f*) <= ||grad f(w)||^2 / 2`` at every probe.

    Probes where both the gradient and the suboptimality are below ``1e-10``
    are skipped. A vanishing gradient with a large gap counts as a violation.
    """
    values = [float(f(np.asarray(w, dtype=np.float64))) for w in probes]
    if values and f_star > min(values) + tol:
        raise ValueError(f"f_star={f_star!r} exceeds the smallest probe value {min(values)!r}")
    worst = 0.0
    violations = skipped = 0
    for w, fw in zip(probes, values):
        g = np.asarray(grad(np.asarray(w, dtype=np.float64)))
        gap = max(fw - f_star, 0.0)
        gn2 = float(g @ g)
        if gn2 < 1e-20 and gap < 1e-10:
            skipped += 1
            continue
        ratio = np.inf if gn2 == 0.0 else 2.0 * mu * gap / gn2
        worst = max(worst, ratio)
        if ratio > 1.0 + tol:
            violations += 1
    return PlReport(float(mu), float(worst), len(values), violations, skipped, float(f_star))


class LeakyPairwiseObjective:
    """``f(w) = mean_{i in +, j in -} (1 - sigma(w.x_i) + sigma(w.x_j))^2``.

    Evaluated through class moments, so cost is linear in the sample size.
    """

    def __init__(self, X_pos, X_neg, c1: float = 1.0, c2: float = 0.01):
        self.X_pos = np.asarray(X_pos, dtype=np.float64)
        self.X_neg = np.asarray(X_neg, dtype=np.float64)
        self.c1, self.c2 = float(c1), float(c2)

    @classmethod
    def from_dataset(cls, d: Dataset, c1=1.0, c2=0.01):
        return cls(d.X[d.y == 1], d.X[d.y == -1], c1, c2)

    def _act(self, X, w):
        z = X @ w
        slope = np.where(z > 0, self.c1, self.c2)
        return slope * z, slope

    def value(self, w) -> float:
        u, _ = self._act(self.X_pos, w)
        v, _ = self._act(self.X_neg, w)
        mu_, mv = u.mean(), v.mean()
        return float(1.0 + np.mean(u * u) + np.mean(v * v) - 2 * mu_ + 2 * mv - 2 * mu_ * mv)

    def grad(self, w) -> np.ndarray:
        u, su = self._act(self.X_pos, w)
        v, sv = self._act(self.X_neg, w)
        Ju = su[:, None] * self.X_pos
        Jv = sv[:, None] * self.X_neg
        mu_, mv = u.mean(), v.mean()
        gu, gv = Ju.mean(axis=0), Jv.mean(axis=0)
        return 2 * (u @ Ju) / u.size + 2 * (v @ Jv) / v.size - 2 * gu + 2 * gv - 2 * (mv * gu + mu_ * gv)

    def pairwise_value(self, w) -> float:
        """Explicit double loop over pairs; reference for :meth:`value`."""
        u, _ = self._act(self.X_pos, w)
        v, _ = self._act(self.X_neg, w)
        return float(np.mean((1.0 - u[:, None] + v[None, :]) ** 2))


def second_moments(d: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Empirical ``E[x x' | y=1]`` and ``E[x x' | y=-1]``."""
    Xp, Xn = d.X[d.y == 1], d.X[d.y == -1]
    return Xp.T @ Xp / len(Xp), Xn.T @ Xn / len(Xn)


def gd_minimum(f, grad, starts, grad_tol: float = 1e-10, max_iter: int = 20000, stall: int = 200):
    """Multi-start gradient descent with Armijo backtracking.

    Each run stops when ``||grad|| <= grad_tol``, when no descent step can be
    found, when ``stall`` consecutive iterations improved ``f`` by less than
    ``1e-14`` relative (zigzagging on a kink), or after ``max_iter``
    iterations. Returns the best value and point.
    """
    best_f, best_w = np.inf, None
    for w0 in starts:
        w = np.array(w0, dtype=np.float64)
        fw, g = f(w), grad(w)
        step = 1.0
        mark, mark_f = 0, fw
        for it in range(max_iter):
            gn2 = float(g @ g)
            if gn2 <= grad_tol ** 2:
                break
            if it - mark >= stall:
                if mark_f - fw <= 1e-14 * max(1.0, abs(fw)):
                    break
                mark, mark_f = it, fw
            step = min(step * 2.0, 1e3)
            while step > 1e-16:
                w_new = w - step * g
                f_new = f(w_new)
                if f_new <= fw - 1e-4 * step * gn2:
                    break
                step *= 0.5
            else:
                break
            w, fw = w_new, f_new
            g = grad(w)
        if fw < best_f:
            best_f, best_w = fw, w
    return float(best_f), best_w


def leaky_relu_audit(n: int = 2000, dim: int = 3, c1: float = 1.0, c2: float = 0.01, p: float = 0.5,
                     probes: int = 500, radius: float = 10.0, restarts: int = 20, safety: float = 0.9,
                     center: bool = True, seed: int = 0) -> PlReport:
    """Audit the one-hidden-layer PL constant on a Gaussian sample.

    Both classes are standard Gaussian; with ``center=True`` each class is
    shifted to have zero empirical mean. The claimed constant is
    ``safety * mu_one_hidden_layer`` on the empirical second moments and
    ``f*`` comes from multi-start gradient descent.
    """
    rng = make_rng(seed, "plcheck")
    y = np.where(rng.random(n) < p, 1, -1)
    if y.min() == y.max():
        y[0] = -y[0]
    X = rng.standard_normal((n, dim))
    if center:
        for c in (1, -1):
            X[y == c] -= X[y == c].mean(axis=0)
    d = Dataset(X, y)
    obj = LeakyPairwiseObjective.from_dataset(d, c1, c2)
    cov_pos, cov_neg = second_moments(d)
    mu = safety * mu_one_hidden_layer(c1, c2, cov_pos, cov_neg)
    starts = [np.zeros(dim)] + [rng.standard_normal(dim) for _ in range(restarts - 1)]
    f_star, _ = gd_minimum(obj.value, obj.grad, starts)
    dirs = rng.standard_normal((probes, dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    probe_pts = dirs * (radius * rng.random(probes) ** (1.0 / dim))[:, None]
    f_star = min(f_star, min(obj.value(w) for w in probe_pts))
    return audit_pl(obj.value, obj.grad, list(probe_pts), f_star, mu)
