"""Differentiable scorers ``h(w; x)`` with analytic parameter gradients.

Three architecture kinds are provided:

``linear``
    ``h = sigmoid(w.x)``.
``leaky``
    ``h = sigma(w.x)`` with the Leaky-ReLU ``sigma(z) = c1*z`` for ``z > 0``
    and ``c2*z`` otherwise. The output is unbounded; this kind exists for the
    PL checks and is rejected by the min-max optimizers.
``mlp``
    One Leaky-ReLU hidden layer followed by a sigmoid output unit.

Parameters are always a flat float64 vector. For ``mlp`` the layout is
``[W1 (hidden x d, row-major), b1 (hidden), w2 (hidden), b2]``.

Sigmoid outputs are clipped to ``[tiny, 1 - 2**-53]`` so that ``h`` stays
strictly inside (0, 1) even when the logit saturates in float64.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

from .errors import ConfigError, DimensionError, EmptyInputError, NumericError

__all__ = [
    "Arch",
    "ModelParams",
    "ScoreAndGrad",
    "init_params",
    "scores",
    "scores_and_jac",
    "forward",
    "forward_grad",
    "lipschitz_estimate",
    "softmax_scores",
    "save_checkpoint",
    "load_checkpoint",
]

KINDS = ("linear", "leaky", "mlp")
_H_LO = np.finfo(np.float64).tiny
_H_HI = np.nextafter(1.0, 0.0)


@dataclass(frozen=True)
class Arch:
    kind: str
    input_dim: int
    hidden: int = 16
    c1: float = 1.0
    c2: float = 0.01

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown model kind {self.kind!r}; choose from {KINDS}", "model.kind")
        if self.input_dim < 1:
            raise ConfigError("must be >= 1", "model.input_dim")
        if self.kind == "mlp" and self.hidden < 1:
            raise ConfigError("must be >= 1", "model.hidden")

    @property
    def n_params(self) -> int:
        if self.kind == "mlp":
            return self.hidden * self.input_dim + 2 * self.hidden + 1
        return self.input_dim

    @property
    def sigmoid_output(self) -> bool:
        return self.kind != "leaky"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Arch":
        return cls(**d)


@dataclass(frozen=True)
class ModelParams:
    arch: Arch
    w: np.ndarray

    def __post_init__(self):
        w = np.array(self.w, dtype=np.float64).reshape(-1)
        if w.size != self.arch.n_params:
            raise DimensionError(f"{self.arch.kind} model needs {self.arch.n_params} parameters, got {w.size}")
        if not np.all(np.isfinite(w)):
            raise NumericError("model parameters contain non-finite values")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    def with_w(self, w) -> "ModelParams":
        return ModelParams(self.arch, w)


@dataclass(frozen=True)
class ScoreAndGrad:
    h: float
    grad_w: np.ndarray


def init_params(arch: Arch, rng: np.random.Generator | None = None, zero: bool = False) -> ModelParams:
    """Gaussian initialisation with per-layer scale ``1/sqrt(fan_in)``."""
    if zero or rng is None:
        return ModelParams(arch, np.zeros(arch.n_params))
    d = arch.input_dim
    if arch.kind != "mlp":
        return ModelParams(arch, rng.standard_normal(d) / np.sqrt(d))
    H = arch.hidden
    W1 = rng.standard_normal((H, d)) / np.sqrt(d)
    w2 = rng.standard_normal(H) / np.sqrt(H)
    return ModelParams(arch, np.concatenate([W1.ravel(), np.zeros(H), w2, [0.0]]))


def _leaky(z, c1, c2):
    return np.where(z > 0, c1 * z, c2 * z)


def _leaky_slope(z, c1, c2):
    return np.where(z > 0, c1, c2)


def _sigmoid(z):
    return np.clip(expit(z), _H_LO, _H_HI)


def _unpack_mlp(arch: Arch, w: np.ndarray):
    H, d = arch.hidden, arch.input_dim
    W1 = w[: H * d].reshape(H, d)
    b1 = w[H * d: H * d + H]
    w2 = w[H * d + H: H * d + 2 * H]
    b2 = w[-1]
    return W1, b1, w2, b2


def _as_batch(arch: Arch, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != arch.input_dim:
        raise DimensionError(f"model expects {arch.input_dim} features, got {X.shape[1]}")
    return X


def scores(arch: Arch, w: np.ndarray, X) -> np.ndarray:
    """Scores for every row of ``X``."""
    X = _as_batch(arch, X)
    if arch.kind == "linear":
        return _sigmoid(X @ w)
    if arch.kind == "leaky":
        return _leaky(X @ w, arch.c1, arch.c2)
    W1, b1, w2, b2 = _unpack_mlp(arch, w)
    a1 = _leaky(X @ W1.T + b1, arch.c1, arch.c2)
    return _sigmoid(a1 @ w2 + b2)


def scores_and_jac(arch: Arch, w: np.ndarray, X) -> tuple[np.ndarray, np.ndarray]:
    """Scores and the per-row Jacobian ``dh/dw`` of shape ``(n, n_params)``."""
    X = _as_batch(arch, X)
    if arch.kind == "linear":
        h = _sigmoid(X @ w)
        return h, (h * (1.0 - h))[:, None] * X
    if arch.kind == "leaky":
        z = X @ w
        return _leaky(z, arch.c1, arch.c2), _leaky_slope(z, arch.c1, arch.c2)[:, None] * X
    W1, b1, w2, b2 = _unpack_mlp(arch, w)
    z1 = X @ W1.T + b1
    a1 = _leaky(z1, arch.c1, arch.c2)
    h = _sigmoid(a1 @ w2 + b2)
    s = h * (1.0 - h)
    dz1 = (s[:, None] * w2) * _leaky_slope(z1, arch.c1, arch.c2)
    n = X.shape[0]
    jac = np.concatenate(
        [(dz1[:, :, None] * X[:, None, :]).reshape(n, -1), dz1, s[:, None] * a1, s[:, None]],
        axis=1,
    )
    return h, jac


def forward(m: ModelParams, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionError("forward expects a single feature vector")
    return float(scores(m.arch, m.w, x)[0])


def forward_grad(m: ModelParams, x) -> ScoreAndGrad:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionError("forward_grad expects a single feature vector")
    h, jac = scores_and_jac(m.arch, m.w, x)
    return ScoreAndGrad(float(h[0]), jac[0])


def lipschitz_estimate(m: ModelParams, data) -> float:
    """Largest ``||dh/dw||`` over the rows of ``data``.

    This is only an empirical lower bound on the global Lipschitz constant.
    """
    X = data.X if hasattr(data, "X") else np.asarray(data, dtype=np.float64)
    if len(X) == 0:
        raise EmptyInputError("lipschitz_estimate needs at least one example")
    norms = []
    for start in range(0, len(X), 4096):
        _, jac = scores_and_jac(m.arch, m.w, X[start:start + 4096])
        norms.append(np.linalg.norm(jac, axis=1))
    return float(np.max(np.concatenate(norms)))


def softmax_scores(models, X) -> np.ndarray:
    """Class scores normalised to sum to one across ``models``.

    Sigmoid-output kinds are normalised through a softmax over their logits.
    """
    cols = []
    for m in models:
        h = scores(m.arch, m.w, X)
        cols.append(np.log(h) - np.log1p(-h) if m.arch.sigmoid_output else h)
    logits = np.stack(cols, axis=1)
    logits -= logits.max(axis=1, keepdims=True)
    e = np.exp(logits)
    return e / e.sum(axis=1, keepdims=True)


def save_checkpoint(m: ModelParams, path) -> None:
    payload = {"arch": m.arch.to_dict(), "w": [float(v) for v in m.w]}
    Path(path).write_text(json.dumps(payload), encoding="utf-8")


def load_checkpoint(path) -> ModelParams:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return ModelParams(Arch.from_dict(payload["arch"]), np.asarray(payload["w"], dtype=np.float64))
