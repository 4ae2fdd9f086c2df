"""Stage schedules and the constants they depend on."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

from ..errors import ConfigError

__all__ = ["ScheduleParams", "StagePlan", "constant_C", "schedule_theoretical", "schedule_practical", "plan_stage"]

MODES = ("theoretical", "practical")


@dataclass
class ScheduleParams:
    """Constants for the staged solvers.

    ``L_tilde``, ``G``, ``sigma2`` and ``delta`` may be left as ``None``; the
    runners then estimate them on a calibration prefix of the stream. ``mu``
    and ``L`` have no estimator and must be supplied in theoretical mode.
    ``gamma=None`` means ``1/(2L)`` in theoretical mode.
    """

    eta0: float = 0.1
    T0: int = 200
    m0: int = 100
    K: int = 4
    mode: str = "practical"
    gamma: float | None = 1.0
    mu: float | None = None
    L: float | None = None
    L_tilde: float | None = None
    G: float | None = None
    sigma2: float | None = None
    delta: float | None = None
    T_max: int = 1_000_000

    def validate(self) -> "ScheduleParams":
        if self.mode not in MODES:
            raise ConfigError(f"must be one of {MODES}, got {self.mode!r}", "mode")
        for name in ("eta0",):
            _positive(name, getattr(self, name))
        for name in ("T0", "m0", "K", "T_max"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ConfigError(f"must be a positive integer, got {v!r}", name)
        for name in ("mu", "L", "L_tilde", "G", "sigma2", "delta"):
            v = getattr(self, name)
            if v is not None:
                _positive(name, v)
        if self.gamma is not None:
            _positive("gamma", self.gamma)
        if self.mode == "theoretical":
            if self.mu is None or self.L is None:
                raise ConfigError("theoretical mode needs both mu and L", "mu" if self.mu is None else "L")
            if self.gamma is not None and self.gamma > 1.0 / self.L * (1 + 1e-12):
                raise ConfigError(f"gamma must be <= 1/L = {1.0 / self.L:g} in theoretical mode", "gamma")
        elif self.gamma is None:
            raise ConfigError("practical mode needs an explicit gamma", "gamma")
        return self

    @property
    def inv_gamma(self) -> float:
        g = self.effective_gamma
        return 0.0 if math.isinf(g) else 1.0 / g

    @property
    def effective_gamma(self) -> float:
        if self.gamma is None:
            return 1.0 / (2.0 * self.L)
        return float(self.gamma)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def field_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))


@dataclass(frozen=True)
class StagePlan:
    k: int
    eta_k: float
    T_k: int | None
    m_k: int
    M_k: float | None = None
    T_real: float | None = None
    m_real: float | None = None


def _positive(name, v):
    if not (isinstance(v, (int, float)) and v > 0 and not math.isnan(v)):
        raise ConfigError(f"must be positive, got {v!r}", name)


def constant_C(p: float) -> float:
    """``2/ln(1/q) * q**(1/ln(1/q))`` with ``q = max(p, 1-p)``."""
    if not 0.0 < p < 1.0:
        raise ConfigError(f"must lie in (0, 1), got {p}", "p")
    q = max(p, 1.0 - p)
    lg = math.log(1.0 / q)
    return 2.0 / lg * q ** (1.0 / lg)


def _decay_rate(sp: ScheduleParams) -> float:
    r = sp.mu / sp.L
    return r / (5.0 + r)


def _ceil(x: float) -> int:
    # guard against 3.0000000000000004 style overshoot
    return max(1, math.ceil(x * (1.0 - 1e-12)))


def schedule_theoretical(sp: ScheduleParams, k: int, p: float, variant: str = "sg",
                         dim: int | None = None) -> StagePlan:
    """Stage ``k`` (1-based) of the theory-driven schedule.

    ``variant="sg"`` gives the step, stage length and dual-restart batch of the
    proximal primal-dual SGD method. ``variant="adagrad"`` gives the
    half-rate step decay, the stopping-time scale ``M_k`` and batch size of
    the AdaGrad variant; there ``dim`` is the number of model weights ``d``.
    """
    if k < 1:
        raise ConfigError("stage index starts at 1", "k")
    for name in ("mu", "L", "eta0"):
        _positive(name, getattr(sp, name))
    if not 0.0 < p < 1.0:
        raise ConfigError(f"must lie in (0, 1), got {p}", "p")
    r = _decay_rate(sp)
    C = constant_C(p)
    if variant == "sg":
        for name in ("L_tilde", "G", "sigma2"):
            _positive(name, getattr(sp, name))
        scale = max(2.0, 16.0 * sp.L_tilde ** 2)
        eta = sp.eta0 * math.exp(-(k - 1) * r)
        T_real = scale / (sp.L * sp.eta0) * math.exp((k - 1) * r)
        m_real = (2.0 * (sp.sigma2 + C) * sp.L / (p * (1 - p) * sp.G ** 2 * sp.eta0 * scale)
                  * math.exp(k * r))
        return StagePlan(k, eta, _ceil(T_real), _ceil(m_real), None, T_real, m_real)
    if variant == "adagrad":
        _positive("sigma2", sp.sigma2)
        if dim is None or dim < 1:
            raise ConfigError("the AdaGrad schedule needs the model dimension", "dim")
        c = 1.0 / math.sqrt(dim + 3)
        eta = sp.eta0 * math.exp(-(k - 1) / 2.0 * r)
        M = 4.0 * c / (sp.L * sp.eta0) * math.exp((k - 1) / 2.0 * r)
        m_real = 2.0 * (sp.sigma2 + C) / (p * (1 - p) * sp.eta0 ** 2 * (dim + 3)) * math.exp(k * r)
        return StagePlan(k, eta, None, _ceil(m_real), M, None, m_real)
    raise ConfigError(f"unknown schedule variant {variant!r}", "variant")


def schedule_practical(sp: ScheduleParams, k: int) -> StagePlan:
    """Geometric schedule: step divided by 3, stage length and batch tripled per stage."""
    if k < 1:
        raise ConfigError("stage index starts at 1", "k")
    f = 3 ** (k - 1)
    return StagePlan(k, sp.eta0 / f, int(sp.T0) * f, int(sp.m0) * f, None, float(sp.T0 * f), float(sp.m0 * f))


def plan_stage(sp: ScheduleParams, k: int, p: float | None, variant: str = "sg",
               dim: int | None = None) -> StagePlan:
    if sp.mode == "practical":
        return schedule_practical(sp, k)
    if p is None:
        raise ConfigError("theoretical mode needs the class prior p", "p")
    return schedule_theoretical(sp, k, p, variant, dim)
