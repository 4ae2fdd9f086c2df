"""Small dense-vector helpers, seeded generators and finite differences.

Everything here works in float64. Random streams use the counter-based
Philox bit generator so that a given seed reproduces the same draws on every
platform.
"""
from __future__ import annotations

import zlib
from typing import Callable

import numpy as np

from .errors import DimensionError, NumericError

__all__ = ["as_vec", "dot", "finite_diff_grad", "make_rng", "derive_seed"]


def as_vec(values, name="vector") -> np.ndarray:
    """Return ``values`` as a finite 1-D float64 array."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{name} has non-finite entries")
    return arr


def dot(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise DimensionError(f"dot: shapes {a.shape} and {b.shape} do not match")
    return float(a @ b)


def finite_diff_grad(f: Callable[[np.ndarray], float], x, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function ``f`` at ``x``."""
    if not h > 0:
        raise ValueError("finite_diff_grad: step h must be positive")
    x = np.array(x, dtype=np.float64).reshape(-1)
    grad = np.empty_like(x)
    for i in range(x.size):
        orig = x[i]
        x[i] = orig + h
        fp = float(f(x.copy()))
        x[i] = orig - h
        fm = float(f(x.copy()))
        x[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericError(f"finite_diff_grad: non-finite value at coordinate {i}")
        grad[i] = (fp - fm) / (2.0 * h)
    return grad


def derive_seed(seed: int, *stream) -> np.random.SeedSequence:
    """Seed sequence for an independent named sub-stream of ``seed``.

    Stream components may be ints or strings; strings are hashed with CRC32 so
    the mapping is stable across interpreter runs.
    """
    key = []
    for part in stream:
        if isinstance(part, str):
            key.append(zlib.crc32(part.encode("utf-8")))
        else:
            key.append(int(part))
    return np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(key))


def make_rng(seed: int, *stream) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(derive_seed(seed, *stream)))
