"""Distances and size measures: total variation, oscillation, spectral radius."""

from __future__ import annotations

from typing import Iterable

import numpy as np

from .errors import NumericalError, ValidationError

__all__ = [
    "tv",
    "oscillation",
    "global_oscillation",
    "aligned_sup_distance",
    "spectral_radius",
    "power_norm_constant",
    "inf_norm",
]

DIST_TOL = 1e-9

POWER_SHIFT = 1e-12
POWER_MAX_ITERS = 100_000


def tv(p: np.ndarray, q: np.ndarray) -> float:
    """Total variation distance between two distributions on the same support."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape or p.ndim != 1:
        raise ValidationError("tv needs two 1-D vectors of equal length")
    for name, v in (("first", p), ("second", q)):
        if (v < 0).any() or abs(v.sum() - 1.0) > DIST_TOL:
            raise ValidationError(f"{name} argument is not a probability vector")
    return 0.5 * float(np.abs(p - q).sum())


def _coerce_sizes(sizes) -> tuple[int, ...]:
    if hasattr(sizes, "state_sizes"):
        sizes = sizes.state_sizes
    out = tuple(int(z) for z in sizes)
    if any(z < 1 for z in out):
        raise ValidationError("coordinate sizes must be >= 1")
    return out


def oscillation(f: np.ndarray, sizes) -> np.ndarray:
    """Coordinatewise oscillation of a joint-state function.

    Entry i is the largest |f(x) - f(y)| over pairs that agree everywhere
    except coordinate i.  `sizes` is the per-coordinate size tuple, or any
    object carrying `state_sizes` (an MDP works).
    """
    sizes = _coerce_sizes(sizes)
    f = np.asarray(f, dtype=float)
    total = int(np.prod(sizes))
    if f.shape != (total,):
        raise ValidationError(f"function length {f.shape} does not match sizes {sizes}")
    shaped = f.reshape(sizes)
    out = np.zeros(len(sizes))
    for i, z in enumerate(sizes):
        if z == 1:
            continue
        groups = np.moveaxis(shaped, i, -1).reshape(-1, z)
        out[i] = float((groups.max(axis=1) - groups.min(axis=1)).max())
    return out


def global_oscillation(f: np.ndarray) -> float:
    """max f - min f."""
    f = np.asarray(f, dtype=float)
    return float(f.max() - f.min())


def aligned_sup_distance(u: np.ndarray, v: np.ndarray) -> float:
    """Sup distance after the best constant shift: inf_c ||u - v - c||_inf.

    The optimum is the midrange of u - v, so this equals half the global
    oscillation of the difference.
    """
    d = np.asarray(u, dtype=float) - np.asarray(v, dtype=float)
    return 0.5 * global_oscillation(d)


def _check_square(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValidationError("expected a square matrix")
    if not np.isfinite(m).all():
        raise ValidationError("matrix has non-finite entries")
    return m


def spectral_radius(m: np.ndarray) -> float:
    """Spectral radius of a nonnegative matrix.

    Power iteration on m + shift*I from a positive start vector; the shift
    breaks periodic supports and is subtracted from the estimate.  Falls back
    to a dense eigensolve when successive estimates have not settled within
    1e-12 after the iteration budget.
    """
    m = _check_square(m)
    if (m < 0).any():
        raise ValidationError("spectral_radius expects a nonnegative matrix")
    n = m.shape[0]
    if n == 0:
        return 0.0
    x = np.full(n, 1.0 / n)
    prev = np.inf
    settled = 0
    for _ in range(POWER_MAX_ITERS):
        y = m @ x + POWER_SHIFT * x
        est = float(y.sum())  # l1 Rayleigh ratio; x is normalized and nonnegative
        x = y / est
        if abs(est - prev) < 1e-12:
            settled += 1
            if settled >= 3:
                return max(est - POWER_SHIFT, 0.0)
        else:
            settled = 0
        prev = est
    return float(np.max(np.abs(np.linalg.eigvals(m))))


def inf_norm(m: np.ndarray) -> float:
    """Operator norm on sup-norm vectors: the largest absolute row sum."""
    m = _check_square(m)
    return float(np.abs(m).sum(axis=1).max())


def power_norm_constant(m: np.ndarray, lam: float, t_max: int = 64) -> float:
    """Measured constant C with ||m^t||_inf <= C lam^t for t = 0..t_max.

    This is an empirical estimate over the first t_max powers, not a proved
    supremum over all t.
    """
    m = _check_square(m)
    lam = float(lam)
    if not 0.0 < lam < 1.0:
        raise ValidationError("decay rate must lie in (0, 1)")
    t_max = int(t_max)
    if t_max < 0:
        raise ValidationError("t_max must be >= 0")
    best = 1.0  # t = 0 term: ||I||_inf
    power = np.eye(m.shape[0])
    scale = 1.0
    for _ in range(t_max):
        power = power @ m
        norm = inf_norm(power)
        if norm == 0.0:
            break  # nilpotent: every later power is zero too
        scale *= lam
        if scale == 0.0:
            raise NumericalError("decay rate underflowed before the matrix "
                                 "powers vanished; constant is unreliable")
        best = max(best, norm / scale)
    return best
