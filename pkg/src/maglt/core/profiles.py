"""Smooth one-dimensional step and bump profiles.

S(t) = ψ(t) / (ψ(t) + ψ(1 - t)) with ψ(t) = exp(-1/t) for t > 0 is C^∞,
equals 0 for t <= 0 and 1 for t >= 1, and has max S' = 2 at t = 1/2.
"""

from __future__ import annotations

import numpy as np


def _log_ratio(t: np.ndarray) -> np.ndarray:
    # 1/t - 1/(1-t) on the open unit interval
    return 1.0 / t - 1.0 / (1.0 - t)


def smooth_step(t) -> np.ndarray:
    """Return S(t), vectorized."""
    t = np.asarray(t, dtype=float)
    out = np.where(t >= 1.0, 1.0, 0.0)
    inner = (t > 0.0) & (t < 1.0)
    if np.any(inner):
        ti = t[inner]
        out[inner] = 0.5 * (1.0 - np.tanh(0.5 * _log_ratio(ti)))
    return out


def smooth_step_derivative(t) -> np.ndarray:
    """Return S'(t) = S(1 - S)(1/t² + 1/(1-t)²) inside (0, 1), zero elsewhere."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inner = (t > 0.0) & (t < 1.0)
    if np.any(inner):
        ti = t[inner]
        s = 0.5 * (1.0 - np.tanh(0.5 * _log_ratio(ti)))
        out[inner] = s * (1.0 - s) * (1.0 / ti**2 + 1.0 / (1.0 - ti) ** 2)
    return out


def plateau(r, inner: float, outer: float) -> np.ndarray:
    """Radial profile equal to 1 for r <= inner and 0 for r >= outer."""
    return 1.0 - smooth_step((np.asarray(r, dtype=float) - inner) / (outer - inner))


def plateau_derivative(r, inner: float, outer: float) -> np.ndarray:
    width = outer - inner
    return -smooth_step_derivative((np.asarray(r, dtype=float) - inner) / width) / width


def shell_bump(t) -> np.ndarray:
    """C^∞ bump supported in (1, 3) with value 1 at t = 2."""
    t = np.asarray(t, dtype=float)
    return smooth_step(t - 1.0) * smooth_step(3.0 - t)


def shell_bump_derivative(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    return smooth_step_derivative(t - 1.0) * smooth_step(3.0 - t) - smooth_step(
        t - 1.0
    ) * smooth_step_derivative(3.0 - t)


def annulus_profile(r, ell: float) -> np.ndarray:
    """Equals 1 on [3ℓ, 4ℓ] and vanishes outside (2ℓ, 5ℓ)."""
    r = np.asarray(r, dtype=float)
    return smooth_step((r - 2.0 * ell) / ell) * smooth_step((5.0 * ell - r) / ell)


def derivative_sup(profile, lo: float, hi: float, order: int, samples: int = 20001) -> float:
    """Measure sup |d^order profile / dr^order| on [lo, hi] by dense sampling.

    Uses repeated np.gradient on a uniform grid; the result is an estimate
    with relative accuracy of order (spacing)².
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    r = np.linspace(lo, hi, samples)
    values = np.asarray(profile(r), dtype=float)
    step = r[1] - r[0]
    for _ in range(order):
        values = np.gradient(values, step, edge_order=2)
    return float(np.max(np.abs(values)))
