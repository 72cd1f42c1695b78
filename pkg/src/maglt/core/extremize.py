"""Sampled extremization of scalar functions over balls.

Seeds come from a deterministic Sobol set (interior plus boundary); the best
seeds are refined by L-BFGS-B in normalized spherical coordinates, so the
search is reproducible and independent of the ball's size.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import minimize

from maglt.core.sampling import ball_and_shell

_REFINE_STARTS = 2


@dataclass(frozen=True)
class BallExtrema:
    """Sampled maximum and minimum of a function over a closed ball."""

    maximum: float
    minimum: float
    argmax: np.ndarray
    argmin: np.ndarray


def _to_point(center: np.ndarray, radius: float, v: np.ndarray) -> np.ndarray:
    rho, theta, phi = v
    return center + radius * rho * np.array(
        [np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)]
    )


def _to_spherical(center: np.ndarray, radius: float, x: np.ndarray) -> np.ndarray:
    d = (x - center) / radius
    rho = float(np.linalg.norm(d))
    if rho == 0.0:
        return np.array([0.0, 0.5 * np.pi, 0.0])
    return np.array([min(rho, 1.0), float(np.arccos(np.clip(d[2] / rho, -1.0, 1.0))), float(np.arctan2(d[1], d[0]))])


def _refine(fn, center, radius, start: np.ndarray, sign: float) -> tuple[float, np.ndarray]:
    def objective(v):
        return sign * float(fn(_to_point(center, radius, v)[None, :])[0])

    result = minimize(
        objective,
        _to_spherical(center, radius, start),
        method="L-BFGS-B",
        bounds=[(0.0, 1.0), (0.0, np.pi), (-2.0 * np.pi, 2.0 * np.pi)],
        options={"maxiter": 200, "ftol": 1e-15, "gtol": 1e-12},
    )
    return sign * float(result.fun), _to_point(center, radius, result.x)


def clamp_to_ball(points, center, radius: float) -> np.ndarray:
    """Move points outside B(center, radius) radially onto its boundary."""
    d = np.atleast_2d(np.asarray(points, dtype=float)) - center
    dist = np.linalg.norm(d, axis=-1, keepdims=True)
    factor = np.minimum(1.0, radius / np.maximum(dist, np.finfo(float).tiny))
    return center + d * factor


def ball_extrema(
    fn: Callable[[np.ndarray], np.ndarray],
    center,
    radius: float,
    *,
    seeds_log2: int = 7,
    shell_log2: int = 5,
    refine: bool = True,
    landmarks: np.ndarray | None = None,
) -> BallExtrema:
    """
    Locate max and min of fn over B(center, radius).

    Args:
        fn: Vectorized scalar function, points (n, 3) -> values (n,).
        center: Ball center.
        radius: Ball radius; 0 evaluates fn at the center only.
        seeds_log2: log2 of the number of interior Sobol seeds.
        shell_log2: log2 of the number of boundary seeds.
        refine: Run local L-BFGS-B refinement from the best seeds.
        landmarks: Extra points; each is clamped into the ball and added
            to the seeds.
    """
    if radius < 0:
        raise ValueError("radius must be >= 0")
    center = np.asarray(center, dtype=float)
    seeds = ball_and_shell(center, radius, seeds_log2, shell_log2)
    if landmarks is not None and len(landmarks) and radius > 0:
        seeds = np.vstack([seeds, clamp_to_ball(landmarks, center, radius)])
    values = np.asarray(fn(seeds), dtype=float)
    imax = int(np.argmax(values))
    imin = int(np.argmin(values))
    best_max, arg_max = float(values[imax]), seeds[imax]
    best_min, arg_min = float(values[imin]), seeds[imin]
    if refine and radius > 0:
        order = np.argsort(values)
        for idx in order[::-1][:_REFINE_STARTS]:
            value, point = _refine(fn, center, radius, seeds[idx], -1.0)
            if value > best_max:
                best_max, arg_max = value, point
        for idx in order[:_REFINE_STARTS]:
            value, point = _refine(fn, center, radius, seeds[idx], 1.0)
            if value < best_min:
                best_min, arg_min = value, point
    return BallExtrema(best_max, best_min, np.asarray(arg_max), np.asarray(arg_min))
