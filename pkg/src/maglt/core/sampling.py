"""Deterministic low-discrepancy point sets in balls and on spheres."""

from __future__ import annotations

import numpy as np
from scipy.stats import qmc


def sobol_unit(count_log2: int, dim: int = 3) -> np.ndarray:
    """Return the first 2**count_log2 unscrambled Sobol points in [0, 1)^dim."""
    if count_log2 < 0:
        raise ValueError("count_log2 must be >= 0")
    return qmc.Sobol(d=dim, scramble=False).random_base2(count_log2)


def _directions(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    cos_t = 1.0 - 2.0 * u
    sin_t = np.sqrt(np.clip(1.0 - cos_t**2, 0.0, None))
    phi = 2.0 * np.pi * v
    return np.stack([sin_t * np.cos(phi), sin_t * np.sin(phi), cos_t], axis=-1)


def ball_points(center, radius: float, count_log2: int = 7) -> np.ndarray:
    """Volume-uniform Sobol points in B(center, radius); the first point is the center."""
    u = sobol_unit(count_log2)
    rho = radius * np.cbrt(u[:, 0])
    return np.asarray(center, dtype=float) + rho[:, None] * _directions(u[:, 1], u[:, 2])


def sphere_points(center, radius: float, count_log2: int = 5) -> np.ndarray:
    """Sobol points on the sphere of the given radius."""
    u = sobol_unit(count_log2, dim=2)
    return np.asarray(center, dtype=float) + radius * _directions(u[:, 0], u[:, 1])


def ball_and_shell(center, radius: float, interior_log2: int = 7, shell_log2: int = 5) -> np.ndarray:
    """Interior Sobol points plus boundary points; used as multi-start seeds."""
    if radius <= 0:
        return np.asarray(center, dtype=float)[None, :]
    return np.vstack(
        [ball_points(center, radius, interior_log2), sphere_points(center, radius, shell_log2)]
    )


def random_ball_points(rng: np.random.Generator, center, radius: float, size: int) -> np.ndarray:
    """Uniform random points in a ball."""
    u = rng.random((size, 3))
    rho = radius * np.cbrt(u[:, 0])
    return np.asarray(center, dtype=float) + rho[:, None] * _directions(u[:, 1], u[:, 2])


def shell_points(center, inner: float, outer: float, count_log2: int = 6) -> np.ndarray:
    """Volume-uniform Sobol points in the spherical shell inner <= |x - center| <= outer."""
    if not 0 <= inner < outer:
        raise ValueError("shell radii must satisfy 0 <= inner < outer")
    u = sobol_unit(count_log2)
    rho = np.cbrt(inner**3 + u[:, 0] * (outer**3 - inner**3))
    return np.asarray(center, dtype=float) + rho[:, None] * _directions(u[:, 1], u[:, 2])
