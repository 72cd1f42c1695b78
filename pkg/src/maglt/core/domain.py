"""Axis-aligned boxes used as work regions, quadrature domains and grids."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Box:
    """
    Closed axis-aligned box in R³.

    Attributes:
        lower: Lower corner (3,).
        upper: Upper corner (3,), strictly greater than lower.
    """

    lower: tuple[float, float, float]
    upper: tuple[float, float, float]

    def __post_init__(self) -> None:
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != (3,) or hi.shape != (3,):
            raise ValueError("box corners must have three components")
        if np.any(hi <= lo):
            raise ValueError("box upper corner must exceed lower corner")
        object.__setattr__(self, "lower", tuple(float(v) for v in lo))
        object.__setattr__(self, "upper", tuple(float(v) for v in hi))

    @classmethod
    def cube(cls, center, half_width: float) -> "Box":
        c = np.asarray(center, dtype=float)
        return cls(tuple(c - half_width), tuple(c + half_width))

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.lower)

    @property
    def hi(self) -> np.ndarray:
        return np.asarray(self.upper)

    @property
    def sides(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    @property
    def volume(self) -> float:
        return float(np.prod(self.sides))

    @property
    def half_diagonal(self) -> float:
        return float(0.5 * np.linalg.norm(self.sides))

    def contains(self, x: np.ndarray, tol: float = 0.0) -> np.ndarray:
        """Return a boolean mask for points (..., 3) inside the box."""
        x = np.asarray(x, dtype=float)
        return np.all((x >= self.lo - tol) & (x <= self.hi + tol), axis=-1)

    def contains_box(self, other: "Box") -> bool:
        return bool(np.all(other.lo >= self.lo) and np.all(other.hi <= self.hi))

    def padded(self, margin: float) -> "Box":
        return Box(tuple(self.lo - margin), tuple(self.hi + margin))

    def grid(self, n: int | tuple[int, int, int]) -> np.ndarray:
        """Return an (n1*n2*n3, 3) array of cell-centered points."""
        counts = (n, n, n) if isinstance(n, int) else tuple(n)
        axes = [
            self.lo[k] + (np.arange(counts[k]) + 0.5) * self.sides[k] / counts[k]
            for k in range(3)
        ]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def uniform(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.lo + rng.random((size, 3)) * self.sides
