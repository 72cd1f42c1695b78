"""Electric potentials V with compactly supported negative part.

The sign convention is the usual one: wells are negative, and [V]₋ denotes
max(-V, 0).
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np

from maglt.core.domain import Box

# relative level below which a Gaussian well is treated as zero
_GAUSS_CUTOFF = 1e-14


class Potential(ABC):
    """Scalar potential evaluated on arrays of points (..., 3)."""

    name: str = "potential"

    @abstractmethod
    def __call__(self, x: np.ndarray) -> np.ndarray: ...

    def negative_part(self, x: np.ndarray) -> np.ndarray:
        return np.maximum(-self(x), 0.0)

    @abstractmethod
    def support_box(self) -> Box | None:
        """Box containing supp [V]₋, or None when [V]₋ vanishes."""

    @property
    def feature_length(self) -> float:
        """Smallest length on which V varies."""
        return math.inf

    @property
    def depth(self) -> float:
        return 0.0

    def params(self) -> dict[str, Any]:
        return {}

    @property
    def descriptor(self) -> dict[str, Any]:
        return {"name": self.name, "params": self.params()}


@dataclass(frozen=True)
class ZeroPotential(Potential):
    name = "zero"

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.zeros(np.shape(x)[:-1])

    def support_box(self) -> Box | None:
        return None


@dataclass(frozen=True)
class BoxWell(Potential):
    """V = -depth on an axis-aligned box and zero elsewhere."""

    well_depth: float
    half_widths: tuple[float, float, float]
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    name = "box-well"

    def __post_init__(self) -> None:
        if self.well_depth < 0:
            raise ValueError("depth must be >= 0")
        if min(self.half_widths) <= 0:
            raise ValueError("half_widths must be positive")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        inside = np.all(
            np.abs(x - np.asarray(self.center)) <= np.asarray(self.half_widths), axis=-1
        )
        return np.where(inside, -self.well_depth, 0.0)

    def support_box(self) -> Box | None:
        if self.well_depth == 0:
            return None
        c = np.asarray(self.center)
        w = np.asarray(self.half_widths)
        return Box(tuple(c - w), tuple(c + w))

    @property
    def feature_length(self) -> float:
        return float(min(self.half_widths))

    @property
    def depth(self) -> float:
        return self.well_depth

    def params(self) -> dict[str, Any]:
        return {
            "depth": self.well_depth,
            "half_widths": list(self.half_widths),
            "center": list(self.center),
        }


@dataclass(frozen=True)
class GaussianWell(Potential):
    """V = -depth·exp(-|x-c|²/2w²), truncated where it drops below 1e-14·depth."""

    well_depth: float
    width: float
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    name = "gaussian-well"

    def __post_init__(self) -> None:
        if self.well_depth < 0:
            raise ValueError("depth must be >= 0")
        if self.width <= 0:
            raise ValueError("width must be positive")

    @property
    def cutoff_radius(self) -> float:
        return self.width * math.sqrt(2.0 * math.log(1.0 / _GAUSS_CUTOFF))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        r2 = np.sum((np.asarray(x, dtype=float) - np.asarray(self.center)) ** 2, axis=-1)
        v = -self.well_depth * np.exp(-0.5 * r2 / self.width**2)
        return np.where(r2 <= self.cutoff_radius**2, v, 0.0)

    def support_box(self) -> Box | None:
        if self.well_depth == 0:
            return None
        return Box.cube(self.center, self.cutoff_radius)

    @property
    def feature_length(self) -> float:
        return self.width

    @property
    def depth(self) -> float:
        return self.well_depth

    def params(self) -> dict[str, Any]:
        return {"depth": self.well_depth, "width": self.width, "center": list(self.center)}


@dataclass(frozen=True)
class RadialWell(Potential):
    """V = -depth on the ball B(center, radius)."""

    well_depth: float
    radius: float
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    name = "radial-well"

    def __post_init__(self) -> None:
        if self.well_depth < 0:
            raise ValueError("depth must be >= 0")
        if self.radius <= 0:
            raise ValueError("radius must be positive")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        r2 = np.sum((np.asarray(x, dtype=float) - np.asarray(self.center)) ** 2, axis=-1)
        return np.where(r2 <= self.radius**2, -self.well_depth, 0.0)

    def support_box(self) -> Box | None:
        if self.well_depth == 0:
            return None
        return Box.cube(self.center, self.radius)

    @property
    def feature_length(self) -> float:
        return self.radius

    @property
    def depth(self) -> float:
        return self.well_depth

    def params(self) -> dict[str, Any]:
        return {"depth": self.well_depth, "radius": self.radius, "center": list(self.center)}


def _vec3(value: Any, key: str) -> tuple[float, float, float]:
    arr = np.asarray(value, dtype=float).ravel()
    if arr.size == 1:
        arr = np.repeat(arr, 3)
    if arr.size != 3:
        raise ValueError(f"{key} must have three components")
    return (float(arr[0]), float(arr[1]), float(arr[2]))


POTENTIAL_NAMES = ("zero", "box-well", "gaussian-well", "radial-well")


def builtin_potential(name: str, params: Mapping[str, Any] | None = None) -> Potential:
    """
    Build a potential from its descriptor.

    Args:
        name: One of POTENTIAL_NAMES.
        params: Numeric parameters (depth, half_widths, width, radius, center).

    Raises:
        ValueError: Unknown name or invalid parameters.
    """
    p = dict(params or {})
    center = _vec3(p.get("center", 0.0), "center")
    if name == "zero":
        return ZeroPotential()
    if name == "box-well":
        return BoxWell(
            float(p.get("depth", 1.0)), _vec3(p.get("half_widths", 0.5), "half_widths"), center
        )
    if name == "gaussian-well":
        return GaussianWell(float(p.get("depth", 1.0)), float(p.get("width", 1.0)), center)
    if name == "radial-well":
        return RadialWell(float(p.get("depth", 1.0)), float(p.get("radius", 1.0)), center)
    raise ValueError(f"unknown potential '{name}' (expected one of {', '.join(POTENTIAL_NAMES)})")
