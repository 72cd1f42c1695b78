"""Local length scales of a magnetic field.

For a field B and a point x:

- B_L(x), b_L(x) are the sup and inf of |B| over the ball B(x, L);
- the magnetic scale L_m(x) is the largest L with B_L(x) <= L⁻²;
- the variation scale L_v(x) is the largest L with
  L^γ sup_{B(x,L)} ‖∇^γB‖ <= b_L(x) for γ = 1..4;
- the combined scale is L_c = max(L_m, L_v), the tempered scale L = L_c / 2,
  and ℓ = εL, P = ε⁻⁵ℓ⁻².

Suprema are located by log-space bisection on a bracket of twelve decades
around a reference length. A condition that still holds at the top of the
bracket gives math.inf, which is the value for constant fields.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field as dc_field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from maglt.core.domain import Box
from maglt.core.extremize import ball_extrema, clamp_to_ball
from maglt.core.field_model import MAX_ORDER, MagneticFieldModel, RescaledField
from maglt.core.logging_config import get_logger
from maglt.core.parallel import map_parallel
from maglt.core.sampling import ball_and_shell

log = get_logger(__name__)

DEFAULT_EPSILON = 1.0 / 1024

_BRACKET_DECADES = 6
_MAX_BISECTIONS = 60
_BISECTION_RTOL = 1e-7


def validate_epsilon(epsilon: float) -> float:
    eps = float(epsilon)
    if not 0 < eps < 1e-3:
        raise ValueError("epsilon must lie in (0, 1/1000)")
    return eps


def _point(x) -> np.ndarray:
    arr = np.asarray(x, dtype=float).ravel()
    if arr.shape != (3,):
        raise ValueError("x must have three components")
    return arr


def sup_inf_field(field: MagneticFieldModel, x, L: float) -> tuple[float, float]:
    """
    Return (B_L(x), b_L(x)), the sampled sup and inf of |B| over B(x, L).

    Raises:
        ValueError: L negative or not finite.
    """
    if not L >= 0 or not math.isfinite(L):
        raise ValueError("L must be finite and >= 0")
    x = _point(x)
    at_x = float(field.strength(x))
    if L == 0 or field.is_constant:
        return at_x, at_x
    ext = ball_extrema(field.strength, x, L, landmarks=field.landmarks)
    return max(ext.maximum, at_x), max(0.0, min(ext.minimum, at_x))


def derivative_sups(field: MagneticFieldModel, x, L: float) -> np.ndarray:
    """Sampled sup over B(x, L) of ‖∇^γB‖ for γ = 1..4."""
    x = _point(x)
    if field.is_constant:
        return np.zeros(MAX_ORDER)
    seeds = ball_and_shell(x, L)
    if len(field.landmarks) and L > 0:
        seeds = np.vstack([seeds, clamp_to_ball(field.landmarks, x, L)])
    norms = field.derivative_norms(seeds)
    return np.max(norms[:, 1:], axis=0)


def log_bisect(holds: Callable[[float], bool], reference: float) -> float:
    """
    Largest L in the bracket [1e-6, 1e6]·reference for which holds(L) is true.

    holds is expected to be true below some threshold and false above it.
    The first decade where it fails is refined by bisection in log L.

    Returns:
        math.inf if holds is true on the whole bracket, 0.0 if it already
        fails at the bottom.
    """
    if not reference > 0 or not math.isfinite(reference):
        raise ValueError("reference must be positive and finite")
    decades = [reference * 10.0**k for k in range(-_BRACKET_DECADES, _BRACKET_DECADES + 1)]
    lo = None
    for L in decades:
        if not holds(L):
            hi = L
            break
        lo = L
    else:
        return math.inf
    if lo is None:
        return 0.0
    for _ in range(_MAX_BISECTIONS):
        if hi / lo <= 1.0 + _BISECTION_RTOL:
            break
        mid = math.sqrt(lo * hi)
        if holds(mid):
            lo = mid
        else:
            hi = mid
    log.debug("bisection bracket [%.6g, %.6g]", lo, hi)
    return lo


def _magnetic_reference(field: MagneticFieldModel, x: np.ndarray) -> float:
    b = float(field.strength(x))
    return b**-0.5 if b > 0 else field.length_scale


def magnetic_scale(field: MagneticFieldModel, x) -> float:
    """L_m(x) = sup{L > 0 : B_L(x) <= L⁻²}."""
    x = _point(x)
    if field.is_constant:
        b = float(field.strength(x))
        return b**-0.5 if b > 0 else math.inf
    return log_bisect(lambda L: L * L * sup_inf_field(field, x, L)[0] <= 1.0, _magnetic_reference(field, x))


def variation_condition(field: MagneticFieldModel, x, L: float) -> bool:
    """L^γ sup_{B(x,L)} ‖∇^γB‖ <= b_L(x) for every γ = 1..4."""
    sups = derivative_sups(field, x, L)
    _, inf_b = sup_inf_field(field, x, L)
    powers = L ** np.arange(1, MAX_ORDER + 1)
    return bool(np.all(powers * sups <= inf_b))


def variation_scale(field: MagneticFieldModel, x) -> float:
    """L_v(x); 0 when the condition fails on the whole bracket."""
    x = _point(x)
    if field.is_constant:
        return math.inf
    return log_bisect(lambda L: variation_condition(field, x, L), field.length_scale)


def combined_scale(field: MagneticFieldModel, x) -> float:
    return max(magnetic_scale(field, x), variation_scale(field, x))


def tempered_scale(field: MagneticFieldModel, x) -> float:
    """L(x) = L_c(x) / 2; math.inf for constant fields."""
    return 0.5 * combined_scale(field, x)


@dataclass(frozen=True)
class ScaleRecord:
    """All scales at one point."""

    x: tuple[float, float, float]
    Lm: float
    Lv: float
    Lc: float
    L: float
    ell: float
    P: float

    def row(self) -> list[float]:
        return [*self.x, self.Lm, self.Lv, self.Lc, self.ell, self.P]


SCALE_COLUMNS = ("x", "y", "z", "Lm", "Lv", "Lc", "ell", "P")


@dataclass
class ScaleProfile:
    """
    Scales of a field for a fixed ε, memoized per query point.

    Attributes:
        field: The magnetic field.
        epsilon: Scale parameter in (0, 1/1000).
    """

    field: MagneticFieldModel
    epsilon: float = DEFAULT_EPSILON
    _cache: dict[tuple[float, float, float], ScaleRecord] = dc_field(default_factory=dict, repr=False)
    _lock: threading.Lock = dc_field(default_factory=threading.Lock, repr=False)

    def __post_init__(self) -> None:
        self.epsilon = validate_epsilon(self.epsilon)

    def sup_field(self, x, L: float) -> float:
        return sup_inf_field(self.field, x, L)[0]

    def inf_field(self, x, L: float) -> float:
        return sup_inf_field(self.field, x, L)[1]

    def record(self, x) -> ScaleRecord:
        key = tuple(float(v) for v in _point(x))
        with self._lock:
            cached = self._cache.get(key)
        if cached is not None:
            return cached
        lm = magnetic_scale(self.field, key)
        lv = variation_scale(self.field, key)
        lc = max(lm, lv)
        L = 0.5 * lc
        ell = self.epsilon * L
        if math.isinf(ell):
            P = 0.0
        elif ell == 0:
            P = math.inf
        else:
            P = self.epsilon**-5 * ell**-2
        rec = ScaleRecord(key, lm, lv, lc, L, ell, P)
        with self._lock:
            self._cache[key] = rec
        return rec

    def Lm(self, x) -> float:
        return self.record(x).Lm

    def Lv(self, x) -> float:
        return self.record(x).Lv

    def Lc(self, x) -> float:
        return self.record(x).Lc

    def L(self, x) -> float:
        return self.record(x).L

    def ell(self, x) -> float:
        return self.record(x).ell

    def P(self, x) -> float:
        return self.record(x).P

    def evaluate(self, points, max_workers: int | None = None) -> list[ScaleRecord]:
        """Scales at many points; order follows the input."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return map_parallel(self.record, list(pts), max_workers=max_workers)


@dataclass(frozen=True)
class TemperedReport:
    """
    Result of checking ½ <= ℓ(y)/ℓ(x) <= 2 whenever |x - y| <= ε⁻¹ℓ(x).

    Attributes:
        checked: Number of admissible pairs.
        skipped: Pairs with |x - y| > ε⁻¹ℓ(x).
        min_ratio: Smallest ℓ(y)/ℓ(x) seen.
        max_ratio: Largest ℓ(y)/ℓ(x) seen.
        violations: Offending pairs as (x, y, ratio).
    """

    checked: int
    skipped: int
    min_ratio: float
    max_ratio: float
    violations: tuple[tuple[tuple[float, ...], tuple[float, ...], float], ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def worst_ratio(self) -> float:
        return max(self.max_ratio, 1.0 / self.min_ratio) if self.min_ratio > 0 else math.inf


def _scale_ratio(num: float, den: float) -> float:
    if math.isinf(num) and math.isinf(den):
        return 1.0
    if den == 0:
        return math.inf if num > 0 else 1.0
    return num / den


def check_tempered(
    ell: Callable[[np.ndarray], float],
    pairs: Sequence,
    epsilon: float = DEFAULT_EPSILON,
) -> TemperedReport:
    """
    Check the ε-tempered inequality on the given pairs.

    Args:
        ell: Function x -> ℓ(x).
        pairs: Iterable of (x, y) position pairs.
        epsilon: Scale parameter.
    """
    epsilon = validate_epsilon(epsilon)
    checked = skipped = 0
    lo, hi = math.inf, 0.0
    violations = []
    for x, y in pairs:
        x = _point(x)
        y = _point(y)
        lx = ell(x)
        if np.linalg.norm(x - y) > lx / epsilon:
            skipped += 1
            continue
        ratio = _scale_ratio(ell(y), lx)
        checked += 1
        lo, hi = min(lo, ratio), max(hi, ratio)
        if not 0.5 <= ratio <= 2.0:
            violations.append((tuple(x.tolist()), tuple(y.tolist()), ratio))
    if not checked:
        lo = hi = 1.0
    return TemperedReport(checked, skipped, lo, hi, tuple(violations))


def admissible_pairs(profile: ScaleProfile, rng: np.random.Generator, centers, count: int) -> list:
    """Random pairs (x, y) with y uniform in B(x, ε⁻¹ℓ(x)), x drawn from centers."""
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    out = []
    for _ in range(count):
        x = centers[rng.integers(len(centers))]
        reach = profile.L(x)
        if math.isinf(reach):
            reach = profile.field.length_scale
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        out.append((x, x + reach * rng.random() ** (1 / 3) * direction))
    return out


@dataclass(frozen=True)
class DichotomyRecord:
    """Consequence of the tempered-scale construction at one point."""

    x: tuple[float, float, float]
    L: float
    magnetic: bool
    inf_field: float
    variation_ratio: float

    @property
    def ok(self) -> bool:
        if not self.magnetic:
            return True
        return self.inf_field > 0 and self.variation_ratio <= 1.0


def tempered_dichotomy_check(profile: ScaleProfile, points) -> list[DichotomyRecord]:
    """
    At points where B_{L(x)}(x) > L(x)⁻², check b_{L(x)}(x) > 0 and
    L(x)^γ sup ‖∇^γB‖ <= b_{L(x)}(x) on B(x, L(x)).
    """
    records = []
    for x in np.atleast_2d(np.asarray(points, dtype=float)):
        L = profile.L(x)
        if math.isinf(L) or L == 0:
            records.append(DichotomyRecord(tuple(x.tolist()), L, False, profile.inf_field(x, 0.0), 0.0))
            continue
        sup_b, inf_b = sup_inf_field(profile.field, x, L)
        magnetic = sup_b > L**-2
        sups = derivative_sups(profile.field, x, L)
        worst = float(np.max(L ** np.arange(1, MAX_ORDER + 1) * sups))
        ratio = worst / inf_b if inf_b > 0 else math.inf
        records.append(DichotomyRecord(tuple(x.tolist()), L, bool(magnetic), inf_b, ratio))
    return records


def scaling_covariance(field: MagneticFieldModel, x, s: float) -> dict[str, float]:
    """
    Ratios s·L_s(x/s) / L(x) for L in (Lm, Lv, Lc), where L_s belongs to the
    rescaled field s²B(s·). Exact covariance gives 1.0 for each.
    """
    x = _point(x)
    scaled = RescaledField(field, s)
    y = x / s
    base_m, base_v = magnetic_scale(field, x), variation_scale(field, x)
    new_m, new_v = magnetic_scale(scaled, y), variation_scale(scaled, y)
    return {
        "Lm": _scale_ratio(s * new_m, base_m),
        "Lv": _scale_ratio(s * new_v, base_v),
        "Lc": _scale_ratio(s * max(new_m, new_v), max(base_m, base_v)),
    }


@dataclass(frozen=True)
class EllInterpolant:
    """
    Vectorized ℓ on a box, interpolated in log ℓ from a coarse grid of exact
    evaluations. A constant field gives ℓ = math.inf everywhere.
    """

    values: np.ndarray
    axes: tuple[np.ndarray, np.ndarray, np.ndarray]

    def __call__(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if np.all(np.isinf(self.values)):
            return np.full(len(pts), math.inf)
        interp = RegularGridInterpolator(self.axes, np.log(self.values), bounds_error=False, fill_value=None)
        return np.exp(interp(pts))


def ell_interpolant(
    profile: ScaleProfile, box: Box, points_per_axis: int = 3, max_workers: int | None = None
) -> EllInterpolant:
    """Evaluate ℓ on a points_per_axis³ grid spanning box and interpolate."""
    if points_per_axis < 2:
        raise ValueError("points_per_axis must be >= 2")
    axes = tuple(np.linspace(box.lo[k], box.hi[k], points_per_axis) for k in range(3))
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    records = profile.evaluate(mesh, max_workers=max_workers)
    values = np.array([r.ell for r in records]).reshape((points_per_axis,) * 3)
    if np.any(np.isinf(values)) and not np.all(np.isinf(values)):
        raise ValueError("ℓ is infinite on part of the box only; use a finite region")
    return EllInterpolant(values, axes)
