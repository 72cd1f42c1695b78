"""Closed-form and quadrature quantities of the Lieb–Thirring bound.

The Landau pressure is the energy density of the three dimensional Landau
gas: with levels 2νB and degeneracies d₀ = 1/2π, d_ν = 1/π per unit area,

    P(B, W) = (B/3π²)(W^{3/2} + 2 Σ_{ν≥1} [W - 2νB]₊^{3/2}),

and P(0, W) = 2W^{5/2}/(15π²). Integrals over supp [V]₋ use a midpoint rule
on the support box, doubled until the Richardson estimate meets tol.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from maglt.core.domain import Box
from maglt.core.errors import QuadratureError, RegularityError
from maglt.core.field_model import MagneticFieldModel, ScaledField
from maglt.core.logging_config import get_logger
from maglt.core.parallel import map_parallel
from maglt.core.potentials import Potential
from maglt.core.scales import ScaleProfile, ell_interpolant

log = get_logger(__name__)

WEYL_CONSTANT = 2.0 / (15.0 * math.pi**2)

# leading terms summed exactly before the Euler–Maclaurin tail
_EXACT_TERMS = 256
_CHUNK = 1 << 16


@dataclass(frozen=True)
class PressureQuery:
    """
    One evaluation of the Landau pressure at semiclassical parameter h.

    Attributes:
        B: Field strength, >= 0.
        W: Potential depth, >= 0.
        h: Semiclassical parameter, > 0.
    """

    B: float
    W: float
    h: float = 1.0

    def __post_init__(self) -> None:
        if self.B < 0:
            raise ValueError("B must be >= 0")
        if self.W < 0:
            raise ValueError("W must be >= 0")
        if self.h <= 0:
            raise ValueError("h must be > 0")

    def pressure(self) -> float:
        """h⁻³ P(hB, W)."""
        return float(landau_pressure(self.h * self.B, self.W)) / self.h**3


def _power_tail(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Σ_{u=a, a+1, ..., b-1} u^{3/2} by Euler–Maclaurin, accurate for a >= 256."""
    integral = 0.4 * (b**2.5 - a**2.5)
    edge = 0.5 * (a**1.5 - b**1.5)
    d1 = 1.5 * (b**0.5 - a**0.5)
    d3 = -0.375 * (b**-1.5 - a**-1.5)
    d5 = -1.40625 * (b**-3.5 - a**-3.5)
    return integral + edge + d1 / 12.0 - d3 / 720.0 + d5 / 30240.0


def _power_sum(theta: np.ndarray, count: np.ndarray) -> np.ndarray:
    """Σ_{j=0}^{count-1} (θ + j)^{3/2}, elementwise."""
    total = np.zeros_like(theta)
    exact = np.minimum(count, _EXACT_TERMS)
    top = int(exact.max(initial=0))
    for j in range(top):
        total += np.where(j < exact, (theta + j) ** 1.5, 0.0)
    long = count > _EXACT_TERMS
    if np.any(long):
        a = theta[long] + _EXACT_TERMS
        b = theta[long] + count[long]
        total[long] += _power_tail(a, b)
    return total


def landau_pressure(B, W):
    """
    P(B, W) as a finite sum over the occupied Landau levels.

    Writing W/2B = N + θ with θ in (0, 1], the occupied excited levels give
    W - 2νB = 2B(θ + N - ν) for ν = 1..N. Broadcasts over array inputs.
    """
    B_arr, W_arr = np.broadcast_arrays(np.asarray(B, dtype=float), np.asarray(W, dtype=float))
    if np.any(B_arr < 0):
        raise ValueError("B must be >= 0")
    Wp = np.maximum(W_arr, 0.0)
    out = np.zeros(B_arr.shape)
    zero = B_arr == 0
    out[zero] = WEYL_CONSTANT * Wp[zero] ** 2.5
    live = (~zero) & (Wp > 0)
    if np.any(live):
        b, w = B_arr[live], Wp[live]
        ratio = w / (2.0 * b)
        n = np.ceil(ratio) - 1.0
        theta = ratio - n
        excited = (2.0 * b) ** 1.5 * _power_sum(theta, n.astype(np.int64))
        out[live] = b / (3.0 * math.pi**2) * (w**1.5 + 2.0 * excited)
    return out if out.ndim else float(out)


def level_degeneracy(nu: int) -> float:
    return 1.0 / (2.0 * math.pi) if nu == 0 else 1.0 / math.pi


def landau_pressure_levels(B: float, W: float) -> float:
    """P(B, W) level by level: Σ_ν d_ν B (2/3π) [W - 2νB]₊^{3/2}."""
    if B < 0:
        raise ValueError("B must be >= 0")
    if W <= 0:
        return 0.0
    if B == 0:
        return WEYL_CONSTANT * W**2.5
    total = 0.0
    nu = 0
    while 2.0 * nu * B < W:
        total += level_degeneracy(nu) * B * (2.0 / (3.0 * math.pi)) * (W - 2.0 * nu * B) ** 1.5
        nu += 1
    return total


@dataclass(frozen=True)
class QuadratureResult:
    """
    Midpoint-rule integral over a box with a Richardson error estimate.

    Attributes:
        values: Extrapolated integrals, one per integrand.
        errors: Estimated absolute errors.
        cells: Cells per axis of the finest rule.
    """

    values: np.ndarray
    errors: np.ndarray
    cells: int

    @property
    def value(self) -> float:
        return float(self.values[0])

    @property
    def error(self) -> float:
        return float(self.errors[0])


def _midpoint(integrand: Callable[[np.ndarray], np.ndarray], box: Box, n: int, max_workers) -> np.ndarray:
    pts = box.grid(n)
    chunks = [pts[i : i + _CHUNK] for i in range(0, len(pts), _CHUNK)]
    sums = map_parallel(lambda c: np.atleast_2d(integrand(c)).sum(axis=-1), chunks, max_workers=max_workers)
    return np.sum(sums, axis=0) * box.volume / n**3


def box_quadrature(
    integrand: Callable[[np.ndarray], np.ndarray],
    box: Box | None,
    *,
    tol: float = 1e-6,
    start: int = 8,
    max_cells: int = 128,
    max_workers: int | None = None,
) -> QuadratureResult:
    """
    Integrate integrand (points (n, 3) -> (k, n) or (n,)) over box.

    The cell count doubles from start until every component satisfies
    |Q(2n) - Q(n)|/3 <= tol·max(|Q(2n)|, tol). A missing box integrates to 0.
    """
    if box is None:
        probe = np.atleast_2d(integrand(np.zeros((1, 3))))
        k = probe.shape[0]
        return QuadratureResult(np.zeros(k), np.zeros(k), 0)
    if tol <= 0:
        raise ValueError("tol must be > 0")
    n = start
    coarse = _midpoint(integrand, box, n, max_workers)
    while 2 * n <= max_cells:
        fine = _midpoint(integrand, box, 2 * n, max_workers)
        err = np.abs(fine - coarse) / 3.0
        log.debug("quadrature n=%d values=%s err=%s", 2 * n, fine, err)
        if np.all(err <= tol * np.maximum(np.abs(fine), tol)):
            return QuadratureResult((4.0 * fine - coarse) / 3.0, err, 2 * n)
        coarse, n = fine, 2 * n
    raise QuadratureError(
        "midpoint quadrature did not converge",
        cells=n,
        tolerance=tol,
        estimate=[float(v) for v in np.atleast_1d(coarse)],
    )


def semiclassical_energy(
    field: MagneticFieldModel,
    potential: Potential,
    h: float = 1.0,
    *,
    tol: float = 1e-6,
    max_cells: int = 128,
    max_workers: int | None = None,
) -> QuadratureResult:
    """E_scl(h, B, V) = -h⁻³ ∫ P(h|B(x)|, [V(x)]₋) dx over supp [V]₋."""
    if h <= 0:
        raise ValueError("h must be > 0")

    def integrand(x):
        return -landau_pressure(h * field.strength(x), potential.negative_part(x)) / h**3

    return box_quadrature(integrand, potential.support_box(), tol=tol, max_cells=max_cells, max_workers=max_workers)


def scaling_identity(
    field: MagneticFieldModel, potential: Potential, h: float, *, tol: float = 1e-3
) -> tuple[float, float]:
    """Return (E_scl(h, B, V), h⁻³ E_scl(1, hB, V)); the two agree identically."""
    direct = semiclassical_energy(field, potential, h, tol=tol).value
    rescaled = semiclassical_energy(ScaledField(field, h), potential, 1.0, tol=tol).value / h**3
    return direct, rescaled


@dataclass(frozen=True)
class BoundBreakdown:
    """
    Terms of the uniform Lieb–Thirring right-hand side.

    Attributes:
        term1: ∫[V]₋^{5/2}.
        term2: ∫|B|[V]₋^{3/2}.
        term3: ∫(|B| + L_c⁻²)L_c⁻¹[V]₋; zero for a constant field.
        errors: Quadrature error estimates for the three terms.
        cells: Cells per axis of the finest rule.
    """

    term1: float
    term2: float
    term3: float
    errors: tuple[float, float, float]
    cells: int

    def total(self, constants: Sequence[float] = (1.0, 1.0, 1.0)) -> float:
        c1, c2, c3 = constants
        return c1 * self.term1 + c2 * self.term2 + c3 * self.term3

    def to_dict(self) -> dict[str, float | int | list[float]]:
        return {
            "term1": self.term1,
            "term2": self.term2,
            "term3": self.term3,
            "errors": list(self.errors),
            "cells": self.cells,
        }


def _combined_scale(
    field: MagneticFieldModel, profile: ScaleProfile | None, box: Box | None, points_per_axis: int, max_workers
) -> Callable[[np.ndarray], np.ndarray]:
    if field.is_constant or box is None:
        return lambda x: np.full(len(x), math.inf)
    if profile is None:
        raise ValueError("profile is required for a non-constant field")
    try:
        ell = ell_interpolant(profile, box, points_per_axis, max_workers=max_workers)
    except ValueError as exc:
        raise RegularityError("scales unavailable inside supp [V]₋", reason=str(exc)) from exc
    # L_c = 2L = 2ℓ/ε
    return lambda x: 2.0 * ell(x) / profile.epsilon


def lt_rhs(
    field: MagneticFieldModel,
    potential: Potential,
    profile: ScaleProfile | None = None,
    *,
    points_per_axis: int = 3,
    tol: float = 1e-6,
    max_cells: int = 128,
    max_workers: int | None = None,
) -> BoundBreakdown:
    """
    Evaluate the three right-hand-side integrals.

    L_c inside supp [V]₋ is interpolated in log from a points_per_axis³ grid
    of exact scale evaluations; constant fields need no profile.
    """
    box = potential.support_box()
    lc_of = _combined_scale(field, profile, box, points_per_axis, max_workers)

    def integrand(x):
        v = potential.negative_part(x)
        b = field.strength(x)
        inv = 1.0 / lc_of(x)
        return np.stack([v**2.5, b * v**1.5, (b + inv**2) * inv * v])

    result = box_quadrature(integrand, box, tol=tol, max_cells=max_cells, max_workers=max_workers)
    t1, t2, t3 = (max(float(v), 0.0) for v in result.values)
    return BoundBreakdown(t1, t2, t3, tuple(float(e) for e in result.errors), result.cells)


def zero_mode_density_bound(field: MagneticFieldModel, x, profile: ScaleProfile) -> float:
    """(|B(x)| + L_c(x)⁻²) L_c(x)⁻¹; zero where L_c = inf."""
    lc = profile.Lc(x)
    if math.isinf(lc):
        return 0.0
    b = float(field.strength(np.asarray(x, dtype=float)))
    return (b + lc**-2) / lc


@dataclass(frozen=True)
class SweepRow:
    amplitude: float
    breakdown: BoundBreakdown

    def row(self) -> list[float]:
        bd = self.breakdown
        return [self.amplitude, bd.term1, bd.term2, bd.term3, *bd.errors]


SWEEP_COLUMNS = ("b", "term1", "term2", "term3", "err1", "err2", "err3")


def amplitude_sweep(
    field: MagneticFieldModel,
    potential: Potential,
    amplitudes: Sequence[float] = (1.0, 2.0, 4.0, 8.0),
    *,
    epsilon: float | None = None,
    points_per_axis: int = 3,
    tol: float = 1e-6,
    max_workers: int | None = None,
) -> list[SweepRow]:
    """Breakdowns for the family B -> bB at fixed V."""
    rows = []
    for amp in amplitudes:
        if amp <= 0:
            raise ValueError("amplitudes must be > 0")
        scaled = ScaledField(field, amp)
        profile = None if scaled.is_constant else _profile(scaled, epsilon)
        bd = lt_rhs(scaled, potential, profile, points_per_axis=points_per_axis, tol=tol, max_workers=max_workers)
        log.info("amplitude %g: %s", amp, bd.to_dict())
        rows.append(SweepRow(float(amp), bd))
    return rows


def _profile(field: MagneticFieldModel, epsilon: float | None) -> ScaleProfile:
    return ScaleProfile(field) if epsilon is None else ScaleProfile(field, epsilon)


def density_sweep(
    field: MagneticFieldModel, x, amplitudes: Sequence[float], *, epsilon: float | None = None
) -> list[tuple[float, float]]:
    """Zero-mode density bound at x along B -> bB."""
    out = []
    for amp in amplitudes:
        scaled = ScaledField(field, amp)
        out.append((float(amp), zero_mode_density_bound(scaled, x, _profile(scaled, epsilon))))
    return out


def loglog_slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Least-squares slope of log y against log x; ys must be positive."""
    x = np.log(np.asarray(xs, dtype=float))
    y = np.asarray(ys, dtype=float)
    if np.any(y <= 0):
        raise ValueError("ys must be positive for a log-log fit")
    return float(np.polyfit(x, np.log(y), 1)[0])
