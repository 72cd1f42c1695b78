"""Field-line charts around a strong tube.

A frame is anchored at a base point z. Its supporting plane 𝒫 passes
through z orthogonally to n(z). Leaves of the foliation are spherical caps
through the central line φ_z(τ) with curvature κ(τ) = -½ d/dτ log|B(φ_z(τ))|,
flattened to planes near 𝒫 by a quintic blend in τ. Coordinates are

    ξ₃ = ∫₀ᵗ (b(τ)/b)^{1/2} dτ   (t the leaf label),
    ξ⊥ = point where the normal flow of the leaves through x meets 𝒫,

and the transverse metric obeys ∂_t log g⊥ = 2κ/|∇t| along the same flow,
so Ω = g⊥^{-1/2} comes out of one ODE solve with the coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Any, Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline, CubicSpline
from scipy.optimize import brentq
from scipy.special import gamma, gammaincc

from maglt.core.errors import ChartError, NumericalFailure, RegularityError
from maglt.core.field_model import MagneticFieldModel, pauli_matrices, sigma_dot
from maglt.core.logging_config import get_logger
from maglt.core.parallel import map_parallel

log = get_logger(__name__)

ODE_RTOL = 1e-10
ODE_ATOL = 1e-10
FLOW_RTOL = 1e-12
CHART_RADIUS = 10.0
_SCAN_NODES = 1025
_VANISH = 1e-12

_SIGMA = pauli_matrices()
_SPIN_UP = 0.5 * (np.eye(2) + _SIGMA[2])


def quintic_blend(s) -> np.ndarray:
    """6s⁵ - 15s⁴ + 10s³ clipped to [0, 1]."""
    s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
    return s**3 * (10.0 - 15.0 * s + 6.0 * s * s)


def spin_up(n) -> np.ndarray:
    """P↑ = ½(1 + σ·n) for unit vectors (..., 3)."""
    n = np.asarray(n, dtype=float)
    return 0.5 * (np.eye(2) + sigma_dot(n))


def orthonormal_frame(n) -> np.ndarray:
    """Columns e₁, e₂, e₃ = n by Gram-Schmidt against a fixed axis."""
    n = np.asarray(n, dtype=float)
    n = n / np.linalg.norm(n)
    ref = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = ref - (ref @ n) * n
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(n, e1)
    return np.column_stack([e1, e2, n])


# ---------------------------------------------------------------------------
# Field lines
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FieldLine:
    """
    Arc-length parametrized field line sampled on a uniform τ grid.

    Attributes:
        tau: Sample parameters, symmetric about 0 and containing 0.
        points: φ(τ) at the samples.
        tangents: n(φ(τ)) at the samples.
    """

    tau: np.ndarray
    points: np.ndarray
    tangents: np.ndarray
    spline: CubicHermiteSpline = dc_field(repr=False)

    def __call__(self, tau) -> np.ndarray:
        return self.spline(tau)

    @property
    def base(self) -> np.ndarray:
        return self.points[len(self.tau) // 2]

    @property
    def tau_max(self) -> float:
        return float(self.tau[-1])

    def tangent(self, tau) -> np.ndarray:
        return self.spline(tau, 1)

    def acceleration(self, tau) -> np.ndarray:
        return self.spline(tau, 2)

    def residual(self, field: MagneticFieldModel) -> float:
        """max |φ̇ - n(φ)| at the midpoints between samples."""
        mid = 0.5 * (self.tau[1:] + self.tau[:-1])
        return float(np.max(np.linalg.norm(self.tangent(mid) - field.direction(self(mid)), axis=-1)))

    def arc_length_defect(self) -> np.ndarray:
        """||φ(τ) - φ(0)| - |τ|| at the samples."""
        return np.abs(np.linalg.norm(self.points - self.base, axis=-1) - np.abs(self.tau))

    def direction_variation(self, beyond: float) -> float:
        """max |φ̇(τ) - φ̇(±τ_max)| over |τ| >= beyond."""
        worst = 0.0
        for sign, end in ((1.0, self.tangents[-1]), (-1.0, self.tangents[0])):
            mask = sign * self.tau >= beyond
            if np.any(mask):
                worst = max(worst, float(np.max(np.linalg.norm(self.tangents[mask] - end, axis=-1))))
        return worst


def trace_field_line(
    field: MagneticFieldModel,
    z,
    tau_max: float,
    *,
    samples: int = 4097,
    rtol: float = ODE_RTOL,
    atol: float = ODE_ATOL,
) -> FieldLine:
    """
    Integrate φ̇ = n(φ), φ(0) = z on [-tau_max, tau_max].

    Raises:
        ValueError: Non-positive tau_max or fewer than three samples.
        RegularityError: |B| vanishes along the line.
        NumericalFailure: The integrator stops early.
    """
    if not tau_max > 0:
        raise ValueError("tau_max must be > 0")
    if samples < 3:
        raise ValueError("samples must be >= 3")
    samples += 1 - samples % 2
    z = np.asarray(z, dtype=float)
    ref = float(field.strength(z))
    if ref == 0.0:
        raise RegularityError("field vanishes at the base point", base=z.tolist())

    def rhs(_t, y):
        b = field.evaluate(y)
        norm = float(np.linalg.norm(b))
        if norm <= _VANISH * ref:
            raise RegularityError("field vanishes along the field line", point=y.tolist())
        return b / norm

    halves = {}
    for sign in (1.0, -1.0):
        sol = solve_ivp(rhs, (0.0, sign * tau_max), z, method="DOP853", rtol=rtol, atol=atol, dense_output=True)
        if not sol.success:
            raise NumericalFailure("field line integration failed", message=sol.message, base=z.tolist())
        halves[sign] = sol.sol
    tau = np.linspace(-tau_max, tau_max, samples)
    points = np.empty((samples, 3))
    pos = tau >= 0.0
    points[pos] = halves[1.0](tau[pos]).T
    points[~pos] = halves[-1.0](tau[~pos]).T
    points[samples // 2] = z
    tangents = field.direction(points)
    log.debug("traced field line from %s over ±%.3g", z, tau_max)
    return FieldLine(tau, points, tangents, CubicHermiteSpline(tau, points, tangents, axis=0))


# ---------------------------------------------------------------------------
# Frames
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FieldLineFrame:
    """
    Cylindrical chart attached to the field line through a base point.

    Attributes:
        field: Field the chart is built for.
        line: Central line φ_z.
        rotation: Columns e₁, e₂, e₃; e₃ = n(z) is the normal of 𝒫.
        ell: Tube length unit; the chart covers |ξ⊥| <= 10ℓ.
        b: Exterior strength |B_∞| used to normalize f.
        kappa: Blended leaf curvature κ(τ) as a spline.
        xi3_of_tau: ξ₃ as a function of the leaf label.
        tau_of_xi3: Inverse of xi3_of_tau.
        log_strength: log|B(φ(τ))| as a spline.
    """

    field: MagneticFieldModel = dc_field(repr=False)
    line: FieldLine
    rotation: np.ndarray
    ell: float
    b: float
    kappa: CubicSpline = dc_field(repr=False)
    xi3_of_tau: CubicSpline = dc_field(repr=False)
    tau_of_xi3: CubicSpline = dc_field(repr=False)
    log_strength: CubicSpline = dc_field(repr=False)

    @property
    def base(self) -> np.ndarray:
        return self.line.base

    @property
    def xi3_range(self) -> tuple[float, float]:
        return float(self.xi3_of_tau(self.line.tau[0])), float(self.xi3_of_tau(self.line.tau[-1]))

    @property
    def chart_radius(self) -> float:
        return CHART_RADIUS * self.ell

    def f(self, xi3) -> np.ndarray:
        """f(ξ₃) = (|B(x(0, ξ₃))|/b)^{1/2}."""
        t = self.tau_of_xi3(np.asarray(xi3, dtype=float))
        return np.exp(0.5 * self.log_strength(t)) / np.sqrt(self.b)

    # -- leaves -------------------------------------------------------------

    def _cap(self, t: np.ndarray, x: np.ndarray):
        phi = self.line(t)
        dphi = self.line.tangent(t)
        d = x - phi
        k = self.kappa(t)
        rho2 = np.sum(d * d, axis=-1)
        value = np.sum(d * dphi, axis=-1) + 0.5 * k * rho2
        return value, d, dphi, k, rho2

    def _leaf_gradient(self, t: np.ndarray, x: np.ndarray) -> np.ndarray:
        _, d, dphi, k, rho2 = self._cap(t, x)
        dk = self.kappa(t, 1)
        dx_g = dphi + k[..., None] * d
        dt_g = (
            -np.sum(dphi * dphi, axis=-1)
            + np.sum(d * self.line.acceleration(t), axis=-1)
            + 0.5 * dk * rho2
            - k * np.sum(d * dphi, axis=-1)
        )
        return -dx_g / dt_g[..., None]

    def leaf_label(self, x, *, strict: bool = True) -> np.ndarray:
        """
        Leaf t(x) through each point, by bracketing on a coarse τ scan and brentq.

        Raises:
            ChartError: No leaf passes through a point (strict mode); otherwise
                NaN is returned for it.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        scan = np.linspace(self.line.tau[0], self.line.tau[-1], _SCAN_NODES)
        phi, dphi, k_scan = self.line(scan), self.line.tangent(scan), self.kappa(scan)
        out = np.full(len(x), np.nan)
        for k, point in enumerate(x):
            d = point - phi
            g = np.sum(d * dphi, axis=-1) + 0.5 * k_scan * np.sum(d * d, axis=-1)
            flips = np.flatnonzero((g[:-1] > 0.0) & (g[1:] <= 0.0))
            if flips.size == 0:
                if strict:
                    raise ChartError("no leaf through the point", point=point.tolist())
                continue
            near = np.argmin(np.sum(d * d, axis=-1))
            j = flips[np.argmin(np.abs(flips - near))]
            if g[j + 1] == 0.0:
                out[k] = scan[j + 1]
                continue
            out[k] = brentq(
                lambda t: float(self._cap(np.array([t]), point[None, :])[0][0]),
                scan[j],
                scan[j + 1],
                xtol=1e-14,
            )
        return out

    # -- normal flow ----------------------------------------------------------

    def _flow(self, start: np.ndarray, t0: np.ndarray, t1: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Carry points from leaf t0 to leaf t1; returns end points and Δ log g⊥."""
        n = len(start)
        span = t1 - t0

        def rhs(u, y):
            x = y[: 3 * n].reshape(n, 3)
            t = t0 + u * span
            grad = self._leaf_gradient(t, x)
            norm2 = np.sum(grad * grad, axis=-1)
            dx = span[:, None] * grad / norm2[:, None]
            dlog = span * 2.0 * self.kappa(t) / np.sqrt(norm2)
            return np.concatenate([dx.ravel(), dlog])

        y0 = np.concatenate([start.ravel(), np.zeros(n)])
        scale = max(self.ell, 1e-300)
        sol = solve_ivp(rhs, (0.0, 1.0), y0, method="DOP853", rtol=FLOW_RTOL, atol=FLOW_RTOL * scale)
        if not sol.success:
            raise NumericalFailure("leaf normal flow failed", message=sol.message)
        end = sol.y[:, -1]
        return end[: 3 * n].reshape(n, 3), end[3 * n :]

    def _check_chart(self, xi: np.ndarray, strict: bool) -> np.ndarray:
        lo, hi = self.xi3_range
        radius = np.linalg.norm(xi[:, :2], axis=-1)
        bad = (radius > self.chart_radius * (1 + 1e-12)) | (xi[:, 2] < lo) | (xi[:, 2] > hi) | np.isnan(radius)
        if strict and np.any(bad):
            k = int(np.flatnonzero(bad)[0])
            raise ChartError("point outside the chart", xi=xi[k].tolist(), radius=self.chart_radius)
        return bad

    def from_chart(self, xi, *, with_factor: bool = False):
        """
        x(ξ) for points (n, 3) or (3,); with_factor also returns Ω(ξ).

        Raises:
            ChartError: ξ outside |ξ⊥| <= 10ℓ or the traced ξ₃ range.
        """
        xi_arr = np.asarray(xi, dtype=float)
        flat = np.atleast_2d(xi_arr)
        self._check_chart(flat, strict=True)
        start = self.base + flat[:, :2] @ self.rotation[:, :2].T
        t1 = self.tau_of_xi3(flat[:, 2])
        x, dlog = self._flow(start, np.zeros(len(flat)), t1)
        omega = np.exp(-0.5 * dlog)
        if xi_arr.ndim == 1:
            x, omega = x[0], omega[0]
        return (x, omega) if with_factor else x

    def to_chart(self, x, *, strict: bool = True, with_factor: bool = False):
        """
        ξ(x) for points (n, 3) or (3,).

        In non-strict mode points outside the chart get NaN coordinates.
        """
        x_arr = np.asarray(x, dtype=float)
        flat = np.atleast_2d(x_arr)
        t = self.leaf_label(flat, strict=strict)
        ok = ~np.isnan(t)
        xi = np.full(flat.shape, np.nan)
        omega = np.full(len(flat), np.nan)
        if np.any(ok):
            foot, dlog = self._flow(flat[ok], t[ok], np.zeros(int(ok.sum())))
            xi[ok, :2] = (foot - self.base) @ self.rotation[:, :2]
            xi[ok, 2] = self.xi3_of_tau(t[ok])
            omega[ok] = np.exp(0.5 * dlog)
        bad = self._check_chart(xi, strict)
        xi[bad] = np.nan
        omega[bad] = np.nan
        if x_arr.ndim == 1:
            xi, omega = xi[0], omega[0]
        return (xi, omega) if with_factor else xi

    def project(self, x) -> np.ndarray:
        """
        π(x): where the field line through x meets 𝒫.

        Raises:
            ChartError: The line does not return to 𝒫 within the traced length.
        """
        x_arr = np.asarray(x, dtype=float)
        flat = np.atleast_2d(x_arr)
        normal = self.rotation[:, 2]
        base = self.base

        def plane(_t, y):
            return float((y - base) @ normal)

        plane.terminal = True
        feet = np.empty_like(flat)
        for k, point in enumerate(flat):
            height = plane(0.0, point)
            if height == 0.0:
                feet[k] = point
                continue
            sign = -np.sign(height)
            sol = solve_ivp(
                lambda _t, y, s=sign: s * self.field.direction(y),
                (0.0, 2.0 * self.line.tau_max),
                point,
                method="DOP853",
                rtol=ODE_RTOL,
                atol=ODE_ATOL,
                events=plane,
            )
            if sol.t_events[0].size == 0:
                raise ChartError("field line does not reach the supporting plane", point=point.tolist())
            feet[k] = sol.y_events[0][0]
        return feet[0] if x_arr.ndim == 1 else feet

    def conformal_factor(self, xi) -> np.ndarray:
        return self.from_chart(xi, with_factor=True)[1]

    def h_factor(self, xi) -> np.ndarray:
        """h = Ω·g₃₃^{1/2} with g₃₃ = (b/b(t))/|∇t|²."""
        flat = np.atleast_2d(np.asarray(xi, dtype=float))
        x, omega = self.from_chart(flat, with_factor=True)
        t = self.tau_of_xi3(flat[:, 2])
        grad = np.linalg.norm(self._leaf_gradient(t, x), axis=-1)
        h = omega * np.sqrt(self.b * np.exp(-self.log_strength(t))) / grad
        return h[0] if np.asarray(xi).ndim == 1 else h

    def jacobian(self, xi, step: float | None = None) -> np.ndarray:
        """Dx(ξ) by central differences in one batched flow; (n, 3, 3)."""
        flat = np.atleast_2d(np.asarray(xi, dtype=float))
        step = step or 1e-5 * self.ell
        shifts = step * np.vstack([np.eye(3), -np.eye(3)])
        stacked = (flat[:, None, :] + shifts[None, :, :]).reshape(-1, 3)
        x = self.from_chart(stacked).reshape(len(flat), 6, 3)
        return np.transpose((x[:, :3] - x[:, 3:]) / (2.0 * step), (0, 2, 1))

    def metric(self, xi, step: float | None = None) -> np.ndarray:
        """g = DxᵀDx at chart points; (n, 3, 3)."""
        j = self.jacobian(xi, step)
        return np.einsum("nki,nkj->nij", j, j)

    def pullback_two_form(self, xi) -> np.ndarray:
        """Dual vector of β_ξ = x*β: det(Dx)·Dx⁻¹B(x(ξ))."""
        flat = np.atleast_2d(np.asarray(xi, dtype=float))
        j = self.jacobian(flat)
        b = self.field(self.from_chart(flat))
        return np.linalg.det(j)[:, None] * np.linalg.solve(j, b[..., None])[..., 0]

    def two_form_defect(self) -> Callable[[np.ndarray], np.ndarray]:
        """δβ = β_ξ - b dξ₁∧dξ₂ as a dual-vector evaluator."""

        def fn(xi):
            out = self.pullback_two_form(xi)
            out[:, 2] -= self.b
            return out

        return fn

    def spin_projection(self, x, *, strict: bool = True) -> np.ndarray:
        """P↑_z(x) = ½[1 + σ·n(φ_z(t(x)))]; NaN off the chart when not strict."""
        t = self.leaf_label(x, strict=strict)
        n = self.line.tangent(t)
        n = n / np.linalg.norm(n, axis=-1, keepdims=True)
        out = spin_up(n)
        return out[0] if np.asarray(x).ndim == 1 else out


def build_frame(
    field: MagneticFieldModel,
    z,
    ell: float,
    *,
    tau_max: float | None = None,
    blend: float | None = None,
    samples: int = 4097,
) -> FieldLineFrame:
    """
    Trace the line through z and set up its leaves and coordinates.

    Args:
        field: Field with n defined along the tube.
        z: Base point; 𝒫 passes through it.
        ell: Tube length unit.
        tau_max: Half length of the traced line; defaults to 40ℓ.
        blend: Width of the flattening slab next to 𝒫; defaults to ℓ.
        samples: Number of line samples.

    Raises:
        RegularityError: The leaf curvature radius drops below the chart radius.
    """
    if not ell > 0:
        raise ValueError("ell must be > 0")
    z = np.asarray(z, dtype=float)
    tau_max = tau_max or 40.0 * ell
    blend = blend or ell
    line = trace_field_line(field, z, tau_max, samples=samples)
    tau = line.tau

    log_b = CubicSpline(tau, np.log(field.strength(line.points)))
    kappa_raw = -0.5 * log_b(tau, 1)
    kappa = CubicSpline(tau, kappa_raw * quintic_blend(np.abs(tau) / blend))
    if float(np.max(np.abs(kappa(tau)))) * CHART_RADIUS * ell >= 0.5:
        raise RegularityError(
            "leaf curvature radius is below the chart radius; epsilon too large",
            max_kappa=float(np.max(np.abs(kappa_raw))),
            ell=ell,
        )

    exterior = field.exterior
    b = float(np.linalg.norm(exterior)) if exterior is not None else 0.0
    if b == 0.0:
        b = float(field.strength(z))
    speed = CubicSpline(tau, np.sqrt(np.exp(log_b(tau)) / b)).antiderivative()
    xi3 = speed(tau) - speed(0.0)
    xi3_of_tau = CubicSpline(tau, xi3)
    tau_of_xi3 = CubicSpline(xi3, tau)

    frame = FieldLineFrame(
        field=field,
        line=line,
        rotation=orthonormal_frame(line.tangents[len(tau) // 2]),
        ell=float(ell),
        b=b,
        kappa=kappa,
        xi3_of_tau=xi3_of_tau,
        tau_of_xi3=tau_of_xi3,
        log_strength=log_b,
    )
    log.debug("frame at %s: max κ %.3g, ξ₃ range %s", z, float(np.max(np.abs(kappa_raw))), frame.xi3_range)
    return frame


def chart_self_test(frame: FieldLineFrame, rng: np.random.Generator, count: int = 64) -> dict[str, Any]:
    """
    Round trip, metric and factor diagnostics at random chart points.

    Points are drawn with |ξ⊥| <= 9ℓ and ξ₃ inside 90% of the traced range
    so that difference stencils stay in the chart.
    """
    lo, hi = frame.xi3_range
    radius = 0.9 * frame.chart_radius * np.sqrt(rng.random(count))
    angle = 2.0 * np.pi * rng.random(count)
    xi = np.column_stack([radius * np.cos(angle), radius * np.sin(angle), rng.uniform(0.9 * lo, 0.9 * hi, count)])
    x, omega = frame.from_chart(xi, with_factor=True)
    back = frame.to_chart(x)
    jac = frame.jacobian(xi)
    g = np.einsum("nki,nkj->nij", jac, jac)
    gnorm = np.linalg.norm(g, axis=(1, 2))
    cross = np.max(np.abs(g[:, [0, 1], [2, 2]]), axis=-1) / (1.0 + gnorm)
    conformal = (np.abs(g[:, 0, 0] - g[:, 1, 1]) + 2.0 * np.abs(g[:, 0, 1])) / g[:, 0, 0]
    det_factor = np.linalg.det(g[:, :2, :2]) ** -0.25

    axis_tau = np.linspace(frame.tau_of_xi3(0.9 * lo), frame.tau_of_xi3(0.9 * hi), 33)
    axis_xi = np.column_stack([np.zeros((len(axis_tau), 2)), frame.xi3_of_tau(axis_tau)])
    axis_omega = frame.conformal_factor(axis_xi)
    h = frame.h_factor(xi)
    return {
        "points": int(count),
        "round_trip": float(np.max(np.linalg.norm(back - xi, axis=-1))),
        "cross_terms": float(np.max(cross)),
        "conformal_defect": float(np.max(conformal)),
        "omega_det_defect": float(np.max(np.abs(det_factor - omega))),
        "omega_axis_defect": float(np.max(np.abs(axis_omega - frame.f(axis_xi[:, 2])))),
        "max_omega_deviation": float(np.max(np.abs(omega - 1.0))),
        "max_h_deviation": float(np.max(np.abs(h - 1.0))),
        "jacobian_deviation": float(np.max(np.linalg.norm(jac - frame.rotation, axis=(1, 2)))),
        "line_residual": frame.line.residual(frame.field),
        "max_arc_length_defect": float(np.max(frame.line.arc_length_defect())),
    }


LINE_COLUMNS = ("tau", "x", "y", "z", "xi3", "log_strength")
MESH_COLUMNS = ("xi1", "xi2", "xi3", "x", "y", "z", "omega")
PROFILE_COLUMNS = ("xi3", "omega", "f")


@dataclass(frozen=True)
class ChartSamples:
    """Plot data of one frame: the central line, a coordinate mesh and Ω/f on the axis."""

    line: np.ndarray
    mesh: np.ndarray
    profile: np.ndarray


def chart_samples(frame: FieldLineFrame, *, line_points: int = 257, radial: int = 5, axial: int = 9) -> ChartSamples:
    """
    Sample the chart for plotting.

    The mesh is a radial x radial x axial grid of ξ with |ξᵢ| <= 0.6·10ℓ and ξ₃
    inside 90% of the traced range, mapped to x(ξ).
    """
    if line_points < 2 or radial < 2 or axial < 2:
        raise ValueError("sample counts must be >= 2")
    lo, hi = frame.xi3_range
    tau = np.linspace(frame.line.tau[0], frame.line.tau[-1], line_points)
    line = np.column_stack([tau, frame.line(tau), frame.xi3_of_tau(tau), frame.log_strength(tau)])

    half = 0.6 * frame.chart_radius
    t = np.linspace(-half, half, radial)
    xi3 = np.linspace(0.9 * lo, 0.9 * hi, axial)
    xi = np.stack(np.meshgrid(t, t, xi3, indexing="ij"), axis=-1).reshape(-1, 3)
    x, omega = frame.from_chart(xi, with_factor=True)
    mesh = np.column_stack([xi, x, omega])

    axis_xi = np.column_stack([np.zeros((axial, 2)), xi3])
    profile = np.column_stack([xi3, frame.conformal_factor(axis_xi), frame.f(xi3)])
    return ChartSamples(line, mesh, profile)


@dataclass(frozen=True)
class PairCheck:
    """
    Consistency data for a base point y and a probe z.

    Attributes:
        y: Base point of the frame.
        z: Probe.
        distance: |y - π(z)|.
        spin_ratio: ℓ‖P↑_y(z) - P↑_{π(z)}(z)‖ / |y - π(z)|.
        xi_ratio: |ξ⊥^y(z)| / |y - π(z)|, expected in [½, 2].
    """

    y: tuple[float, float, float]
    z: tuple[float, float, float]
    distance: float
    spin_ratio: float
    xi_ratio: float

    @property
    def ok(self) -> bool:
        return self.distance == 0.0 or 0.5 <= self.xi_ratio <= 2.0


def pair_checks(
    frames: Sequence[FieldLineFrame],
    probes,
    *,
    max_workers: int | None = None,
) -> list[PairCheck]:
    """Spin consistency and transverse distance ratios for every frame and probe."""
    probes = np.atleast_2d(np.asarray(probes, dtype=float))

    def one(frame: FieldLineFrame) -> list[PairCheck]:
        rows = []
        feet = frame.project(probes)
        xi = frame.to_chart(probes)
        spin_y = frame.spin_projection(probes)
        for k, z in enumerate(probes):
            dist = float(np.linalg.norm(frame.base - feet[k]))
            if dist == 0.0:
                rows.append(PairCheck(tuple(frame.base.tolist()), tuple(z.tolist()), 0.0, 0.0, 1.0))
                continue
            other = build_frame(
                frame.field, feet[k], frame.ell, tau_max=frame.line.tau_max, samples=len(frame.line.tau)
            )
            diff = float(np.linalg.norm(spin_y[k] - other.spin_projection(z), ord=2))
            rows.append(
                PairCheck(
                    tuple(frame.base.tolist()),
                    tuple(z.tolist()),
                    dist,
                    diff * frame.ell / dist,
                    float(np.linalg.norm(xi[k, :2])) / dist,
                )
            )
        return rows

    return [row for rows in map_parallel(one, frames, max_workers) for row in rows]


# ---------------------------------------------------------------------------
# Gaussian localization on a lattice of field lines
# ---------------------------------------------------------------------------


def eta_for(lam: float) -> float:
    """Localization strength paired with the spin-allocation parameter λ."""
    return 0.5 * lam


@dataclass(frozen=True)
class TubeGrid:
    """
    Square lattice y_j on 𝒫 with spacing b^{-1/2} and Gaussian localizers
    v_j(x) = exp(-ηb/4·|ξ⊥^{(j)}(x)|²).

    For a constant field every frame is a translate of the base frame;
    otherwise one frame per lattice point is built.

    Attributes:
        frame: Base frame; the lattice lives on its plane.
        eta: Localization strength, 0 < η <= 1/4.
        nodes: Lattice coordinates in the plane (m, 2).
        frames: Per-node frames, None for translates.
    """

    frame: FieldLineFrame
    eta: float
    nodes: np.ndarray
    frames: tuple[FieldLineFrame, ...] | None = None

    @property
    def b(self) -> float:
        return self.frame.b

    @property
    def spacing(self) -> float:
        return self.b**-0.5

    @property
    def lattice_radius(self) -> float:
        return float(np.max(np.linalg.norm(self.nodes, axis=-1)))

    @property
    def points(self) -> np.ndarray:
        return self.frame.base + self.nodes @ self.frame.rotation[:, :2].T

    def transverse(self, x) -> np.ndarray:
        """ξ⊥^{(j)}(x) for probes (n, 3) and all nodes: (n, m, 2), NaN outside charts."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.frames is None:
            local = (x - self.frame.base) @ self.frame.rotation[:, :2]
            return local[:, None, :] - self.nodes[None, :, :]
        cols = [frame.to_chart(x, strict=False)[:, :2] for frame in self.frames]
        return np.stack(cols, axis=1)

    def localizers(self, x) -> np.ndarray:
        r2 = np.sum(self.transverse(x) ** 2, axis=-1)
        return np.exp(-0.25 * self.eta * self.b * np.nan_to_num(r2, nan=np.inf))

    def tail_bound(self, x, power: int, gamma_exp: float) -> np.ndarray:
        """Lattice-sum tail of (ηb)^κ r^{2κ} v^γ beyond the lattice disk."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        local = (x - self.frame.base) @ self.frame.rotation[:, :2]
        d = self.lattice_radius - np.linalg.norm(local, axis=-1) - np.sqrt(2.0) * self.spacing
        if np.any(d <= 0.0):
            raise NumericalFailure("probe too close to the lattice edge", lattice_radius=self.lattice_radius)
        c = 0.25 * gamma_exp * self.eta * self.b
        eb = self.eta * self.b
        upper = gamma(power + 1) * gammaincc(power + 1, c * d * d)
        return np.pi * eb**power * c ** (-power - 1) * upper / self.spacing**2

    def moment_sums(self, x, power: int = 0, gamma_exp: float = 2.0, tol: float = 1e-8) -> np.ndarray:
        """
        Σ_j (ηb)^κ |ξ⊥^{(j)}(x)|^{2κ} v_j(x)^γ at probes.

        Raises:
            NumericalFailure: The tail bound exceeds tol relative to a sum.
        """
        r2 = np.sum(self.transverse(x) ** 2, axis=-1)
        v = self.localizers(x)
        weights = (self.eta * self.b * np.nan_to_num(r2)) ** power
        sums = np.sum(weights * v**gamma_exp, axis=-1)
        tail = self.tail_bound(x, power, gamma_exp)
        if np.any(tail > tol * sums):
            raise NumericalFailure("lattice truncation insufficient", max_tail=float(np.max(tail)))
        return sums

    def spin_allocation(self, x, lam: float, ell: float, c0: float) -> np.ndarray:
        """Minimum eigenvalue of Σ_j v_j⁴[b(λ - η²b|ξ⊥^{(j)}|²)P↑_j + C₀ℓ⁻²] at probes."""
        a, s0 = self._allocation_parts(x, lam)
        return np.linalg.eigvalsh(a + (c0 * s0 / ell**2)[:, None, None] * np.eye(2))[:, 0]

    def _allocation_parts(self, x, lam: float) -> tuple[np.ndarray, np.ndarray]:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        r2 = np.nan_to_num(np.sum(self.transverse(x) ** 2, axis=-1))
        v4 = self.localizers(x) ** 4
        weight = v4 * self.b * (lam - self.eta**2 * self.b * r2)
        if self.frames is None:
            proj = spin_up(self.frame.rotation[:, 2])
            a = np.sum(weight, axis=-1)[:, None, None] * proj
        else:
            projs = np.nan_to_num(np.stack([f.spin_projection(x, strict=False) for f in self.frames], axis=1))
            a = np.einsum("nm,nmab->nab", weight, projs)
        return a, np.sum(v4, axis=-1)

    def calibrate_c0(self, x, lam: float, ell: float) -> float:
        """Smallest C₀ >= 0 making the allocation matrix nonnegative at every probe."""
        a, s0 = self._allocation_parts(x, lam)
        low = np.linalg.eigvalsh(a)[:, 0]
        return float(max(0.0, np.max(-low * ell**2 / s0)))


def tube_grid(
    frame: FieldLineFrame,
    eta: float,
    radius: float,
    *,
    offset=(0.0, 0.0),
    max_workers: int | None = None,
) -> TubeGrid:
    """
    Lattice of spacing b^{-1/2} on the frame's plane within the given radius.

    Args:
        frame: Base frame.
        eta: 0 < η <= 1/4.
        radius: Lattice disk radius.
        offset: Lattice shift in units of the spacing.
    """
    if not 0.0 < eta <= 0.25:
        raise ValueError("eta must lie in (0, 1/4]")
    if frame.b < 1.0:
        raise ValueError("b must be >= 1")
    spacing = frame.b**-0.5
    count = int(np.ceil(radius / spacing)) + 1
    axis = np.arange(-count, count + 1, dtype=float)
    mesh = np.stack(np.meshgrid(axis, axis, indexing="ij"), axis=-1).reshape(-1, 2)
    nodes = spacing * (mesh + np.asarray(offset, dtype=float))
    nodes = nodes[np.linalg.norm(nodes, axis=-1) <= radius]
    frames = None
    if not frame.field.is_constant:
        points = frame.base + nodes @ frame.rotation[:, :2].T
        samples = len(frame.line.tau)

        def neighbour(y):
            return build_frame(frame.field, y, frame.ell, tau_max=frame.line.tau_max, samples=samples)

        frames = tuple(map_parallel(neighbour, points, max_workers))
    log.info("tube grid: %d nodes, spacing %.3g, η %.3g", len(nodes), spacing, eta)
    return TubeGrid(frame, float(eta), nodes, frames)


# ---------------------------------------------------------------------------
# Magnetic localization identity on a periodic grid
# ---------------------------------------------------------------------------


def _grid_derivative(f: np.ndarray, axis: int, step: float, mode: str) -> np.ndarray:
    if mode == "spectral":
        n = f.shape[axis]
        k = 2.0 * np.pi * np.fft.fftfreq(n, d=step)
        shape = [1] * f.ndim
        shape[axis] = n
        return np.fft.ifft(1j * k.reshape(shape) * np.fft.fft(f, axis=axis), axis=axis)
    return (np.roll(f, -1, axis=axis) - np.roll(f, 1, axis=axis)) / (2.0 * step)


def _const_dirac(psi: np.ndarray, alpha: list[np.ndarray], steps: Sequence[float], mode: str) -> np.ndarray:
    out = np.zeros_like(psi)
    for k in range(3):
        cov = -1j * _grid_derivative(psi, k + 1, steps[k], mode) + alpha[k] * psi
        out += np.einsum("ab,b...->a...", _SIGMA[k], cov)
    return out


def magnetic_localization_residual(
    b: float,
    eta: float,
    *,
    n: int = 64,
    n3: int = 8,
    length: float | None = None,
    mode: str = "spectral",
    modes: int = 2,
    rng: np.random.Generator | None = None,
) -> float:
    """
    ‖𝒟_η v²ψ - v²𝒟̃ψ - 2iηb v²(σ¹ξ₁ + σ²ξ₂)σ↑ψ‖ / ‖ψ‖ on a periodic grid.

    𝒟̃ is the constant-field Dirac operator with α_c = (b/2)(ξ₁dξ₂ - ξ₂dξ₁),
    𝒟_η uses (1 + 2η)α_c, v² = exp(-ηbξ⊥²/2) and ψ is a random
    trigonometric spinor with |frequency index| <= modes. mode is
    "spectral" (FFT derivatives) or "stencil" (second-order central
    differences).
    """
    if mode not in ("spectral", "stencil"):
        raise ValueError("mode must be 'spectral' or 'stencil'")
    if not b > 0:
        raise ValueError("b must be > 0")
    if eta < 0:
        raise ValueError("eta must be >= 0")
    rng = rng or np.random.default_rng(0)
    length = length or 40.0 * b**-0.5
    shape = (n, n, n3)
    steps = [length / s for s in shape]
    axes = [-0.5 * length + steps[k] * np.arange(shape[k]) for k in range(3)]
    xi1, xi2, xi3 = np.meshgrid(*axes, indexing="ij")

    freq = np.arange(-modes, modes + 1)
    psi = np.zeros((2,) + shape, dtype=complex)
    for f1 in freq:
        for f2 in freq:
            for f3 in freq:
                coeff = rng.normal(size=2) + 1j * rng.normal(size=2)
                phase = np.exp(2j * np.pi * (f1 * xi1 + f2 * xi2 + f3 * xi3) / length)
                psi += coeff[:, None, None, None] * phase

    alpha = [-0.5 * b * xi2, 0.5 * b * xi1, np.zeros_like(xi1)]
    wide = [(1.0 + 2.0 * eta) * a for a in alpha]
    v2 = np.exp(-0.5 * eta * b * (xi1**2 + xi2**2))

    lhs = _const_dirac(v2 * psi, wide, steps, mode)
    rhs = v2 * _const_dirac(psi, alpha, steps, mode)
    up = np.einsum("ab,b...->a...", _SPIN_UP, psi)
    transverse = np.einsum("ab,b...->a...", _SIGMA[0], xi1 * up) + np.einsum("ab,b...->a...", _SIGMA[1], xi2 * up)
    residual = lhs - rhs - 2j * eta * b * v2 * transverse
    return float(np.sqrt(np.sum(np.abs(residual) ** 2) / np.sum(np.abs(psi) ** 2)))
