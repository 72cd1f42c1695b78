"""Per-ball approximate fields and gauges, and the transverse line-integral gauge.

On a strong ball the field is replaced by one that agrees with B on
B(x_i, 6ℓ_i) and equals the constant B(x_i) outside B(x_i, 7ℓ_i):

    B_i = B(x_i) + ∇×(χ̃_i A♯_i),   A_i = χ̃_i A♯_i + ½ B(x_i) × (x - x_i),

with A♯_i the Poincaré gauge of B - B(x_i) based at x_i. On a weak ball the
field is cut off instead:

    A_i = A - (1 - χ̃_i) Â_i,   B_i = χ̃_i B + ∇χ̃_i × Â_i,

with Â_i the Poincaré gauge of B at x_i, so B_i vanishes outside
B(x_i, 7ℓ_i).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss

from maglt.core.covering import CUTOFF_RADII, BallCover
from maglt.core.errors import QuadratureError, RegularityError
from maglt.core.field_model import (
    ConstantField,
    MagneticFieldModel,
    assess_regularity,
    gauge_for,
    numerical_curl,
    numerical_jacobian,
    poincare_gauge,
    superpose,
)
from maglt.core.logging_config import get_logger
from maglt.core.profiles import plateau, plateau_derivative
from maglt.core.sampling import random_ball_points, shell_points

log = get_logger(__name__)

VectorFn = Callable[[np.ndarray], np.ndarray]


def _chi_tilde(center: np.ndarray, ell: float) -> tuple[VectorFn, VectorFn]:
    inner, outer = CUTOFF_RADII["chi_tilde"]

    def value(x):
        r = np.linalg.norm(np.asarray(x, dtype=float) - center, axis=-1)
        return plateau(r, inner * ell, outer * ell)

    def gradient(x):
        d = np.asarray(x, dtype=float) - center
        r = np.linalg.norm(d, axis=-1)
        dr = plateau_derivative(r, inner * ell, outer * ell)
        return d * np.divide(dr, r, out=np.zeros_like(r), where=r > 0)[..., None]

    return value, gradient


@dataclass(frozen=True)
class LocalField:
    """
    Approximate field and gauge attached to one ball of a cover.

    Attributes:
        index: Ball index i.
        kind: "strong" or "weak".
        center: x_i.
        ell: ℓ_i.
        epsilon: Scale parameter of the cover.
        B: Evaluator of B_i.
        A: Evaluator of A_i with curl A_i = B_i.
        exterior: B_i outside B(x_i, 7ℓ_i): B(x_i) when strong, zero when weak.
    """

    index: int
    kind: str
    center: np.ndarray
    ell: float
    epsilon: float
    B: VectorFn
    A: VectorFn
    exterior: np.ndarray

    def samples(self, rng: np.random.Generator, radius_factor: float, size: int) -> np.ndarray:
        return random_ball_points(rng, self.center, radius_factor * self.ell, size)

    def identity_defect(self, field: MagneticFieldModel, points) -> float:
        """max |B_i - B| / |B(x_i)| at points (meant inside B(x_i, 6ℓ_i))."""
        scale = max(float(np.linalg.norm(field(self.center))), 1.0)
        return float(np.max(np.linalg.norm(self.B(points) - field(points), axis=-1))) / scale

    def deviation_ratio(self, points) -> float:
        """max |B_i - B(x_i)| / (ε|B(x_i)|), bounded by 100 on strong balls."""
        b0 = float(np.linalg.norm(self.exterior))
        dev = np.max(np.linalg.norm(self.B(points) - self.exterior, axis=-1))
        return float(dev) / (self.epsilon * b0)

    def sup_ratio(self, points) -> float:
        """max |B_i| / (ε⁻²ℓ_i⁻²) at points."""
        peak = float(np.max(np.linalg.norm(self.B(points), axis=-1)))
        return peak * self.epsilon**2 * self.ell**2

    def curl_defect(self, points, h: float | None = None) -> float:
        """max |curl A_i - B_i| relative to 1 + max |B_i|."""
        h = h or 1e-4 * self.ell
        curl = numerical_curl(self.A, points, h)
        b = self.B(points)
        return float(np.max(np.linalg.norm(curl - b, axis=-1))) / (1.0 + float(np.max(np.linalg.norm(b, axis=-1))))


def strong_local_field(
    field: MagneticFieldModel,
    cover: BallCover,
    i: int,
    *,
    check_regularity: bool = True,
    K: float = 1.0,
) -> LocalField:
    """
    Local field on a strong ball.

    Raises:
        ValueError: Index i is not strong.
        RegularityError: The field is not (D̃_i, K)-regular.
    """
    if not cover.strong[i]:
        raise ValueError(f"index {i} is not strong")
    center = np.asarray(cover.centers[i], dtype=float)
    ell = float(cover.radii[i])
    b0 = np.asarray(field(center), dtype=float)
    if check_regularity:
        report = assess_regularity(field, center, 10.0 * ell, K, cover.epsilon, require_strong=True)
        if report.measured_K > K:
            raise RegularityError(
                "field is not regular on the enlarged ball",
                index=int(i),
                measured_K=report.measured_K,
                K=K,
            )
    sharp = poincare_gauge(superpose(field, ConstantField(-b0)), center)
    chi, grad_chi = _chi_tilde(center, ell)

    def b_local(x):
        x = np.asarray(x, dtype=float)
        c = chi(x)[..., None]
        return b0 + c * (field(x) - b0) + np.cross(grad_chi(x), sharp(x))

    def a_local(x):
        x = np.asarray(x, dtype=float)
        return chi(x)[..., None] * sharp(x) + 0.5 * np.cross(b0, x - center)

    return LocalField(int(i), "strong", center, ell, cover.epsilon, b_local, a_local, b0)


def weak_local_field(
    field: MagneticFieldModel,
    cover: BallCover,
    i: int,
    potential: VectorFn | None = None,
) -> LocalField:
    """
    Local field on a weak ball.

    Args:
        potential: Global gauge A of the field; defaults to the closed form
            or the Poincaré gauge at the origin.
    """
    if cover.strong[i]:
        raise ValueError(f"index {i} is strong")
    center = np.asarray(cover.centers[i], dtype=float)
    ell = float(cover.radii[i])
    hat = poincare_gauge(field, center)
    global_a = potential or gauge_for(field)
    chi, grad_chi = _chi_tilde(center, ell)

    def b_local(x):
        x = np.asarray(x, dtype=float)
        return chi(x)[..., None] * field(x) + np.cross(grad_chi(x), hat(x))

    def a_local(x):
        x = np.asarray(x, dtype=float)
        return global_a(x) - (1.0 - chi(x))[..., None] * hat(x)

    return LocalField(int(i), "weak", center, ell, cover.epsilon, b_local, a_local, np.zeros(3))


def local_field(field: MagneticFieldModel, cover: BallCover, i: int, **kwargs) -> LocalField:
    if cover.strong[i]:
        return strong_local_field(field, cover, i, **kwargs)
    return weak_local_field(field, cover, i)


def local_field_diagnostics(
    field: MagneticFieldModel, cover: BallCover, i: int, rng: np.random.Generator, samples: int = 64
) -> dict[str, float | int | str | bool]:
    """
    Sampled checks of the local field on ball i.

    Strong balls report the agreement with B on B(x_i, 6ℓ_i), the deviation
    ratio on B(x_i, 10ℓ_i) and the exterior defect on the shell 7ℓ_i..10ℓ_i.
    Weak balls report the sup ratio on B(x_i, 7ℓ_i) and the exterior defect.
    A strong ball that fails the regularity check is reported with its error.
    """
    kind = "strong" if cover.strong[i] else "weak"
    try:
        local = local_field(field, cover, i)
    except RegularityError as exc:
        return {"index": int(i), "kind": kind, "error": exc.message, "ok": False}
    shell = shell_points(local.center, 7.0 * local.ell, 10.0 * local.ell)
    exterior = float(np.max(np.linalg.norm(local.B(shell) - local.exterior, axis=-1)))
    report: dict[str, float | int | str | bool] = {
        "index": int(i),
        "kind": kind,
        "ell": local.ell,
        "exterior_defect": exterior,
        "curl_defect": local.curl_defect(local.samples(rng, 8.0, min(samples, 30))),
    }
    if kind == "strong":
        report["identity_defect"] = local.identity_defect(field, local.samples(rng, 6.0, samples))
        report["deviation_ratio"] = local.deviation_ratio(local.samples(rng, 10.0, samples))
        report["ok"] = report["deviation_ratio"] <= 100.0
    else:
        report["sup_ratio"] = local.sup_ratio(local.samples(rng, 7.0, samples))
        report["ok"] = report["sup_ratio"] <= 10.0 and exterior == 0.0
    return report


# ---------------------------------------------------------------------------
# Transverse gauge
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TransverseGauge:
    """
    Gauge α with dα = β built by contracting along ξ⊥ at fixed ξ₃.

    Two-forms are stored as their dual vectors v = (β₂₃, β₃₁, β₁₂). With
    ξ(s) = (sξ₁, sξ₂, ξ₃),

        α₁ = -ξ₂ ∫₀¹ s v₃(ξ(s)) ds,   α₂ = ξ₁ ∫₀¹ s v₃(ξ(s)) ds,
        α₃ = ∫₀¹ (ξ₂ v₁ - ξ₁ v₂)(ξ(s)) ds,

    so α vanishes on the ξ₃ axis. The third component carries weight 1
    because ξ₃ is not contracted.

    Attributes:
        beta: Dual vector of β, points (n, 3) -> (n, 3); must be closed.
        tol: Relative agreement between successive Gauss-Legendre rules.
        max_nodes: Node cap of the doubling sequence.
    """

    beta: VectorFn
    tol: float = 1e-11
    max_nodes: int = 512

    def __call__(self, xi) -> np.ndarray:
        return self.alpha(xi)

    def _rule(self, xi: np.ndarray, nodes: int) -> np.ndarray:
        s, w = leggauss(nodes)
        s = 0.5 * (s + 1.0)
        w = 0.5 * w
        ray = np.repeat(xi[None, :, :], nodes, axis=0)
        ray[..., :2] *= s[:, None, None]
        v = np.asarray(self.beta(ray.reshape(-1, 3))).reshape(ray.shape)
        weighted = np.tensordot(w * s, v[..., 2], axes=1)
        plain = np.tensordot(w, xi[None, :, 1] * v[..., 0] - xi[None, :, 0] * v[..., 1], axes=1)
        return np.stack([-xi[:, 1] * weighted, xi[:, 0] * weighted, plain], axis=-1)

    def alpha(self, xi) -> np.ndarray:
        """α at points (n, 3) or (3,).

        Raises:
            QuadratureError: Successive rules never agree.
        """
        xi_arr = np.asarray(xi, dtype=float)
        flat = np.atleast_2d(xi_arr)
        previous = None
        nodes = 8
        while nodes <= self.max_nodes:
            value = self._rule(flat, nodes)
            if previous is not None:
                scale = 1.0 + float(np.max(np.abs(value)))
                if float(np.max(np.abs(value - previous))) <= self.tol * scale:
                    return value[0] if xi_arr.ndim == 1 else value
            previous = value
            nodes *= 2
        raise QuadratureError("transverse gauge quadrature did not converge", max_nodes=self.max_nodes)

    def curl_defect(self, points, h: float = 1e-4) -> float:
        """max |dα - β| over points, by central differences."""
        curl = numerical_curl(self.alpha, np.atleast_2d(points), h)
        return float(np.max(np.linalg.norm(curl - self.beta(np.atleast_2d(points)), axis=-1)))

    def moment(self, xi, k: int, m: int, window: float, samples: int = 21, nodes: int = 24) -> float:
        """
        b_{k,m}(ξ⊥) = Σ_{j=1,2} ∫ over u between 0 and ξ_j of
        |u|^k sup_z ‖∇^m β‖ at u in slot j, the sup taken over a grid of the
        other two coordinates in [-window, window]² together with the
        contraction ray of ξ.
        """
        if m not in (0, 1):
            raise ValueError("m must be 0 or 1")
        xi = np.asarray(xi, dtype=float)
        grid = np.linspace(-window, window, samples)
        za, zb = (g.ravel() for g in np.meshgrid(grid, grid, indexing="ij"))
        u_nodes, u_weights = leggauss(nodes)
        total = 0.0
        for slot in (0, 1):
            end = xi[slot]
            if end == 0.0:
                continue
            u = 0.5 * end * (u_nodes + 1.0)
            w = 0.5 * abs(end) * u_weights
            others = [j for j in range(3) if j != slot]
            sups = np.empty(nodes)
            for q, uq in enumerate(u):
                pts = np.empty((len(za) + 1, 3))
                pts[:-1, slot] = uq
                pts[:-1, others[0]] = za
                pts[:-1, others[1]] = zb
                # the contraction ray point with this slot value
                s = uq / end
                pts[-1] = (s * xi[0], s * xi[1], xi[2])
                pts[-1, slot] = uq
                sups[q] = np.max(self._norm(pts, m))
            total += float(np.sum(w * np.abs(u) ** k * sups))
        return total

    def _norm(self, pts: np.ndarray, m: int) -> np.ndarray:
        if m == 0:
            return np.linalg.norm(self.beta(pts), axis=-1)
        jac = numerical_jacobian(self.beta, pts, 1e-5)
        return np.linalg.norm(jac.reshape(len(pts), -1), axis=-1)

    def bound_ratio(self, xi, window: float) -> float:
        """‖α(ξ)‖ / (b₀,₀ + b₁,₁), bounded by a universal constant."""
        denom = self.moment(xi, 0, 0, window) + self.moment(xi, 1, 1, window)
        value = float(np.linalg.norm(self.alpha(xi)))
        if denom == 0.0:
            return 0.0 if value == 0.0 else np.inf
        return value / denom


def a_formula(beta: VectorFn, **kwargs) -> TransverseGauge:
    """Transverse gauge of a closed two-form given by its dual vector."""
    return TransverseGauge(beta, **kwargs)


def constant_two_form(b: float) -> VectorFn:
    """β_c = b dξ₁∧dξ₂ as a dual vector field."""

    def fn(xi):
        out = np.zeros_like(np.asarray(xi, dtype=float))
        out[..., 2] = b
        return out

    return fn


def linear_constant_gauge(b: float) -> VectorFn:
    """α_c = (b/2)(ξ₁dξ₂ - ξ₂dξ₁)."""

    def fn(xi):
        xi = np.asarray(xi, dtype=float)
        out = np.zeros_like(xi)
        out[..., 0] = -0.5 * b * xi[..., 1]
        out[..., 1] = 0.5 * b * xi[..., 0]
        return out

    return fn
