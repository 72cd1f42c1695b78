"""Magnetic field models, derivative jets and gauge constructions.

Every model is an immutable value: evaluating it never mutates state, so a
model can be shared freely between worker threads. Models evaluate on arrays
of points with shape (..., 3) and return field vectors of the same shape.

Derivatives up to order four are obtained from a Taylor jet. Analytic models
accept complex coordinates and their jet comes from Cauchy's formula on a
small complex torus, evaluated with an FFT; this is accurate to near machine
precision for all orders. Non-analytic models fall back to fourth-order
central differences on a 7x7x7 stencil.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Callable, Mapping, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss

from maglt.core.errors import QuadratureError, RegularityError
from maglt.core.extremize import ball_extrema
from maglt.core.logging_config import get_logger
from maglt.core.profiles import shell_bump, shell_bump_derivative
from maglt.core.sampling import ball_points

log = get_logger(__name__)

MAX_ORDER = 4

MULTI_INDICES: tuple[tuple[int, int, int], ...] = tuple(
    alpha
    for order in range(MAX_ORDER + 1)
    for alpha in sorted(
        ((i, j, order - i - j) for i in range(order + 1) for j in range(order + 1 - i)),
        reverse=True,
    )
)

_CAUCHY_NODES = 12
_CAUCHY_RADIUS = 0.15
_FD_STEP = 1e-3
_CHUNK = 32
_VANISH_TOL = 1e-6

# fourth-order central stencils on offsets -3..3, one row per derivative order
_FD_WEIGHTS = np.array(
    [
        [0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
        [0.0, 1 / 12, -2 / 3, 0.0, 2 / 3, -1 / 12, 0.0],
        [0.0, -1 / 12, 4 / 3, -5 / 2, 4 / 3, -1 / 12, 0.0],
        [1 / 8, -1.0, 13 / 8, 0.0, -13 / 8, 1.0, -1 / 8],
        [-1 / 6, 2.0, -13 / 2, 28 / 3, -13 / 2, 2.0, -1 / 6],
    ]
)

_SIGMA = np.array(
    [
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)


def pauli_matrices() -> np.ndarray:
    """Return σ¹, σ², σ³ stacked as a (3, 2, 2) array."""
    return _SIGMA.copy()


def sigma_dot(v: np.ndarray) -> np.ndarray:
    """Return σ·v with shape (..., 2, 2) for vectors v of shape (..., 3)."""
    return np.einsum("...k,kab->...ab", np.asarray(v), _SIGMA)


# ---------------------------------------------------------------------------
# Taylor jets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Jet:
    """
    Partial derivatives of a vector function at a batch of points.

    Attributes:
        values: Array (npts, len(MULTI_INDICES), m) holding ∂^α f.
        max_order: Highest order present.
    """

    values: np.ndarray
    max_order: int = MAX_ORDER

    def partial(self, alpha: tuple[int, int, int]) -> np.ndarray:
        return self.values[:, MULTI_INDICES.index(tuple(alpha)), :]

    def norm(self, order: int) -> np.ndarray:
        """Frobenius norm of the full order-γ derivative tensor, per point."""
        if order > self.max_order:
            raise ValueError(f"order must be <= {self.max_order}")
        total = np.zeros(self.values.shape[0])
        for idx, alpha in enumerate(MULTI_INDICES):
            if sum(alpha) != order:
                continue
            mult = math.factorial(order) / math.prod(math.factorial(a) for a in alpha)
            total += mult * np.sum(self.values[:, idx, :] ** 2, axis=-1)
        return np.sqrt(total)

    def tensor(self, order: int) -> np.ndarray:
        """Return the symmetric tensor (npts, m, 3, ..., 3) of order-γ derivatives."""
        npts, _, m = self.values.shape
        out = np.zeros((npts, m) + (3,) * order)
        for slots in np.ndindex(*(3,) * order):
            alpha = tuple(slots.count(k) for k in range(3))
            out[(slice(None), slice(None)) + slots] = self.partial(alpha)
        return out


def taylor_jet(
    fn: Callable[[np.ndarray], np.ndarray],
    points: np.ndarray,
    scale: float,
    *,
    analytic: bool = True,
    max_order: int = MAX_ORDER,
) -> Jet:
    """
    Compute all partial derivatives of fn up to max_order at each point.

    Args:
        fn: Vectorized function (..., 3) -> (..., m). Must accept complex
            input when analytic is True.
        points: Array (npts, 3).
        scale: Length on which fn varies; sets the Cauchy radius or the
            finite-difference step.
        analytic: Use the Cauchy/FFT jet instead of finite differences.
        max_order: Highest derivative order (at most 4).
    """
    if scale <= 0 or not math.isfinite(scale):
        raise ValueError("scale must be positive and finite")
    if max_order > MAX_ORDER:
        raise ValueError(f"max_order must be <= {MAX_ORDER}")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    chunks = []
    for start in range(0, pts.shape[0], _CHUNK):
        block = pts[start : start + _CHUNK]
        chunks.append(_cauchy_block(fn, block, scale) if analytic else _fd_block(fn, block, scale))
    return Jet(values=np.concatenate(chunks, axis=0), max_order=max_order)


def _cauchy_block(fn, block: np.ndarray, scale: float) -> np.ndarray:
    n = _CAUCHY_NODES
    radius = _CAUCHY_RADIUS * scale
    roots = np.exp(2j * np.pi * np.arange(n) / n)
    torus = radius * np.stack(np.meshgrid(roots, roots, roots, indexing="ij"), axis=-1)
    values = np.asarray(fn(block[:, None, None, None, :] + torus[None]))
    coeffs = np.fft.fftn(values, axes=(1, 2, 3)) / n**3
    out = np.empty((block.shape[0], len(MULTI_INDICES), values.shape[-1]))
    for idx, alpha in enumerate(MULTI_INDICES):
        factor = math.prod(math.factorial(a) for a in alpha) / radius ** sum(alpha)
        out[:, idx, :] = (coeffs[:, alpha[0], alpha[1], alpha[2], :] * factor).real
    return out


def _fd_block(fn, block: np.ndarray, scale: float) -> np.ndarray:
    step = _FD_STEP * scale
    offsets = step * np.arange(-3, 4)
    stencil = np.stack(np.meshgrid(offsets, offsets, offsets, indexing="ij"), axis=-1)
    values = np.asarray(fn(block[:, None, None, None, :] + stencil[None]), dtype=float)
    weights = _FD_WEIGHTS / step ** np.arange(MAX_ORDER + 1)[:, None]
    out = np.empty((block.shape[0], len(MULTI_INDICES), values.shape[-1]))
    for idx, alpha in enumerate(MULTI_INDICES):
        out[:, idx, :] = np.einsum(
            "i,j,k,cijkm->cm", weights[alpha[0]], weights[alpha[1]], weights[alpha[2]], values
        )
    return out


def _zero_jet(npts: int, m: int, value: np.ndarray) -> Jet:
    values = np.zeros((npts, len(MULTI_INDICES), m))
    values[:, 0, :] = value
    return Jet(values=values)


# ---------------------------------------------------------------------------
# Vector potentials
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VectorPotential:
    """
    A vector potential A with curl A = B.

    Attributes:
        fn: Vectorized evaluator (..., 3) -> (..., 3).
        gauge_tag: "explicit", "linear-constant" or "poincare".
        base: Base point of a Poincaré gauge, None otherwise.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    gauge_tag: str = "explicit"
    base: tuple[float, float, float] | None = None

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.evaluate(x)

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.fn(np.asarray(x)))

    def shifted(self, grad_phi: Callable[[np.ndarray], np.ndarray]) -> "VectorPotential":
        """Return the gauge-equivalent potential A + ∇φ."""
        fn = self.fn
        return VectorPotential(lambda x: fn(x) + grad_phi(x), self.gauge_tag, self.base)


def numerical_jacobian(fn, x: np.ndarray, h: float) -> np.ndarray:
    """Central-difference Jacobian J[..., i, k] = ∂_k f_i."""
    x = np.asarray(x, dtype=float)
    cols = []
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        cols.append((np.asarray(fn(x + e)) - np.asarray(fn(x - e))) / (2.0 * h))
    return np.stack(cols, axis=-1)


def numerical_curl(fn, x: np.ndarray, h: float) -> np.ndarray:
    """Central-difference curl of a vector function."""
    j = numerical_jacobian(fn, x, h)
    return np.stack(
        [j[..., 2, 1] - j[..., 1, 2], j[..., 0, 2] - j[..., 2, 0], j[..., 1, 0] - j[..., 0, 1]],
        axis=-1,
    )


def numerical_divergence(fn, x: np.ndarray, h: float) -> np.ndarray:
    j = numerical_jacobian(fn, x, h)
    return j[..., 0, 0] + j[..., 1, 1] + j[..., 2, 2]


def dirac_apply(potential: VectorPotential, spinor, x: np.ndarray, h: float) -> np.ndarray:
    """Apply σ·(-i∇ + A) to a spinor field (..., 3) -> (..., 2) by central differences."""
    x = np.asarray(x, dtype=float)
    j = numerical_jacobian(spinor, x, h)
    cov = -1j * j + np.asarray(potential(x))[..., None, :] * np.asarray(spinor(x))[..., :, None]
    return np.einsum("kab,...bk->...a", _SIGMA, cov)


# ---------------------------------------------------------------------------
# Field models
# ---------------------------------------------------------------------------


class MagneticFieldModel(ABC):
    """
    Base class for magnetic fields B: R³ -> R³.

    Subclasses implement _field and length_scale. Analytic subclasses must
    accept complex coordinates in _field.
    """

    name: str = "field"
    analytic: bool = True
    is_constant: bool = False
    div_check_tolerance: float = 1e-6

    def __call__(self, x) -> np.ndarray:
        return self.evaluate(x)

    def evaluate(self, x) -> np.ndarray:
        """Return B(x) for points (..., 3)."""
        x = np.asarray(x)
        if not np.iscomplexobj(x):
            x = x.astype(float, copy=False)
        return self._field(x)

    @abstractmethod
    def _field(self, x: np.ndarray) -> np.ndarray: ...

    @property
    @abstractmethod
    def length_scale(self) -> float:
        """Length on which the field varies; sets jet radii."""

    @property
    def exterior(self) -> np.ndarray | None:
        """Constant value of B outside a bounded set, if any."""
        return None

    @property
    def landmarks(self) -> np.ndarray:
        """Points where the field concentrates its variation; extra seeds for sampled searches."""
        return np.empty((0, 3))

    def vector_potential(self) -> VectorPotential | None:
        """Closed-form gauge, or None when only the Poincaré gauge is available."""
        return None

    def params(self) -> dict[str, Any]:
        return {}

    @property
    def descriptor(self) -> dict[str, Any]:
        return {"name": self.name, "params": self.params()}

    def strength(self, x) -> np.ndarray:
        return np.linalg.norm(self.evaluate(x), axis=-1)

    def direction(self, x) -> np.ndarray:
        """Unit direction n = B/|B|; raises RegularityError where B vanishes."""
        b = self.evaluate(x)
        norm = np.linalg.norm(b, axis=-1, keepdims=True)
        if np.any(norm == 0.0):
            raise RegularityError("direction undefined where the field vanishes")
        return b / norm

    # -- jets ---------------------------------------------------------------

    def _jet_of(self, fn, x, scale: float | None, m: int, value) -> Jet:
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        if self.is_constant:
            return _zero_jet(pts.shape[0], m, value(pts))
        return taylor_jet(fn, pts, scale or self.length_scale, analytic=self.analytic)

    def jet(self, x, scale: float | None = None) -> Jet:
        """Jet of B at points (npts, 3)."""
        return self._jet_of(self.evaluate, x, scale, 3, self.evaluate)

    def strength_jet(self, x, scale: float | None = None) -> Jet:
        """Jet of |B|, computed as sqrt(B·B) so that it continues analytically."""

        def fn(z):
            b = self.evaluate(z)
            return np.sqrt(np.sum(b * b, axis=-1))[..., None]

        return self._jet_of(fn, x, scale, 1, lambda p: self.strength(p)[:, None])

    def direction_jet(self, x, scale: float | None = None) -> Jet:
        def fn(z):
            b = self.evaluate(z)
            return b / np.sqrt(np.sum(b * b, axis=-1))[..., None]

        return self._jet_of(fn, x, scale, 3, self.direction)

    def derivative(self, x, order: int) -> np.ndarray:
        """Return ∇^γB as a tensor (..., 3, 3, ..., 3) for order γ <= 4."""
        pts = np.asarray(x, dtype=float)
        flat = np.atleast_2d(pts)
        tensor = self.jet(flat).tensor(order)
        return tensor[0] if pts.ndim == 1 else tensor

    def derivative_norms(self, x, scale: float | None = None) -> np.ndarray:
        """Return ‖∇^γB‖ for γ = 0..4 as an array (npts, 5)."""
        jet = self.jet(x, scale)
        return np.stack([jet.norm(g) for g in range(MAX_ORDER + 1)], axis=-1)

    def divergence_defect(self, x) -> np.ndarray:
        """|div B| / (|B| + 1) at the given points, from the jet."""
        jet = self.jet(x)
        div = jet.partial((1, 0, 0))[:, 0] + jet.partial((0, 1, 0))[:, 1] + jet.partial((0, 0, 1))[:, 2]
        return np.abs(div) / (1.0 + np.linalg.norm(jet.partial((0, 0, 0)), axis=-1))


def _as_vec(value: Any, key: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float).ravel()
    if arr.shape != (3,):
        raise ValueError(f"{key} must have three components")
    return arr


def _positive(value: Any, key: str) -> float:
    v = float(value)
    if not v > 0:
        raise ValueError(f"{key} must be > 0")
    return v


class ConstantField(MagneticFieldModel):
    """B(x) = b everywhere; gauge A = ½ b × x."""

    name = "constant"
    is_constant = True

    def __init__(self, b: Sequence[float]) -> None:
        self.b = _as_vec(b, "b")

    def _field(self, x):
        return np.broadcast_to(self.b.astype(x.dtype), x.shape).copy()

    @property
    def length_scale(self) -> float:
        strength = float(np.linalg.norm(self.b))
        return strength**-0.5 if strength > 0 else 1.0

    @property
    def exterior(self) -> np.ndarray:
        return self.b.copy()

    def vector_potential(self) -> VectorPotential:
        b = self.b
        return VectorPotential(lambda x: 0.5 * np.cross(b, np.asarray(x)), "linear-constant")

    def params(self) -> dict[str, Any]:
        return {"b": self.b.tolist()}


class ConstantDirectionField(MagneticFieldModel):
    """B = (0, 0, b0(1 + x₁/λ)), a field of fixed direction with linear strength."""

    name = "constant-direction"

    def __init__(self, b0: float, lam: float) -> None:
        self.b0 = _positive(b0, "b0")
        self.lam = _positive(lam, "lam")

    def _field(self, x):
        out = np.zeros_like(x)
        out[..., 2] = self.b0 * (1.0 + x[..., 0] / self.lam)
        return out

    @property
    def length_scale(self) -> float:
        return self.lam

    def vector_potential(self) -> VectorPotential:
        b0, lam = self.b0, self.lam

        def fn(x):
            x = np.asarray(x)
            out = np.zeros_like(x, dtype=np.result_type(x, float))
            out[..., 1] = b0 * (x[..., 0] + x[..., 0] ** 2 / (2.0 * lam))
            return out

        return VectorPotential(fn, "explicit")

    def params(self) -> dict[str, Any]:
        return {"b0": self.b0, "lam": self.lam}


class TubeRegularField(MagneticFieldModel):
    """
    Constant field b ẑ plus a Gaussian magnetic bottle.

    B = b ẑ + κ(∇∂₃G - ẑ ΔG) with G = exp(-|x-c|²/2s²) and κ = ½ a b s².
    The perturbation is a curl, so B is divergence free, and on the axis
    through c the strength is b(1 + aG). A = ½ b ẑ×(x-c) + κ ∇G×ẑ.
    """

    name = "tube-regular"

    def __init__(self, b: float, a: float = 0.1, s: float = 1.0, center=(0.0, 0.0, 0.0)) -> None:
        self.b = _positive(b, "b")
        self.a = float(a)
        if self.a < 0:
            raise ValueError("a must be >= 0")
        self.s = _positive(s, "s")
        self.center = _as_vec(center, "center")

    @property
    def kappa(self) -> float:
        return 0.5 * self.a * self.b * self.s**2

    def _gauss(self, x):
        u = x - self.center
        g = np.exp(-0.5 * np.sum(u * u, axis=-1) / self.s**2)
        return u, g

    def _field(self, x):
        u, g = self._gauss(x)
        s2 = self.s**2
        # ∂_i∂_3 G = G (u_i u_3 / s⁴ - δ_i3 / s²)
        hess_col = g[..., None] * u * u[..., 2:3] / s2**2
        hess_col[..., 2] -= g / s2
        lap = g * (np.sum(u * u, axis=-1) / s2**2 - 3.0 / s2)
        out = self.kappa * hess_col
        out[..., 2] += self.b - self.kappa * lap
        return out

    @property
    def length_scale(self) -> float:
        return self.s

    @property
    def exterior(self) -> np.ndarray:
        return np.array([0.0, 0.0, self.b])

    @property
    def landmarks(self) -> np.ndarray:
        return self.center[None, :].copy()

    def axis_strength(self, x3) -> np.ndarray:
        """|B| on the axis through the center: b(1 + a G)."""
        t = np.asarray(x3, dtype=float) - self.center[2]
        return self.b * (1.0 + self.a * np.exp(-0.5 * t**2 / self.s**2))

    def vector_potential(self) -> VectorPotential:
        center, b, s, kappa = self.center, self.b, self.s, self.kappa

        def fn(x):
            x = np.asarray(x)
            u = x - center
            g = np.exp(-0.5 * np.sum(u * u, axis=-1) / s**2)
            grad = -u * g[..., None] / s**2
            out = np.zeros_like(u)
            out[..., 0] = -0.5 * b * u[..., 1] + kappa * grad[..., 1]
            out[..., 1] = 0.5 * b * u[..., 0] - kappa * grad[..., 0]
            return out

        return VectorPotential(fn, "explicit")

    def params(self) -> dict[str, Any]:
        return {"b": self.b, "a": self.a, "s": self.s, "center": self.center.tolist()}


class LossYauField(MagneticFieldModel):
    """
    Field whose Dirac operator σ·(-i∇ + A) has the zero mode
    ψ = (1+|y|²)^{-3/2}(1 + iσ·y)φ₀ with y = x/a and ⟨φ₀, σφ₀⟩ = w.

    A(x) = -3a⁻¹(1+|y|²)⁻²[(1-|y|²)w + 2(w·y)y + 2 w×y], B = 4A/(a(1+|y|²)),
    so |B| = 12a⁻²(1+|y|²)⁻².
    """

    name = "loss-yau"

    def __init__(self, w=(0.0, 0.0, 1.0), scale: float = 1.0) -> None:
        w = _as_vec(w, "w")
        norm = float(np.linalg.norm(w))
        if norm == 0:
            raise ValueError("w must be nonzero")
        self.w = w / norm
        self.scale = _positive(scale, "scale")

    def _bracket(self, y):
        w = self.w.astype(y.dtype)
        r2 = np.sum(y * y, axis=-1)[..., None]
        wy = np.sum(y * w, axis=-1)[..., None]
        return r2, (1.0 - r2) * w + 2.0 * wy * y + 2.0 * np.cross(w, y)

    def _potential(self, x):
        y = np.asarray(x) / self.scale
        r2, br = self._bracket(y)
        return -3.0 / self.scale * br / (1.0 + r2) ** 2

    def _field(self, x):
        y = x / self.scale
        r2, br = self._bracket(y)
        return -12.0 / self.scale**2 * br / (1.0 + r2) ** 3

    @property
    def length_scale(self) -> float:
        return self.scale

    @property
    def exterior(self) -> np.ndarray:
        return np.zeros(3)

    def vector_potential(self) -> VectorPotential:
        return VectorPotential(self._potential, "explicit")

    @property
    def landmarks(self) -> np.ndarray:
        return np.zeros((1, 3))

    def spin_state(self) -> np.ndarray:
        """Unit spinor φ₀ with σ·w φ₀ = φ₀."""
        vals, vecs = np.linalg.eigh(sigma_dot(self.w))
        return vecs[:, int(np.argmax(vals))]

    def zero_mode(self, x) -> np.ndarray:
        """Closed-form zero mode ψ(x) with shape (..., 2), unnormalized."""
        y = np.asarray(x, dtype=float) / self.scale
        r2 = np.sum(y * y, axis=-1)
        phi0 = self.spin_state()
        spinor = phi0 + 1j * np.einsum("...ab,b->...a", sigma_dot(y), phi0)
        return spinor * (1.0 + r2)[..., None] ** -1.5

    def params(self) -> dict[str, Any]:
        return {"w": self.w.tolist(), "scale": self.scale}


class CompactBumpField(MagneticFieldModel):
    """
    Compactly supported field generated by A = g(r)(-x₂, x₁, 0).

    g(r) = (b/δ²) w(r/δ) with w a smooth bump supported in (1, 3), so B
    vanishes on B(0, δ) and outside B(0, 3δ), and B_δ(x) = δ⁻² B₁(x/δ).
    The profile is smooth but not analytic; derivatives use differences.
    """

    name = "compact-bump"
    analytic = False

    def __init__(self, delta: float = 1.0, b: float = 1.0, center=(0.0, 0.0, 0.0)) -> None:
        self.delta = _positive(delta, "delta")
        self.b = _positive(b, "b")
        self.center = _as_vec(center, "center")

    def _profile(self, r):
        amp = self.b / self.delta**2
        return amp * shell_bump(r / self.delta), amp / self.delta * shell_bump_derivative(r / self.delta)

    def _field(self, x):
        u = np.asarray(x, dtype=float) - self.center
        r = np.linalg.norm(u, axis=-1)
        g, dg = self._profile(r)
        dg_over_r = np.divide(dg, r, out=np.zeros_like(r), where=r > 0)
        out = np.empty_like(u)
        out[..., 0] = -u[..., 0] * u[..., 2] * dg_over_r
        out[..., 1] = -u[..., 1] * u[..., 2] * dg_over_r
        out[..., 2] = 2.0 * g + (u[..., 0] ** 2 + u[..., 1] ** 2) * dg_over_r
        return out

    @property
    def length_scale(self) -> float:
        return self.delta

    @property
    def exterior(self) -> np.ndarray:
        return np.zeros(3)

    def vector_potential(self) -> VectorPotential:
        def fn(x):
            u = np.asarray(x, dtype=float) - self.center
            g, _ = self._profile(np.linalg.norm(u, axis=-1))
            return np.stack([-g * u[..., 1], g * u[..., 0], np.zeros_like(g)], axis=-1)

        return VectorPotential(fn, "explicit")

    @property
    def landmarks(self) -> np.ndarray:
        shell = 2.0 * self.delta * np.vstack([np.eye(3), -np.eye(3)])
        return np.vstack([self.center, self.center + shell])

    def params(self) -> dict[str, Any]:
        return {"delta": self.delta, "b": self.b, "center": self.center.tolist()}


class ScaledField(MagneticFieldModel):
    """Amplitude family B -> factor·B (A -> factor·A)."""

    name = "scaled"

    def __init__(self, base: MagneticFieldModel, factor: float) -> None:
        self.base = base
        self.factor = float(factor)
        self.analytic = base.analytic
        self.is_constant = base.is_constant

    def _field(self, x):
        return self.factor * self.base.evaluate(x)

    @property
    def length_scale(self) -> float:
        return self.base.length_scale

    @property
    def exterior(self) -> np.ndarray | None:
        ext = self.base.exterior
        return None if ext is None else self.factor * ext

    @property
    def landmarks(self) -> np.ndarray:
        return self.base.landmarks

    def vector_potential(self) -> VectorPotential | None:
        pot = self.base.vector_potential()
        if pot is None:
            return None
        factor = self.factor
        return VectorPotential(lambda x: factor * pot(x), pot.gauge_tag, pot.base)

    def params(self) -> dict[str, Any]:
        return {"base": self.base.descriptor, "factor": self.factor}


class RescaledField(MagneticFieldModel):
    """Length rescaling B_s(x) = s² B(s x), A_s(x) = s A(s x)."""

    name = "rescaled"

    def __init__(self, base: MagneticFieldModel, s: float) -> None:
        self.base = base
        self.s = _positive(s, "s")
        self.analytic = base.analytic
        self.is_constant = base.is_constant

    def _field(self, x):
        return self.s**2 * self.base.evaluate(self.s * x)

    @property
    def length_scale(self) -> float:
        return self.base.length_scale / self.s

    @property
    def exterior(self) -> np.ndarray | None:
        ext = self.base.exterior
        return None if ext is None else self.s**2 * ext

    @property
    def landmarks(self) -> np.ndarray:
        return self.base.landmarks / self.s

    def vector_potential(self) -> VectorPotential | None:
        pot = self.base.vector_potential()
        if pot is None:
            return None
        s = self.s
        return VectorPotential(lambda x: s * pot(s * np.asarray(x)), pot.gauge_tag)

    def params(self) -> dict[str, Any]:
        return {"base": self.base.descriptor, "s": self.s}


class SuperposedField(MagneticFieldModel):
    """Sum of divergence-free fields."""

    name = "superposed"

    def __init__(self, fields: Sequence[MagneticFieldModel]) -> None:
        if not fields:
            raise ValueError("fields must not be empty")
        self.fields = tuple(fields)
        self.analytic = all(f.analytic for f in self.fields)
        self.is_constant = all(f.is_constant for f in self.fields)

    def _field(self, x):
        return sum(f.evaluate(x) for f in self.fields)

    @property
    def length_scale(self) -> float:
        return min(f.length_scale for f in self.fields)

    @property
    def exterior(self) -> np.ndarray | None:
        parts = [f.exterior for f in self.fields]
        return None if any(p is None for p in parts) else sum(parts)

    @property
    def landmarks(self) -> np.ndarray:
        return np.vstack([f.landmarks for f in self.fields])

    def vector_potential(self) -> VectorPotential | None:
        pots = [f.vector_potential() for f in self.fields]
        if any(p is None for p in pots):
            return None
        return VectorPotential(lambda x: sum(p(x) for p in pots), "explicit")

    def params(self) -> dict[str, Any]:
        return {"fields": [f.descriptor for f in self.fields]}


def superpose(*fields: MagneticFieldModel) -> SuperposedField:
    return SuperposedField(fields)


FIELD_NAMES = ("constant", "constant-direction", "tube-regular", "loss-yau", "compact-bump")


def builtin_field(name: str, params: Mapping[str, Any] | None = None) -> MagneticFieldModel:
    """
    Build a field from its descriptor.

    Args:
        name: One of FIELD_NAMES.
        params: Numeric parameters; see the individual model classes.

    Raises:
        ValueError: Unknown name or parameters violating positivity.
    """
    p = dict(params or {})
    if name == "constant":
        return ConstantField(p.get("b", (0.0, 0.0, 1.0)))
    if name == "constant-direction":
        return ConstantDirectionField(p.get("b0", 1.0), p.get("lam", 100.0))
    if name == "tube-regular":
        return TubeRegularField(
            p.get("b", 1.0), p.get("a", 0.1), p.get("s", 1.0), p.get("center", (0.0, 0.0, 0.0))
        )
    if name == "loss-yau":
        return LossYauField(p.get("w", (0.0, 0.0, 1.0)), p.get("scale", 1.0))
    if name == "compact-bump":
        return CompactBumpField(p.get("delta", 1.0), p.get("b", 1.0), p.get("center", (0.0, 0.0, 0.0)))
    raise ValueError(f"unknown field '{name}' (expected one of {', '.join(FIELD_NAMES)})")


def field_from_descriptor(descriptor: Mapping[str, Any]) -> MagneticFieldModel:
    """Rebuild a field, including scaled, rescaled and superposed wrappers."""
    name = descriptor["name"]
    params = dict(descriptor.get("params", {}))
    if name == "scaled":
        return ScaledField(field_from_descriptor(params["base"]), params["factor"])
    if name == "rescaled":
        return RescaledField(field_from_descriptor(params["base"]), params["s"])
    if name == "superposed":
        return SuperposedField([field_from_descriptor(d) for d in params["fields"]])
    return builtin_field(name, params)


# ---------------------------------------------------------------------------
# Gauges
# ---------------------------------------------------------------------------


def poincare_gauge(
    field: MagneticFieldModel,
    base,
    *,
    tol: float = 1e-10,
    max_nodes: int = 512,
) -> VectorPotential:
    """
    Poincaré gauge A(x) = ∫₀¹ s B(base + s y) × y ds with y = x - base.

    The integral uses Gauss-Legendre rules doubled from 8 nodes until two
    successive rules agree to tol relative to max |A|.

    Raises:
        QuadratureError: No agreement up to max_nodes nodes.
    """
    base = _as_vec(base, "base")

    def fn(x):
        x = np.asarray(x, dtype=float)
        y = x - base
        previous = None
        nodes = 8
        while nodes <= max_nodes:
            s, w = leggauss(nodes)
            s = 0.5 * (s + 1.0)
            w = 0.5 * w
            pts = base + s.reshape((-1,) + (1,) * y.ndim) * y
            integrand = s.reshape((-1,) + (1,) * y.ndim) * np.cross(field.evaluate(pts), y)
            value = np.tensordot(w, integrand, axes=1)
            if previous is not None:
                scale = 1.0 + float(np.max(np.abs(value), initial=0.0))
                if float(np.max(np.abs(value - previous), initial=0.0)) <= tol * scale:
                    return value
            previous = value
            nodes *= 2
        raise QuadratureError(
            "Poincaré gauge quadrature did not converge; the field may not be smooth",
            base=base.tolist(),
            max_nodes=max_nodes,
        )

    return VectorPotential(fn, "poincare", tuple(base.tolist()))


def gauge_for(field: MagneticFieldModel, base=(0.0, 0.0, 0.0)) -> VectorPotential:
    """Closed-form gauge when available, else the Poincaré gauge at base."""
    return field.vector_potential() or poincare_gauge(field, base)


# ---------------------------------------------------------------------------
# Regularity
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RegularityReport:
    """
    Measured regularity data of a field on the ball D = B(z₀, ℓ).

    Attributes:
        center: Ball center z₀.
        radius: Ball radius ℓ.
        K: Requested regularity constant.
        epsilon: Scale parameter ε.
        strength_at_center: |B(z₀)|.
        is_strong: |B(z₀)| >= ε⁻²ℓ⁻².
        strength_sups: Measured sup_D ‖∇^γ|B|‖ for γ = 1..4.
        direction_sups: Measured sup_D ‖∇^γ n‖ for γ = 1..4 (None if B vanishes in D).
        strength_thresholds: Kε^γℓ^{-γ}|B(z₀)|.
        direction_thresholds: Kε^γℓ^{-γ}.
        measured_K: Smallest K for which both conditions hold at the samples.
    """

    center: tuple[float, float, float]
    radius: float
    K: float
    epsilon: float
    strength_at_center: float
    is_strong: bool
    strength_sups: tuple[float, ...]
    direction_sups: tuple[float, ...] | None
    strength_thresholds: tuple[float, ...]
    direction_thresholds: tuple[float, ...]
    measured_K: float

    @property
    def regular(self) -> bool:
        return self.is_strong and self.measured_K <= self.K

    def to_dict(self) -> dict[str, Any]:
        return {
            "center": list(self.center),
            "radius": self.radius,
            "K": self.K,
            "epsilon": self.epsilon,
            "strength_at_center": self.strength_at_center,
            "is_strong": self.is_strong,
            "regular": self.regular,
            "measured_K": self.measured_K,
            "strength_sups": list(self.strength_sups),
            "direction_sups": None if self.direction_sups is None else list(self.direction_sups),
            "strength_thresholds": list(self.strength_thresholds),
            "direction_thresholds": list(self.direction_thresholds),
        }


def assess_regularity(
    field: MagneticFieldModel,
    z0,
    ell: float,
    K: float,
    epsilon: float,
    *,
    samples_log2: int = 8,
    require_strong: bool = False,
) -> RegularityReport:
    """
    Measure the (D, K)-regularity conditions on D = B(z0, ell).

    Args:
        field: Field to check.
        z0: Ball center.
        ell: Ball radius.
        K: Regularity constant to compare against.
        epsilon: Scale parameter, 0 < ε < 1/1000.
        samples_log2: log2 of the number of Sobol samples in D.
        require_strong: Raise if the field vanishes in D instead of
            reporting direction bounds as unavailable.

    Raises:
        ValueError: Invalid ell, K or epsilon.
        RegularityError: The field vanishes inside D while a strong ball is
            requested, so the direction field is undefined.
    """
    if not ell > 0:
        raise ValueError("ell must be > 0")
    if not K > 0:
        raise ValueError("K must be > 0")
    if not 0 < epsilon < 1e-3:
        raise ValueError("epsilon must lie in (0, 1/1000)")

    z0 = _as_vec(z0, "z0")
    pts = ball_points(z0, ell, samples_log2)
    b0 = float(field.strength(z0))
    is_strong = b0 >= epsilon**-2 * ell**-2
    orders = range(1, MAX_ORDER + 1)
    strength_thr = tuple(K * (epsilon / ell) ** g * b0 for g in orders)
    direction_thr = tuple(K * (epsilon / ell) ** g for g in orders)

    strength_jet = field.strength_jet(pts)
    strength_sups = tuple(float(np.max(strength_jet.norm(g))) for g in orders)

    vanishing = b0 == 0.0
    if not vanishing:
        # minimized on the normalized square, which is smooth at zeros of B
        rel = ball_extrema(lambda p: field.strength(p) ** 2 / b0**2, z0, ell)
        vanishing = rel.minimum <= _VANISH_TOL**2
    if vanishing and (is_strong or require_strong):
        raise RegularityError(
            "field vanishes inside the ball; direction field undefined",
            center=z0.tolist(),
            radius=ell,
        )
    direction_sups = None
    if not vanishing:
        direction_jet = field.direction_jet(pts)
        direction_sups = tuple(float(np.max(direction_jet.norm(g))) for g in orders)

    ratios = [_ratio(s, t / K) for s, t in zip(strength_sups, strength_thr)]
    if direction_sups is not None:
        ratios += [_ratio(s, t / K) for s, t in zip(direction_sups, direction_thr)]
    measured = max(ratios)
    log.debug("regularity at %s radius %.3g: measured K %.3g", z0, ell, measured)

    return RegularityReport(
        center=tuple(z0.tolist()),
        radius=float(ell),
        K=float(K),
        epsilon=float(epsilon),
        strength_at_center=b0,
        is_strong=bool(is_strong),
        strength_sups=strength_sups,
        direction_sups=direction_sups,
        strength_thresholds=strength_thr,
        direction_thresholds=direction_thr,
        measured_K=float(measured),
    )


def _ratio(value: float, unit: float) -> float:
    if unit > 0:
        return value / unit
    return 0.0 if value == 0 else math.inf
