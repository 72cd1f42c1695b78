"""Kernels of the constant-field Pauli operator in straightened coordinates.

With B = (0, 0, b) and A = (b/2)(ξ₂, -ξ₁, 0) the operator 𝒟̃² splits as
-Δ̃ + Π̃₃² + σ³b, where the transverse magnetic Laplacian has the Mehler heat
kernel

    e^{tΔ̃}(ξ⊥, ζ⊥) = b/(4π sinh bt) · exp[-(b coth(bt)/4)|ξ⊥ - ζ⊥|² - (ib/2)(ξ₂ζ₁ - ξ₁ζ₂)].

The resolvent (𝒟̃² + P)⁻¹ is the Laplace-time integral of the spin sectors
e^{-t(P + σb)} e^{tΔ̃} e^{t∂₃²}. Time integrals use the trapezoid rule in
s = log t on a lattice anchored at t = 1/b; the doubled-step rule gives the
error estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import kv, zeta

from maglt.core.logging_config import get_logger

log = get_logger(__name__)

LOG_STEP = 0.15
_DECAY_EXPONENT = 80.0
_T_FLOOR = 1e-30
DEFAULT_EDGES = (0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 28.0, 40.0)


def _perp(x) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.shape[-1] != 2:
        raise ValueError("transverse points must have two components")
    return arr


def free_heat_kernel(t: float, xi_perp, zeta_perp) -> np.ndarray:
    """Two dimensional free heat kernel 1/(4πt) e^{-|ξ⊥ - ζ⊥|²/4t}."""
    d = _perp(xi_perp) - _perp(zeta_perp)
    return np.exp(-np.sum(d * d, axis=-1) / (4.0 * t)) / (4.0 * math.pi * t)


def mehler_eval(b: float, t: float, xi_perp, zeta_perp) -> np.ndarray:
    """Mehler kernel at time t, broadcasting over (..., 2) point arrays."""
    if t <= 0:
        raise ValueError("t must be > 0")
    if b < 0:
        raise ValueError("b must be >= 0")
    xi, zt = np.broadcast_arrays(_perp(xi_perp), _perp(zeta_perp))
    if b == 0:
        return free_heat_kernel(t, xi, zt).astype(complex)
    d = xi - zt
    e = math.exp(-2.0 * b * t)
    den = -math.expm1(-2.0 * b * t)
    amp = b * math.exp(-b * t) / (2.0 * math.pi * den)
    spread = b * (1.0 + e) / (4.0 * den)
    phase = -0.5 * b * (xi[..., 1] * zt[..., 0] - xi[..., 0] * zt[..., 1])
    return amp * np.exp(-spread * np.sum(d * d, axis=-1) + 1j * phase)


@dataclass(frozen=True)
class MehlerKernel:
    """Heat kernel of the two dimensional magnetic Laplacian with field b."""

    b: float

    def __post_init__(self) -> None:
        if self.b < 0:
            raise ValueError("b must be >= 0")

    def __call__(self, t: float, xi_perp, zeta_perp) -> np.ndarray:
        return mehler_eval(self.b, t, xi_perp, zeta_perp)

    def diagonal(self, t: float) -> float:
        if self.b == 0:
            return 1.0 / (4.0 * math.pi * t)
        return self.b / (4.0 * math.pi * math.sinh(self.b * t))

    def diamagnetic_excess(self, t: float, xi_perp, zeta_perp) -> float:
        """max(|K| - free kernel); nonpositive up to rounding."""
        return float(np.max(np.abs(self(t, xi_perp, zeta_perp)) - free_heat_kernel(t, xi_perp, zeta_perp)))

    def semigroup_defect(
        self, t: float, s: float, xi_perp, zeta_perp, *, half_width: float = 10.0, n: int = 256
    ) -> float:
        """Relative defect of ∫K(t, ξ, η)K(s, η, ζ)dη = K(t+s, ξ, ζ) on a midpoint grid."""
        xi, zt = _perp(xi_perp), _perp(zeta_perp)
        mid = 0.5 * (xi + zt)
        axis = (np.arange(n) + 0.5) * (2.0 * half_width / n) - half_width
        eta = np.stack(np.meshgrid(mid[0] + axis, mid[1] + axis, indexing="ij"), axis=-1).reshape(-1, 2)
        cell = (2.0 * half_width / n) ** 2
        composed = np.sum(self(t, xi, eta) * self(s, eta, zt)) * cell
        direct = complex(self(t + s, xi, zt))
        return abs(composed - direct) / abs(direct)

    def transverse_ratio(self, t: float | None = None) -> float:
        """|K(t, 0, 0)| / |K(t, 0, 3b^{-1/2}e₁)|, at t = 1/b by default."""
        if self.b <= 0:
            raise ValueError("b must be > 0")
        t = 1.0 / self.b if t is None else t
        off = np.array([3.0 / math.sqrt(self.b), 0.0])
        return float(abs(self(t, np.zeros(2), np.zeros(2))) / abs(self(t, np.zeros(2), off)))


@dataclass(frozen=True)
class _TimeGrid:
    t: np.ndarray
    weights: np.ndarray
    even: np.ndarray

    def integrate(self, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Integrate values (..., M, N) over the time axis; returns (total, error)."""
        total = np.einsum("m,...mn->...n", self.weights, values)
        coarse = 2.0 * np.einsum("m,...mn->...n", self.weights[self.even], values[..., self.even, :])
        return total, np.abs(total - coarse)


def _time_grid(anchor: float, t_min: float, t_max: float, step: float) -> _TimeGrid:
    s0 = math.log(anchor)
    k = np.arange(math.floor((math.log(t_min) - s0) / step), math.ceil((math.log(t_max) - s0) / step) + 1)
    t = np.exp(s0 + step * k)
    return _TimeGrid(t, step * t, k % 2 == 0)


def _pairs(xi, zeta) -> tuple[np.ndarray, np.ndarray]:
    a = np.atleast_2d(np.asarray(xi, dtype=float))
    b = np.atleast_2d(np.asarray(zeta, dtype=float))
    a, b = np.broadcast_arrays(a, b)
    if a.shape[-1] != 3:
        raise ValueError("points must have three components")
    return a, b


@dataclass(frozen=True)
class KernelSample:
    """
    Kernel values at a batch of point pairs.

    Attributes:
        values: (N, 2, 2) complex matrices, spin up first.
        errors: (N,) absolute error estimates.
    """

    values: np.ndarray
    errors: np.ndarray

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.values, ord=2, axis=(1, 2))

    def frobenius_sq(self) -> np.ndarray:
        return np.sum(np.abs(self.values) ** 2, axis=(1, 2))


@dataclass(frozen=True)
class ConstResolvent:
    """
    (𝒟̃² + P)⁻¹ for the constant field b in straightened coordinates.

    Attributes:
        b: Field strength, > 0.
        P: Spectral shift, > 0.
        step: Trapezoid step in log t.
        cutoff: |||ξ - ζ||| beyond which the kernel is reported as 0 with
            its analytic tail bound as the error.
    """

    b: float
    P: float
    step: float = LOG_STEP
    cutoff: float = 60.0

    def __post_init__(self) -> None:
        if self.b <= 0:
            raise ValueError("b must be > 0")
        if self.P <= 0:
            raise ValueError("P must be > 0")

    def norm(self, delta) -> np.ndarray:
        """|||Δ||| = (b|Δ⊥|² + PΔ₃²)^{1/2}."""
        d = np.asarray(delta, dtype=float)
        return np.sqrt(self.b * np.sum(d[..., :2] ** 2, axis=-1) + self.P * d[..., 2] ** 2)

    def _grid(self, delta_sq: np.ndarray | None) -> _TimeGrid:
        t_min = _T_FLOOR
        if delta_sq is not None and np.any(delta_sq > 0):
            t_min = max(float(delta_sq[delta_sq > 0].min()) / 400.0, _T_FLOOR)
        t_min = min(t_min, 1e-3 / max(self.b, self.P))
        grid = _time_grid(1.0 / self.b, t_min, _DECAY_EXPONENT / self.P, self.step)
        log.debug("time grid: %d nodes on [%g, %g]", len(grid.t), grid.t[0], grid.t[-1])
        return grid

    def _heat(self, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Sector factors e^{-σbt} b/(4π sinh bt) stacked (up, down), and b coth(bt)."""
        e = np.exp(-2.0 * self.b * t)
        den = -np.expm1(-2.0 * self.b * t)
        heat = np.stack([self.b * e, np.full_like(t, self.b)]) / (2.0 * math.pi * den)
        return heat, self.b * (1.0 + e) / den

    def _sectors(self, grid: _TimeGrid, delta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        t = grid.t[:, None]
        heat, bcoth = self._heat(grid.t)
        perp = np.sum(delta[:, :2] ** 2, axis=-1)
        gauss = np.exp(-0.25 * bcoth[:, None] * perp - delta[:, 2] ** 2 / (4.0 * t) - self.P * t)
        gauss /= np.sqrt(4.0 * math.pi * t)
        return heat[:, :, None] * gauss, bcoth

    @staticmethod
    def _phase(xi: np.ndarray, zeta: np.ndarray, b: float) -> np.ndarray:
        return np.exp(-0.5j * b * (xi[:, 1] * zeta[:, 0] - xi[:, 0] * zeta[:, 1]))

    @staticmethod
    def _check_off_diagonal(delta: np.ndarray) -> None:
        if np.any(np.all(delta == 0.0, axis=-1)):
            raise ValueError("kernel is singular on the diagonal")

    def tail_bound(self, delta) -> np.ndarray:
        """
        Bound on the kernel norm from 1/(1 - e^{-2bt}) <= (1 + 2bt)/2bt and
        b coth(bt)/4 >= 1/8t + b/8, integrated with Bessel K.
        """
        d = np.atleast_2d(np.asarray(delta, dtype=float))
        perp = np.sum(d[:, :2] ** 2, axis=-1)
        a = (0.5 * perp + d[:, 2] ** 2) / 4.0
        arg = 2.0 * np.sqrt(a * self.P)
        short = 2.0 * (a / self.P) ** -0.25 * kv(0.5, arg)
        long = 2.0 * (a / self.P) ** 0.25 * kv(0.5, arg)
        return np.exp(-self.b * perp / 8.0) * (short + 2.0 * self.b * long) / (4.0 * math.pi) ** 1.5

    def kernel(self, xi, zeta) -> KernelSample:
        """Resolvent kernel (𝒟̃² + P)⁻¹(ξ, ζ), diagonal in spin."""
        xi, zeta = _pairs(xi, zeta)
        delta = xi - zeta
        self._check_off_diagonal(delta)
        values = np.zeros((len(delta), 2, 2), dtype=complex)
        errors = np.zeros(len(delta))
        far = self.norm(delta) > self.cutoff
        near = ~far
        if np.any(near):
            d = delta[near]
            grid = self._grid(np.sum(d * d, axis=-1))
            sectors, _ = self._sectors(grid, d)
            g, err = grid.integrate(sectors)
            phase = self._phase(xi[near], zeta[near], self.b)
            values[near, 0, 0] = g[0] * phase
            values[near, 1, 1] = g[1] * phase
            errors[near] = err.max(axis=0)
        if np.any(far):
            errors[far] = self.tail_bound(delta[far])
        return KernelSample(values, errors)

    def dirac_kernel(self, xi, zeta) -> KernelSample:
        """Kernel of 𝒟̃(𝒟̃² + P)⁻¹, with 𝒟̃ acting on the first variable."""
        xi, zeta = _pairs(xi, zeta)
        delta = xi - zeta
        self._check_off_diagonal(delta)
        grid = self._grid(np.sum(delta * delta, axis=-1))
        sectors, bcoth = self._sectors(grid, delta)
        t = grid.t[:, None]
        c = 0.5j * bcoth[:, None]
        mult = np.stack(
            [
                c * delta[:, 0] - 0.5 * self.b * delta[:, 1],
                c * delta[:, 1] + 0.5 * self.b * delta[:, 0],
                0.5j * delta[:, 2] / t,
            ]
        )
        g, err = grid.integrate(sectors[:, None] * mult[None])
        phase = self._phase(xi, zeta, self.b)
        values = np.empty((len(delta), 2, 2), dtype=complex)
        values[:, 0, 0] = g[0, 2]
        values[:, 0, 1] = g[1, 0] - 1j * g[1, 1]
        values[:, 1, 0] = g[0, 0] + 1j * g[0, 1]
        values[:, 1, 1] = -g[1, 2]
        return KernelSample(values * phase[:, None, None], err.max(axis=(0, 1)))

    def squared_diagonal(self) -> tuple[float, float]:
        """tr (𝒟̃² + P)⁻²(u, u) = Σ_σ ∫ t e^{-t(P+σb)} e^{tΔ̃}(0,0)(4πt)^{-1/2} dt, with error."""
        grid = self._grid(None)
        heat, _ = self._heat(grid.t)
        values = (heat.sum(axis=0) * grid.t * np.exp(-self.P * grid.t) / np.sqrt(4.0 * math.pi * grid.t))[:, None]
        total, err = grid.integrate(values)
        return float(total[0]), float(err[0])


def resolvent_kernel(b: float, P: float, xi, zeta) -> KernelSample:
    return ConstResolvent(b, P).kernel(xi, zeta)

def squared_diagonal_oracle(b: float, P: float) -> float:
    """Landau-level sum (b/8π) Σ_n g_n (P + 2nb)^{-3/2} as Hurwitz zeta values."""
    q = P / (2.0 * b)
    return b / (8.0 * math.pi) * (2.0 * b) ** -1.5 * float(zeta(1.5, q) + zeta(1.5, 1.0 + q))


@dataclass(frozen=True)
class PolarRule:
    """Quadrature over R³ in |||·||| spherical coordinates, using axial symmetry."""

    points: np.ndarray
    weights: np.ndarray
    radii: np.ndarray

    @classmethod
    def build(
        cls, b: float, P: float, edges: Sequence[float] = DEFAULT_EDGES, r_nodes: int = 12, theta_nodes: int = 16
    ) -> "PolarRule":
        x, w = leggauss(r_nodes)
        r, wr = [], []
        for lo, hi in zip(edges[:-1], edges[1:]):
            r.append(0.5 * (hi - lo) * (x + 1.0) + lo)
            wr.append(0.5 * (hi - lo) * w)
        r, wr = np.concatenate(r), np.concatenate(wr)
        th, wth = leggauss(theta_nodes)
        th, wth = 0.25 * math.pi * (th + 1.0), 0.25 * math.pi * wth
        R, TH = np.meshgrid(r, th, indexing="ij")
        W = np.outer(wr, wth)
        pts = np.column_stack(
            [(R * np.sin(TH)).ravel() / math.sqrt(b), np.zeros(R.size), (R * np.cos(TH)).ravel() / math.sqrt(P)]
        )
        # both signs of ξ₃ and the full azimuth
        weights = (4.0 * math.pi * R**2 * np.sin(TH) * W).ravel() / (b * math.sqrt(P))
        return cls(pts, weights, R.ravel())

    def integrate(self, values: np.ndarray) -> float:
        return float(np.dot(self.weights, values))


@dataclass(frozen=True)
class DiagTraceReport:
    """
    Diagonal-trace spot checks for one (b, P).

    Attributes:
        time_integral: tr R²(u,u) from the time integral.
        oracle: Landau-level oracle of the same quantity.
        kernel_integral: ∫‖R(u,ξ)‖²dξ by polar quadrature.
        ratio: time_integral / (bP^{-3/2} + P^{-1/2}).
        dirac_weighted: ∫‖𝒟̃R(u,ξ)‖² min(|ξ⊥|,1)² dξ.
        separated: ∫ over |||ξ||| >= max(b,P)^{1/2} of ‖R(u,ξ)‖² and ‖𝒟̃R(u,ξ)‖².
    """

    b: float
    P: float
    time_integral: float
    time_error: float
    oracle: float
    kernel_integral: float
    ratio: float
    dirac_weighted: float
    separated: tuple[float, float]

    def to_dict(self) -> dict[str, float | list[float]]:
        return {
            "b": self.b,
            "P": self.P,
            "time_integral": self.time_integral,
            "time_error": self.time_error,
            "oracle": self.oracle,
            "kernel_integral": self.kernel_integral,
            "ratio": self.ratio,
            "dirac_weighted": self.dirac_weighted,
            "separated": list(self.separated),
        }


def kernel_square_integral(res: ConstResolvent, rule: PolarRule | None = None) -> float:
    rule = rule or PolarRule.build(res.b, res.P)
    return rule.integrate(res.kernel(np.zeros(3), rule.points).frobenius_sq())


def dirac_weighted_integral(res: ConstResolvent, rule: PolarRule | None = None) -> float:
    rule = rule or PolarRule.build(res.b, res.P)
    h = np.minimum(np.linalg.norm(rule.points[:, :2], axis=-1), 1.0)
    return rule.integrate(res.dirac_kernel(np.zeros(3), rule.points).frobenius_sq() * h**2)


def separated_support_integrals(res: ConstResolvent, width: float = 40.0) -> tuple[float, float]:
    """Both squared kernels integrated where |||ξ||| >= max(b, P)^{1/2}, so that |ξ| >= 1."""
    r0 = math.sqrt(max(res.b, res.P))
    edges = r0 + np.array([0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, width])
    rule = PolarRule.build(res.b, res.P, edges)
    plain = rule.integrate(res.kernel(np.zeros(3), rule.points).frobenius_sq())
    dirac = rule.integrate(res.dirac_kernel(np.zeros(3), rule.points).frobenius_sq())
    return plain, dirac


def diag_trace_checks(b: float, P: float) -> DiagTraceReport:
    res = ConstResolvent(b, P)
    value, err = res.squared_diagonal()
    rule = PolarRule.build(b, P)
    report = DiagTraceReport(
        b=b,
        P=P,
        time_integral=value,
        time_error=err,
        oracle=squared_diagonal_oracle(b, P),
        kernel_integral=kernel_square_integral(res, rule),
        ratio=value / (b * P**-1.5 + P**-0.5),
        dirac_weighted=dirac_weighted_integral(res, rule),
        separated=separated_support_integrals(res),
    )
    log.info("diagonal traces b=%g P=%g: %s", b, P, report.to_dict())
    return report


@dataclass(frozen=True)
class DecayFit:
    """
    Fit of ‖R(ξ,ζ)‖ |||ξ-ζ||| / (bP^{-1/2}) ≈ A e^{-c|||ξ-ζ|||}.

    Attributes:
        c: Fitted decay rate.
        amplitude: max over samples of the normalized kernel times e^{c|||ξ-ζ|||}.
        samples: Number of sampled separations.
    """

    c: float
    amplitude: float
    samples: int


def _directions(count: int) -> np.ndarray:
    k = np.arange(count) + 0.5
    z = 1.0 - 2.0 * k / count
    phi = math.pi * (1.0 + math.sqrt(5.0)) * k
    rho = np.sqrt(1.0 - z * z)
    return np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])


def decay_fit(res: ConstResolvent, radii: Sequence[float] | None = None, directions: int = 12) -> DecayFit:
    """
    Sample the kernel at |||Δ||| in radii along quasi-uniform directions.

    When b < P the normalization uses P in place of b.
    """
    radii = np.linspace(0.5, 5.0, 10) if radii is None else np.asarray(radii, dtype=float)
    big = max(res.b, res.P)
    scaled = ConstResolvent(big, res.P, res.step, res.cutoff) if res.b < res.P else res
    u = _directions(directions)
    u = u / scaled.norm(u)[:, None]
    delta = (radii[:, None, None] * u[None]).reshape(-1, 3)
    r = np.repeat(radii, directions)
    norms = res.kernel(np.zeros(3), delta).norms()
    y = norms * r / (big * res.P**-0.5)
    slope = np.polyfit(r, np.log(y), 1)[0]
    c = -float(slope)
    return DecayFit(c, float(np.max(y * np.exp(c * r))), len(r))


PROFILE_COLUMNS = ("direction", "r", "resolvent", "dirac", "error", "tail_bound", "mehler_t1")


def kernel_profile(res: ConstResolvent, radii: Sequence[float] | None = None) -> list[list]:
    """
    Kernel norms along the transverse axis ξ₁ and the field axis ξ₃ at distance r from the origin.

    mehler_t1 is |e^{Δ̃}(ξ⊥, 0)|, which is constant along the axial direction.
    """
    radii = np.geomspace(0.05, 10.0, 25) if radii is None else np.asarray(radii, dtype=float)
    if np.any(radii <= 0):
        raise ValueError("radii must be > 0")
    mehler = MehlerKernel(res.b)
    rows = []
    for name, axis in (("transverse", np.array([1.0, 0.0, 0.0])), ("axial", np.array([0.0, 0.0, 1.0]))):
        delta = radii[:, None] * axis
        plain = res.kernel(np.zeros(3), delta)
        norms = plain.norms()
        dirac = res.dirac_kernel(np.zeros(3), delta).norms()
        tail = res.tail_bound(delta)
        heat = np.abs(mehler(1.0, delta[:, :2], np.zeros(2)))
        for k, r in enumerate(radii):
            rows.append([name, float(r), norms[k], dirac[k], plain.errors[k], tail[k], heat[k]])
    return rows
