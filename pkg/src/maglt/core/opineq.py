"""
Finite-dimensional operator inequalities.

Weights g_i act as diagonal multiplication operators and matrix functions
are applied through the spectral decomposition. Every check returns the
smallest eigenvalue of the difference that the inequality claims is
positive semidefinite, so a gap >= -GAP_TOL means the inequality holds up
to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np
import scipy.linalg as la

from maglt.core.logging_config import get_logger
from maglt.core.parallel import map_parallel

log = get_logger(__name__)

GAP_TOL = 1e-10
MAX_BLOCKS = 5
MAX_SIZE = 6

MatrixFunction = Callable[[np.ndarray], np.ndarray]


def inverse(t: np.ndarray) -> np.ndarray:
    return 1.0 / t


def inverse_square(t: np.ndarray) -> np.ndarray:
    return t**-2.0


def hermitian_part(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.conj().T)


def min_eig(a: np.ndarray) -> float:
    return float(la.eigvalsh(hermitian_part(a))[0])


def apply_function(a: np.ndarray, phi: MatrixFunction) -> np.ndarray:
    """Φ(A) = V Φ(Λ) V* for Hermitian A."""
    vals, vecs = la.eigh(hermitian_part(a))
    return (vecs * phi(vals)) @ vecs.conj().T


def _require_positive_definite(a: np.ndarray, name: str) -> None:
    if not np.allclose(a, a.conj().T, rtol=0.0, atol=1e-12 * max(1.0, float(np.abs(a).max()))):
        raise ValueError(f"{name} must be Hermitian")
    try:
        la.cholesky(hermitian_part(a))
    except la.LinAlgError as exc:
        raise ValueError(f"{name} must be positive definite") from exc


@dataclass(frozen=True)
class BlockInstance:
    """
    Weights and positive definite matrices for the pull-up inequality.

    Attributes:
        weights: (k, n) entrywise nonnegative; Σ g_i² > 0 at every coordinate.
        matrices: (k, n, n) Hermitian positive definite.
    """

    weights: np.ndarray
    matrices: np.ndarray

    def __post_init__(self) -> None:
        g = np.atleast_2d(np.asarray(self.weights, dtype=float))
        a = np.asarray(self.matrices, dtype=complex)
        if a.ndim == 2:
            a = a[None]
        if a.ndim != 3 or a.shape[1] != a.shape[2]:
            raise ValueError("matrices must have shape (k, n, n)")
        if g.shape != a.shape[:2]:
            raise ValueError("weights must have shape (k, n) matching the matrices")
        if np.any(g < 0):
            raise ValueError("weights must be >= 0")
        if np.any(np.sum(g * g, axis=0) <= 0):
            raise ValueError("weights must not vanish simultaneously")
        for i, block in enumerate(a):
            _require_positive_definite(block, f"matrices[{i}]")
        object.__setattr__(self, "weights", g)
        object.__setattr__(self, "matrices", a)

    @property
    def size(self) -> int:
        return self.matrices.shape[1]

    @property
    def blocks(self) -> int:
        return self.matrices.shape[0]

    def middle(self) -> np.ndarray:
        """Σ g_i A_i g_i."""
        g = self.weights
        return np.einsum("ka,kab,kb->ab", g, self.matrices, g)

    def conjugated(self, unitary: np.ndarray) -> "BlockInstance":
        """U A_i U* for every block; only meaningful with scalar weights."""
        return BlockInstance(self.weights, unitary @ self.matrices @ unitary.conj().T)


def refined_inverse(a: np.ndarray, steps: int = 2) -> np.ndarray:
    """Inverse refined by Newton steps whose residuals are formed in extended precision."""
    ext = np.asarray(a, dtype=np.clongdouble)
    x = la.inv(np.asarray(a, dtype=complex)).astype(np.clongdouble)
    eye = np.eye(ext.shape[0], dtype=np.clongdouble)
    for _ in range(steps):
        x = x + x @ (eye - ext @ x)
    return x


def pullup_difference(instance: BlockInstance, phi: MatrixFunction = inverse) -> np.ndarray:
    """
    Σ g_i Φ(A_i) g_i - (Σ g_i²) Φ(Σ g_i A_i g_i) (Σ g_i²).

    For Φ(t) = t⁻¹ the weights are normalized by r = (Σ g_i²)^{1/2} so the
    middle inverse is r⁻¹(Σ h_i A_i h_i)⁻¹r⁻¹ with h_i = g_i/r, and the
    inverses are refined in extended precision.

    Raises:
        ValueError: The middle sum is singular.
    """
    g = instance.weights
    outer = np.sum(g * g, axis=0)
    middle = instance.middle()
    h = g / np.sqrt(outer)
    vals = la.eigvalsh(hermitian_part(np.einsum("ka,kab,kb->ab", h, instance.matrices, h)))
    if vals[0] <= 1e-14 * max(1.0, vals[-1]):
        raise ValueError("middle sum Σ g_i A_i g_i is singular")
    if phi is not inverse:
        rhs = sum(gi[:, None] * apply_function(a, phi) * gi[None, :] for gi, a in zip(g, instance.matrices))
        return rhs - outer[:, None] * apply_function(middle, phi) * outer[None, :]
    ext = g.astype(np.longdouble)
    root = np.sqrt(outer.astype(np.longdouble))
    h = ext / root
    normalized = np.einsum("ka,kab,kb->ab", h, instance.matrices.astype(np.clongdouble), h)
    rhs = sum(gi[:, None] * refined_inverse(a) * gi[None, :] for gi, a in zip(ext, instance.matrices))
    lhs = root[:, None] * refined_inverse(normalized) * root[None, :]
    return np.asarray(rhs - lhs, dtype=complex)


def pullup_gap(instance: BlockInstance) -> float:
    return min_eig(pullup_difference(instance, inverse))


def _unitary(rng: np.random.Generator, n: int) -> np.ndarray:
    z = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    q, r = la.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def random_spd(rng: np.random.Generator, n: int, lo: float = 1e-2, hi: float = 1e2) -> np.ndarray:
    """Q Λ Q* with Q Haar unitary and Λ log-uniform in [lo, hi]."""
    q = _unitary(rng, n)
    lam = np.exp(rng.uniform(np.log(lo), np.log(hi), n))
    return hermitian_part((q * lam) @ q.conj().T)


def random_block_instance(
    rng: np.random.Generator, k: int | None = None, n: int | None = None, *, scalar_weights: bool = False
) -> BlockInstance:
    k = int(rng.integers(1, MAX_BLOCKS + 1)) if k is None else k
    n = int(rng.integers(1, MAX_SIZE + 1)) if n is None else n
    if k < 1 or n < 1:
        raise ValueError("k and n must be >= 1")
    if scalar_weights:
        weights = np.repeat(rng.uniform(0.1, 1.0, (k, 1)), n, axis=1)
    else:
        weights = rng.uniform(0.0, 1.0, (k, n))
    return BlockInstance(weights, np.stack([random_spd(rng, n) for _ in range(k)]))


@dataclass(frozen=True)
class SweepSummary:
    """
    Worst case of a random sweep.

    Attributes:
        name: Inequality checked.
        count: Instances drawn.
        worst_gap: Smallest gap seen.
        worst_seed: [seed, index] reproducing the worst instance.
    """

    name: str
    count: int
    worst_gap: float
    worst_seed: tuple[int, int]
    tolerance: float = GAP_TOL

    @property
    def passed(self) -> bool:
        return self.worst_gap >= -self.tolerance

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "count": self.count,
            "worst_gap": self.worst_gap,
            "worst_seed": list(self.worst_seed),
            "tolerance": self.tolerance,
            "passed": self.passed,
        }


def _sweep(
    name: str, gap_fn: Callable[[np.random.Generator], float], count: int, seed: int, max_workers
) -> SweepSummary:
    if count < 1:
        raise ValueError("count must be >= 1")
    gaps = map_parallel(lambda i: gap_fn(np.random.default_rng([seed, i])), range(count), max_workers=max_workers)
    worst = int(np.argmin(gaps))
    log.info("%s: worst gap %.3e over %d instances", name, gaps[worst], count)
    return SweepSummary(name, count, float(gaps[worst]), (seed, worst))


def pullup_sweep(count: int = 1000, seed: int = 0, *, max_workers: int | None = None) -> SweepSummary:
    return _sweep("pullup", lambda rng: pullup_gap(random_block_instance(rng)), count, seed, max_workers)


@dataclass(frozen=True)
class CounterexampleReport:
    """
    Pull-in difference Σ g_iΦ(A_i)g_i - (Σg_i²)Φ(Σg_iA_ig_i)(Σg_i²) for given A_i.

    Attributes:
        difference: The difference matrix.
        min_eig: Its smallest eigenvalue.
        normalized: min_eig / ‖difference‖₂.
    """

    difference: np.ndarray = dc_field(repr=False)
    min_eig: float = 0.0
    normalized: float = 0.0

    @property
    def confirmed(self) -> bool:
        return self.min_eig < 0.0

    def to_dict(self) -> dict:
        return {
            "difference": [[float(v.real) for v in row] for row in self.difference],
            "min_eig": self.min_eig,
            "normalized": self.normalized,
            "confirmed": self.confirmed,
        }


PULLIN_A1 = np.array([[1.0, 1.0], [1.0, 2.0]])
PULLIN_A2 = np.array([[2.0, 1.0], [1.0, 2.0]])


def pullin_counterexample(
    phi: MatrixFunction = inverse_square, a1: np.ndarray = PULLIN_A1, a2: np.ndarray = PULLIN_A2
) -> CounterexampleReport:
    """Two blocks with g₁ = g₂ = 2^{-1/2}; Φ(t) = t⁻² breaks the inequality for the default matrices."""
    g = np.full((2, a1.shape[0]), 2.0**-0.5)
    diff = pullup_difference(BlockInstance(g, np.stack([a1, a2])), phi)
    lowest = min_eig(diff)
    scale = float(np.max(np.abs(la.eigvalsh(hermitian_part(diff)))))
    return CounterexampleReport(diff, lowest, lowest / scale if scale else 0.0)


@dataclass(frozen=True)
class XYGaps:
    """min eig of 4(X+M)⁻² - (X+Y+2M)⁻² and of 4(X²+M²)⁻¹ - 4(X+M)⁻²."""

    first: float
    second: float

    @property
    def worst(self) -> float:
        return min(self.first, self.second)


def lemma_xy_gap(x: np.ndarray, y: np.ndarray, m: float, *, tol: float = 1e-12) -> XYGaps:
    """
    Raises:
        ValueError: X not positive semidefinite, Y not Hermitian, ‖Y‖ > M,
            X + Y not positive semidefinite or M <= 0.
    """
    x = np.asarray(x, dtype=complex)
    y = np.asarray(y, dtype=complex)
    if m <= 0:
        raise ValueError("M must be > 0")
    if x.shape != y.shape or x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise ValueError("X and Y must be square matrices of the same size")
    if not np.allclose(y, y.conj().T, rtol=0.0, atol=tol * max(1.0, m)):
        raise ValueError("Y must be Hermitian")
    if min_eig(x) < -tol * max(1.0, m):
        raise ValueError("X must be positive semidefinite")
    if la.norm(hermitian_part(y), 2) > m * (1.0 + tol):
        raise ValueError("‖Y‖ must be <= M")
    if min_eig(x + y) < -tol * max(1.0, m):
        raise ValueError("X + Y must be positive semidefinite")
    eye = np.eye(x.shape[0])
    xm = apply_function(x + m * eye, inverse_square)
    first = 4.0 * xm - apply_function(x + y + 2.0 * m * eye, inverse_square)
    second = 4.0 * apply_function(x @ x + m * m * eye, inverse) - 4.0 * xm
    return XYGaps(min_eig(first), min_eig(second))


def random_xy_instance(rng: np.random.Generator, n: int | None = None, attempts: int = 64):
    """
    X = QΛQ* with Λ uniform in [0, 3M]; Y Hermitian with ‖Y‖ = M drawn until X + Y ⪰ 0.

    After attempts rejections Y = -cX with c = min(1, M/‖X‖).
    """
    n = int(rng.integers(1, MAX_SIZE + 1)) if n is None else n
    m = float(np.exp(rng.uniform(np.log(0.1), np.log(10.0))))
    q = _unitary(rng, n)
    x = hermitian_part((q * rng.uniform(0.0, 3.0 * m, n)) @ q.conj().T)
    for _ in range(attempts):
        z = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        y = hermitian_part(z)
        y *= m / la.norm(y, 2)
        if min_eig(x + y) >= 0.0:
            return x, y, m
    c = min(1.0, m / max(la.norm(x, 2), 1e-300))
    return x, -c * x, m


def lemma_xy_sweep(count: int = 1000, seed: int = 0, *, max_workers: int | None = None) -> SweepSummary:
    return _sweep("lemma-xy", lambda rng: lemma_xy_gap(*random_xy_instance(rng)).worst, count, seed, max_workers)


@dataclass(frozen=True)
class ReweightReport:
    """
    Comparison of A on L²(μ) with the same operator A_F on L²(Fμ).

    Attributes:
        c_f: max F / min F.
        kernel_defect: max |A(x,y) - A_F(x,y)F(y)|.
        diagonal_defect: max |A(x,x) - A_F(x,x)F(x)|.
        lower_slack: min over x of (A_F*A_F)(x,x) - C_F⁻¹‖F‖⁻¹(A*A)(x,x).
        upper_slack: min over x of C_F‖F⁻¹‖(A*A)(x,x) - (A_F*A_F)(x,x).
        alpha: Smallest eigenvalue of A*A.
        beta: Largest eigenvalue of A*A.
        spectrum: (min, max) eigenvalues of A_F*A_F.
    """

    c_f: float
    kernel_defect: float
    diagonal_defect: float
    lower_slack: float
    upper_slack: float
    alpha: float
    beta: float
    spectrum: tuple[float, float]

    def ok(self, tol: float = GAP_TOL) -> bool:
        scale = max(1.0, self.beta)
        return (
            self.kernel_defect <= tol * scale
            and self.diagonal_defect <= tol * scale
            and self.lower_slack >= -tol * scale
            and self.upper_slack >= -tol * scale
            and self.spectrum[0] >= self.alpha / self.c_f - tol * scale
            and self.spectrum[1] <= self.c_f * self.beta + tol * scale
        )

    def to_dict(self) -> dict:
        return {
            "c_f": self.c_f,
            "kernel_defect": self.kernel_defect,
            "diagonal_defect": self.diagonal_defect,
            "lower_slack": self.lower_slack,
            "upper_slack": self.upper_slack,
            "alpha": self.alpha,
            "beta": self.beta,
            "spectrum": list(self.spectrum),
            "ok": self.ok(),
        }


def _gram_diagonal(kernel: np.ndarray, density: np.ndarray) -> np.ndarray:
    """(A*A)(x,x) = Σ_y |K(y,x)|² density(y)."""
    return np.einsum("yx,y->x", np.abs(kernel) ** 2, density)


def _form_spectrum(kernel: np.ndarray, density: np.ndarray) -> np.ndarray:
    """Eigenvalues of A*A for the integral operator with kernel K on L²(density)."""
    root = np.sqrt(density)
    return la.svdvals(root[:, None] * kernel * root[None, :]) ** 2


def reweight_kernels(kernel: np.ndarray, f: np.ndarray, mu: np.ndarray | None = None) -> ReweightReport:
    """
    Kernel of A on L²(μ) is K; the same operator on L²(Fμ) has kernel K_F = K / F(y).

    Raises:
        ValueError: F or μ not entrywise positive, or shapes disagree.
    """
    k = np.asarray(kernel, dtype=complex)
    f = np.asarray(f, dtype=float)
    n = k.shape[0]
    mu = np.ones(n) if mu is None else np.asarray(mu, dtype=float)
    if k.shape != (n, n) or f.shape != (n,) or mu.shape != (n,):
        raise ValueError("kernel must be (n, n) with F and μ of length n")
    if np.any(f <= 0):
        raise ValueError("F must be entrywise positive")
    if np.any(mu <= 0):
        raise ValueError("μ must be entrywise positive")
    c_f = float(f.max() / f.min())
    k_f = k / f[None, :]
    nu = f * mu
    gram = _gram_diagonal(k, mu)
    gram_f = _gram_diagonal(k_f, nu)
    eig = _form_spectrum(k, mu)
    eig_f = _form_spectrum(k_f, nu)
    return ReweightReport(
        c_f=c_f,
        kernel_defect=float(np.max(np.abs(k - k_f * f[None, :]))),
        diagonal_defect=float(np.max(np.abs(np.diag(k) - np.diag(k_f) * f))),
        lower_slack=float(np.min(gram_f - gram / (c_f * f.max()))),
        upper_slack=float(np.min(c_f / f.min() * gram - gram_f)),
        alpha=float(eig.min()),
        beta=float(eig.max()),
        spectrum=(float(eig_f.min()), float(eig_f.max())),
    )


def reweight_sweep(count: int = 100, seed: int = 0, n: int = 6) -> list[ReweightReport]:
    """Random complex kernels with F uniform in [½, 2]."""
    out = []
    for i in range(count):
        rng = np.random.default_rng([seed, i])
        kernel = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        out.append(reweight_kernels(kernel, rng.uniform(0.5, 2.0, n), rng.uniform(0.5, 2.0, n)))
    return out


@dataclass(frozen=True)
class OpineqSummary:
    pullup: SweepSummary
    lemma_xy: SweepSummary
    pullin: CounterexampleReport
    pullin_inverse_gap: float
    reweight_failures: int
    reweight_count: int

    @property
    def passed(self) -> bool:
        return (
            self.pullup.passed
            and self.lemma_xy.passed
            and self.pullin.normalized < -1e-3
            and self.pullin_inverse_gap >= -1e-12
            and self.reweight_failures == 0
        )

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "pullup": self.pullup.to_dict(),
            "lemma_xy": self.lemma_xy.to_dict(),
            "pullin": self.pullin.to_dict(),
            "pullin_inverse_gap": self.pullin_inverse_gap,
            "reweight": {"count": self.reweight_count, "failures": self.reweight_failures},
        }


def run_suite(count: int = 1000, seed: int = 0, *, max_workers: int | None = None) -> OpineqSummary:
    reweights = reweight_sweep(max(1, count // 10), seed)
    return OpineqSummary(
        pullup=pullup_sweep(count, seed, max_workers=max_workers),
        lemma_xy=lemma_xy_sweep(count, seed, max_workers=max_workers),
        pullin=pullin_counterexample(),
        pullin_inverse_gap=pullin_counterexample(inverse).min_eig,
        reweight_failures=sum(not r.ok() for r in reweights),
        reweight_count=len(reweights),
    )
