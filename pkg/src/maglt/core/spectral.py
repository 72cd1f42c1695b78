"""Discrete Pauli operators on Dirichlet boxes and their negative spectrum.

Sites are the interior nodes of a uniform grid on the box. The magnetic
Laplacian uses Peierls links U = exp(i h⁻¹∫A·dl) along every edge, so a
gauge change A -> A + ∇φ is an exact unitary conjugation of the matrix. The
spinor index of site i and spin s is 2i + s, and the Zeeman term hσ·B is a
2x2 block sampled at each site:

    H = (-ih∇ + A)² + hσ·B + V.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from numpy.polynomial.legendre import leggauss
from scipy.fft import dstn, idstn
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh, lobpcg, splu

from maglt.core.analytic import BoundBreakdown, lt_rhs, semiclassical_energy, zero_mode_density_bound
from maglt.core.domain import Box
from maglt.core.errors import (
    BudgetExceeded,
    NumericalFailure,
    QuadratureError,
    ResolutionError,
    SolverError,
)
from maglt.core.field_model import (
    LossYauField,
    MagneticFieldModel,
    ScaledField,
    VectorPotential,
    gauge_for,
    superpose,
)
from maglt.core.logging_config import get_logger
from maglt.core.parallel import map_parallel
from maglt.core.potentials import Potential, ZeroPotential
from maglt.core.scales import ScaleProfile

log = get_logger(__name__)

DENSE_LIMIT = 4000
MAX_DIMENSION = 2_000_000
ITERATIVE_LIMIT = 100_000
ITERATIVE_TOL = 1e-6
MAX_EIGENVALUES = 2000
BISECTION_RTOL = 1e-7
MAX_BISECTIONS = 60
COO_HEADER = "# maglt-coo"

_LINK_TOL = 1e-10
_LINK_MAX_NODES = 64
_CHUNK = 1 << 14


@dataclass(frozen=True)
class Lattice:
    """
    Interior nodes of a uniform grid on a box.

    Attributes:
        box: The Dirichlet box.
        cells: Cells per axis; sites per axis are cells - 1.
    """

    box: Box
    cells: tuple[int, int, int]

    @property
    def shape(self) -> tuple[int, int, int]:
        return tuple(n - 1 for n in self.cells)

    @property
    def spacings(self) -> np.ndarray:
        return self.box.sides / np.asarray(self.cells)

    @property
    def spacing(self) -> float:
        return float(self.spacings.max())

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def site_volume(self) -> float:
        return float(np.prod(self.spacings))

    @property
    def sites(self) -> np.ndarray:
        axes = [self.box.lo[k] + self.spacings[k] * np.arange(1, self.cells[k]) for k in range(3)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)

    def edges(self, axis: int) -> tuple[np.ndarray, np.ndarray]:
        """Site index pairs (i, j) with j the +axis neighbour of i."""
        idx = np.arange(self.size).reshape(self.shape)
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[axis] = slice(0, -1)
        hi[axis] = slice(1, None)
        return idx[tuple(lo)].ravel(), idx[tuple(hi)].ravel()


def lattice_for(box: Box, spacing: float) -> Lattice:
    """Finest uniform lattice on box with every cell side <= spacing."""
    if spacing <= 0:
        raise ValueError("spacing must be > 0")
    cells = tuple(max(2, int(math.ceil(s / spacing - 1e-9))) for s in box.sides)
    return Lattice(box, cells)


def link_integrals(
    gauge: VectorPotential, starts: np.ndarray, step: np.ndarray, *, max_workers: int | None = None
) -> np.ndarray:
    """
    ∫ A·dl along the segments [x, x + step] by Gauss–Legendre rules
    doubled from 4 nodes until two successive rules agree.

    Raises:
        QuadratureError: No agreement up to 64 nodes.
    """

    def chunk(x: np.ndarray) -> np.ndarray:
        previous = None
        nodes = 4
        while nodes <= _LINK_MAX_NODES:
            s, w = leggauss(nodes)
            s = 0.5 * (s + 1.0)
            pts = x[None, :, :] + s[:, None, None] * step
            values = np.einsum("n,nmk,k->m", 0.5 * w, np.asarray(gauge(pts)), step)
            if previous is not None and np.max(np.abs(values - previous), initial=0.0) <= _LINK_TOL * max(
                1.0, np.max(np.abs(values), initial=0.0)
            ):
                return values
            previous, nodes = values, 2 * nodes
        raise QuadratureError("link integrals did not converge", nodes=_LINK_MAX_NODES)

    parts = [starts[i : i + _CHUNK] for i in range(0, len(starts), _CHUNK)]
    if not parts:
        return np.zeros(0)
    return np.concatenate(map_parallel(chunk, parts, max_workers=max_workers))


def _links(lattice: Lattice, gauge: VectorPotential, h: float, max_workers) -> list[tuple[np.ndarray, ...]]:
    sites = lattice.sites
    out = []
    for axis in range(3):
        i, j = lattice.edges(axis)
        step = np.zeros(3)
        step[axis] = lattice.spacings[axis]
        phase = np.exp(1j * link_integrals(gauge, sites[i], step, max_workers=max_workers) / h)
        out.append((i, j, phase))
    return out


def magnetic_laplacian(
    lattice: Lattice, gauge: VectorPotential | None, h: float = 1.0, *, max_workers: int | None = None
) -> sp.csr_matrix:
    """Scalar (-ih∇ + A)² with Peierls links; gauge None gives -h²Δ."""
    n = lattice.size
    inv = 1.0 / lattice.spacings**2
    rows, cols, data = [np.arange(n)], [np.arange(n)], [np.full(n, 2.0 * h * h * inv.sum(), dtype=complex)]
    if gauge is None:
        links = [(i, j, np.ones(len(i), dtype=complex)) for i, j in map(lattice.edges, range(3))]
    else:
        links = _links(lattice, gauge, h, max_workers)
    for axis, (i, j, u) in enumerate(links):
        c = -h * h * inv[axis]
        rows += [i, j]
        cols += [j, i]
        data += [c * u, c * np.conj(u)]
    return sp.csr_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )


def zeeman_blocks(b: np.ndarray) -> sp.csr_matrix:
    """Block diagonal σ·B with B sampled at sites (N, 3)."""
    n = len(b)
    base = 2 * np.arange(n)
    rows = np.concatenate([base, base, base + 1, base + 1])
    cols = np.concatenate([base, base + 1, base, base + 1])
    data = np.concatenate([b[:, 2], b[:, 0] - 1j * b[:, 1], b[:, 0] + 1j * b[:, 1], -b[:, 2]]).astype(complex)
    return sp.csr_matrix((data, (rows, cols)), shape=(2 * n, 2 * n))


@dataclass(frozen=True)
class DiscretePauli:
    """
    Assembled H = (-ih∇ + A)² + hσ·B + V on a Dirichlet lattice.

    Attributes:
        lattice: Sites and spacing.
        matrix: Sparse Hermitian CSR matrix of dimension 2·sites.
        h: Semiclassical parameter.
        bmax: max |B| over the sites.
        vmin: min V over the sites.
        gauge_tag: Tag of the gauge used for the links.
    """

    lattice: Lattice
    matrix: sp.csr_matrix = dc_field(repr=False)
    h: float
    bmax: float
    vmin: float
    gauge_tag: str

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    @property
    def lower_bound(self) -> float:
        """Kinetic part is nonnegative, so H >= min V - h max|B|."""
        return self.vmin - self.h * self.bmax

    def hermitian_defect(self) -> float:
        diff = self.matrix - self.matrix.conj().T
        return float(np.max(np.abs(diff.data), initial=0.0))

    def sample(self, spinor: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        """Spinor field (..., 3) -> (..., 2) sampled on the sites as a flat vector."""
        return np.asarray(spinor(self.lattice.sites), dtype=complex).reshape(-1)

    def export_coo(self, path: Path | str) -> Path:
        """Write the nonzeros as 'row col real imag' lines under a '# maglt-coo rows cols nnz' header."""
        coo = self.matrix.tocoo()
        path = Path(path)
        with path.open("w", encoding="utf-8") as fh:
            fh.write(f"{COO_HEADER} {coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
            np.savetxt(fh, np.column_stack([coo.row, coo.col, coo.data.real, coo.data.imag]), fmt="%d %d %.17g %.17g")
        return path


def read_coo(path: Path | str) -> sp.csr_matrix:
    with Path(path).open(encoding="utf-8") as fh:
        header = fh.readline().split()
        if header[:2] != COO_HEADER.split():
            raise ValueError(f"{path} is not a maglt-coo file")
        rows, cols, nnz = (int(v) for v in header[2:5])
        table = np.loadtxt(fh, ndmin=2) if nnz else np.zeros((0, 4))
    data = table[:, 2] + 1j * table[:, 3]
    return sp.csr_matrix((data, (table[:, 0].astype(int), table[:, 1].astype(int))), shape=(rows, cols))


def check_resolution(lattice: Lattice, bmax: float, potential: Potential, h: float) -> None:
    """
    Raises:
        BudgetExceeded: Dimension above the desk-scale cap.
        ResolutionError: Spacing above ½ min(magnetic length, feature of V),
            or supp [V]₋ not inside the box with a two-cell margin.
    """
    dim = 2 * lattice.size
    if dim > MAX_DIMENSION:
        raise BudgetExceeded("operator dimension exceeds the budget", dimension=dim, limit=MAX_DIMENSION)
    magnetic = math.sqrt(h / bmax) if bmax > 0 else math.inf
    limit = 0.5 * min(magnetic, potential.feature_length)
    if lattice.spacing > limit * (1.0 + 1e-12):
        raise ResolutionError(
            "grid spacing does not resolve the magnetic length or the potential",
            spacing=lattice.spacing,
            limit=limit,
            magnetic_length=magnetic,
            feature_length=potential.feature_length,
        )
    support = potential.support_box()
    if support is not None and not lattice.box.contains_box(support.padded(2.0 * lattice.spacing)):
        raise ResolutionError(
            "box does not contain supp [V]₋ with a two-cell margin",
            box=[list(lattice.box.lower), list(lattice.box.upper)],
            support=[list(support.lower), list(support.upper)],
        )


def assemble(
    field: MagneticFieldModel,
    potential: Potential,
    box: Box,
    spacing: float,
    *,
    gauge: VectorPotential | None = None,
    h: float = 1.0,
    zeeman: bool = True,
    check: bool = True,
    max_workers: int | None = None,
) -> DiscretePauli:
    """Assemble the discrete Pauli operator; gauge defaults to gauge_for(field, box center)."""
    if h <= 0:
        raise ValueError("h must be > 0")
    lattice = lattice_for(box, spacing)
    sites = lattice.sites
    b = field.evaluate(sites)
    bmax = float(np.max(np.linalg.norm(b, axis=-1), initial=0.0))
    if check:
        check_resolution(lattice, bmax, potential, h)
    gauge = gauge or gauge_for(field, box.center)
    kinetic = magnetic_laplacian(lattice, gauge, h, max_workers=max_workers)
    v = np.asarray(potential(sites), dtype=float)
    matrix = sp.kron(kinetic, sp.identity(2), format="csr") + sp.kron(
        sp.diags(v), sp.identity(2), format="csr"
    )
    if zeeman:
        matrix = matrix + h * zeeman_blocks(b)
    log.info("assembled %s operator of dimension %d (spacing %g)", field.name, matrix.shape[0], lattice.spacing)
    return DiscretePauli(lattice, matrix.tocsr(), h, bmax, float(v.min(initial=0.0)), gauge.gauge_tag)


def dirac_stencil(
    lattice: Lattice, gauge: VectorPotential, h: float = 1.0, *, max_workers: int | None = None
) -> sp.csr_matrix:
    """First-order σ·(-ih∇ + A) with symmetric Peierls differences."""
    n = lattice.size
    sigma = [
        sp.csr_matrix(np.array([[0, 1], [1, 0]], dtype=complex)),
        sp.csr_matrix(np.array([[0, -1j], [1j, 0]], dtype=complex)),
        sp.csr_matrix(np.array([[1, 0], [0, -1]], dtype=complex)),
    ]
    total = sp.csr_matrix((2 * n, 2 * n), dtype=complex)
    for axis, (i, j, u) in enumerate(_links(lattice, gauge, h, max_workers)):
        c = h / (2.0 * lattice.spacings[axis])
        s = sp.csr_matrix(
            (np.concatenate([c * u, -c * np.conj(u)]), (np.concatenate([i, j]), np.concatenate([j, i]))),
            shape=(n, n),
        )
        total = total + sp.kron(-1j * s, sigma[axis], format="csr")
    return total.tocsr()


def lichnerowicz_defect(
    field: MagneticFieldModel, box: Box, spacing: float, probe: Callable[[np.ndarray], np.ndarray], h: float = 1.0
) -> float:
    """‖D²ψ - (H - V)ψ‖ / ‖(H - V)ψ‖ for the first-order stencil D and a probe spinor ψ."""
    op = assemble(field, ZeroPotential(), box, spacing, h=h, check=False)
    dirac = dirac_stencil(op.lattice, gauge_for(field, box.center), h)
    psi = op.sample(probe)
    direct = op.matrix @ psi
    return float(np.linalg.norm(dirac @ (dirac @ psi) - direct) / np.linalg.norm(direct))


def gaussian_probe(center, width: float, spin=(1.0, 0.5j)) -> Callable[[np.ndarray], np.ndarray]:
    c = np.asarray(center, dtype=float)
    s = np.asarray(spin, dtype=complex)

    def fn(x):
        r2 = np.sum((np.asarray(x) - c) ** 2, axis=-1)
        return np.exp(-0.5 * r2 / width**2)[..., None] * s

    return fn


# ---------------------------------------------------------------------------
# Negative spectrum
# ---------------------------------------------------------------------------


def negative_count(matrix: sp.spmatrix, shift: float) -> int:
    """
    Number of eigenvalues below shift from the inertia of matrix - shift.

    The LU uses a symmetric fill-reducing ordering without pivoting, so the
    pivots are the D of an LDL* factorization.

    Raises:
        SolverError: The factorization pivoted off the diagonal or hit a zero pivot.
    """
    n = matrix.shape[0]
    shifted = (matrix - shift * sp.identity(n, format="csr")).tocsc()
    try:
        lu = splu(shifted, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0, options=dict(SymmetricMode=True))
    except RuntimeError as exc:
        raise SolverError("factorization failed at the shift", shift=shift, reason=str(exc)) from exc
    if not np.array_equal(lu.perm_r, lu.perm_c):
        raise SolverError("row pivoting broke the symmetric factorization", shift=shift)
    pivots = lu.U.diagonal().real
    if np.any(pivots == 0.0):
        raise SolverError("zero pivot at the shift", shift=shift)
    return int(np.sum(pivots < 0.0))


@dataclass(frozen=True)
class SpectralReport:
    """
    Negative eigenvalues of a discrete operator.

    Attributes:
        eigenvalues: Sorted eigenvalues below -tol.
        total: Σ|e_j|.
        residual: max ‖Hv - ev‖ over the returned pairs.
        method: "dense" or "shift-invert".
        dimension: Matrix dimension.
        certified: Count matched the inertia at -tol.
        tol: Threshold for negativity.
        spacing: Grid spacing of the operator.
    """

    eigenvalues: tuple[float, ...]
    total: float
    residual: float
    method: str
    dimension: int
    certified: bool
    tol: float
    spacing: float

    @property
    def count(self) -> int:
        return len(self.eigenvalues)

    def to_dict(self) -> dict:
        return {
            "eigenvalues": list(self.eigenvalues),
            "count": self.count,
            "total": self.total,
            "residual": self.residual,
            "method": self.method,
            "dimension": self.dimension,
            "certified": self.certified,
            "tol": self.tol,
            "spacing": self.spacing,
        }


def _report(op: DiscretePauli, vals, vecs, method: str, certified: bool, tol: float) -> SpectralReport:
    vals = np.asarray(vals, dtype=float)
    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    if len(vals):
        res = op.matrix @ vecs - vecs * vals
        residual = float(np.max(np.linalg.norm(res, axis=0)))
    else:
        residual = 0.0
    return SpectralReport(
        tuple(float(v) for v in vals),
        float(np.sum(np.abs(vals))),
        residual,
        method,
        op.dimension,
        certified,
        tol,
        op.lattice.spacing,
    )


def sum_negative_eigenvalues(
    op: DiscretePauli,
    *,
    tol: float = 1e-9,
    dense_limit: int = DENSE_LIMIT,
    max_count: int = MAX_EIGENVALUES,
    max_iterations: int | None = None,
) -> SpectralReport:
    """
    All eigenvalues below -tol.

    Small operators use a dense Hermitian solver. Larger ones count the
    negative eigenvalues by inertia at -tol and then request exactly that
    many from shift-invert Lanczos below the spectrum.

    Raises:
        BudgetExceeded: More than max_count negative eigenvalues.
        SolverError: Lanczos did not converge or returned an uncertified set.
    """
    if op.dimension <= dense_limit:
        vals, vecs = la.eigh(op.matrix.toarray())
        neg = vals < -tol
        return _report(op, vals[neg], vecs[:, neg], "dense", True, tol)
    count = negative_count(op.matrix, -tol)
    log.info("inertia: %d eigenvalues below %g", count, -tol)
    if count == 0:
        return _report(op, np.zeros(0), np.zeros((op.dimension, 0)), "shift-invert", True, tol)
    if count > max_count:
        raise BudgetExceeded("too many negative eigenvalues", count=count, limit=max_count)
    sigma = op.lower_bound - 1.0
    try:
        vals, vecs = eigsh(op.matrix, k=count, sigma=sigma, which="LM", maxiter=max_iterations)
    except ArpackNoConvergence as exc:
        raise SolverError("shift-invert Lanczos did not converge", count=count, shift=sigma) from exc
    found = int(np.sum(vals < -tol))
    if found != count:
        raise SolverError("Lanczos eigenvalues disagree with the inertia count", inertia=count, found=found)
    return _report(op, vals, vecs, "shift-invert", True, tol)


def richardson(coarse: float, fine: float, order: int = 2, ratio: float = 2.0) -> float:
    """Extrapolate values at spacing h and h/ratio with error O(h^order)."""
    f = ratio**order
    return (f * fine - coarse) / (f - 1.0)


@dataclass(frozen=True)
class RefinementPair:
    coarse: SpectralReport
    fine: SpectralReport
    extrapolated: float

    @property
    def error_estimate(self) -> float:
        return abs(self.fine.total - self.extrapolated)


def refinement_pair(
    field: MagneticFieldModel, potential: Potential, box: Box, spacing: float, **kwargs
) -> RefinementPair:
    """|Tr H₋| at spacing and spacing/2 with a Richardson estimate."""
    coarse = sum_negative_eigenvalues(assemble(field, potential, box, spacing))
    fine = sum_negative_eigenvalues(assemble(field, potential, box, 0.5 * spacing), **kwargs)
    return RefinementPair(coarse, fine, richardson(coarse.total, fine.total))


def ground_energy(matrix: sp.spmatrix, dense_limit: int = DENSE_LIMIT) -> float:
    if matrix.shape[0] <= dense_limit:
        return float(la.eigvalsh(matrix.toarray(), subset_by_index=[0, 0])[0])
    vals = eigsh(matrix, k=1, sigma=-1.0, which="LM", return_eigenvectors=False)
    return float(vals[0])


def diamagnetic_gap(field: MagneticFieldModel, box: Box, spacing: float) -> float:
    """Ground energy of (-i∇ + A)² minus that of -Δ on the same lattice; >= 0 up to rounding."""
    lattice = lattice_for(box, spacing)
    magnetic = magnetic_laplacian(lattice, gauge_for(field, box.center))
    free = magnetic_laplacian(lattice, None)
    return ground_energy(magnetic) - ground_energy(free)


@dataclass(frozen=True)
class LandauReport:
    """
    Low spectrum of the lattice Pauli operator for a constant field along the third axis.

    The lattice operator separates as H⊥ ⊗ 1 + 1 ⊗ T₃ with T₃ the Dirichlet
    second difference along the field, so compressing H onto the lowest mode
    of T₃ gives H⊥ exactly. Levels are read off from the spectral measure of
    a radially symmetric spin-down Gaussian at the gauge center, which has
    weight on every Landau level 2νhb.

    Attributes:
        b: Field strength |B|.
        h: Semiclassical parameter.
        z_energy: Lowest eigenvalue of T₃.
        transverse_ground: Lowest eigenvalue of H⊥.
        levels: Weighted mean energy of each eigenvalue cluster seen by the probe.
        level_weights: Probe weight carried by each cluster.
        separation_defect: ‖HP - P(H⊥ + z_energy)‖ for the compression P.
        eigenvalues: Computed eigenvalues of H⊥.
    """

    b: float
    h: float
    z_energy: float
    transverse_ground: float
    levels: tuple[float, ...]
    level_weights: tuple[float, ...]
    separation_defect: float
    eigenvalues: tuple[float, ...] = dc_field(repr=False)

    @property
    def ground(self) -> float:
        """Lowest eigenvalue of the full operator."""
        return self.transverse_ground + self.z_energy

    @property
    def spin_gap(self) -> float:
        return self.levels[1] - self.levels[0] if len(self.levels) > 1 else math.nan

    @property
    def landau_gap(self) -> float:
        return 2.0 * self.h * self.b

    def ok(self, rel: float = 0.05) -> bool:
        """Ground state within rel·2hb of zero and spin gap within rel of 2hb."""
        gap = self.landau_gap
        return (
            abs(self.transverse_ground) <= rel * gap
            and math.isfinite(self.spin_gap)
            and abs(self.spin_gap - gap) <= rel * gap
            and self.separation_defect <= 1e-8 * (1.0 + gap)
        )

    def to_dict(self) -> dict:
        return {
            "b": self.b,
            "ground": self.ground,
            "z_energy": self.z_energy,
            "transverse_ground": self.transverse_ground,
            "relative_to_gap": self.transverse_ground / self.landau_gap,
            "levels": list(self.levels),
            "level_weights": list(self.level_weights),
            "spin_gap": self.spin_gap,
            "separation_defect": self.separation_defect,
            "ok": self.ok(),
        }


def landau_levels(
    field: MagneticFieldModel,
    box: Box,
    spacing: float,
    *,
    h: float = 1.0,
    count: int = 96,
    dense_limit: int = DENSE_LIMIT,
    min_weight: float = 1e-3,
) -> LandauReport:
    """
    Landau levels of the discrete Pauli operator for B = (0, 0, b).

    The gauge is ½B × (x - c) about the box center c. Eigenvalues of H⊥ whose
    probe weight is at least min_weight of the captured weight are grouped
    into levels wherever consecutive values are more than hb apart.

    Raises:
        ValueError: The field is not constant along the third axis.
    """
    lattice = lattice_for(box, spacing)
    b_sites = field.evaluate(lattice.sites)
    b = float(b_sites[0, 2])
    if b == 0.0 or np.max(np.abs(b_sites - np.array([0.0, 0.0, b]))) > 1e-12 * abs(b):
        raise ValueError("landau_levels needs a constant field along the third axis")
    center = box.center
    bvec = np.array([0.0, 0.0, b])
    gauge = VectorPotential(lambda x: 0.5 * np.cross(bvec, np.asarray(x) - center), "linear-constant")
    op = assemble(field, ZeroPotential(), box, spacing, gauge=gauge, h=h, check=False)

    nx, ny, nz = lattice.shape
    cells_z = lattice.cells[2]
    mode = np.sin(np.pi * np.arange(1, nz + 1) / cells_z)
    mode /= np.linalg.norm(mode)
    z_energy = 2.0 * h * h / lattice.spacings[2] ** 2 * (1.0 - math.cos(math.pi / cells_z))
    compress = sp.kron(
        sp.identity(nx * ny), sp.kron(sp.csr_matrix(mode[:, None]), sp.identity(2)), format="csr"
    )
    hp = op.matrix @ compress
    transverse = (compress.conj().T @ hp).tocsr() - z_energy * sp.identity(compress.shape[1], format="csr")
    defect = float(abs(hp - compress @ (transverse + z_energy * sp.identity(compress.shape[1]))).max())

    plane = lattice.sites.reshape(nx, ny, nz, 3)[:, :, 0, :2] - center[:2]
    r2 = np.sum(plane * plane, axis=-1).ravel()
    probe = np.zeros((nx * ny, 2), dtype=complex)
    probe[:, 1 if b > 0 else 0] = np.exp(-abs(b) * r2 / (2.0 * h))
    probe = probe.ravel() / np.linalg.norm(probe)

    dim = transverse.shape[0]
    if dim <= dense_limit:
        vals, vecs = la.eigh(transverse.toarray())
    else:
        k = min(count, dim - 2)
        vals, vecs = eigsh(transverse, k=k, sigma=-h * abs(b) - 1.0, which="LM")
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
    weights = np.abs(vecs.conj().T @ probe) ** 2

    seen = weights >= min_weight * weights.sum()
    e_seen, w_seen = vals[seen], weights[seen]
    levels, level_weights = [], []
    for group in np.split(np.arange(e_seen.size), np.flatnonzero(np.diff(e_seen) > h * abs(b)) + 1):
        if group.size:
            w = w_seen[group]
            levels.append(float(np.sum(w * e_seen[group]) / np.sum(w)))
            level_weights.append(float(np.sum(w)))
    log.info("landau levels for b=%g: %s", b, levels)
    return LandauReport(
        abs(b), h, z_energy, float(vals[0]), tuple(levels), tuple(level_weights), defect, tuple(vals.tolist())
    )


# ---------------------------------------------------------------------------
# Birman–Schwinger
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BirmanSchwingerReport:
    """
    ∫₀^∞ n(E) dE with n(E) the number of eigenvalues >= 1 of W^{1/2}(H₀ + E)⁻¹W^{1/2}.

    Attributes:
        thresholds: Energies where n(E) drops by one, each an |e_j|.
        integral: Σ thresholds.
        direct: |Tr H₋| from the eigenvalue solver.
        relative_gap: |integral - direct| / max(direct, tiny).
        samples: Evaluated (E, n(E)) pairs, sorted by E.
    """

    thresholds: tuple[float, ...]
    integral: float
    direct: float
    relative_gap: float
    samples: tuple[tuple[float, int], ...]

    @property
    def monotone(self) -> bool:
        counts = [n for _, n in self.samples]
        return all(a >= b for a, b in zip(counts, counts[1:]))

    def ok(self, rtol: float = 1e-2) -> bool:
        return self.relative_gap <= rtol and self.monotone

    def to_dict(self) -> dict:
        return {
            "thresholds": list(self.thresholds),
            "integral": self.integral,
            "direct": self.direct,
            "relative_gap": self.relative_gap,
            "monotone": self.monotone,
            "evaluations": len(self.samples),
        }


class _BirmanSchwingerCounter:
    def __init__(self, h0: sp.csr_matrix, weights: np.ndarray) -> None:
        self.h0 = h0.tocsc()
        self.support = np.flatnonzero(weights > 0)
        self.root = np.sqrt(weights[self.support])
        self.samples: dict[float, int] = {}

    def __call__(self, energy: float) -> int:
        if energy in self.samples:
            return self.samples[energy]
        m = len(self.support)
        if m == 0:
            return 0
        n = self.h0.shape[0]
        lu = splu((self.h0 + energy * sp.identity(n, format="csc")).tocsc())
        rhs = np.zeros((n, m), dtype=complex)
        rhs[self.support, np.arange(m)] = 1.0
        block = lu.solve(rhs)[self.support]
        kernel = self.root[:, None] * block * self.root[None, :]
        kernel = 0.5 * (kernel + kernel.conj().T)
        count = int(np.sum(la.eigvalsh(kernel) >= 1.0))
        self.samples[energy] = count
        log.debug("n(%g) = %d", energy, count)
        return count


def _thresholds(count_fn, lo: float, hi: float, n_lo: int, n_hi: int, depth: int, out: list[float]) -> None:
    if n_lo == n_hi:
        return
    mid = 0.5 * (lo + hi)
    if hi - lo <= BISECTION_RTOL * hi or depth >= MAX_BISECTIONS:
        out.extend([mid] * (n_lo - n_hi))
        return
    n_mid = count_fn(mid)
    _thresholds(count_fn, lo, mid, n_lo, n_mid, depth + 1, out)
    _thresholds(count_fn, mid, hi, n_mid, n_hi, depth + 1, out)


def birman_schwinger_check(
    field: MagneticFieldModel,
    potential: Potential,
    box: Box,
    spacing: float,
    *,
    tol: float = 1e-9,
) -> BirmanSchwingerReport:
    """
    Compare the Birman–Schwinger count integral with the direct eigenvalue sum.

    Raises:
        NumericalFailure: The discrete H₀ has a negative eigenvalue, so the
            counting identity does not apply on this lattice.
    """
    op0 = assemble(field, ZeroPotential(), box, spacing)
    lattice = op0.lattice
    e0 = ground_energy(op0.matrix)
    if e0 < -tol:
        raise NumericalFailure("discrete H₀ is not nonnegative", ground_energy=e0)
    weights = np.repeat(potential.negative_part(lattice.sites), 2)
    counter = _BirmanSchwingerCounter(op0.matrix, weights)
    top = float(weights.max(initial=0.0)) * (1.0 + 1e-9)
    out: list[float] = []
    if top > 0:
        _thresholds(counter, 0.0, top, counter(0.0), 0, 0, out)
    direct = sum_negative_eigenvalues(assemble(field, potential, box, spacing), tol=tol).total
    integral = float(sum(out))
    gap = abs(integral - direct) / max(direct, 1e-300) if direct or integral else 0.0
    return BirmanSchwingerReport(
        tuple(sorted(out, reverse=True)), integral, direct, gap, tuple(sorted(counter.samples.items()))
    )


# ---------------------------------------------------------------------------
# Zero modes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ZeroModeReport:
    """
    Lowest eigenpairs of 𝒟² and the density of the accepted ones.

    Attributes:
        eigenvalues: The k lowest eigenvalues.
        accepted: Indices with eigenvalue <= tol·max(max|B|, 1).
        density: n(x) = Σ_accepted |u_j(x)|² per unit volume at the sites.
        vectors: Eigenvectors as columns.
    """

    eigenvalues: tuple[float, ...]
    accepted: tuple[int, ...]
    density: np.ndarray = dc_field(repr=False)
    vectors: np.ndarray = dc_field(repr=False)
    site_volume: float = 1.0

    def density_integral(self) -> float:
        return float(np.sum(self.density) * self.site_volume)

    def to_dict(self) -> dict:
        return {
            "eigenvalues": list(self.eigenvalues),
            "accepted": list(self.accepted),
            "density_integral": self.density_integral(),
        }


def _sine(a: np.ndarray, transform) -> np.ndarray:
    kw = dict(type=1, axes=(0, 1, 2), norm="ortho")
    return transform(a.real, **kw) + 1j * transform(a.imag, **kw)


def dirichlet_preconditioner(lattice: Lattice, h: float, shift: float) -> LinearOperator:
    """(-h²Δ + shift)⁻¹ ⊗ 1 for the Dirichlet lattice Laplacian, applied by sine transforms."""
    if shift <= 0:
        raise ValueError("shift must be > 0")
    shape = lattice.shape
    modes = [
        2.0 * h * h / d**2 * (1.0 - np.cos(np.pi * np.arange(1, n + 1) / c))
        for n, c, d in zip(shape, lattice.cells, lattice.spacings)
    ]
    denom = modes[0][:, None, None] + modes[1][None, :, None] + modes[2][None, None, :] + shift
    dim = 2 * lattice.size

    def apply(x: np.ndarray) -> np.ndarray:
        cols = np.asarray(x).reshape(dim, -1)
        grid = cols.reshape(*shape, 2, cols.shape[1])
        spectrum = _sine(grid, dstn) / denom[..., None, None]
        out = _sine(spectrum, idstn).reshape(dim, -1)
        return out if np.ndim(x) == 2 else out[:, 0]

    return LinearOperator((dim, dim), matvec=apply, matmat=apply, dtype=complex)


def _lowest_iterative(
    op: DiscretePauli, k: int, *, tol: float = ITERATIVE_TOL, maxiter: int = 1000, seed: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """k lowest eigenpairs by preconditioned LOBPCG; the block carries spare vectors for clustered levels."""
    n = op.dimension
    block = min(n // 2, max(2 * k, k + 4))
    rng = np.random.default_rng(seed)
    start = rng.standard_normal((n, block)) + 1j * rng.standard_normal((n, block))
    precond = dirichlet_preconditioner(op.lattice, op.h, max(op.h * op.bmax, 1.0))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        vals, vecs = lobpcg(op.matrix, start, M=precond, tol=tol, maxiter=maxiter, largest=False)
    order = np.argsort(vals)[:k]
    vals, vecs = vals[order], vecs[:, order]
    residual = np.linalg.norm(op.matrix @ vecs - vecs * vals, axis=0)
    if np.any(residual > 10.0 * tol * max(1.0, float(np.max(np.abs(vals))))):
        raise SolverError("LOBPCG did not converge", k=k, residual=float(residual.max()))
    log.info("lobpcg: %d eigenpairs of dimension %d, residual %.2e", k, n, float(residual.max()))
    return vals, vecs


def zero_modes(op: DiscretePauli, k: int = 4, tol: float = 1e-2, *, dense_limit: int = DENSE_LIMIT) -> ZeroModeReport:
    """
    The k lowest eigenpairs of the discrete Pauli operator.

    Operators above ITERATIVE_LIMIT skip the factorization and use LOBPCG
    with a Dirichlet Laplacian preconditioner.

    Raises:
        ValueError: k < 1.
        SolverError: The eigensolver did not converge.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    k = min(k, op.dimension - 2)
    if op.dimension <= dense_limit:
        vals, vecs = la.eigh(op.matrix.toarray(), subset_by_index=[0, k - 1])
    elif op.dimension > ITERATIVE_LIMIT:
        vals, vecs = _lowest_iterative(op, k)
    else:
        try:
            vals, vecs = eigsh(op.matrix, k=k, sigma=op.lower_bound - 1.0, which="LM")
        except ArpackNoConvergence as exc:
            raise SolverError("shift-invert Lanczos did not converge", k=k) from exc
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
    scale = max(op.bmax, 1.0)
    accepted = tuple(int(i) for i in np.flatnonzero(vals <= tol * scale))
    spins = vecs[:, list(accepted)].reshape(op.lattice.size, 2, -1)
    density = np.sum(np.abs(spins) ** 2, axis=(1, 2)) / op.lattice.site_volume
    return ZeroModeReport(tuple(float(v) for v in vals), accepted, density, vecs, op.lattice.site_volume)


def mode_overlap(op: DiscretePauli, vector: np.ndarray, spinor: Callable[[np.ndarray], np.ndarray]) -> float:
    """|⟨u, ψ⟩| / (‖u‖‖ψ‖) with ψ sampled on the sites."""
    psi = op.sample(spinor)
    return float(abs(np.vdot(vector, psi)) / (np.linalg.norm(vector) * np.linalg.norm(psi)))


@dataclass(frozen=True)
class LossYauReport:
    """
    Lowest two eigenvalues of the Loss–Yau operator on a coarse and a fine grid.

    The zero mode passes when the extrapolated lowest eigenvalue is at most
    ratio_limit of the first excited one on the fine grid and the fine
    eigenvector matches the closed-form spinor to overlap_limit.
    """

    coarse: float
    fine: float
    extrapolated: float
    first_excited: float
    bmax: float
    overlap: float
    fine_spacing: float = math.nan
    ratio_limit: float = 1e-2
    overlap_limit: float = 0.99

    @property
    def ratio(self) -> float:
        return abs(self.extrapolated) / self.first_excited if self.first_excited > 0 else math.inf

    def ok(self) -> bool:
        return self.ratio <= self.ratio_limit and self.overlap >= self.overlap_limit

    def to_dict(self) -> dict:
        return {
            "coarse": self.coarse,
            "fine": self.fine,
            "extrapolated": self.extrapolated,
            "first_excited": self.first_excited,
            "ratio": self.ratio,
            "bmax": self.bmax,
            "overlap": self.overlap,
            "fine_spacing": self.fine_spacing,
            "ok": self.ok(),
        }


def refined_spacing(box: Box, spacing: float, limit: int = MAX_DIMENSION) -> float:
    """spacing/2, or the finest spacing above it whose operator stays within limit."""
    s = 0.5 * spacing
    while 2 * lattice_for(box, s).size > limit:
        s *= 1.01
    if s >= spacing / 1.05:
        raise BudgetExceeded("no room to refine within the dimension budget", spacing=spacing, limit=limit)
    return s


def loss_yau_check(
    field: LossYauField, box: Box, spacing: float, k: int = 2, *, coarse: ZeroModeReport | None = None
) -> LossYauReport:
    """
    Lowest eigenvalue at spacing and at refined_spacing, its extrapolation,
    the first excited value and the overlap, all on the fine grid.

    Raises:
        ValueError: k < 2.
        BudgetExceeded: No finer grid fits the dimension budget.
    """
    if k < 2:
        raise ValueError("k must be >= 2 to see the first excited value")
    fine_spacing = refined_spacing(box, spacing)
    if coarse is None:
        coarse = zero_modes(assemble(field, ZeroPotential(), box, spacing), k)
    fine_op = assemble(field, ZeroPotential(), box, fine_spacing)
    fine = zero_modes(fine_op, k)
    return LossYauReport(
        coarse.eigenvalues[0],
        fine.eigenvalues[0],
        richardson(coarse.eigenvalues[0], fine.eigenvalues[0], ratio=spacing / fine_spacing),
        fine.eigenvalues[1],
        fine_op.bmax,
        mode_overlap(fine_op, fine.vectors[:, 0], field.zero_mode),
        fine_spacing,
    )


def density_ratio(
    report: ZeroModeReport, op: DiscretePauli, field: MagneticFieldModel, profile: ScaleProfile, points
) -> float:
    """max n(x) / [(|B(x)| + L_c⁻²)L_c⁻¹] over the sites nearest to points."""
    sites = op.lattice.sites
    worst = 0.0
    for p in np.atleast_2d(points):
        i = int(np.argmin(np.linalg.norm(sites - p, axis=-1)))
        bound = zero_mode_density_bound(field, sites[i], profile)
        if bound > 0:
            worst = max(worst, float(report.density[i]) / bound)
    return worst


# ---------------------------------------------------------------------------
# Lieb–Thirring verification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VerifyRow:
    """
    One amplitude of a Lieb–Thirring sweep.

    Attributes:
        amplitude: b in B -> bB.
        trace: |Tr H₋|, None when out of budget.
        breakdown: Right-hand-side terms.
        ratio: trace / (term1 + term2 + term3), None when undefined.
        status: "ok", "trivial" or "out-of-budget".
    """

    amplitude: float
    trace: float | None
    breakdown: BoundBreakdown | None
    ratio: float | None
    status: str

    def row(self) -> list[float | str | None]:
        bd = self.breakdown
        terms = [bd.term1, bd.term2, bd.term3] if bd else [None, None, None]
        return [self.amplitude, self.trace, *terms, self.ratio, self.status]


VERIFY_COLUMNS = ("b", "trace_sum", "term1", "term2", "term3", "ratio", "status")


def verify_lt(
    field: MagneticFieldModel,
    potential: Potential,
    box: Box,
    spacing: float,
    amplitudes: Sequence[float] = (1.0, 2.0, 4.0, 8.0),
    *,
    epsilon: float | None = None,
    tol: float = 1e-9,
) -> list[VerifyRow]:
    rows = []
    for amp in amplitudes:
        scaled = ScaledField(field, amp)
        profile = None
        if not scaled.is_constant:
            profile = ScaleProfile(scaled) if epsilon is None else ScaleProfile(scaled, epsilon)
        try:
            op = assemble(scaled, potential, box, spacing)
        except (ResolutionError, BudgetExceeded) as exc:
            log.warning("amplitude %g out of budget: %s", amp, exc)
            rows.append(VerifyRow(float(amp), None, None, None, "out-of-budget"))
            continue
        trace = sum_negative_eigenvalues(op, tol=tol).total
        bd = lt_rhs(scaled, potential, profile)
        rhs = bd.total()
        if rhs == 0.0:
            rows.append(VerifyRow(float(amp), trace, bd, None, "trivial"))
        else:
            rows.append(VerifyRow(float(amp), trace, bd, trace / rhs, "ok"))
    return rows


@dataclass(frozen=True)
class LocalityReport:
    factors: tuple[float, ...]
    traces: tuple[float, ...]

    @property
    def relative_change(self) -> float:
        t = np.asarray(self.traces)
        return float((t.max() - t.min()) / max(t.max(), 1e-300))

    def ok(self, rtol: float = 0.05) -> bool:
        return self.relative_change < rtol


def locality_check(
    field: MagneticFieldModel,
    bump: MagneticFieldModel,
    potential: Potential,
    box: Box,
    spacing: float,
    factors: Sequence[float] = (1.0, 10.0),
) -> LocalityReport:
    """|Tr H₋| for field + f·bump as the far bump's amplitude f varies."""
    traces = []
    for f in factors:
        op = assemble(superpose(field, ScaledField(bump, f)), potential, box, spacing)
        traces.append(sum_negative_eigenvalues(op).total)
    return LocalityReport(tuple(float(f) for f in factors), tuple(traces))


@dataclass(frozen=True)
class TrendRow:
    h: float
    trace: float
    semiclassical: float

    @property
    def ratio(self) -> float:
        return self.trace / abs(self.semiclassical) if self.semiclassical else math.nan


def semiclassical_trend(
    field: MagneticFieldModel,
    potential: Potential,
    box: Box,
    hs: Sequence[float],
    cells_per_h: float = 4.0,
) -> list[TrendRow]:
    """|Tr H₋| against |E_scl| at a few values of h, with spacing h/cells_per_h."""
    rows = []
    for h in hs:
        op = assemble(field, potential, box, h / cells_per_h, h=h)
        trace = sum_negative_eigenvalues(op).total
        escl = semiclassical_energy(field, potential, h, tol=1e-4).value
        rows.append(TrendRow(float(h), trace, escl))
    return rows
