"""ℓ-uniform ball covers, their colorings and the cutoff families built on them.

A cover is a set of centers x_i with radii ℓ_i = ℓ(x_i) such that the small
balls D̂_i = B(x_i, ℓ_i/10) cover the work region while the cores
B(x_i, ℓ_i/40) stay pairwise disjoint. Around each center sit the balls

    D̂_i = B(x_i, ℓ_i/10), D_i = B(x_i, ℓ_i), D̃_i = B(x_i, 10ℓ_i), D*_i = B(x_i, 40ℓ_i).

Construction is greedy: candidates come from an octree refined until every
cell fits inside B(c, ℓ(c)/20), and the largest-ℓ candidate not yet covered
by a chosen B(x_j, ℓ_j/20) is picked next. Ties are broken on the center
coordinates, so identical inputs give identical covers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Any, Callable

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree

from maglt.core.domain import Box
from maglt.core.errors import BudgetExceeded, NumericalFailure, RegularityError
from maglt.core.extremize import ball_extrema
from maglt.core.field_model import MagneticFieldModel
from maglt.core.logging_config import get_logger
from maglt.core.profiles import annulus_profile, derivative_sup, plateau, plateau_derivative
from maglt.core.sampling import shell_points

log = get_logger(__name__)

EllFunction = Callable[[np.ndarray], np.ndarray]

HAT, BASE, TILDE, STAR = 0.1, 1.0, 10.0, 40.0
_SEED_FRACTION = 1.0 / 20.0
DEFAULT_MAX_CANDIDATES = 400_000


@dataclass(frozen=True)
class BallCover:
    """
    An ℓ-uniform set of points over a box.

    Attributes:
        centers: Array (n, 3) in selection order.
        radii: ℓ_i = ℓ(x_i), shape (n,).
        region: Requested box.
        work_region: Region actually covered (region plus padding).
        epsilon: Scale parameter used for strong/weak classification.
        strong: Flags |B(x_i)| >= ε⁻²ℓ_i⁻², all False until classified.
        classes: Color classes; within each the balls D̃_i are disjoint.
        measured_overlap: Largest number of D̃_i containing a probe point.
        candidates: Number of octree candidates examined.
    """

    centers: np.ndarray
    radii: np.ndarray
    region: Box
    work_region: Box
    epsilon: float
    strong: np.ndarray
    classes: tuple[tuple[int, ...], ...] = ()
    measured_overlap: int = 0
    candidates: int = 0

    def __len__(self) -> int:
        return len(self.radii)

    def ball(self, i: int, factor: float = BASE) -> tuple[np.ndarray, float]:
        """Center and radius of the ball B(x_i, factor·ℓ_i)."""
        return self.centers[i], factor * float(self.radii[i])

    def tree(self) -> cKDTree:
        return cKDTree(self.centers)

    def to_dict(self) -> dict[str, Any]:
        return {
            "centers": self.centers.tolist(),
            "radii": self.radii.tolist(),
            "strong": [bool(s) for s in self.strong],
            "classes": [list(c) for c in self.classes],
            "measured_overlap": int(self.measured_overlap),
            "region": {"lower": list(self.region.lower), "upper": list(self.region.upper)},
            "work_region": {"lower": list(self.work_region.lower), "upper": list(self.work_region.upper)},
            "epsilon": self.epsilon,
        }


def _ell_values(ell: EllFunction, points: np.ndarray) -> np.ndarray:
    values = np.asarray(ell(points), dtype=float).reshape(len(points))
    if np.any(~(values > 0)):
        raise ValueError("ℓ must be positive at every candidate")
    return values


def octree_candidates(
    ell: EllFunction, box: Box, max_candidates: int = DEFAULT_MAX_CANDIDATES
) -> tuple[np.ndarray, np.ndarray]:
    """
    Cell centers of an octree over box, refined until each cell lies inside
    B(c, ℓ(c)/20).

    Raises:
        BudgetExceeded: More than max_candidates cells would be needed.
    """
    centers = box.center[None, :]
    half = 0.5 * box.sides
    accepted_pts: list[np.ndarray] = []
    accepted_ell: list[np.ndarray] = []
    total = 0
    while len(centers):
        values = _ell_values(ell, centers)
        fits = np.linalg.norm(half) <= _SEED_FRACTION * values
        accepted_pts.append(centers[fits])
        accepted_ell.append(values[fits])
        total += int(fits.sum())
        pending = centers[~fits]
        if total + 8 * len(pending) > max_candidates:
            raise BudgetExceeded(
                "cover needs too many candidate balls for the region",
                max_candidates=max_candidates,
                region=[list(box.lower), list(box.upper)],
            )
        half = 0.5 * half
        octants = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], dtype=float)
        centers = (pending[:, None, :] + octants[None, :, :] * half).reshape(-1, 3)
    return np.vstack(accepted_pts), np.concatenate(accepted_ell)


def greedy_select(points: np.ndarray, values: np.ndarray) -> np.ndarray:
    """
    Indices chosen by the largest-first greedy rule.

    Candidates are visited in order (-ℓ, x, y, z); a candidate is chosen
    unless an earlier choice x_j already has it inside B(x_j, ℓ_j/20).
    """
    order = np.lexsort((points[:, 2], points[:, 1], points[:, 0], -values))
    tree = cKDTree(points)
    covered = np.zeros(len(points), dtype=bool)
    chosen = []
    for idx in order:
        if covered[idx]:
            continue
        chosen.append(idx)
        covered[tree.query_ball_point(points[idx], _SEED_FRACTION * values[idx])] = True
    return np.asarray(chosen, dtype=int)


def _pairs_within(centers: np.ndarray, radii: np.ndarray, factor: float) -> np.ndarray:
    """Index pairs (i < j) with |x_i - x_j| < factor·(ℓ_i + ℓ_j)."""
    if len(centers) < 2:
        return np.empty((0, 2), dtype=int)
    tree = cKDTree(centers)
    reach = factor * 2.0 * float(np.max(radii))
    pairs = tree.query_pairs(reach, output_type="ndarray")
    if not len(pairs):
        return pairs
    dist = np.linalg.norm(centers[pairs[:, 0]] - centers[pairs[:, 1]], axis=-1)
    return pairs[dist < factor * (radii[pairs[:, 0]] + radii[pairs[:, 1]])]


def color_classes(cover: BallCover) -> tuple[tuple[int, ...], ...]:
    """
    Greedy coloring in selection order such that the balls D̃ within one
    class are pairwise disjoint.
    """
    n = len(cover)
    neighbours: list[list[int]] = [[] for _ in range(n)]
    for i, j in _pairs_within(cover.centers, cover.radii, TILDE):
        neighbours[i].append(j)
        neighbours[j].append(i)
    colors = np.full(n, -1, dtype=int)
    for i in range(n):
        taken = {colors[j] for j in neighbours[i] if colors[j] >= 0}
        color = 0
        while color in taken:
            color += 1
        colors[i] = color
    count = int(colors.max()) + 1 if n else 0
    return tuple(tuple(int(i) for i in np.flatnonzero(colors == c)) for c in range(count))


def max_conflict_degree(cover: BallCover) -> int:
    """Largest number of other balls whose D̃ meets a given D̃_i."""
    pairs = _pairs_within(cover.centers, cover.radii, TILDE)
    if not len(pairs):
        return 0
    return int(np.max(np.bincount(pairs.ravel(), minlength=len(cover))))


def class_conflicts(cover: BallCover) -> int:
    """Number of pairs in one color class whose D̃ balls intersect; 0 for a valid coloring."""
    colors = np.full(len(cover), -1, dtype=int)
    for c, members in enumerate(cover.classes):
        colors[list(members)] = c
    pairs = _pairs_within(cover.centers, cover.radii, TILDE)
    if not len(pairs):
        return 0
    return int(np.sum(colors[pairs[:, 0]] == colors[pairs[:, 1]]))


def containment_counts(cover: BallCover, probes: np.ndarray, factor: float) -> np.ndarray:
    """For each probe, the number of balls B(x_i, factor·ℓ_i) containing it."""
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    reach = factor * float(np.max(cover.radii))
    hits = cKDTree(probes).sparse_distance_matrix(cover.tree(), reach, output_type="ndarray")
    inside = hits["v"] <= factor * cover.radii[hits["j"]]
    return np.bincount(hits["i"][inside], minlength=len(probes))


def measure_overlap(cover: BallCover, probes: np.ndarray) -> int:
    """Largest number of D̃_i containing any of the probes or any center."""
    pts = np.vstack([np.atleast_2d(probes), cover.centers])
    return int(np.max(containment_counts(cover, pts, TILDE)))


@dataclass(frozen=True)
class CoverageReport:
    """Probe-based coverage of the work region by the balls D̂_i."""

    probes: int
    uncovered: int
    uncovered_points: tuple[tuple[float, ...], ...]
    max_hat_multiplicity: int

    @property
    def ok(self) -> bool:
        return self.uncovered == 0


def probe_coverage(cover: BallCover, probes: np.ndarray, keep: int = 10) -> CoverageReport:
    counts = containment_counts(cover, probes, HAT)
    missing = np.flatnonzero(counts == 0)
    return CoverageReport(
        probes=len(counts),
        uncovered=len(missing),
        uncovered_points=tuple(tuple(np.asarray(probes)[i].tolist()) for i in missing[:keep]),
        max_hat_multiplicity=int(counts.max()) if len(counts) else 0,
    )


def core_overlaps(cover: BallCover) -> np.ndarray:
    """Pairs whose cores B(x_i, ℓ_i/40) intersect; empty for a valid cover."""
    pairs = _pairs_within(cover.centers, cover.radii, 1.0 / STAR)
    return pairs


def comparability_violations(cover: BallCover) -> list[tuple[int, int, float]]:
    """Pairs with intersecting D̃ whose radii ratio leaves [½, 2]."""
    out = []
    for i, j in _pairs_within(cover.centers, cover.radii, TILDE):
        ratio = float(cover.radii[j] / cover.radii[i])
        if not 0.5 <= ratio <= 2.0:
            out.append((int(i), int(j), ratio))
    return out


def build_cover(
    ell: EllFunction,
    region: Box,
    epsilon: float,
    *,
    padding: float = 0.0,
    field: MagneticFieldModel | None = None,
    overlap_probes: int = 12,
    max_candidates: int = DEFAULT_MAX_CANDIDATES,
) -> BallCover:
    """
    Build an ℓ-uniform cover of region.

    Args:
        ell: Vectorized ℓ, points (n, 3) -> (n,), assumed ε-tempered.
        region: Box to cover.
        epsilon: Scale parameter.
        padding: Margin added around region, in units of the largest ℓ
            seen on the region.
        field: When given, indices are classified strong or weak.
        overlap_probes: Points per axis of the probe grid used for the
            measured overlap.
        max_candidates: Octree budget.

    Raises:
        RegularityError: Two balls with intersecting D̃ have incomparable
            radii, so ℓ is not tempered on the region.
        BudgetExceeded: The region is too large compared with ℓ.
    """
    if not 0 < epsilon < 1e-3:
        raise ValueError("epsilon must lie in (0, 1/1000)")
    if padding < 0:
        raise ValueError("padding must be >= 0")

    unit = np.isinf(_ell_values(ell, region.grid(3)))
    if np.all(unit):
        centers = region.center[None, :]
        radii = np.array([math.inf])
        work, examined = region, 1
    else:
        ell_max = float(np.max(_ell_values(ell, region.grid(5))))
        work = region.padded(padding * ell_max) if padding > 0 else region
        points, values = octree_candidates(ell, work, max_candidates)
        chosen = greedy_select(points, values)
        centers, radii, examined = points[chosen], values[chosen], len(points)

    cover = BallCover(
        centers=centers,
        radii=radii,
        region=region,
        work_region=work,
        epsilon=float(epsilon),
        strong=np.zeros(len(radii), dtype=bool),
        candidates=examined,
    )
    if np.all(np.isfinite(radii)):
        bad = comparability_violations(cover)
        if bad:
            i, j, ratio = bad[0]
            raise RegularityError(
                "ℓ is not tempered on the region",
                pair=[centers[i].tolist(), centers[j].tolist()],
                ratio=ratio,
            )
        probes = work.grid(overlap_probes)
        cover = replace(cover, classes=color_classes(cover), measured_overlap=measure_overlap(cover, probes))
    else:
        cover = replace(cover, classes=((0,),), measured_overlap=1)
    if field is not None:
        cover = classify(cover, field)
    log.info("cover: %d balls from %d candidates, %d classes", len(cover), examined, len(cover.classes))
    return cover


def classify(cover: BallCover, field: MagneticFieldModel) -> BallCover:
    """Mark index i strong when |B(x_i)| >= ε⁻²ℓ_i⁻²."""
    strength = field.strength(cover.centers)
    with np.errstate(divide="ignore"):
        threshold = cover.epsilon**-2 * cover.radii**-2.0
    return replace(cover, strong=np.asarray(strength >= threshold))


@dataclass(frozen=True)
class DichotomyResult:
    """
    Strong/weak alternative on D̃_i.

    Strong indices need inf_{D̃_i}|B| >= ε⁻¹ℓ_i⁻², weak ones
    sup_{D̃_i}|B| <= ε⁻²ℓ_i⁻².
    """

    index: int
    strong: bool
    value: float
    threshold: float

    @property
    def ok(self) -> bool:
        return self.value >= self.threshold if self.strong else self.value <= self.threshold


def dichotomy_check(cover: BallCover, field: MagneticFieldModel, indices=None) -> list[DichotomyResult]:
    out = []
    for i in range(len(cover)) if indices is None else indices:
        center, radius = cover.ball(i, TILDE)
        ell_i = float(cover.radii[i])
        ext = ball_extrema(field.strength, center, radius, landmarks=field.landmarks)
        if cover.strong[i]:
            out.append(DichotomyResult(int(i), True, ext.minimum, cover.epsilon**-1 * ell_i**-2))
        else:
            out.append(DichotomyResult(int(i), False, ext.maximum, cover.epsilon**-2 * ell_i**-2))
    return out


# ---------------------------------------------------------------------------
# Cutoffs
# ---------------------------------------------------------------------------

# (inner, outer) radii of the plateau cutoffs, in units of ℓ_i
CUTOFF_RADII: dict[str, tuple[float, float]] = {
    "theta_seed": (HAT, BASE),
    "chi_hat": (3.0, 4.0),
    "chi": (4.0, 5.0),
    "chi_tilde": (6.0, 7.0),
}


class CutoffFamily:
    """
    Cutoff functions attached to a cover.

    θ_i = u_i / (Σ_j u_j²)^{1/2} with u_i = 1 on D̂_i and supported in D_i, so
    Σ θ_i² = 1 wherever the D̂ cover. χ̂_i, χ_i, χ̃_i are radial plateaus with
    radii (3, 4), (4, 5), (6, 7) in units of ℓ_i, and φ_i equals 1 on the
    annulus 3ℓ_i <= r <= 4ℓ_i and vanishes outside (2ℓ_i, 5ℓ_i).
    """

    def __init__(self, cover: BallCover) -> None:
        if not np.all(np.isfinite(cover.radii)):
            raise ValueError("cutoffs need finite radii")
        self.cover = cover
        self._tree = cover.tree()

    def _radius(self, i: int, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.linalg.norm(pts - self.cover.centers[i], axis=-1)

    def seeds(self, points) -> sparse.csr_matrix:
        """Matrix (npts, n) of the unnormalized bumps u_i."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        radii = self.cover.radii
        hits = cKDTree(pts).sparse_distance_matrix(self._tree, float(np.max(radii)), output_type="ndarray")
        inner, outer = CUTOFF_RADII["theta_seed"]
        cols = hits["j"]
        vals = plateau(hits["v"], inner * radii[cols], outer * radii[cols])
        return sparse.coo_matrix((vals, (hits["i"], cols)), shape=(len(pts), len(radii))).tocsr()

    def theta(self, points) -> sparse.csr_matrix:
        """Matrix (npts, n) of θ_i(x).

        Raises:
            NumericalFailure: Σ u_j² vanishes at a point, a hole in the cover.
        """
        u = self.seeds(points)
        norm2 = np.asarray(u.multiply(u).sum(axis=1)).ravel()
        if np.any(norm2 == 0.0):
            bad = np.atleast_2d(points)[int(np.flatnonzero(norm2 == 0.0)[0])]
            raise NumericalFailure("partition of unity normalization vanishes", point=bad.tolist())
        return sparse.diags(norm2**-0.5) @ u

    def theta_square_sum(self, points) -> np.ndarray:
        t = self.theta(points)
        return np.asarray(t.multiply(t).sum(axis=1)).ravel()

    def theta_i(self, i: int, points) -> np.ndarray:
        return np.asarray(self.theta(points)[:, i].todense()).ravel()

    def _plateau(self, name: str, i: int, points) -> np.ndarray:
        inner, outer = CUTOFF_RADII[name]
        ell = float(self.cover.radii[i])
        return plateau(self._radius(i, points), inner * ell, outer * ell)

    def chi_hat(self, i: int, points) -> np.ndarray:
        return self._plateau("chi_hat", i, points)

    def chi(self, i: int, points) -> np.ndarray:
        return self._plateau("chi", i, points)

    def chi_tilde(self, i: int, points) -> np.ndarray:
        return self._plateau("chi_tilde", i, points)

    def chi_tilde_gradient(self, i: int, points) -> np.ndarray:
        """∇χ̃_i, shape (npts, 3)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        d = pts - self.cover.centers[i]
        r = np.linalg.norm(d, axis=-1)
        ell = float(self.cover.radii[i])
        inner, outer = CUTOFF_RADII["chi_tilde"]
        dr = plateau_derivative(r, inner * ell, outer * ell)
        return d * np.divide(dr, r, out=np.zeros_like(r), where=r > 0)[:, None]

    def phi(self, i: int, points) -> np.ndarray:
        return annulus_profile(self._radius(i, points), float(self.cover.radii[i]))

    def theta_gradient_constant(self, i: int, samples: np.ndarray, h: float | None = None) -> float:
        """max ℓ_i |∇θ_i| over samples, by central differences."""
        ell = float(self.cover.radii[i])
        h = h or 1e-4 * ell
        samples = np.atleast_2d(samples)
        grad = np.zeros((len(samples), 3))
        for k in range(3):
            e = np.zeros(3)
            e[k] = h
            grad[:, k] = (self.theta_i(i, samples + e) - self.theta_i(i, samples - e)) / (2.0 * h)
        return float(ell * np.max(np.linalg.norm(grad, axis=-1)))


def build_cutoffs(cover: BallCover, smoothness_order: int = 4) -> CutoffFamily:
    """Cutoff family of a cover. The profiles are C^∞, so every smoothness_order >= 1 is met."""
    if smoothness_order < 1:
        raise ValueError("smoothness_order must be >= 1")
    return CutoffFamily(cover)


def radial_derivative_constants(max_order: int = 4) -> dict[str, list[float]]:
    """
    ℓ^γ sup |d^γ/dr^γ profile| for each cutoff and γ = 1..max_order.

    The profiles are scale invariant, so one evaluation at ℓ = 1 serves
    every index.
    """
    out: dict[str, list[float]] = {}
    for name, (inner, outer) in CUTOFF_RADII.items():
        out[name] = [
            derivative_sup(lambda r, a=inner, b=outer: plateau(r, a, b), inner, outer, g)
            for g in range(1, max_order + 1)
        ]
    out["phi"] = [derivative_sup(lambda r: annulus_profile(r, 1.0), 2.0, 5.0, g) for g in range(1, max_order + 1)]
    return out


# ---------------------------------------------------------------------------
# Annulus locality
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AnnulusLocalityReport:
    """
    Sampled check that y in A_k never lies in D*_z for z in A_m, |m - k| >= 5,
    with A_k = {4^k ℓ(x) <= |y - x| <= 4^{k+1} ℓ(x)}.

    Attributes:
        pairs_checked: Number of (k, m) annulus pairs.
        min_margin: Smallest |y - z| / (40ℓ(z)) seen; above 1 means no hit.
        violations: (k, m) pairs with a hit.
    """

    pairs_checked: int
    min_margin: float
    violations: tuple[tuple[int, int], ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def annulus_locality_check(
    ell: EllFunction, anchor, k_max: int = 8, samples_log2: int = 6
) -> AnnulusLocalityReport:
    if k_max < 6:
        raise ValueError("k_max must be >= 6")
    anchor = np.asarray(anchor, dtype=float)
    ell0 = float(_ell_values(ell, anchor[None, :])[0])
    shells = {
        k: shell_points(anchor, 4.0**k * ell0, 4.0 ** (k + 1) * ell0, samples_log2) for k in range(1, k_max + 1)
    }
    star = {k: STAR * _ell_values(ell, pts) for k, pts in shells.items()}
    margin = math.inf
    violations = []
    checked = 0
    for k in shells:
        for m in shells:
            if abs(m - k) < 5:
                continue
            checked += 1
            y, z = shells[k], shells[m]
            dist = np.linalg.norm(y[:, None, :] - z[None, :, :], axis=-1)
            ratio = float(np.min(dist / star[m][None, :]))
            margin = min(margin, ratio)
            if ratio <= 1.0:
                violations.append((k, m))
    return AnnulusLocalityReport(checked, margin, tuple(violations))
