"""Config-driven experiment runner.

Each step reads its section of an ExperimentConfig, calls the numerical
modules and writes JSON reports and CSV plot data into the output directory.
A manifest lists every file written; wall-clock timings go to a separate
timings.json so that deterministic runs reproduce every other file byte for
byte.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field as dc_field, is_dataclass
from functools import cached_property
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from maglt import __version__
from maglt.core.analytic import (
    SWEEP_COLUMNS,
    amplitude_sweep,
    landau_pressure,
    landau_pressure_levels,
    loglog_slope,
    semiclassical_energy,
)
from maglt.core.config import STEP_NAMES, ExperimentConfig
from maglt.core.constfield import (
    PROFILE_COLUMNS as KERNEL_COLUMNS,
    ConstResolvent,
    MehlerKernel,
    decay_fit,
    diag_trace_checks,
    kernel_profile,
)
from maglt.core.covering import (
    HAT,
    annulus_locality_check,
    build_cover,
    build_cutoffs,
    class_conflicts,
    containment_counts,
    core_overlaps,
    dichotomy_check,
    probe_coverage,
)
from maglt.core.domain import Box
from maglt.core.errors import BudgetExceeded, ConfigError, MagLTError
from maglt.core.field_model import LossYauField, MagneticFieldModel, RescaledField
from maglt.core.geometry import (
    LINE_COLUMNS,
    MESH_COLUMNS,
    PROFILE_COLUMNS,
    build_frame,
    chart_samples,
    chart_self_test,
    eta_for,
    magnetic_localization_residual,
    pair_checks,
    tube_grid,
)
from maglt.core.local_gauge import local_field_diagnostics
from maglt.core.logging_config import get_logger
from maglt.core.opineq import run_suite
from maglt.core.potentials import Potential, ZeroPotential
from maglt.core.scales import (
    SCALE_COLUMNS,
    ScaleProfile,
    admissible_pairs,
    check_tempered,
    ell_interpolant,
    tempered_dichotomy_check,
)
from maglt.core.spectral import (
    VERIFY_COLUMNS,
    assemble,
    birman_schwinger_check,
    density_ratio,
    ground_energy,
    landau_levels,
    lattice_for,
    locality_check,
    loss_yau_check,
    refinement_pair,
    semiclassical_trend,
    sum_negative_eigenvalues,
    verify_lt,
    zero_modes,
)

log = get_logger(__name__)

MANIFEST = "manifest.json"
TIMINGS = "timings.json"


# ---------------------------------------------------------------------------
# Writers
# ---------------------------------------------------------------------------


def to_plain(value: Any) -> Any:
    """Convert reports into JSON-ready values; infinities become "inf", NaN becomes null."""
    if is_dataclass(value) and not isinstance(value, type):
        return to_plain(asdict(value))
    if isinstance(value, dict):
        return {str(k): to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_plain(value.tolist())
    if isinstance(value, np.generic):
        return to_plain(value.item())
    if isinstance(value, Path):
        return value.as_posix()
    if isinstance(value, complex):
        return [to_plain(value.real), to_plain(value.imag)]
    if isinstance(value, float):
        if math.isnan(value):
            return None
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
    return value


def dumps_report(payload: Any) -> str:
    return json.dumps(to_plain(payload), sort_keys=True, indent=2, allow_nan=False, ensure_ascii=False) + "\n"


def format_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.17g" % float(value)
    return str(value)


class ArtifactWriter:
    """Writes reports under one directory and remembers what it wrote."""

    def __init__(self, root: Path) -> None:
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.written: list[str] = []

    def path(self, name: str) -> Path:
        self.written.append(name)
        return self.root / name

    def json(self, name: str, payload: Any) -> Path:
        path = self.path(name)
        path.write_text(dumps_report(payload), encoding="utf-8")
        return path

    def csv(self, name: str, columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        path = self.path(name)
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(columns)
            for row in rows:
                writer.writerow([format_cell(v) for v in row])
        return path


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------


@dataclass
class StepRecord:
    """
    Outcome of one step.

    Attributes:
        name: Step name.
        status: "ok", "checks-failed" or "error".
        artifacts: Files written by the step, relative to the output directory.
        summary: Headline numbers shown by the CLI.
        seconds: Wall-clock time; kept out of the manifest.
    """

    name: str
    status: str
    artifacts: list[str]
    summary: dict[str, Any] = dc_field(default_factory=dict)
    seconds: float = 0.0


@dataclass
class RunManifest:
    config_hash: str
    version: str
    output_dir: Path
    steps: list[StepRecord] = dc_field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(s.status == "ok" for s in self.steps)

    @property
    def timings(self) -> dict[str, float]:
        return {s.name: s.seconds for s in self.steps}

    @property
    def files(self) -> list[str]:
        return sorted({a for s in self.steps for a in s.artifacts} | {MANIFEST, TIMINGS})

    def to_dict(self) -> dict[str, Any]:
        return {
            "config_hash": self.config_hash,
            "version": self.version,
            "steps": [{"name": s.name, "status": s.status, "artifacts": s.artifacts} for s in self.steps],
            "files": self.files,
        }

    def write(self) -> None:
        (self.output_dir / MANIFEST).write_text(dumps_report(self.to_dict()), encoding="utf-8")
        (self.output_dir / TIMINGS).write_text(dumps_report(self.timings), encoding="utf-8")


# ---------------------------------------------------------------------------
# Step context
# ---------------------------------------------------------------------------


@dataclass
class StepContext:
    config: ExperimentConfig
    writer: ArtifactWriter
    rng: np.random.Generator
    field: MagneticFieldModel
    potential: Potential
    box: Box

    @property
    def max_workers(self) -> int | None:
        return self.config.max_workers

    @cached_property
    def spacing(self) -> float:
        return resolve_spacing(self.config, self.field, self.potential, self.box)

    def profile(self, field: MagneticFieldModel | None = None) -> ScaleProfile:
        return ScaleProfile(field or self.field, self.config.epsilon)


@dataclass(frozen=True)
class StepOutcome:
    passed: bool
    summary: dict[str, Any]


def resolve_spacing(
    config: ExperimentConfig, field: MagneticFieldModel, potential: Potential, box: Box, h: float = 1.0
) -> float:
    """
    Lattice spacing for the configured grid.

    Without an explicit spacing, points_per_length points are placed per
    magnetic length (h/max|B|)^{1/2} or per feature length of V, whichever is
    shorter. The resulting operator must fit in grid.max_dimension.

    Raises:
        BudgetExceeded: The lattice exceeds grid.max_dimension.
    """
    grid = config.grid
    if grid.spacing is not None:
        spacing = grid.spacing
    else:
        lengths = [potential.feature_length, 0.5 * float(np.min(box.sides))]
        bmax = float(np.max(field.strength(box.grid(9))))
        if bmax > 0:
            lengths.append(math.sqrt(h / bmax))
        spacing = min(v for v in lengths if math.isfinite(v)) / grid.points_per_length
    dimension = 2 * lattice_for(box, spacing).size
    if dimension > grid.max_dimension:
        raise BudgetExceeded(
            "operator dimension exceeds grid.max_dimension",
            dimension=dimension,
            limit=grid.max_dimension,
            spacing=spacing,
        )
    return spacing


# ---------------------------------------------------------------------------
# Steps
# ---------------------------------------------------------------------------


def run_scales(ctx: StepContext) -> StepOutcome:
    spec = ctx.config.scales
    profile = ctx.profile()
    points = np.asarray(spec.points, dtype=float) if spec.points else ctx.box.grid(spec.grid)
    records = profile.evaluate(points, max_workers=ctx.max_workers)
    ctx.writer.csv("scales.csv", SCALE_COLUMNS, [r.row() for r in records])

    pairs = admissible_pairs(profile, ctx.rng, points, spec.tempered_pairs)
    tempered = check_tempered(profile.ell, pairs, ctx.config.epsilon)
    dichotomy = tempered_dichotomy_check(profile, points)
    failed = [d for d in dichotomy if not d.ok]
    ctx.writer.json(
        "scales.json",
        {
            "points": len(records),
            "tempered": {**asdict(tempered), "ok": tempered.ok},
            "dichotomy": {"checked": len(dichotomy), "failures": [asdict(d) for d in failed]},
        },
    )
    summary = {
        "points": len(records),
        "pairs_checked": tempered.checked,
        "ratio_range": [tempered.min_ratio, tempered.max_ratio],
        "dichotomy_failures": len(failed),
    }
    return StepOutcome(tempered.ok and not failed, summary)


def run_cover(ctx: StepContext) -> StepOutcome:
    spec = ctx.config.cover
    region = spec.region.build() if spec.region else ctx.box
    interp = ell_interpolant(ctx.profile(), region, spec.interpolation_points, max_workers=ctx.max_workers)

    def ell(points):
        return spec.ell_factor * interp(points)

    cover = build_cover(ell, region, ctx.config.epsilon, padding=spec.padding, field=ctx.field)
    probes = cover.work_region.grid(spec.probes_per_axis)
    coverage = probe_coverage(cover, probes)
    multiplicity = np.bincount(containment_counts(cover, probes, HAT))
    finite = bool(np.all(np.isfinite(cover.radii)))
    partition_defect = 0.0
    dichotomy = []
    if finite:
        family = build_cutoffs(cover)
        samples = region.uniform(ctx.rng, spec.partition_points)
        partition_defect = float(np.max(np.abs(family.theta_square_sum(samples) - 1.0)))
        dichotomy = dichotomy_check(cover, ctx.field)
    cores = core_overlaps(cover)
    conflicts = class_conflicts(cover)
    annulus = annulus_locality_check(ell, region.center) if spec.annulus_check and finite else None
    local_fields = []
    if spec.local_fields and finite:
        picks = np.unique(np.linspace(0, len(cover) - 1, min(spec.local_fields, len(cover))).round().astype(int))
        local_fields = [local_field_diagnostics(ctx.field, cover, int(i), ctx.rng) for i in picks]

    ctx.writer.json(
        "cover.json",
        {
            "cover": cover.to_dict(),
            "coverage": {**asdict(coverage), "ok": coverage.ok},
            "partition_defect": partition_defect,
            "core_overlaps": cores,
            "class_conflicts": conflicts,
            "dichotomy_failures": [asdict(d) for d in dichotomy if not d.ok],
            "annulus": None if annulus is None else {**asdict(annulus), "ok": annulus.ok},
            "local_fields": local_fields,
        },
    )
    colors = np.zeros(len(cover), dtype=int)
    for c, members in enumerate(cover.classes):
        colors[list(members)] = c
    ctx.writer.csv("coverage.csv", ("multiplicity", "probes"), enumerate(multiplicity))
    ctx.writer.csv(
        "balls.csv",
        ("x", "y", "z", "ell", "strong", "class"),
        (
            [*cover.centers[i], cover.radii[i], bool(cover.strong[i]), int(colors[i])]
            for i in range(len(cover))
        ),
    )
    passed = (
        coverage.ok
        and partition_defect <= 1e-12
        and not len(cores)
        and conflicts == 0
        and all(d.ok for d in dichotomy)
        and (annulus is None or annulus.ok)
    )
    summary = {
        "balls": len(cover),
        "classes": len(cover.classes),
        "measured_overlap": cover.measured_overlap,
        "uncovered": coverage.uncovered,
        "partition_defect": partition_defect,
    }
    return StepOutcome(passed, summary)


def run_geometry(ctx: StepContext) -> StepOutcome:
    spec = ctx.config.geometry
    ell = spec.ell
    if ell is None:
        ell = ctx.profile().ell(spec.base)
        if not math.isfinite(ell):
            ell = ctx.field.length_scale
    frame = build_frame(ctx.field, spec.base, ell, tau_max=spec.tau_max)
    chart = chart_self_test(frame, ctx.rng, spec.chart_points)
    plots = chart_samples(frame)
    ctx.writer.csv("field_line.csv", LINE_COLUMNS, plots.line)
    ctx.writer.csv("chart_mesh.csv", MESH_COLUMNS, plots.mesh)
    ctx.writer.csv("omega_profile.csv", PROFILE_COLUMNS, plots.profile)
    residual = magnetic_localization_residual(
        spec.localization_b,
        spec.localization_eta,
        n=spec.localization_grid,
        mode=spec.localization_mode,
        rng=ctx.rng,
    )
    payload: dict[str, Any] = {"ell": ell, "b": frame.b, "chart": chart, "localization_residual": residual}

    if spec.pair_probes:
        radius = 0.5 * frame.chart_radius
        offsets = ctx.rng.uniform(-radius, radius, size=(spec.pair_probes, 3)) / math.sqrt(3.0)
        checks = pair_checks([frame], frame.base + offsets, max_workers=ctx.max_workers)
        payload["pairs"] = {
            "count": len(checks),
            "max_spin_ratio": max((c.spin_ratio for c in checks), default=0.0),
            "xi_ratio_range": [min(c.xi_ratio for c in checks), max(c.xi_ratio for c in checks)],
            "failures": sum(not c.ok for c in checks),
        }

    lam = spec.allocation_lambda
    if lam is not None and frame.b >= 1.0 and ctx.field.is_constant:
        grid = tube_grid(frame, eta_for(lam), 20.0 * frame.b**-0.5, max_workers=ctx.max_workers)
        cell = grid.spacing * np.array([[0.0, 0.0], [0.5, 0.0], [0.5, 0.5], [0.25, 0.1]])
        probes = frame.base + cell @ frame.rotation[:, :2].T
        payload["allocation_c0"] = grid.calibrate_c0(probes, lam, ell)

    ctx.writer.json("geometry.json", payload)
    scale = 1.0 + chart["max_omega_deviation"]
    passed = chart["cross_terms"] <= 1e-6 and chart["omega_axis_defect"] <= 1e-6 * scale
    if spec.localization_mode == "spectral":
        passed = passed and residual <= 1e-10
    summary = {
        "round_trip": chart["round_trip"],
        "cross_terms": chart["cross_terms"],
        "omega_axis_defect": chart["omega_axis_defect"],
        "localization_residual": residual,
    }
    return StepOutcome(passed, summary)


def run_bounds(ctx: StepContext) -> StepOutcome:
    spec = ctx.config.bounds
    pressure_rows = []
    worst = 0.0
    for q in spec.pressure:
        closed = float(landau_pressure(q.B, q.W))
        levels = landau_pressure_levels(q.B, q.W)
        worst = max(worst, abs(closed - levels) / max(abs(closed), 1e-300))
        pressure_rows.append([q.B, q.W, closed, levels])
    ctx.writer.csv("pressure.csv", ("B", "W", "pressure", "pressure_levels"), pressure_rows)

    rows = amplitude_sweep(
        ctx.field,
        ctx.potential,
        spec.amplitudes,
        epsilon=ctx.config.epsilon,
        points_per_axis=spec.points_per_axis,
        tol=spec.tol,
        max_workers=ctx.max_workers,
    )
    ctx.writer.csv("bounds.csv", SWEEP_COLUMNS, [r.row() for r in rows])
    term2 = [r.breakdown.term2 for r in rows]
    slope = loglog_slope(spec.amplitudes, term2) if len(rows) > 1 and all(t > 0 for t in term2) else None

    energies = []
    for h in spec.hs:
        res = semiclassical_energy(ctx.field, ctx.potential, h, tol=spec.tol, max_workers=ctx.max_workers)
        energies.append([h, res.value, res.error])
    if energies:
        ctx.writer.csv("semiclassical.csv", ("h", "energy", "error"), energies)

    ctx.writer.json(
        "bounds.json",
        {
            "pressure_form_defect": worst,
            "sweep": [{"b": r.amplitude, **r.breakdown.to_dict()} for r in rows],
            "term2_slope": slope,
        },
    )
    summary = {"pressure_form_defect": worst, "amplitudes": len(rows), "term2_slope": slope}
    return StepOutcome(worst <= 1e-10, summary)


def run_const_field(ctx: StepContext) -> StepOutcome:
    spec = ctx.config.const_field
    report = diag_trace_checks(spec.b, spec.P)
    t, s = spec.semigroup_times
    semigroup = MehlerKernel(spec.b).semigroup_defect(t, s, (0.3, -0.2), (-0.4, 0.5))
    oracle_defect = abs(report.time_integral - report.oracle) / report.oracle
    payload: dict[str, Any] = {
        "diagonal_traces": report.to_dict(),
        "mehler_diagonal_t1": MehlerKernel(spec.b).diagonal(1.0),
        "oracle_defect": oracle_defect,
        "semigroup_defect": semigroup,
    }
    if spec.decay_fit:
        payload["decay_fit"] = decay_fit(ConstResolvent(spec.b, spec.P))
    if spec.profile:
        ctx.writer.csv("kernel_profile.csv", KERNEL_COLUMNS, kernel_profile(ConstResolvent(spec.b, spec.P)))
    ctx.writer.json("const_field.json", payload)
    summary = {"oracle_defect": oracle_defect, "semigroup_defect": semigroup, "ratio": report.ratio}
    return StepOutcome(oracle_defect <= 1e-6 and semigroup <= 1e-6, summary)


def _ground_state(ctx: StepContext, spacing: float, dense_limit: int) -> tuple[dict[str, Any], bool]:
    """Landau levels for a constant field along the third axis, the bare ground energy otherwise."""
    h = ctx.config.spectrum.h
    b = np.asarray(ctx.field.exterior) if ctx.field.is_constant else None
    if b is not None and b[2] != 0.0 and not b[:2].any():
        landau = landau_levels(ctx.field, ctx.box, spacing, h=h, dense_limit=dense_limit)
        return landau.to_dict(), landau.ok()
    free = assemble(ctx.field, ZeroPotential(), ctx.box, spacing, h=h)
    e0 = ground_energy(free.matrix, dense_limit)
    return {
        "ground": e0,
        "bmax": free.bmax,
        "relative_to_gap": e0 / (2.0 * h * free.bmax) if free.bmax > 0 else None,
    }, True


def run_spectrum(ctx: StepContext) -> StepOutcome:
    spec, solver = ctx.config.spectrum, ctx.config.solver
    spacing = resolve_spacing(ctx.config, ctx.field, ctx.potential, ctx.box, h=spec.h)
    op = assemble(ctx.field, ctx.potential, ctx.box, spacing, h=spec.h)
    report = sum_negative_eigenvalues(
        op, tol=solver.tol, dense_limit=solver.dense_limit, max_iterations=solver.max_iterations
    )
    ctx.writer.csv("eigenvalues.csv", ("index", "eigenvalue"), enumerate(report.eigenvalues))
    payload: dict[str, Any] = {"spectrum": report.to_dict(), "hermitian_defect": op.hermitian_defect()}
    passed = report.certified

    if spec.refine:
        pair = refinement_pair(ctx.field, ctx.potential, ctx.box, spacing, tol=solver.tol)
        payload["refinement"] = {
            "coarse": pair.coarse.total,
            "fine": pair.fine.total,
            "extrapolated": pair.extrapolated,
            "error_estimate": pair.error_estimate,
        }
    if spec.birman_schwinger:
        bs = birman_schwinger_check(ctx.field, ctx.potential, ctx.box, spacing, tol=solver.tol)
        payload["birman_schwinger"] = bs.to_dict()
        passed = passed and bs.ok()
    if spec.ground_state:
        payload["ground_state"], ground_ok = _ground_state(ctx, spacing, solver.dense_limit)
        passed = passed and ground_ok
    if spec.export_coo:
        op.export_coo(ctx.writer.path("pauli.coo"))

    ctx.writer.json("spectrum.json", payload)
    summary = {
        "dimension": op.dimension,
        "count": report.count,
        "trace_sum": report.total,
        "method": report.method,
    }
    return StepOutcome(passed, summary)


def run_verify_lt(ctx: StepContext) -> StepOutcome:
    spec, solver = ctx.config.verify_lt, ctx.config.solver
    rows = verify_lt(
        ctx.field,
        ctx.potential,
        ctx.box,
        ctx.spacing,
        spec.amplitudes,
        epsilon=ctx.config.epsilon,
        tol=solver.tol,
    )
    ctx.writer.csv("verify_lt.csv", VERIFY_COLUMNS[:6], [r.row()[:6] for r in rows])
    ratios = [r.ratio for r in rows if r.status == "ok"]
    spread = max(ratios) / min(ratios) if len(ratios) > 1 else None
    payload: dict[str, Any] = {
        "spacing": ctx.spacing,
        "statuses": [r.status for r in rows],
        "ratio_spread": spread,
    }
    passed = spread is None or spread <= 4.0

    if spec.bump is not None:
        bump = spec.bump.build()
        loc = locality_check(ctx.field, bump, ctx.potential, ctx.box, ctx.spacing, spec.bump_factors)
        payload["locality"] = {**asdict(loc), "relative_change": loc.relative_change, "ok": loc.ok()}
        passed = passed and loc.ok()
    if spec.hs:
        trend = semiclassical_trend(ctx.field, ctx.potential, ctx.box, spec.hs)
        ctx.writer.csv(
            "trend.csv",
            ("h", "trace", "semiclassical", "ratio"),
            ([t.h, t.trace, t.semiclassical, t.ratio] for t in trend),
        )

    ctx.writer.json("verify_lt.json", payload)
    skipped = payload["statuses"].count("out-of-budget")
    summary = {"amplitudes": len(rows), "ratio_spread": spread, "out_of_budget": skipped}
    return StepOutcome(passed, summary)


def run_zero_modes(ctx: StepContext) -> StepOutcome:
    spec, solver = ctx.config.zero_modes, ctx.config.solver
    box, spacing = ctx.box, ctx.spacing
    rows = []
    ratios = []
    base = None
    for s in spec.scales:
        field = ctx.field if s == 1.0 else RescaledField(ctx.field, s)
        box_s = Box(tuple(box.lo / s), tuple(box.hi / s))
        op = assemble(field, ZeroPotential(), box_s, spacing / s)
        report = zero_modes(op, spec.k, spec.tol, dense_limit=solver.dense_limit)
        if s == 1.0 and spec.k >= 2:
            base = report
        points = np.asarray(spec.density_points, dtype=float) / s
        ratio = density_ratio(report, op, field, ctx.profile(field), points) if report.accepted else None
        if ratio:
            ratios.append(ratio)
        rows.append([s, report.eigenvalues[0], len(report.accepted), report.density_integral(), ratio])
    columns = ("scale", "lowest", "accepted", "density_integral", "density_ratio")
    ctx.writer.csv("zero_modes.csv", columns, rows)

    band = max(ratios) / min(ratios) if len(ratios) > 1 else None
    payload: dict[str, Any] = {"spacing": spacing, "density_band": band}
    passed = band is None or band <= 3.0
    summary = {"scales": len(rows), "density_band": band, "accepted": [r[2] for r in rows]}
    if spec.refine and isinstance(ctx.field, LossYauField):
        check = loss_yau_check(ctx.field, box, spacing, k=max(spec.k, 2), coarse=base)
        payload["loss_yau"] = check.to_dict()
        summary["loss_yau_ratio"] = check.ratio
        summary["loss_yau_overlap"] = check.overlap
        passed = passed and check.ok()
    ctx.writer.json("zero_modes.json", payload)
    return StepOutcome(passed, summary)


def run_opineq(ctx: StepContext) -> StepOutcome:
    suite = run_suite(ctx.config.opineq.count, ctx.config.seed, max_workers=ctx.max_workers)
    payload = suite.to_dict()
    ctx.writer.json("opineq.json", payload)
    summary = {
        "pullup_worst": payload["pullup"]["worst_gap"],
        "lemma_xy_worst": payload["lemma_xy"]["worst_gap"],
        "pullin_normalized": payload["pullin"]["normalized"],
    }
    return StepOutcome(suite.passed, summary)


def _diagnostic(exc: Exception) -> dict[str, Any]:
    if isinstance(exc, MagLTError):
        return exc.diagnostic()
    return {"error": "value", "message": str(exc)}


STEPS: dict[str, Callable[[StepContext], StepOutcome]] = {
    "scales": run_scales,
    "cover": run_cover,
    "geometry": run_geometry,
    "bounds": run_bounds,
    "const-field": run_const_field,
    "spectrum": run_spectrum,
    "verify-lt": run_verify_lt,
    "zero-modes": run_zero_modes,
    "opineq": run_opineq,
}


# ---------------------------------------------------------------------------
# Runner
# ---------------------------------------------------------------------------


def run(
    config: ExperimentConfig,
    *,
    steps: Sequence[str] | None = None,
    output_dir: Path | None = None,
    on_step: Callable[[StepRecord], None] | None = None,
) -> RunManifest:
    """
    Execute the requested steps in order and write the manifest.

    Args:
        config: Validated experiment.
        steps: Step names; defaults to run.steps of the config.
        output_dir: Overrides config.output_dir.
        on_step: Called after every finished step.

    Raises:
        ConfigError: No steps requested, or an unknown step name.
        MagLTError: Any step failure; the manifest is written first with the
            failing step marked "error".
        ValueError: A step rejected a configured value; handled like MagLTError.
    """
    selected = list(steps if steps is not None else config.run.steps)
    if not selected:
        raise ConfigError("no steps to run", key="run.steps")
    unknown = [s for s in selected if s not in STEPS]
    if unknown:
        expected = ", ".join(STEP_NAMES)
        raise ConfigError(f"unknown step '{unknown[0]}' (expected one of {expected})", key="run.steps")

    root = config.resolved_output_dir(output_dir)
    writer = ArtifactWriter(root)
    manifest = RunManifest(config.config_hash(), __version__, root)
    field = config.field.build()
    potential = config.potential.build()
    box = config.box.build()

    for name in selected:
        rng = np.random.default_rng([config.seed, STEP_NAMES.index(name)])
        ctx = StepContext(config, writer, rng, field, potential, box)
        start = len(writer.written)
        t0 = time.perf_counter()
        log.info("step %s", name)
        try:
            outcome = STEPS[name](ctx)
        except (MagLTError, ValueError) as exc:
            elapsed = time.perf_counter() - t0
            failed = StepRecord(name, "error", writer.written[start:], _diagnostic(exc), elapsed)
            manifest.steps.append(failed)
            manifest.write()
            raise
        status = "ok" if outcome.passed else "checks-failed"
        record = StepRecord(name, status, writer.written[start:], outcome.summary, time.perf_counter() - t0)
        manifest.steps.append(record)
        log.info("step %s: %s", name, status)
        if on_step is not None:
            on_step(record)

    manifest.write()
    return manifest
