import json
import math
from pathlib import Path

import numpy as np
import pytest
import scipy.linalg as la

from maglt.core import spectral
from maglt.core.config import load_config
from maglt.core.domain import Box
from maglt.core.errors import BudgetExceeded, ResolutionError
from maglt.core.experiments import run
from maglt.core.field_model import (
    CompactBumpField,
    ConstantField,
    LossYauField,
    TubeRegularField,
    gauge_for,
)
from maglt.core.potentials import BoxWell, ZeroPotential
from maglt.core.spectral import (
    LossYauReport,
    assemble,
    birman_schwinger_check,
    diamagnetic_gap,
    dirichlet_preconditioner,
    gaussian_probe,
    ground_energy,
    landau_levels,
    lichnerowicz_defect,
    locality_check,
    loss_yau_check,
    read_coo,
    refined_spacing,
    refinement_pair,
    richardson,
    semiclassical_trend,
    sum_negative_eigenvalues,
    verify_lt,
    zero_modes,
)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
UNIT_BOX = Box.cube((0.0, 0.0, 0.0), 1.0)
FREE = ConstantField((0.0, 0.0, 0.0))


def _well(depth: float) -> BoxWell:
    return BoxWell(depth, (0.5, 0.5, 0.5))


def _grad_phi(x):
    x = np.asarray(x)
    return np.stack(
        [np.cos(x[..., 0]) * np.cos(x[..., 1]), -np.sin(x[..., 0]) * np.sin(x[..., 1]), 0.6 * x[..., 2]], axis=-1
    )


def _phi(x):
    return np.sin(x[..., 0]) * np.cos(x[..., 1]) + 0.3 * x[..., 2] ** 2


def test_operator_is_hermitian():
    op = assemble(TubeRegularField(1.0, a=0.5, s=0.5), _well(10.0), UNIT_BOX, 0.25)

    assert op.dimension == 2 * 7**3
    assert op.hermitian_defect() <= 1e-14


def test_gauge_change_is_unitary_conjugation():
    field = TubeRegularField(1.0, a=0.5, s=0.5)
    gauge = gauge_for(field)
    op = assemble(field, ZeroPotential(), UNIT_BOX, 0.25, gauge=gauge)
    moved = assemble(field, ZeroPotential(), UNIT_BOX, 0.25, gauge=gauge.shifted(_grad_phi))

    g = np.repeat(np.exp(-1j * _phi(op.lattice.sites)), 2)
    conjugated = g[:, None] * op.matrix.toarray() * np.conj(g)[None, :]

    assert np.max(np.abs(moved.matrix.toarray() - conjugated)) <= 1e-8
    assert np.allclose(la.eigvalsh(moved.matrix.toarray()), la.eigvalsh(op.matrix.toarray()), atol=1e-8)


def test_sparse_path_matches_dense():
    op = assemble(FREE, _well(60.0), UNIT_BOX, 0.2)

    dense = sum_negative_eigenvalues(op)
    sparse = sum_negative_eigenvalues(op, dense_limit=0)

    assert dense.method == "dense"
    assert sparse.method == "shift-invert"
    assert sparse.count == dense.count > 0
    assert sparse.total == pytest.approx(dense.total, rel=1e-8)
    assert sparse.residual <= 1e-6


def test_negative_count_matches_eigenvalues():
    op = assemble(ConstantField((0.0, 0.0, 2.0)), _well(40.0), UNIT_BOX, 0.25)
    vals = la.eigvalsh(op.matrix.toarray())

    assert spectral.negative_count(op.matrix, -1e-9) == int(np.sum(vals < -1e-9))


def test_spin_degeneracy_without_field():
    report = sum_negative_eigenvalues(assemble(FREE, _well(60.0), UNIT_BOX, 0.25))

    assert report.count % 2 == 0
    assert np.allclose(report.eigenvalues[0::2], report.eigenvalues[1::2], atol=1e-9)


def test_free_dirichlet_ground_state_converges_at_second_order():
    exact = 3.0 * math.pi**2 / 4.0
    errors = []
    for d in (0.25, 0.125):
        e0 = ground_energy(assemble(FREE, ZeroPotential(), UNIT_BOX, d).matrix)
        assert 0.0 <= exact - e0 <= math.pi**4 * d**2 / 64.0 + 1e-9
        errors.append(exact - e0)

    assert errors[0] / errors[1] == pytest.approx(4.0, rel=0.02)


def test_refuses_unresolved_field():
    with pytest.raises(ResolutionError, match="spacing"):
        assemble(ConstantField((0.0, 0.0, 100.0)), _well(1.0), UNIT_BOX, 0.25)


def test_refuses_box_without_margin():
    with pytest.raises(ResolutionError, match="margin"):
        assemble(FREE, BoxWell(1.0, (0.9, 0.9, 0.9)), UNIT_BOX, 0.1)


def test_refuses_oversized_operator(monkeypatch):
    monkeypatch.setattr(spectral, "MAX_DIMENSION", 100)

    with pytest.raises(BudgetExceeded):
        assemble(FREE, _well(1.0), UNIT_BOX, 0.25)


def test_too_many_eigenvalues_is_out_of_budget():
    op = assemble(FREE, _well(60.0), UNIT_BOX, 0.2)

    with pytest.raises(BudgetExceeded, match="too many"):
        sum_negative_eigenvalues(op, dense_limit=0, max_count=1)


def test_richardson_extrapolation():
    assert richardson(1.0, 0.5) == pytest.approx(1.0 / 3.0)
    assert richardson(2.0, 2.0, order=1) == pytest.approx(2.0)


def test_refinement_pair_uses_both_solvers():
    pair = refinement_pair(FREE, _well(60.0), UNIT_BOX, 0.25)

    assert pair.coarse.method == "dense"
    assert pair.fine.method == "shift-invert"
    assert pair.fine.total > 0.0
    assert np.isfinite(pair.extrapolated)
    assert pair.error_estimate >= 0.0


def test_birman_schwinger_count_matches_direct_sum():
    report = birman_schwinger_check(FREE, _well(60.0), UNIT_BOX, 0.25)

    assert report.direct > 0.0
    assert report.monotone
    assert report.relative_gap <= 1e-5
    assert len(report.thresholds) == sum_negative_eigenvalues(assemble(FREE, _well(60.0), UNIT_BOX, 0.25)).count


def test_birman_schwinger_without_well_is_empty():
    report = birman_schwinger_check(FREE, ZeroPotential(), UNIT_BOX, 0.25)

    assert report.thresholds == ()
    assert report.integral == 0.0
    assert report.ok()


def test_lichnerowicz_defect_shrinks_with_spacing():
    field = TubeRegularField(1.0, a=0.5, s=1.0)
    box = Box.cube((0.0, 0.0, 0.0), 3.0)
    probe = gaussian_probe((0.0, 0.0, 0.0), 0.6)

    coarse = lichnerowicz_defect(field, box, 0.3, probe)
    fine = lichnerowicz_defect(field, box, 0.15, probe)

    assert fine < coarse
    assert coarse / fine > 2.0


def test_diamagnetic_inequality_on_lattice():
    assert diamagnetic_gap(TubeRegularField(1.0, a=0.5, s=0.5), UNIT_BOX, 0.25) >= -1e-10
    assert diamagnetic_gap(ConstantField((0.0, 0.0, 2.0)), UNIT_BOX, 0.25) >= -1e-10


def test_constant_field_has_no_zero_modes_on_a_box():
    op = assemble(ConstantField((0.0, 0.0, 1.0)), ZeroPotential(), Box.cube((0.0, 0.0, 0.0), 2.0), 0.5)

    report = zero_modes(op, k=4)

    assert report.accepted == ()
    assert report.density_integral() == 0.0


def test_zero_mode_density_integrates_to_count():
    op = assemble(ConstantField((0.0, 0.0, 1.0)), ZeroPotential(), Box.cube((0.0, 0.0, 0.0), 2.0), 0.5)

    report = zero_modes(op, k=4, tol=1e6)

    assert report.accepted == (0, 1, 2, 3)
    assert report.density_integral() == pytest.approx(4.0, rel=1e-10)


def test_lowest_eigenvalue_decreases_with_box():
    field = ConstantField((0.0, 0.0, 1.0))
    small = zero_modes(assemble(field, ZeroPotential(), Box.cube((0.0, 0.0, 0.0), 2.0), 0.5), k=1)
    large = zero_modes(assemble(field, ZeroPotential(), Box.cube((0.0, 0.0, 0.0), 3.0), 0.5), k=1)

    assert large.eigenvalues[0] <= small.eigenvalues[0] + 1e-12


def test_zero_modes_rejects_empty_request():
    op = assemble(FREE, ZeroPotential(), UNIT_BOX, 0.5)

    with pytest.raises(ValueError, match="k must be"):
        zero_modes(op, k=0)


def test_loss_yau_report_gates_ratio_and_overlap():
    passing = LossYauReport(2e-4, 1.5e-4, 1e-4, 0.2, 12.0, 0.995)

    assert passing.ratio == pytest.approx(5e-4)
    assert passing.ok()
    assert not LossYauReport(5e-3, 4.5e-3, 4e-3, 0.2, 12.0, 0.995).ok()
    assert not LossYauReport(2e-4, 1.5e-4, 1e-4, 0.2, 12.0, 0.98).ok()
    assert LossYauReport(0.0, 0.0, 0.0, 0.0, 12.0, 1.0).ratio == math.inf


def test_loss_yau_check_fails_on_a_small_box():
    report = loss_yau_check(LossYauField(), UNIT_BOX, 1.0 / 7.0)

    assert report.fine_spacing == pytest.approx(1.0 / 14.0)
    assert report.fine < report.first_excited
    assert report.ratio > 1e-2
    assert not report.ok()
    with pytest.raises(ValueError, match="k must be >= 2"):
        loss_yau_check(LossYauField(), UNIT_BOX, 1.0 / 7.0, k=1)


def test_refined_spacing_halves_within_budget():
    assert refined_spacing(UNIT_BOX, 0.25) == 0.125
    with pytest.raises(BudgetExceeded, match="no room to refine"):
        refined_spacing(UNIT_BOX, 0.25, limit=2 * 7**3)


def test_refined_spacing_backs_off_to_the_budget():
    box = Box.cube((0.0, 0.0, 0.0), 6.0)

    fine = refined_spacing(box, 1.0 / 7.0)

    assert 1.0 / 14.0 < fine < 1.0 / 7.0 / 1.05
    assert 2 * spectral.lattice_for(box, fine).size <= spectral.MAX_DIMENSION


def test_dirichlet_preconditioner_inverts_free_operator(rng):
    op = assemble(FREE, ZeroPotential(), UNIT_BOX, 0.25)
    precond = dirichlet_preconditioner(op.lattice, 1.0, 2.0)
    x = rng.standard_normal((op.dimension, 3)) + 1j * rng.standard_normal((op.dimension, 3))

    assert np.allclose(precond.matmat(op.matrix @ x + 2.0 * x), x, atol=1e-10)
    assert np.allclose(precond.matvec(op.matrix @ x[:, 0] + 2.0 * x[:, 0]), x[:, 0], atol=1e-10)


def test_iterative_zero_modes_match_shift_invert(monkeypatch):
    op = assemble(ConstantField((0.0, 0.0, 2.0)), ZeroPotential(), UNIT_BOX, 0.25)
    direct = zero_modes(op, k=3, dense_limit=100)

    monkeypatch.setattr(spectral, "ITERATIVE_LIMIT", 100)
    iterative = zero_modes(op, k=3, dense_limit=100)

    assert iterative.eigenvalues == pytest.approx(direct.eigenvalues, abs=1e-8)


@pytest.mark.slow
def test_loss_yau_config_gates_on_the_fine_grid(tmp_path):
    manifest = run(load_config(CONFIGS / "loss-yau.toml"), output_dir=tmp_path)

    report = json.loads((tmp_path / "zero_modes.json").read_text(encoding="utf-8"))["loss_yau"]
    assert manifest.steps[0].status == ("ok" if report["ok"] else "checks-failed")
    assert report["fine_spacing"] < 1.0 / 7.0
    assert report["overlap"] >= 0.95
    assert report["ratio"] < 0.25


def test_coo_export(tmp_path):
    op = assemble(ConstantField((0.0, 1.0, 0.0)), _well(3.0), UNIT_BOX, 0.25)

    path = op.export_coo(tmp_path / "pauli.coo")

    header = path.read_text(encoding="utf-8").splitlines()[0]
    assert header == f"# maglt-coo {op.dimension} {op.dimension} {op.matrix.nnz}"
    assert np.max(np.abs((read_coo(path) - op.matrix).toarray())) == 0.0


def test_read_coo_rejects_foreign_file(tmp_path):
    path = tmp_path / "other.txt"
    path.write_text("# something 1 1 0\n", encoding="utf-8")

    with pytest.raises(ValueError, match="maglt-coo"):
        read_coo(path)


def test_verify_lt_marks_unresolved_amplitudes():
    rows = verify_lt(ConstantField((0.0, 0.0, 1.0)), _well(30.0), UNIT_BOX, 0.25, amplitudes=(1.0, 4.0, 100.0))

    assert [r.status for r in rows] == ["ok", "ok", "out-of-budget"]
    assert all(r.trace > 0.0 and r.ratio > 0.0 for r in rows[:2])
    assert rows[2].row()[1:6] == [None, None, None, None, None]


def test_verify_lt_without_well_is_trivial():
    rows = verify_lt(ConstantField((0.0, 0.0, 1.0)), ZeroPotential(), UNIT_BOX, 0.25, amplitudes=(1.0,))

    assert rows[0].status == "trivial"
    assert rows[0].trace == 0.0


def test_far_field_does_not_change_trace():
    box = Box((-1.0, -1.0, -1.0), (1.0, 1.0, 3.5))
    bump = CompactBumpField(delta=0.25, b=1.0 / 64.0, center=(0.0, 0.0, 2.5))

    report = locality_check(ConstantField((0.0, 0.0, 1.0)), bump, _well(30.0), box, 0.125)

    assert bump.strength(np.array([0.4, 0.0, 2.5])) >= 1.0
    assert report.factors == (1.0, 10.0)
    assert report.traces[0] > 0.0
    assert report.ok()


def test_semiclassical_trend_rows():
    rows = semiclassical_trend(FREE, _well(40.0), UNIT_BOX, (1.0, 0.5))

    assert [r.h for r in rows] == [1.0, 0.5]
    assert all(r.trace > 0.0 and r.semiclassical < 0.0 for r in rows)
    assert all(np.isfinite(r.ratio) for r in rows)


@pytest.mark.slow
def test_verify_lt_ratio_is_bounded_across_sweep():
    rows = verify_lt(ConstantField((0.0, 0.0, 1.0)), _well(30.0), UNIT_BOX, 0.125, amplitudes=(1.0, 2.0, 4.0, 8.0))
    ratios = [r.ratio for r in rows]

    assert all(r.status == "ok" for r in rows)
    assert max(ratios) / min(ratios) <= 4.0


def test_landau_levels_on_a_slab():
    box = Box((-2.0, -2.0, -0.5), (2.0, 2.0, 0.5))
    field = ConstantField((0.0, 0.0, 4.0))

    report = landau_levels(field, box, 0.125)

    assert report.separation_defect <= 1e-10
    assert report.z_energy == pytest.approx(128.0 * (1.0 - math.cos(math.pi / 8)), rel=1e-12)
    assert abs(report.transverse_ground) <= 0.01 * report.landau_gap
    assert report.spin_gap == pytest.approx(8.0, rel=0.03)
    assert report.level_weights[0] == pytest.approx(8.0 / 9.0, rel=0.05)
    assert report.ok()
    op = assemble(field, ZeroPotential(), box, 0.125)
    assert report.ground == pytest.approx(ground_energy(op.matrix), abs=1e-6)


def test_landau_levels_flags_a_coarse_lattice():
    box = Box((-2.0, -2.0, -0.5), (2.0, 2.0, 0.5))

    report = landau_levels(ConstantField((0.0, 0.0, 16.0)), box, 0.25)

    assert report.spin_gap < 0.95 * report.landau_gap
    assert not report.ok()


def test_landau_levels_needs_a_field_along_the_third_axis():
    with pytest.raises(ValueError, match="constant field"):
        landau_levels(ConstantField((1.0, 0.0, 0.0)), UNIT_BOX, 0.25)
    with pytest.raises(ValueError, match="constant field"):
        landau_levels(TubeRegularField(1.0, a=0.5, s=0.5), UNIT_BOX, 0.25)


@pytest.mark.slow
def test_constant_field_spectrum_config_passes(tmp_path):
    manifest = run(load_config(CONFIGS / "spectrum-constant.toml"), output_dir=tmp_path)

    report = json.loads((tmp_path / "spectrum.json").read_text(encoding="utf-8"))["ground_state"]
    assert manifest.steps[0].status == "ok"
    assert report["ok"] is True
    assert abs(report["relative_to_gap"]) <= 0.05
    assert report["spin_gap"] == pytest.approx(20.0, rel=0.05)
