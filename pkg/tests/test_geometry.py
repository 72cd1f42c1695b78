import numpy as np
import pytest

from maglt.core.errors import ChartError, RegularityError
from maglt.core.field_model import ConstantField, TubeRegularField
from maglt.core.geometry import (
    build_frame,
    chart_samples,
    chart_self_test,
    eta_for,
    magnetic_localization_residual,
    orthonormal_frame,
    pair_checks,
    quintic_blend,
    spin_up,
    trace_field_line,
    tube_grid,
)


@pytest.fixture(scope="module")
def tube_frame():
    return build_frame(TubeRegularField(1.0, a=0.1, s=1.0), (0.0, 0.0, -6.0), 0.1, tau_max=12.0)


@pytest.fixture(scope="module")
def constant_frame():
    return build_frame(ConstantField((0.0, 0.6, 0.8)), (1.0, -2.0, 0.5), 1.0)


def test_quintic_blend_endpoints():
    assert quintic_blend([-1.0, 0.0, 0.5, 1.0, 2.0]).tolist() == [0.0, 0.0, 0.5, 1.0, 1.0]


def test_orthonormal_frame_is_rotation():
    r = orthonormal_frame((1.0, 2.0, 2.0))

    assert np.allclose(r.T @ r, np.eye(3), atol=1e-15)
    assert np.linalg.det(r) == pytest.approx(1.0)
    assert np.allclose(r[:, 2], np.array([1.0, 2.0, 2.0]) / 3.0)


def test_constant_field_line_is_straight():
    n = np.array([0.0, 0.6, 0.8])
    z = np.array([1.0, -2.0, 0.5])
    line = trace_field_line(ConstantField(5.0 * n), z, 3.0, samples=65)

    assert np.array_equal(line.base, z)
    assert np.allclose(line.points, z + line.tau[:, None] * n, atol=1e-12)


def test_tube_field_line_follows_direction():
    field = TubeRegularField(1.0, a=0.1, s=1.0)
    line = trace_field_line(field, (0.3, 0.1, -5.0), 10.0)

    assert np.array_equal(line(0.0), np.array([0.3, 0.1, -5.0]))
    assert line.residual(field) <= 1e-8
    assert np.all(line.arc_length_defect() >= 0.0)


def test_trace_rejects_bad_length():
    with pytest.raises(ValueError, match="tau_max"):
        trace_field_line(ConstantField((0.0, 0.0, 1.0)), (0.0, 0.0, 0.0), 0.0)


def test_trace_rejects_vanishing_base():
    with pytest.raises(RegularityError):
        trace_field_line(ConstantField((0.0, 0.0, 0.0)), (0.0, 0.0, 0.0), 1.0)


def test_constant_field_chart_is_rigid(constant_frame, rng):
    r = constant_frame.rotation
    x = constant_frame.base + rng.uniform(-5.0, 5.0, size=(20, 3)) @ r.T

    xi = constant_frame.to_chart(x)

    assert np.allclose(xi, (x - constant_frame.base) @ r, atol=1e-9)
    assert np.allclose(constant_frame.from_chart(xi), x, atol=1e-9)
    assert np.allclose(constant_frame.conformal_factor(xi), 1.0, atol=1e-12)
    assert np.allclose(constant_frame.h_factor(xi), 1.0, atol=1e-9)


def test_chart_rejects_points_far_from_line(constant_frame):
    far = constant_frame.base + 20.0 * constant_frame.rotation[:, 0]

    with pytest.raises(ChartError):
        constant_frame.to_chart(far)
    assert np.all(np.isnan(constant_frame.to_chart(far, strict=False)))


def test_from_chart_rejects_out_of_range(constant_frame):
    with pytest.raises(ChartError):
        constant_frame.from_chart((11.0, 0.0, 0.0))


def test_central_line_has_zero_transverse_coordinates(tube_frame):
    pts = tube_frame.line(np.linspace(-5.0, 5.0, 11))

    xi = tube_frame.to_chart(pts)

    assert np.max(np.linalg.norm(xi[:, :2], axis=-1)) <= 1e-7


def test_omega_matches_f_on_central_line(tube_frame):
    xi3 = tube_frame.xi3_of_tau(np.linspace(-6.0, 6.0, 13))
    xi = np.column_stack([np.zeros((13, 2)), xi3])

    omega = tube_frame.conformal_factor(xi)

    assert np.max(np.abs(omega - tube_frame.f(xi3))) <= 1e-6
    assert np.allclose(tube_frame.h_factor(xi), 1.0, atol=1e-6)


def test_tube_chart_self_test(tube_frame, rng):
    report = chart_self_test(tube_frame, rng, count=16)

    assert report["round_trip"] <= 1e-8
    assert report["cross_terms"] <= 1e-6
    assert report["omega_axis_defect"] <= 1e-6
    assert report["line_residual"] <= 1e-8


def test_chart_samples_shapes(tube_frame):
    samples = chart_samples(tube_frame, line_points=33, radial=3, axial=5)

    assert samples.line.shape == (33, 6)
    assert samples.mesh.shape == (45, 7)
    assert samples.profile.shape == (5, 3)
    assert np.all(np.isfinite(samples.mesh))


def test_chart_samples_profile_matches_f(tube_frame):
    profile = chart_samples(tube_frame).profile

    assert np.max(np.abs(profile[:, 1] - profile[:, 2])) <= 1e-6


def test_chart_samples_rejects_tiny_counts(constant_frame):
    with pytest.raises(ValueError, match="sample counts"):
        chart_samples(constant_frame, radial=1)


def test_base_plane_has_flat_coordinates(tube_frame):
    xi = np.array([[0.5, -0.2, 0.0], [-0.3, 0.7, 0.0]])
    x = tube_frame.from_chart(xi)

    assert np.allclose(x, tube_frame.base + xi[:, :2] @ tube_frame.rotation[:, :2].T, atol=1e-12)


def test_curvature_radius_must_exceed_chart():
    field = TubeRegularField(1.0, a=0.5, s=0.2)

    with pytest.raises(RegularityError, match="curvature"):
        build_frame(field, (0.0, 0.0, -3.0), 1.0, tau_max=6.0)


def test_spin_up_of_axes():
    assert np.allclose(spin_up((0.0, 0.0, 1.0)), np.diag([1.0, 0.0]))
    assert np.allclose(spin_up((1.0, 0.0, 0.0)), 0.5 * np.ones((2, 2)))


def test_spin_projection_is_rank_one_projection(tube_frame):
    pts = np.array([[0.2, 0.1, -1.0], [0.0, -0.3, 0.0], [0.4, 0.4, 1.5]])

    p = tube_frame.spin_projection(pts)

    assert np.allclose(p @ p, p, atol=1e-12)
    assert np.allclose(p, np.conj(np.transpose(p, (0, 2, 1))))
    assert np.allclose(np.trace(p, axis1=1, axis2=2), 1.0)


def test_pullback_of_constant_field_is_constant_form(constant_frame):
    xi = np.array([[1.0, 2.0, 0.0], [-3.0, 0.5, 4.0]])

    delta = constant_frame.two_form_defect()(xi)

    assert np.max(np.abs(delta)) <= 1e-6


def test_pair_checks_transverse_distance_ratio(tube_frame):
    field = tube_frame.field
    frames = [tube_frame, build_frame(field, (0.2, 0.1, -6.0), 0.1, tau_max=12.0)]
    probes = np.array([[0.3, 0.2, -1.0], [-0.25, 0.3, 0.5], [0.1, -0.4, 2.0]])

    rows = pair_checks(frames, probes, max_workers=1)

    assert len(rows) == 6
    assert all(row.ok for row in rows)
    assert all(np.isfinite(row.spin_ratio) for row in rows)


@pytest.fixture(scope="module")
def unit_frame():
    return build_frame(ConstantField((0.0, 0.0, 1.0)), (0.0, 0.0, 0.0), 1.0)


def test_gaussian_sum_is_order_inverse_eta(unit_frame, rng):
    grid = tube_grid(unit_frame, 0.25, 18.0)
    probes = np.column_stack([rng.uniform(-2.0, 2.0, (50, 2)), rng.uniform(-1.0, 1.0, 50)])

    scaled = grid.eta * grid.moment_sums(probes, power=0, gamma_exp=2.0)
    weighted = grid.eta * grid.moment_sums(probes, power=1, gamma_exp=2.0)

    # Gaussian lattice sums equal their integrals up to exponentially small terms
    assert 0.1 <= scaled.min() and scaled.max() <= 10.0
    assert np.allclose(scaled, 2.0 * np.pi, rtol=1e-6)
    assert np.allclose(weighted, 4.0 * np.pi, rtol=1e-6)


def test_localizer_is_one_on_lattice_point(unit_frame):
    grid = tube_grid(unit_frame, 0.25, 4.0)
    k = len(grid.nodes) // 3

    assert grid.localizers(grid.points[k])[0, k] == pytest.approx(1.0, abs=1e-12)


def test_gaussian_sums_are_translation_invariant(unit_frame, rng):
    probes = np.column_stack([rng.uniform(-1.0, 1.0, (20, 2)), np.zeros(20)])
    plain = tube_grid(unit_frame, 0.25, 18.0).moment_sums(probes)
    shifted = tube_grid(unit_frame, 0.25, 18.0, offset=(1.0, 0.0)).moment_sums(probes)

    assert np.allclose(plain, shifted, rtol=1e-8)


def test_tube_grid_validates_eta(unit_frame):
    with pytest.raises(ValueError, match="eta"):
        tube_grid(unit_frame, 0.3, 4.0)


def test_spin_allocation_is_nonnegative(unit_frame, rng):
    lam = 2.0**-7
    grid = tube_grid(unit_frame, eta_for(lam), 40.0)
    probes = np.column_stack([rng.uniform(-3.0, 3.0, (64, 2)), np.zeros(64)])

    c0 = grid.calibrate_c0(probes, lam, 1.0)

    assert c0 >= 0.0
    assert grid.spin_allocation(probes, lam, 1.0, c0).min() >= -1e-12


def test_localization_identity_is_exact_with_spectral_derivatives():
    assert magnetic_localization_residual(1.0, 0.25, mode="spectral") <= 1e-10


def test_localization_identity_without_localization():
    assert magnetic_localization_residual(1.0, 0.0, mode="stencil") == 0.0


def test_localization_stencil_converges_at_second_order():
    coarse = magnetic_localization_residual(1.0, 0.25, n=64, mode="stencil")
    fine = magnetic_localization_residual(1.0, 0.25, n=128, mode="stencil")

    assert 3.5 <= coarse / fine <= 4.5


def test_localization_rejects_unknown_mode():
    with pytest.raises(ValueError, match="mode"):
        magnetic_localization_residual(1.0, 0.25, mode="chebyshev")
