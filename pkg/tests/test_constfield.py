import math

import numpy as np
import pytest

from maglt.core.constfield import (
    ConstResolvent,
    MehlerKernel,
    decay_fit,
    diag_trace_checks,
    dirac_weighted_integral,
    free_heat_kernel,
    kernel_profile,
    kernel_square_integral,
    mehler_eval,
    resolvent_kernel,
    separated_support_integrals,
    squared_diagonal_oracle,
)


def test_mehler_diagonal_value():
    value = mehler_eval(1.0, 1.0, (0.2, -0.4), (0.2, -0.4))

    assert value == pytest.approx(1.0 / (4.0 * math.pi * math.sinh(1.0)), rel=1e-14)
    assert abs(value) == pytest.approx(0.0677135, rel=1e-5)


def test_mehler_weak_field_limit_is_free_kernel():
    xi, zeta = np.array([0.3, -0.1]), np.array([-0.5, 0.7])

    assert abs(mehler_eval(1e-6, 0.8, xi, zeta) - free_heat_kernel(0.8, xi, zeta)) <= 1e-8


def test_mehler_zero_field_is_free_kernel():
    assert mehler_eval(0.0, 0.5, (1.0, 0.0), (0.0, 0.0)) == pytest.approx(free_heat_kernel(0.5, (1.0, 0.0), (0.0, 0.0)))


def test_mehler_does_not_overflow_at_long_times():
    value = mehler_eval(50.0, 40.0, (0.0, 0.0), (0.1, 0.0))

    assert np.isfinite(value)
    assert abs(value) < 1e-300


def test_mehler_rejects_nonpositive_time():
    with pytest.raises(ValueError, match="t must be"):
        mehler_eval(1.0, 0.0, (0.0, 0.0), (0.0, 0.0))


def test_mehler_semigroup():
    kernel = MehlerKernel(1.0)

    assert kernel.semigroup_defect(0.3, 0.3, (0.3, -0.2), (-0.4, 0.5)) <= 1e-6


def test_mehler_is_dominated_by_free_kernel(rng):
    kernel = MehlerKernel(3.0)
    xi = rng.normal(size=(200, 2))
    zeta = rng.normal(size=(200, 2))

    for t in (1e-3, 0.1, 1.0, 10.0):
        assert kernel.diamagnetic_excess(t, xi, zeta) <= 1e-15 / t


def test_mehler_transverse_gaussian_decay():
    assert MehlerKernel(25.0).transverse_ratio() >= math.e**2


def test_squared_diagonal_matches_landau_oracle():
    value, err = ConstResolvent(1.0, 1.0).squared_diagonal()

    assert value == pytest.approx(squared_diagonal_oracle(1.0, 1.0), rel=1e-6)
    assert err <= 1e-8


def test_kernel_square_integral_matches_oracle():
    res = ConstResolvent(1.0, 1.0)

    assert kernel_square_integral(res) == pytest.approx(squared_diagonal_oracle(1.0, 1.0), rel=1e-3)


def test_kernel_is_hermitian_symmetric(rng):
    res = ConstResolvent(2.0, 1.5)
    xi = rng.normal(size=(10, 3))
    zeta = rng.normal(size=(10, 3))

    forward = res.kernel(xi, zeta).values
    backward = res.kernel(zeta, xi).values

    assert np.allclose(backward, np.conj(np.transpose(forward, (0, 2, 1))), rtol=1e-12, atol=1e-16)


def test_spin_up_kernel_is_below_spin_down(rng):
    values = ConstResolvent(4.0, 1.0).kernel(np.zeros(3), rng.normal(size=(30, 3))).values

    assert np.all(np.abs(values[:, 0, 0]) <= np.abs(values[:, 1, 1]))
    assert np.all(values[:, 0, 1] == 0.0)


def test_kernel_rejects_diagonal():
    with pytest.raises(ValueError, match="singular"):
        ConstResolvent(1.0, 1.0).kernel((0.0, 0.0, 1.0), (0.0, 0.0, 1.0))


def test_far_kernel_reports_tail_bound():
    res = ConstResolvent(1.0, 1.0, cutoff=5.0)

    sample = res.kernel(np.zeros(3), np.array([[0.0, 0.0, 10.0]]))

    assert sample.values[0, 1, 1] == 0.0
    assert 0.0 < sample.errors[0] < 1e-3


def test_tail_bound_dominates_kernel(rng):
    res = ConstResolvent(3.0, 2.0)
    delta = rng.normal(size=(40, 3))

    norms = res.kernel(np.zeros(3), delta).norms()

    assert np.all(norms <= res.tail_bound(-delta))


def test_dirac_kernel_blowup_is_inverse_square():
    res = ConstResolvent(1.0, 1.0)
    u = np.array([0.3, 0.4, math.sqrt(0.75)])

    scaled = [res.dirac_kernel(np.zeros(3), s * u).norms()[0] * s**2 for s in (1e-1, 1e-2, 1e-3)]

    assert all(0.01 <= v <= 1.0 for v in scaled)
    assert scaled[2] == pytest.approx(1.0 / (4.0 * math.pi), rel=1e-2)


def test_resolvent_decay_fit():
    fit = decay_fit(ConstResolvent(1.0, 1.0))

    assert fit.c > 0.0
    assert np.isfinite(fit.amplitude)
    assert fit.samples == 120


def test_decay_fit_with_shift_above_field():
    assert decay_fit(ConstResolvent(1.0, 4.0)).c > 0.0


def test_squared_trace_ratio_is_stable_in_field():
    ratios = [diag_trace_checks(b, 1.0).ratio for b in (10.0, 100.0)]

    assert 0.5 <= ratios[0] / ratios[1] <= 2.0


def test_dirac_weighted_trace_is_bounded():
    small = dirac_weighted_integral(ConstResolvent(4.0, 4.0))
    large = dirac_weighted_integral(ConstResolvent(16.0, 16.0))

    assert 0.0 < large < small


def test_separated_support_is_exponentially_small():
    values = [separated_support_integrals(ConstResolvent(b, b)) for b in (4.0, 16.0, 64.0)]
    plain = [v[0] for v in values]
    dirac = [v[1] for v in values]

    assert plain[0] > plain[1] > plain[2] > 0.0
    assert dirac[0] > dirac[1] > dirac[2] > 0.0
    assert np.polyfit([2.0, 4.0, 8.0], np.log(plain), 1)[0] < 0.0


def test_resolvent_rejects_bad_parameters():
    with pytest.raises(ValueError, match="P must be"):
        ConstResolvent(1.0, 0.0)
    with pytest.raises(ValueError, match="b must be"):
        ConstResolvent(0.0, 1.0)


def test_kernel_profile_covers_both_axes():
    res = ConstResolvent(1.0, 1.0)

    rows = kernel_profile(res, [0.1, 0.5, 2.0])

    assert [row[0] for row in rows] == ["transverse"] * 3 + ["axial"] * 3
    assert all(row[2] > 0 and row[3] > 0 for row in rows)
    assert all(row[2] <= row[5] for row in rows)
    axial_heat = [row[6] for row in rows[3:]]
    assert axial_heat == pytest.approx([1.0 / (4.0 * math.pi * math.sinh(1.0))] * 3, rel=1e-12)


def test_kernel_profile_default_radii():
    assert len(kernel_profile(ConstResolvent(2.0, 1.0))) == 50


def test_kernel_profile_rejects_nonpositive_radius():
    with pytest.raises(ValueError, match="radii"):
        kernel_profile(ConstResolvent(1.0, 1.0), [0.0, 1.0])


def test_resolvent_kernel_matches_resolvent_object():
    xi, zeta = np.array([[0.2, 0.0, 0.1]]), np.zeros((1, 3))

    sample = resolvent_kernel(2.0, 1.0, xi, zeta)

    assert np.allclose(sample.values, ConstResolvent(2.0, 1.0).kernel(xi, zeta).values)
    assert sample.values[0, 0, 1] == 0.0
