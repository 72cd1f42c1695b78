import numpy as np
import pytest

from maglt.core.covering import BallCover
from maglt.core.domain import Box
from maglt.core.field_model import TubeRegularField
from maglt.core.local_gauge import (
    a_formula,
    constant_two_form,
    linear_constant_gauge,
    local_field,
    local_field_diagnostics,
    strong_local_field,
    weak_local_field,
)
from maglt.core.sampling import random_ball_points, shell_points

EPS = 1 / 1024


def _single_ball(radius: float, strong: bool) -> BallCover:
    region = Box.cube((0.0, 0.0, 0.0), radius)
    return BallCover(np.zeros((1, 3)), np.array([radius]), region, region, EPS, np.array([strong]))


def _tube_perturbation():
    field = TubeRegularField(1.0, a=0.1, s=1.0)
    return lambda x: field(x) - np.array([0.0, 0.0, 1.0])


@pytest.fixture(scope="module")
def strong_tube():
    field = TubeRegularField(1e11, a=0.1, s=2000.0)
    return field, strong_local_field(field, _single_ball(1e-2, True), 0)


def test_strong_field_is_identity_near_center(strong_tube, rng):
    field, local = strong_tube
    pts = random_ball_points(rng, local.center, 6 * local.ell, 200)

    assert local.identity_defect(field, pts) <= 1e-8


def test_strong_field_is_constant_outside(strong_tube):
    _, local = strong_tube
    pts = shell_points(local.center, 7 * local.ell, 10 * local.ell)

    assert np.allclose(local.B(pts), local.exterior, rtol=1e-14, atol=0.0)


def test_strong_field_stays_close_to_center_value(strong_tube, rng):
    _, local = strong_tube
    pts = random_ball_points(rng, local.center, 10 * local.ell, 500)

    assert local.deviation_ratio(pts) <= 100.0


def test_strong_gauge_generates_strong_field(strong_tube, rng):
    _, local = strong_tube
    pts = random_ball_points(rng, local.center, 8 * local.ell, 30)

    assert local.curl_defect(pts) <= 1e-6


def test_strong_local_field_rejects_weak_index():
    with pytest.raises(ValueError, match="not strong"):
        strong_local_field(TubeRegularField(1.0), _single_ball(0.5, False), 0)


def test_weak_field_is_supported_in_enlarged_ball(rng):
    field = TubeRegularField(1.0, a=0.1, s=1.0)
    local = weak_local_field(field, _single_ball(0.5, False), 0)
    inside = random_ball_points(rng, local.center, 7 * local.ell, 300)
    outside = shell_points(local.center, 7 * local.ell, 10 * local.ell)

    assert np.all(local.B(outside) == 0.0)
    assert local.sup_ratio(inside) <= 10.0
    assert np.allclose(local.exterior, 0.0)


def test_weak_gauge_generates_weak_field(rng):
    field = TubeRegularField(1.0, a=0.1, s=1.0)
    local = local_field(field, _single_ball(0.5, False), 0)
    pts = random_ball_points(rng, local.center, 4.0, 30)

    assert local.kind == "weak"
    assert local.curl_defect(pts) <= 1e-6


def test_weak_ball_diagnostics(rng):
    report = local_field_diagnostics(TubeRegularField(1.0, a=0.1, s=1.0), _single_ball(0.5, False), 0, rng)

    assert report["kind"] == "weak"
    assert report["exterior_defect"] == 0.0
    assert report["sup_ratio"] <= 10.0
    assert report["ok"] is True


def test_transverse_gauge_of_constant_form():
    gauge = a_formula(constant_two_form(3.0))
    pts = np.array([[0.3, -0.2, 1.0], [1.0, 2.0, -4.0], [0.0, 0.0, 5.0]])

    assert np.allclose(gauge(pts), linear_constant_gauge(3.0)(pts), atol=1e-14)


def test_transverse_gauge_of_zero_form_vanishes(rng):
    gauge = a_formula(lambda x: np.zeros_like(np.asarray(x, dtype=float)))

    assert np.all(gauge(rng.normal(size=(20, 3))) == 0.0)


def test_transverse_gauge_vanishes_on_axis():
    gauge = a_formula(_tube_perturbation())

    assert np.allclose(gauge(np.array([[0.0, 0.0, 0.7], [0.0, 0.0, -2.0]])), 0.0, atol=1e-15)


def test_transverse_gauge_differential_is_beta(rng):
    gauge = a_formula(_tube_perturbation())

    assert gauge.curl_defect(random_ball_points(rng, (0.0, 0.0, 0.0), 1.0, 20)) <= 1e-6


def test_moments_vanish_on_axis_and_are_nonnegative():
    gauge = a_formula(_tube_perturbation())

    assert gauge.moment((0.0, 0.0, 0.3), 0, 0, window=2.0) == 0.0
    assert gauge.moment((0.4, -0.2, 0.3), 1, 1, window=2.0) > 0.0


def test_moment_rejects_high_order():
    with pytest.raises(ValueError, match="m must be"):
        a_formula(_tube_perturbation()).moment((1.0, 0.0, 0.0), 0, 2, window=1.0)


def test_gauge_is_bounded_by_moments(rng):
    gauge = a_formula(_tube_perturbation())
    pts = random_ball_points(rng, (0.0, 0.0, 0.0), 1.5, 20)

    assert max(gauge.bound_ratio(p, window=3.0) for p in pts) <= 10.0


@pytest.mark.slow
def test_gauge_is_bounded_by_moments_on_many_points(rng):
    gauge = a_formula(_tube_perturbation())
    pts = random_ball_points(rng, (0.0, 0.0, 0.0), 2.0, 300)

    assert max(gauge.bound_ratio(p, window=4.0) for p in pts) <= 10.0
