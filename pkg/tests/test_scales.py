import math

import numpy as np
import pytest

from maglt.core.field_model import (
    CompactBumpField,
    ConstantDirectionField,
    ConstantField,
    LossYauField,
    TubeRegularField,
)
from maglt.core.scales import (
    ScaleProfile,
    admissible_pairs,
    check_tempered,
    log_bisect,
    magnetic_scale,
    scaling_covariance,
    sup_inf_field,
    tempered_dichotomy_check,
    tempered_scale,
    variation_scale,
)


def _ball_grid(center, radius: float, n: int = 41) -> np.ndarray:
    axis = np.linspace(-radius, radius, n)
    mesh = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), axis=-1).reshape(-1, 3)
    return np.asarray(center) + mesh[np.linalg.norm(mesh, axis=-1) <= radius]


def test_sup_inf_of_constant_field():
    field = ConstantField((0.0, 3.0, 4.0))

    assert sup_inf_field(field, (1.0, 2.0, 3.0), 10.0) == (5.0, 5.0)


def test_sup_inf_degenerate_ball_returns_point_value():
    field = TubeRegularField(1.0)
    x = np.array([0.3, 0.2, -0.1])
    b = float(field.strength(x))

    assert sup_inf_field(field, x, 0.0) == (b, b)


def test_sup_inf_rejects_negative_radius():
    with pytest.raises(ValueError, match="L must be"):
        sup_inf_field(TubeRegularField(1.0), (0.0, 0.0, 0.0), -1.0)


def test_sup_inf_matches_grid_scan():
    field = TubeRegularField(1.0, a=0.1, s=1.0)
    grid = field.strength(_ball_grid((0.0, 0.0, 0.0), 1.0))

    sup_b, inf_b = sup_inf_field(field, (0.0, 0.0, 0.0), 1.0)

    assert sup_b == pytest.approx(float(grid.max()), rel=5e-3)
    assert inf_b == pytest.approx(float(grid.min()), rel=5e-3)


def test_sup_inf_is_monotone_in_radius():
    field = TubeRegularField(1.0, a=0.3, s=1.0)
    x = (0.2, 0.0, 0.1)
    values = [sup_inf_field(field, x, L) for L in (0.1, 0.4, 1.0, 2.5)]

    sups = np.array([v[0] for v in values])
    infs = np.array([v[1] for v in values])
    assert np.all(np.diff(sups) >= -1e-12)
    assert np.all(np.diff(infs) <= 1e-12)


def test_log_bisect_finds_threshold():
    assert log_bisect(lambda L: L <= 3.7, 1.0) == pytest.approx(3.7, rel=1e-6)


def test_log_bisect_sentinels():
    assert log_bisect(lambda L: True, 1.0) == math.inf
    assert log_bisect(lambda L: False, 1.0) == 0.0


@pytest.mark.parametrize(("b", "expected"), [(1.0, 1.0), (4.0, 0.5), (100.0, 0.1)])
def test_magnetic_scale_of_constant_field(b, expected):
    assert magnetic_scale(ConstantField((0.0, 0.0, b)), (0.0, 0.0, 0.0)) == pytest.approx(expected)


def test_magnetic_scale_is_at_least_vanishing_radius():
    field = CompactBumpField(delta=1.0, b=1.0)

    assert magnetic_scale(field, (0.0, 0.0, 0.0)) >= 1.0


def test_variation_scale_of_constant_field_is_infinite():
    assert variation_scale(ConstantField((0.0, 0.0, 2.0)), (1.0, 1.0, 1.0)) == math.inf


def test_variation_scale_of_linear_strength():
    # L b0/λ <= b0 (1 - L/λ) holds up to L = λ/2
    field = ConstantDirectionField(b0=1.0, lam=100.0)

    assert variation_scale(field, (0.0, 0.0, 0.0)) == pytest.approx(50.0, rel=2e-2)


def test_tempered_scale_of_constant_field_is_infinite():
    assert tempered_scale(ConstantField((0.0, 0.0, 1.0)), (0.0, 0.0, 0.0)) == math.inf


def test_profile_of_constant_field():
    profile = ScaleProfile(ConstantField((0.0, 0.0, 4.0)))
    rec = profile.record((0.0, 0.0, 0.0))

    assert rec.Lm == pytest.approx(0.5)
    assert rec.Lc == math.inf
    assert rec.ell == math.inf
    assert rec.P == 0.0


def test_profile_derived_quantities():
    profile = ScaleProfile(TubeRegularField(1.0), epsilon=1 / 1024)
    rec = profile.record((0.0, 0.0, 0.0))

    assert rec.Lc == max(rec.Lm, rec.Lv)
    assert rec.L == pytest.approx(0.5 * rec.Lc)
    assert rec.ell == pytest.approx(rec.L / 1024)
    assert rec.P == pytest.approx(1024**5 * rec.ell**-2)


def test_profile_caches_records():
    profile = ScaleProfile(TubeRegularField(1.0))
    first = profile.record((0.1, 0.0, 0.0))

    assert profile.record((0.1, 0.0, 0.0)) is first


def test_profile_rejects_bad_epsilon():
    with pytest.raises(ValueError, match="epsilon"):
        ScaleProfile(ConstantField((0.0, 0.0, 1.0)), epsilon=0.01)


def test_check_tempered_identical_pair_has_ratio_one():
    x = np.array([0.1, 0.2, 0.3])
    report = check_tempered(lambda p: 1e-3, [(x, x)])

    assert report.ok
    assert report.checked == 1
    assert report.min_ratio == report.max_ratio == 1.0


def test_check_tempered_treats_infinite_pairs_as_ratio_one():
    report = check_tempered(lambda p: math.inf, [((0.0, 0.0, 0.0), (5.0, 0.0, 0.0))])

    assert report.ok
    assert report.max_ratio == 1.0


def test_check_tempered_reports_offending_pair():
    def ell(p):
        return 1e-3 if p[0] < 0.5 else 1e-2

    report = check_tempered(ell, [((0.0, 0.0, 0.0), (0.6, 0.0, 0.0)), ((0.0, 0.0, 0.0), (5.0, 0.0, 0.0))])

    assert not report.ok
    assert report.skipped == 1
    assert report.violations[0][2] == pytest.approx(10.0)


def test_tube_scale_is_tempered(rng):
    profile = ScaleProfile(TubeRegularField(1.0))
    pairs = admissible_pairs(profile, rng, [(0.0, 0.0, 0.0), (0.5, 0.0, 0.5)], 6)

    report = check_tempered(profile.ell, pairs, profile.epsilon)

    assert report.checked == 6
    assert report.ok


@pytest.mark.slow
def test_tube_scale_is_tempered_on_many_pairs(rng):
    profile = ScaleProfile(TubeRegularField(1.0))
    centers = rng.uniform(-1.0, 1.0, size=(20, 3))
    pairs = admissible_pairs(profile, rng, centers, 200)

    assert check_tempered(profile.ell, pairs, profile.epsilon).ok


def test_dichotomy_holds_on_tube_field():
    profile = ScaleProfile(TubeRegularField(1.0))
    records = tempered_dichotomy_check(profile, [(0.0, 0.0, 0.0), (0.4, -0.3, 0.8)])

    assert all(r.ok for r in records)


def test_scales_are_covariant_under_rescaling():
    ratios = scaling_covariance(LossYauField(), (0.3, 0.1, 0.2), 2.0)

    for value in ratios.values():
        assert value == pytest.approx(1.0, rel=1e-2)
