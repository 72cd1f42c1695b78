import math

import numpy as np
import pytest

from maglt.core.analytic import (
    WEYL_CONSTANT,
    BoundBreakdown,
    PressureQuery,
    amplitude_sweep,
    box_quadrature,
    landau_pressure,
    landau_pressure_levels,
    loglog_slope,
    lt_rhs,
    scaling_identity,
    semiclassical_energy,
    zero_mode_density_bound,
)
from maglt.core.domain import Box
from maglt.core.errors import QuadratureError
from maglt.core.field_model import CompactBumpField, ConstantField, TubeRegularField
from maglt.core.potentials import BoxWell, GaussianWell, ZeroPotential
from maglt.core.scales import ScaleProfile

UNIT_WELL = BoxWell(1.0, (0.5, 0.5, 0.5))


def test_pressure_vanishes_without_depth():
    assert landau_pressure(3.0, 0.0) == 0.0
    assert landau_pressure_levels(3.0, 0.0) == 0.0


def test_pressure_with_only_lowest_level():
    assert landau_pressure(1.0, 1.0) == pytest.approx(1.0 / (3.0 * math.pi**2), rel=1e-14)
    assert landau_pressure(1.0, 1.0) == pytest.approx(0.0337736, rel=1e-6)


def test_pressure_weak_field_limit_is_weyl_term():
    assert landau_pressure(1e-3, 1.0) == pytest.approx(0.0135095, rel=1e-2)
    assert landau_pressure(0.0, 1.0) == pytest.approx(WEYL_CONSTANT)


def test_pressure_forms_agree(rng):
    bs = rng.uniform(0.01, 10.0, 10_000)
    ws = rng.uniform(0.0, 10.0, 10_000)

    closed = landau_pressure(bs, ws)
    levels = np.array([landau_pressure_levels(b, w) for b, w in zip(bs, ws)])

    assert np.allclose(closed, levels, rtol=1e-12, atol=0.0)


def test_pressure_forms_agree_past_exact_terms():
    # W/2B = 1000.3 uses the Euler–Maclaurin tail
    assert landau_pressure(1e-3, 2.0006) == pytest.approx(landau_pressure_levels(1e-3, 2.0006), rel=1e-12)


def test_pressure_is_monotone_in_depth():
    ws = np.linspace(0.0, 20.0, 2001)

    assert np.all(np.diff(landau_pressure(0.7, ws)) >= 0.0)


def test_pressure_is_continuous_in_field():
    base = landau_pressure(2.0, 5.0)
    gaps = [abs(landau_pressure(2.0 + d, 5.0) - base) for d in (1e-2, 1e-4, 1e-6, 1e-8)]

    assert gaps == sorted(gaps, reverse=True)
    assert gaps[-1] <= 1e-7


def test_pressure_rejects_negative_field():
    with pytest.raises(ValueError, match="B must be"):
        landau_pressure(-1.0, 1.0)


def test_pressure_query_applies_h():
    assert PressureQuery(2.0, 1.0, h=0.5).pressure() == pytest.approx(8.0 * landau_pressure(1.0, 1.0))
    with pytest.raises(ValueError, match="h must be"):
        PressureQuery(1.0, 1.0, h=0.0)


def test_energy_vanishes_for_nonnegative_potential():
    result = semiclassical_energy(ConstantField((0.0, 0.0, 1.0)), ZeroPotential())

    assert result.value == 0.0
    assert result.error == 0.0


def test_energy_without_field_is_weyl_term():
    result = semiclassical_energy(ConstantField((0.0, 0.0, 0.0)), UNIT_WELL)

    assert result.value == pytest.approx(-2.0 / (15.0 * math.pi**2), rel=1e-2)


def test_energy_of_constant_field_matches_level_sum():
    result = semiclassical_energy(ConstantField((0.0, 0.0, 5.0)), UNIT_WELL)

    assert result.value == pytest.approx(-landau_pressure_levels(5.0, 1.0), rel=1e-8)


def test_energy_scaling_identity():
    direct, rescaled = scaling_identity(TubeRegularField(1.0), GaussianWell(2.0, 0.5), 0.3)

    assert direct == pytest.approx(rescaled, rel=1e-12)


def test_quadrature_reports_error_estimate():
    result = box_quadrature(lambda x: np.exp(-np.sum(x * x, axis=-1)), Box.cube((0.0, 0.0, 0.0), 6.0), tol=1e-8)

    assert result.value == pytest.approx(math.pi**1.5 * math.erf(6.0) ** 3, rel=1e-8)
    assert 0.0 <= result.error <= 1e-6


def test_quadrature_raises_when_not_converged():
    with pytest.raises(QuadratureError):
        box_quadrature(lambda x: np.sin(200.0 * x[:, 0]) ** 2, Box.cube((0.0, 0.0, 0.0), 1.0), max_cells=16)


def test_bound_of_nonnegative_potential_is_zero():
    bd = lt_rhs(ConstantField((0.0, 0.0, 1.0)), ZeroPotential())

    assert (bd.term1, bd.term2, bd.term3) == (0.0, 0.0, 0.0)


def test_bound_of_constant_field_has_no_scale_term():
    bd = lt_rhs(ConstantField((0.0, 3.0, 4.0)), UNIT_WELL)

    assert bd.term1 == pytest.approx(1.0)
    assert bd.term2 == pytest.approx(5.0)
    assert bd.term3 == 0.0
    assert bd.total((1.0, 2.0, 7.0)) == pytest.approx(11.0)


def test_bound_requires_profile_for_varying_field():
    with pytest.raises(ValueError, match="profile"):
        lt_rhs(TubeRegularField(1.0), UNIT_WELL)


def test_breakdown_to_dict():
    bd = BoundBreakdown(1.0, 2.0, 0.0, (0.0, 0.0, 0.0), 16)

    assert bd.to_dict() == {"term1": 1.0, "term2": 2.0, "term3": 0.0, "errors": [0.0, 0.0, 0.0], "cells": 16}


def test_field_term_is_linear_in_amplitude():
    rows = amplitude_sweep(ConstantField((0.0, 0.0, 1.0)), GaussianWell(1.0, 0.4))
    amps = [r.amplitude for r in rows]
    term2 = [r.breakdown.term2 for r in rows]

    assert loglog_slope(amps, term2) == pytest.approx(1.0, abs=1e-9)
    assert len({round(r.breakdown.term1, 12) for r in rows}) == 1


@pytest.mark.slow
def test_field_term_is_linear_for_tube_field():
    rows = amplitude_sweep(TubeRegularField(1.0), GaussianWell(1.0, 0.2), points_per_axis=2, tol=1e-5)

    assert loglog_slope([r.amplitude for r in rows], [r.breakdown.term2 for r in rows]) == pytest.approx(
        1.0, abs=1e-4
    )
    assert all(r.breakdown.term3 > 0.0 for r in rows)


def test_density_bound_of_constant_field_is_zero():
    field = ConstantField((0.0, 0.0, 7.0))

    assert zero_mode_density_bound(field, (1.0, 2.0, 3.0), ScaleProfile(field)) == 0.0


def test_density_bound_scales_with_vanishing_radius():
    values = []
    for delta in (0.5, 1.0, 2.0):
        field = CompactBumpField(delta=delta)
        values.append(delta**3 * zero_mode_density_bound(field, (0.0, 0.0, 0.0), ScaleProfile(field)))

    assert values[0] > 0.0
    assert values[0] == pytest.approx(values[1], rel=5e-2)
    assert values[2] == pytest.approx(values[1], rel=5e-2)


def test_loglog_slope_rejects_nonpositive():
    with pytest.raises(ValueError, match="positive"):
        loglog_slope([1.0, 2.0], [0.0, 1.0])
