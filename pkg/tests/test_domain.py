import numpy as np
import pytest

from maglt.core.domain import Box
from maglt.core.profiles import smooth_step, smooth_step_derivative
from maglt.core.sampling import ball_points, sphere_points


def test_box_rejects_inverted_corners():
    with pytest.raises(ValueError, match="upper corner"):
        Box((0.0, 0.0, 0.0), (1.0, 0.0, 1.0))


def test_cube_geometry():
    box = Box.cube((1.0, 0.0, -1.0), 0.5)

    assert box.volume == pytest.approx(1.0)
    assert np.allclose(box.center, (1.0, 0.0, -1.0))
    assert box.contains_box(Box.cube((1.0, 0.0, -1.0), 0.25))
    assert not box.contains_box(box.padded(0.1))


def test_grid_is_cell_centered():
    points = Box.cube((0.0, 0.0, 0.0), 1.0).grid(2)

    assert points.shape == (8, 3)
    assert set(np.unique(points)) == {-0.5, 0.5}


def test_smooth_step_limits_and_slope():
    t = np.linspace(-0.5, 1.5, 2001)
    s = smooth_step(t)

    assert np.all(s[t <= 0] == 0.0)
    assert np.all(s[t >= 1] == 1.0)
    assert np.all(np.diff(s) >= 0.0)
    assert float(np.max(smooth_step_derivative(t))) == pytest.approx(2.0, rel=1e-3)


def test_ball_and_sphere_points_stay_on_target():
    center = np.array([1.0, 2.0, 3.0])

    inside = ball_points(center, 0.5, 6)
    surface = sphere_points(center, 0.5, 5)

    assert np.all(np.linalg.norm(inside - center, axis=-1) <= 0.5 + 1e-12)
    assert np.allclose(np.linalg.norm(surface - center, axis=-1), 0.5)
