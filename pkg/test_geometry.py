import sys
import os
sys.path.append(os.path.abspath(os.path.dirname(__file__)))

import numpy as np
import pytest

from src.errors import DomainError, InvalidArgumentError
from src.extrapolation import log_log_slope
from src.geometry import (
    FullyAbsorbingBoundary,
    boundary_frame,
    cap_area,
    equal_area_eps,
    inverse_rescaled_chart,
    make_window,
    rescaled_chart,
    rescaled_distance_residuals,
    sample_boundary,
    spherical_point,
    unit_ball,
    window_area,
    window_membership,
)

NORTH = np.array([0.0, 0.0, 1.0])


def test_ball_measures():
    ball = unit_ball(2.0)
    assert ball.volume == pytest.approx(32.0 * np.pi / 3.0)
    assert ball.boundary_area == pytest.approx(16.0 * np.pi)
    assert ball.is_on_boundary(spherical_point(ball, 1.0, 2.0))
    assert not ball.is_on_boundary(np.array([0.0, 0.0, 1.0]))
    with pytest.raises(InvalidArgumentError):
        unit_ball(-1.0)


def test_north_pole_frame():
    frame = boundary_frame(unit_ball(), NORTH)
    np.testing.assert_allclose(frame.E1, [1.0, 0.0, 0.0])
    np.testing.assert_allclose(frame.E2, [0.0, 1.0, 0.0])
    np.testing.assert_allclose(np.cross(frame.E1, frame.E2), frame.nu)
    assert frame.lambda1 == frame.lambda2 == 1.0
    assert frame.H == 1.0


def test_frame_is_orthonormal_away_from_pole():
    ball = unit_ball(3.0)
    frame = boundary_frame(ball, spherical_point(ball, 1.1, -0.4))
    basis = np.stack([frame.E1, frame.E2, frame.nu])
    np.testing.assert_allclose(basis @ basis.T, np.eye(3), atol=1e-14)
    assert frame.H == pytest.approx(1.0 / 3.0)


def test_frame_rejects_interior_point():
    with pytest.raises(DomainError):
        boundary_frame(unit_ball(), np.array([0.0, 0.0, 0.5]))


def test_exp_map_quarter_turn():
    ball = unit_ball(2.0)
    x = 2.0 * NORTH
    y = ball.exp_map(x, np.array([np.pi, 0.0, 0.0]))
    np.testing.assert_allclose(y, [2.0, 0.0, 0.0], atol=1e-14)
    assert ball.geodesic_distance(x, y) == pytest.approx(np.pi)
    assert ball.chord_distance(x, y) == pytest.approx(2.0 * np.sqrt(2.0))


def test_log_map_inverts_exp_map():
    ball = unit_ball()
    x = spherical_point(ball, 0.7, 0.3)
    frame = boundary_frame(ball, x)
    v = 0.9 * frame.E1 - 1.3 * frame.E2
    np.testing.assert_allclose(ball.log_map(x, ball.exp_map(x, v)), v, atol=1e-12)


def test_log_map_antipodal():
    ball = unit_ball()
    with pytest.raises(DomainError):
        ball.log_map(NORTH, -NORTH)


def test_window_chart_bound():
    ball = unit_ball()
    make_window(ball, NORTH, 0.7)
    with pytest.raises(InvalidArgumentError):
        make_window(ball, NORTH, 0.8)
    with pytest.raises(InvalidArgumentError):
        make_window(ball, NORTH, 0.1, a=1.5)
    with pytest.raises(InvalidArgumentError):
        make_window(ball, NORTH, 0.0)


def test_window_membership_ellipse():
    ball = unit_ball()
    w = make_window(ball, NORTH, 0.1, a=0.5)
    assert window_membership(w, NORTH)
    assert window_membership(w, rescaled_chart(w, 0.95, 0.0))
    assert window_membership(w, rescaled_chart(w, 0.0, 0.45))
    assert not window_membership(w, rescaled_chart(w, 0.0, 0.55))
    assert not window_membership(w, rescaled_chart(w, 1.05, 0.0))
    assert not window_membership(w, -NORTH)


def test_vectorized_contains_matches_chart():
    w = make_window(unit_ball(), spherical_point(unit_ball(), 0.5, 1.0), 0.2, a=0.5)
    grid = np.linspace(-1.15, 1.15, 9)
    t1, t2 = np.meshgrid(grid, grid)
    points = np.array([rescaled_chart(w, a, b) for a, b in zip(t1.ravel(), t2.ravel())])
    expected = t1.ravel() ** 2 + (t2.ravel() / 0.5) ** 2 <= 1.0
    np.testing.assert_array_equal(w.contains(points), expected)


def test_inverse_chart():
    w = make_window(unit_ball(), NORTH, 0.05)
    t1, t2 = inverse_rescaled_chart(w, rescaled_chart(w, 0.3, -0.8))
    assert t1 == pytest.approx(0.3)
    assert t2 == pytest.approx(-0.8)


def test_rescaled_chart_injectivity():
    w = make_window(unit_ball(), NORTH, 0.5)
    with pytest.raises(DomainError):
        rescaled_chart(w, 7.0, 0.0)


def test_rescaled_distance_residual_orders():
    ball = unit_ball()
    eps_values = [0.08, 0.04, 0.02, 0.01]
    t, s = (0.3, 0.1), (-0.4, 0.2)
    chord, log_geodesic = [], []
    for eps in eps_values:
        residuals = rescaled_distance_residuals(make_window(ball, NORTH, eps), t, s)
        chord.append(residuals[0])
        log_geodesic.append(residuals[1])
    assert log_log_slope(eps_values, chord) == pytest.approx(1.0, abs=0.15)
    assert log_log_slope(eps_values, log_geodesic) == pytest.approx(2.0, abs=0.2)


def test_areas():
    ball = unit_ball()
    assert cap_area(ball, np.pi) == pytest.approx(4.0 * np.pi)
    disk = make_window(ball, NORTH, 0.2)
    assert window_area(disk) == pytest.approx(cap_area(ball, 0.2))
    ellipse = make_window(ball, NORTH, 0.01, a=0.5)
    assert window_area(ellipse) == pytest.approx(np.pi * 0.5 * 0.01 ** 2, rel=1e-3)
    assert equal_area_eps(0.25, 0.1) == pytest.approx(0.2)


def test_time_scale_disk():
    ball = unit_ball()
    w = make_window(ball, NORTH, 0.1)
    assert w.time_scale(ball.volume) == pytest.approx(ball.volume / 0.4, rel=1e-10)
    sphere = FullyAbsorbingBoundary(ball)
    assert sphere.time_scale() == pytest.approx(1.0 / 6.0)
    assert sphere.contains(np.zeros((5, 3))).all()


def test_sample_boundary_on_sphere():
    ball = unit_ball(1.5)
    points = sample_boundary(ball, 200, np.random.default_rng(3))
    np.testing.assert_allclose(np.linalg.norm(points, axis=1), 1.5)


if __name__ == "__main__":
    for name, test in list(globals().items()):
        if name.startswith("test_") and callable(test):
            test()
            print(f"✅ {name}")
