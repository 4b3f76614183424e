import sys
import os
sys.path.append(os.path.abspath(os.path.dirname(__file__)))

import numpy as np
import pytest

from src.errors import DomainError, NotConfiguredError, SingularEvaluationError
from src.geometry import boundary_frame, spherical_point, unit_ball
from src.green_kernel import (
    ClosedFormBallNoDrift,
    SignConvention,
    UserSupplied,
    ball_green,
    ball_regular_part_exact,
    ball_script_G,
    ball_script_G_integral,
    diagonal_extrapolation,
    kernel_singular,
    regular_part,
    script_G_boundary_mean,
)
from src.potential import integrate_over_ball

NORTH = np.array([0.0, 0.0, 1.0])


def _sphere_rule(n=48):
    mu, w = np.polynomial.legendre.leggauss(n)
    az = 2.0 * np.pi * np.arange(2 * n) / (2 * n)
    s = np.sqrt(1.0 - mu ** 2)
    points = np.stack(
        [np.outer(s, np.cos(az)).ravel(), np.outer(s, np.sin(az)).ravel(), np.repeat(mu, 2 * n)], axis=1
    )
    return points, np.repeat(w, 2 * n) * (np.pi / n)


def test_sign_convention_signs():
    assert SignConvention.PLUS.drift_sign == -1.0
    assert SignConvention.PLUS.normal_derivative_sign == 1.0
    assert SignConvention.MINUS.drift_sign == 1.0
    assert SignConvention.MINUS.normal_derivative_sign == -1.0


def test_kernel_terms_on_sphere():
    ball = unit_ball()
    frame = boundary_frame(ball, NORTH)
    d = 0.05
    y = ball.exp_map(NORTH, d * frame.E1)
    terms = kernel_singular(NORTH, y, frame)
    assert terms.coulomb == pytest.approx(1.0 / (4.0 * np.pi * np.sin(d / 2.0)))
    assert terms.log_term == pytest.approx(-np.log(d) / (4.0 * np.pi))
    assert terms.ii_difference == 0.0
    assert terms.drift_directional == 0.0
    assert terms.total_singular == pytest.approx(terms.coulomb + terms.log_term)


def test_coulomb_term_is_inverse_distance():
    ball = unit_ball()
    frame = boundary_frame(ball, NORTH)
    for d in (0.05, 0.02, 0.01):
        y = ball.exp_map(NORTH, d * frame.E2)
        assert kernel_singular(NORTH, y, frame).coulomb * 2.0 * np.pi * d == pytest.approx(1.0, rel=1e-2)


def test_drift_term_is_odd():
    ball = unit_ball()
    frame = boundary_frame(ball, NORTH)
    F = np.array([1.0, 0.0, 0.0])
    ahead = ball.exp_map(NORTH, 0.1 * frame.E1)
    behind = ball.exp_map(NORTH, -0.1 * frame.E1)
    forward = kernel_singular(NORTH, ahead, frame, F).drift_directional
    backward = kernel_singular(NORTH, behind, frame, F).drift_directional
    assert forward == pytest.approx(-1.0 / (4.0 * np.pi))
    assert backward == pytest.approx(-forward)
    flipped = kernel_singular(NORTH, ahead, frame, F, SignConvention.MINUS).drift_directional
    assert flipped == pytest.approx(-forward)


def test_normal_force_enters_log_term():
    ball = unit_ball()
    frame = boundary_frame(ball, NORTH)
    y = ball.exp_map(NORTH, 0.1 * frame.E1)
    terms = kernel_singular(NORTH, y, frame, np.array([0.0, 0.0, 2.0]))
    assert terms.log_term == pytest.approx(-3.0 * np.log(0.1) / (4.0 * np.pi))
    assert terms.drift_directional == pytest.approx(0.0, abs=1e-15)


def test_kernel_errors():
    ball = unit_ball()
    frame = boundary_frame(ball, NORTH)
    with pytest.raises(SingularEvaluationError):
        kernel_singular(NORTH, NORTH, frame)
    with pytest.raises(DomainError):
        kernel_singular(NORTH, -NORTH, frame)
    with pytest.raises(DomainError):
        kernel_singular(np.array([1.0, 0.0, 0.0]), NORTH, frame)


def test_ball_green_symmetry_and_errors():
    ball = unit_ball(2.0)
    x = np.array([0.3, -0.5, 0.9])
    y = np.array([-1.1, 0.2, 0.4])
    assert float(ball_green(ball, x, y)) == pytest.approx(float(ball_green(ball, y, x)), rel=1e-14)
    with pytest.raises(SingularEvaluationError):
        ball_green(ball, x, x)
    with pytest.raises(DomainError):
        ball_green(ball, x, np.array([0.0, 0.0, 2.5]))


def test_ball_green_boundary_mean_vanishes():
    ball = unit_ball()
    points, weights = _sphere_rule()
    y = np.array([0.1, 0.2, -0.3])
    assert float(np.dot(ball_green(ball, points, y), weights)) == pytest.approx(0.0, abs=1e-10)


def test_ball_green_volume_integral_is_script_G():
    ball = unit_ball(2.0)
    value, _ = integrate_over_ball(ball, lambda z: ball_green(ball, z, np.zeros(3)))
    assert value == pytest.approx(ball_script_G(np.zeros(3), ball), rel=1e-10)
    assert ball_script_G(np.zeros(3), ball) == pytest.approx(4.0 / 6.0)


def test_script_G_closed_forms():
    ball = unit_ball(1.5)
    provider = ClosedFormBallNoDrift(ball)
    assert provider.script_G_integral() == pytest.approx(4.0 * np.pi * 1.5 ** 5 / 45.0)
    assert ball_script_G_integral(ball) == provider.script_G_integral()
    assert provider.green_integral(1.5 * NORTH) == 0.0
    assert script_G_boundary_mean(provider, ball) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(DomainError):
        ball_script_G(np.array([0.0, 0.0, 2.0]), ball)


def test_regular_part_extrapolation():
    ball = unit_ball()
    result = diagonal_extrapolation(ball, NORTH)
    assert result.value == pytest.approx(ball_regular_part_exact(ball), abs=1e-4)
    assert ball_regular_part_exact(ball) == pytest.approx(-0.10400, abs=1e-5)
    assert result.observed_order == pytest.approx(1.0, abs=0.15)


def test_regular_part_direction_and_radius():
    ball = unit_ball(2.0)
    x_star = spherical_point(ball, 1.0, 0.5)
    along_e1 = diagonal_extrapolation(ball, x_star, "E1").value
    along_e2 = diagonal_extrapolation(ball, x_star, "E2").value
    assert along_e1 == pytest.approx(along_e2, abs=1e-9)
    assert regular_part(ClosedFormBallNoDrift(ball), x_star) == pytest.approx(ball_regular_part_exact(ball), abs=1e-4)


def test_user_supplied_lookup():
    provider = UserSupplied(
        radius=1.0,
        regular=[(NORTH, -0.104)],
        script=[(NORTH, 0.0), (np.zeros(3), 1.0 / 6.0)],
    )
    assert provider.regular_part_at(NORTH + 1e-10) == -0.104
    assert provider.script_G(np.zeros(3)) == pytest.approx(1.0 / 6.0)
    with pytest.raises(NotConfiguredError):
        provider.regular_part_at(np.array([1.0, 0.0, 0.0]))
    with pytest.raises(NotConfiguredError):
        provider.script_G_integral()
    with pytest.raises(NotConfiguredError):
        provider.interior_green(NORTH, np.zeros(3))
    assert provider.summary() == {"R": 1, "G": 0, "SG": 2, "ISG": 0, "IG": 0}


if __name__ == "__main__":
    for name, test in list(globals().items()):
        if name.startswith("test_") and callable(test):
            test()
            print(f"✅ {name}")
