import sys
import os
sys.path.append(os.path.abspath(os.path.dirname(__file__)))

import numpy as np
import pytest

from src.asymptotics import (
    DISK_LOG_CONSTANT,
    averaged_sojourn,
    build_sojourn_field,
    leading_term,
    net_constant_disk,
    net_constant_ellipse,
    sojourn_field,
)
from src.disk_operators import elliptic_Ka
from src.errors import DomainError, InvalidArgumentError, NotConfiguredError
from src.geometry import make_window, unit_ball
from src.green_kernel import ClosedFormBallNoDrift, SignConvention, UserSupplied, ball_regular_part_exact
from src.potential import constant_potential, linear_axis_potential, zero_potential

NORTH = np.array([0.0, 0.0, 1.0])


def _disk_constant_exact(eps, radius=1.0):
    ball = unit_ball(radius)
    Phi = ball.volume
    coeff = 1.0 / radius
    return (
        Phi / (4.0 * eps)
        - coeff * Phi / (4.0 * np.pi) * np.log(eps)
        + ball_regular_part_exact(ball) * Phi
        - coeff * Phi / (4.0 * np.pi) * DISK_LOG_CONSTANT
    )


def _ball_setup(eps=0.1, a=1.0):
    ball = unit_ball()
    return ball, make_window(ball, NORTH, eps, a), ClosedFormBallNoDrift(ball)


def test_disk_constant_unit_ball():
    ball, window, provider = _ball_setup()
    expansion = net_constant_disk(ball, zero_potential(), window, provider)
    assert expansion.leading == pytest.approx(10.4719755, abs=1e-6)
    assert expansion.log_term == pytest.approx(0.7675284, abs=1e-6)
    assert expansion.total == pytest.approx(_disk_constant_exact(0.1), abs=5e-4)
    assert expansion.total == pytest.approx(10.8418, abs=1e-3)
    assert expansion.inputs_echo["R"] == pytest.approx(-0.10400, abs=1e-4)
    assert expansion.error_order == "O(eps log eps)"
    assert set(expansion.as_row()) == {"leading", "log_term", "constant_term", "total"}


def test_disk_constant_leading_scales_with_eps():
    ball, _, provider = _ball_setup()
    for eps in (0.2, 0.1, 0.05):
        window = make_window(ball, NORTH, eps)
        expansion = net_constant_disk(ball, zero_potential(), window, provider)
        assert expansion.leading == pytest.approx(ball.volume / (4.0 * eps), rel=1e-12)


def test_disk_constant_needs_disk():
    ball, window, provider = _ball_setup(a=0.5)
    with pytest.raises(InvalidArgumentError):
        net_constant_disk(ball, zero_potential(), window, provider)


def test_ellipse_formula_reduces_to_disk():
    ball, window, provider = _ball_setup()
    disk = net_constant_disk(ball, zero_potential(), window, provider)
    ellipse = net_constant_ellipse(ball, zero_potential(), window, provider)
    assert ellipse.leading == pytest.approx(disk.leading, rel=1e-12)
    assert ellipse.constant_term == pytest.approx(disk.constant_term, abs=1e-4)
    assert ellipse.inputs_echo["Ka"] == pytest.approx(np.pi ** 2)


def test_ellipse_leading_term():
    ball, window, provider = _ball_setup(eps=0.1, a=0.5)
    field = build_sojourn_field(ball, zero_potential(), window, provider)
    expected = elliptic_Ka(0.5).Ka * ball.volume / (4.0 * np.pi ** 2 * 0.5 * 0.1)
    assert field.base_expansion.leading == pytest.approx(expected, rel=1e-12)
    assert field.base_expansion.leading == pytest.approx(leading_term(ball, zero_potential(), window), rel=1e-12)
    assert np.isfinite(field.base_expansion.total)
    assert field.base_expansion.inputs_echo["I_aniso"] == 0.0


def test_constant_potential_is_gauge_invariant():
    ball, window, provider = _ball_setup()
    base = net_constant_disk(ball, zero_potential(), window, provider).total
    shifted = net_constant_disk(ball, constant_potential(-2.5), window, provider).total
    assert shifted == pytest.approx(base, rel=1e-12)


def test_drift_needs_configured_provider():
    ball, window, provider = _ball_setup()
    phi = linear_axis_potential(1.0)
    with pytest.raises(NotConfiguredError):
        net_constant_disk(ball, phi, window, provider)
    assert leading_term(ball, phi, window) < leading_term(ball, zero_potential(), window)
    assert leading_term(ball, phi, window) == pytest.approx(np.pi * np.exp(-2.0) / 0.1, rel=1e-9)


def test_sign_convention_with_user_provider():
    ball = unit_ball()
    window = make_window(ball, NORTH, 0.1)
    provider = UserSupplied(
        radius=1.0,
        regular=[(NORTH, -0.1)],
        script=[(NORTH, 0.0)],
        script_integral=0.05,
        green_integrals=[(NORTH, 0.0)],
    )
    phi = linear_axis_potential(0.5)
    plus_run = net_constant_disk(ball, phi, window, provider, SignConvention.PLUS)
    minus_run = net_constant_disk(ball, phi, window, provider, SignConvention.MINUS)
    assert plus_run.inputs_echo["dnu_phi"] == pytest.approx(0.5)
    assert plus_run.inputs_echo["log_coefficient"] == pytest.approx(1.5)
    assert minus_run.inputs_echo["log_coefficient"] == pytest.approx(0.5)
    assert plus_run.leading == minus_run.leading
    assert plus_run.log_term > minus_run.log_term


def test_missing_provider_entry():
    ball = unit_ball()
    window = make_window(ball, NORTH, 0.1)
    with pytest.raises(NotConfiguredError):
        net_constant_disk(ball, zero_potential(), window, UserSupplied(radius=1.0))


def test_averaged_sojourn():
    ball, window, provider = _ball_setup()
    field = build_sojourn_field(ball, zero_potential(), window, provider)
    assert field.weighted_volume == pytest.approx(ball.volume)
    assert averaged_sojourn(field) == pytest.approx(field.base_expansion.total + 1.0 / 15.0, rel=1e-12)
    assert averaged_sojourn(field) == pytest.approx(10.9085, abs=1e-3)


def test_sojourn_field_at_centre():
    ball, window, provider = _ball_setup()
    field = build_sojourn_field(ball, zero_potential(), window, provider)
    assert sojourn_field(field, np.zeros(3)) == pytest.approx(field.base_expansion.total + 1.0 / 6.0, rel=1e-12)


def test_sojourn_field_on_far_boundary():
    ball, window, provider = _ball_setup()
    field = build_sojourn_field(ball, zero_potential(), window, provider)
    south = -NORTH
    assert provider.script_G(south) == 0.0
    # boundary Green function of the unit ball at chord 2
    green_antipode = (1.0 - np.log(2.0)) / (4.0 * np.pi) - 1.0 / (2.0 * np.pi)
    expected = field.base_expansion.total - field.weighted_volume * green_antipode
    assert sojourn_field(field, south) == pytest.approx(expected, rel=1e-12)


def test_sojourn_field_antipode_against_equator():
    ball, window, provider = _ball_setup()
    field = build_sojourn_field(ball, zero_potential(), window, provider)
    south, equator = -NORTH, np.array([1.0, 0.0, 0.0])
    difference = sojourn_field(field, south) - sojourn_field(field, equator)
    green_gap = provider.interior_green(NORTH, south) - provider.interior_green(NORTH, equator)
    assert difference == pytest.approx(-field.weighted_volume * green_gap, rel=1e-12)
    closed_form = -(1.0 - np.sqrt(2.0) - 2.0 * np.log(2.0) + np.log(1.0 + np.sqrt(2.0))) / 3.0
    assert difference == pytest.approx(closed_form, rel=1e-10)


def test_sojourn_field_validity_region():
    ball, window, provider = _ball_setup()
    field = build_sojourn_field(ball, zero_potential(), window, provider)
    with pytest.raises(DomainError):
        sojourn_field(field, np.array([0.0, 0.0, 0.5]))
    with pytest.raises(DomainError):
        sojourn_field(field, np.array([0.0, 0.0, -1.5]))
    assert np.isfinite(sojourn_field(field, np.array([0.0, 0.0, -0.9])))


if __name__ == "__main__":
    for name, test in list(globals().items()):
        if name.startswith("test_") and callable(test):
            test()
            print(f"✅ {name}")
