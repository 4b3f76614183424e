import sys
import os
sys.path.append(os.path.abspath(os.path.dirname(__file__)))

import json

import numpy as np
import pytest

from src.data_loader import (
    DEFAULT_CONFIG,
    build_domain,
    build_potential,
    build_provider,
    build_sde_config,
    build_window,
    load_config,
    load_provider_file,
    load_tabulated_potential,
    merge_defaults,
    validate_config,
)
from src.disk_operators import MIN_ASPECT
from src.errors import ConfigError, InvalidArgumentError, NotConfiguredError
from src.green_kernel import ClosedFormBallNoDrift, UserSupplied
from src.mc_escape import UNIFORM_VOLUME, Reflection
from src.potential import PotentialKind

PROVIDER_TEXT = """# regular part and script-G at the north pole
R 0 0 1 -0.104
SG 0 0 1 0.0
SG 0 0 0 0.1666666666666667
ISG 0.0930842267730309
IG 0 0 1 0.0
G 0 0 1 0 0 0 0.0
"""


def test_default_config_is_valid():
    is_valid, report = validate_config(merge_defaults({}))
    assert is_valid
    assert list(report.columns) == ["check", "path", "status", "message"]
    assert set(report["status"]) == {"PASS"}


def test_defaults_are_filled():
    config = load_config({"window": {"eps": [0.3], "center": {"theta": 1.0}}})
    assert config.eps_list == [0.3]
    assert config.a_list == [1.0]
    assert config.section("window")["center"] == {"theta": 1.0, "phi": 0.0}
    assert config.section("mc")["dt"] == DEFAULT_CONFIG["mc"]["dt"]
    assert DEFAULT_CONFIG["window"]["eps"] == [0.2, 0.1]


def test_empty_eps_list_is_rejected():
    with pytest.raises(ConfigError) as info:
        load_config({"window": {"eps": []}})
    assert info.value.path == "window.eps"


def test_error_path_is_qualified():
    with pytest.raises(ConfigError) as info:
        load_config({"window": {"a": [1.0, 1.5]}})
    assert info.value.path == "window.a[1]"
    assert str(info.value).startswith("window.a[1]: ")
    errors = info.value.report[info.value.report["status"] == "ERROR"]
    assert errors["path"].tolist() == ["window.a[1]"]


def test_out_of_range_fields():
    cases = {
        "window.eps": {"window": {"eps": [0.1, 0.2]}},
        "window.eps[0]": {"window": {"eps": [0.9]}},
        "domain.radius": {"domain": {"radius": 0}},
        "mc.dt": {"mc": {"dt": -1e-3}},
        "mc.seed": {"mc": {"seed": -4}},
        "mc.start": {"mc": {"start": [0.0, 0.0, 2.0]}},
        "mc.reflection": {"mc": {"reflection": "absorbing"}},
        "potential.kind": {"potential": {"kind": "quadratic"}},
        "provider.path": {"provider": {"kind": "user_supplied", "path": "missing.txt"}},
        "kernel.direction": {"kernel": {"direction": "E3"}},
        "window.a[0]": {"window": {"a": [1e-7]}},
        "potential.tol": {"potential": {"tol": 0.5}},
    }
    for path, raw in cases.items():
        is_valid, report = validate_config(merge_defaults(raw))
        assert not is_valid, path
        assert path in report.loc[report["status"] == "ERROR", "path"].tolist()


def test_unknown_section_warns():
    is_valid, report = validate_config(merge_defaults({"plots": {"style": "dark"}}))
    assert is_valid
    assert report.loc[report["path"] == "plots", "status"].item() == "WARNING"


def test_load_config_file(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"mc": {"n_paths": 500, "seed": 3}, "window": {"a": [1.0, 0.5]}}))
    config = load_config(str(path))
    assert config.source == str(path)
    assert config.a_list == [1.0, 0.5]
    sde = build_sde_config(config)
    assert (sde.n_paths, sde.seed, sde.start) == (500, 3, UNIFORM_VOLUME)
    assert sde.reflection == Reflection.NORMAL_PROJECTION
    assert build_sde_config(config, seed=99).seed == 99


def test_invalid_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{\"mc\": ")
    with pytest.raises(ConfigError):
        load_config(str(path))


def test_point_start():
    config = load_config({"mc": {"start": [0.0, 0.0, 0.5]}})
    assert build_sde_config(config).start == (0.0, 0.0, 0.5)


def test_build_domain_and_window():
    config = load_config({"domain": {"radius": 2.0}, "window": {"center": {"theta": 0.0, "phi": 0.0}}})
    domain = build_domain(config)
    window = build_window(config, domain, 0.1, 0.5)
    np.testing.assert_allclose(window.center, [0.0, 0.0, 2.0])
    assert (window.eps, window.a) == (0.1, 0.5)


def test_tabulated_potential_file(tmp_path):
    path = tmp_path / "phi.txt"
    axis = np.linspace(-1.0, 1.0, 3)
    values = [f"{x + 2.0 * z:.6f}" for x in axis for y in axis for z in axis]
    path.write_text("3 3 3  # grid\n-1 1 -1 1 -1 1\n" + "\n".join(values) + "\n")
    phi = load_tabulated_potential(str(path))
    assert phi.kind == PotentialKind.TABULATED
    assert float(phi.value(np.array([[0.5, 0.3, 0.25]]))[0]) == pytest.approx(1.0)
    config = load_config({"potential": {"kind": "tabulated", "path": str(path)}})
    assert build_potential(config).kind == PotentialKind.TABULATED


def test_tabulated_potential_value_count(tmp_path):
    path = tmp_path / "short.txt"
    path.write_text("2 2 2\n0 1 0 1 0 1\n1 2 3\n")
    with pytest.raises(InvalidArgumentError):
        load_tabulated_potential(str(path))


def test_provider_file(tmp_path):
    path = tmp_path / "provider.txt"
    path.write_text(PROVIDER_TEXT)
    provider = load_provider_file(str(path))
    assert provider.summary() == {"R": 1, "G": 1, "SG": 2, "ISG": 1, "IG": 1}
    assert provider.regular_part_at(np.array([0.0, 0.0, 1.0])) == -0.104
    assert provider.interior_green(np.array([0.0, 0.0, 1.0]), np.zeros(3)) == 0.0
    with pytest.raises(NotConfiguredError):
        provider.script_G(np.array([0.5, 0.0, 0.0]))
    config = load_config({"provider": {"kind": "user_supplied", "path": str(path)}})
    assert isinstance(build_provider(config, build_domain(config)), UserSupplied)


def test_provider_file_malformed(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("R 0 0 1\n")
    with pytest.raises(InvalidArgumentError):
        load_provider_file(str(path))


def test_aspect_below_disk_routine_range():
    with pytest.raises(ConfigError) as info:
        load_config({"window": {"a": [1.0, 1e-7]}})
    assert info.value.path == "window.a[1]"
    assert load_config({"window": {"a": [MIN_ASPECT]}}).a_list == [MIN_ASPECT]


def test_potential_tolerance_override():
    assert build_potential(load_config(None)).default_tol == 1e-10
    phi = build_potential(load_config({"potential": {"kind": "linear_axis", "beta": 0.5, "tol": 1e-6}}))
    assert phi.quadrature_tol == 1e-6
    assert phi.default_tol == 1e-6


def test_default_provider_and_potential():
    config = load_config(None)
    assert isinstance(build_provider(config, build_domain(config)), ClosedFormBallNoDrift)
    assert build_potential(config).kind == PotentialKind.ZERO
    linear = build_potential(load_config({"potential": {"kind": "linear_axis", "beta": 1.0}}))
    assert linear.kind == PotentialKind.LINEAR_AXIS


if __name__ == "__main__":
    import tempfile
    from pathlib import Path

    for name, test in list(globals().items()):
        if name.startswith("test_") and callable(test):
            if "tmp_path" in test.__code__.co_varnames[: test.__code__.co_argcount]:
                with tempfile.TemporaryDirectory() as tmp:
                    test(Path(tmp))
            else:
                test()
            print(f"✅ {name}")
