import json
import logging
import os
from copy import deepcopy
from dataclasses import dataclass, replace
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from src.disk_operators import MIN_ASPECT
from src.errors import ConfigError, InvalidArgumentError
from src.geometry import DomainModel, WindowSpec, make_window, spherical_point, unit_ball
from src.green_kernel import ClosedFormBallNoDrift, GreenProvider, UserSupplied
from src.mc_escape import UNIFORM_VOLUME, Reflection, SDEConfig
from src.potential import (
    PotentialField,
    constant_potential,
    linear_axis_potential,
    tabulated_potential,
    zero_potential,
)

logger = logging.getLogger(__name__)

DEFAULT_CONFIG: Dict[str, Any] = {
    "domain": {"radius": 1.0},
    "potential": {"kind": "zero", "value": 0.0, "beta": 0.0, "axis": [0.0, 0.0, 1.0], "path": None, "tol": None},
    "window": {"center": {"theta": 0.0, "phi": 0.0}, "eps": [0.2, 0.1], "a": [1.0]},
    "mc": {
        "dt": 1e-4,
        "n_paths": 100000,
        "seed": 20240917,
        "start": UNIFORM_VOLUME,
        "max_time": None,
        "reflection": Reflection.NORMAL_PROJECTION.value,
        "levels": 2,
    },
    "kernel": {"direction": "E1", "distances": [0.2, 0.1, 0.05, 0.025], "force": [0.0, 0.0, 0.0]},
    "provider": {"kind": "closed_form_ball", "path": None},
    "outputs": {"directory": "results", "formats": ["csv", "jsonl"]},
}

POTENTIAL_KINDS = ("zero", "constant", "linear_axis", "tabulated")
PROVIDER_KINDS = ("closed_form_ball", "user_supplied")
OUTPUT_FORMATS = ("csv", "jsonl")


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated configuration with every section filled in."""

    raw: Dict[str, Any]
    source: Optional[str] = None

    def section(self, name: str) -> Dict[str, Any]:
        return self.raw[name]

    @property
    def eps_list(self) -> List[float]:
        return [float(e) for e in self.raw["window"]["eps"]]

    @property
    def a_list(self) -> List[float]:
        return [float(a) for a in self.raw["window"]["a"]]


def merge_defaults(raw: Dict[str, Any]) -> Dict[str, Any]:
    """
    Fill missing sections and keys from the defaults.

    Args:
        raw: Parsed JSON document

    Returns:
        New dictionary; unknown top-level sections are kept for validation to report
    """
    merged = deepcopy(DEFAULT_CONFIG)
    for section, values in raw.items():
        if isinstance(values, dict) and isinstance(merged.get(section), dict):
            for key, value in values.items():
                if isinstance(value, dict) and isinstance(merged[section].get(key), dict):
                    merged[section][key].update(value)
                else:
                    merged[section][key] = value
        else:
            merged[section] = values
    return merged


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool) and np.isfinite(value)


def _is_vector(value: Any, n: int = 3) -> bool:
    return isinstance(value, (list, tuple)) and len(value) == n and all(_is_number(v) for v in value)


def validate_config(cfg: Dict[str, Any]) -> Tuple[bool, pd.DataFrame]:
    """
    Validate a merged configuration.

    Args:
        cfg: Configuration with defaults applied

    Returns:
        Tuple of (is_valid, validation_report) with columns check, path, status, message
    """
    checks: List[Dict[str, str]] = []

    def record(check: str, path: str, ok: bool, message: str = "", severity: str = "ERROR") -> None:
        checks.append({
            "check": check,
            "path": path,
            "status": "PASS" if ok else severity,
            "message": "" if ok else message,
        })

    for section in cfg:
        record("Known section", section, section in DEFAULT_CONFIG, f"unknown section '{section}'", "WARNING")

    radius = cfg["domain"].get("radius")
    radius_ok = _is_number(radius) and radius > 0.0
    record("Positive radius", "domain.radius", radius_ok, f"must be a positive number, got {radius!r}")
    radius = float(radius) if radius_ok else 1.0

    pot = cfg["potential"]
    record("Potential kind", "potential.kind", pot.get("kind") in POTENTIAL_KINDS,
           f"must be one of {POTENTIAL_KINDS}, got {pot.get('kind')!r}")
    if pot.get("kind") == "constant":
        record("Potential value", "potential.value", _is_number(pot.get("value")), "must be a finite number")
    if pot.get("kind") == "linear_axis":
        record("Potential beta", "potential.beta", _is_number(pot.get("beta")), "must be a finite number")
        axis_ok = _is_vector(pot.get("axis")) and np.linalg.norm(pot["axis"]) > 0.0
        record("Potential axis", "potential.axis", axis_ok, "must be a non-zero 3-vector")
    if pot.get("kind") == "tabulated":
        path = pot.get("path")
        record("Tabulated potential file", "potential.path", isinstance(path, str) and os.path.isfile(path),
               f"file not found: {path!r}")
    tol = pot.get("tol")
    record("Quadrature tolerance", "potential.tol", tol is None or (_is_number(tol) and 1e-12 <= tol <= 1e-2),
           f"must be null or lie in [1e-12, 1e-2], got {tol!r}")

    window = cfg["window"]
    center = window.get("center", {})
    theta = center.get("theta")
    record("Window polar angle", "window.center.theta", _is_number(theta) and 0.0 <= theta <= np.pi,
           f"must lie in [0, pi], got {theta!r}")
    record("Window azimuth", "window.center.phi", _is_number(center.get("phi")), "must be a finite number")

    eps = window.get("eps")
    if not isinstance(eps, list) or len(eps) == 0:
        record("Window sizes", "window.eps", False, "must be a non-empty list")
    else:
        chart_bound = 0.25 * np.pi * radius
        for i, e in enumerate(eps):
            ok = _is_number(e) and 0.0 < e < chart_bound
            record("Window size", f"window.eps[{i}]", ok, f"must lie in (0, {chart_bound:.4g}), got {e!r}")
        numeric = [e for e in eps if _is_number(e)]
        descending = all(x > y for x, y in zip(numeric, numeric[1:]))
        record("Window sizes descending", "window.eps", descending, "must be strictly descending")

    aspects = window.get("a")
    if not isinstance(aspects, list) or len(aspects) == 0:
        record("Window aspects", "window.a", False, "must be a non-empty list")
    else:
        for i, a in enumerate(aspects):
            record("Window aspect", f"window.a[{i}]", _is_number(a) and MIN_ASPECT <= a <= 1.0,
                   f"must lie in [{MIN_ASPECT:g}, 1], got {a!r}")

    mc = cfg["mc"]
    record("Time step", "mc.dt", _is_number(mc.get("dt")) and mc["dt"] > 0.0, f"must be positive, got {mc.get('dt')!r}")
    n_paths = mc.get("n_paths")
    record("Path count", "mc.n_paths", isinstance(n_paths, int) and not isinstance(n_paths, bool) and n_paths >= 1,
           f"must be an integer >= 1, got {n_paths!r}")
    seed = mc.get("seed")
    record("Seed", "mc.seed", isinstance(seed, int) and not isinstance(seed, bool) and 0 <= seed < 2 ** 64,
           f"must be an unsigned 64-bit integer, got {seed!r}")
    start = mc.get("start")
    start_ok = start == UNIFORM_VOLUME or (_is_vector(start) and np.linalg.norm(start) <= radius)
    record("Start", "mc.start", start_ok, f"must be '{UNIFORM_VOLUME}' or a point in the ball, got {start!r}")
    max_time = mc.get("max_time")
    record("Time budget", "mc.max_time", max_time is None or (_is_number(max_time) and max_time > 0.0),
           f"must be null or positive, got {max_time!r}")
    record("Reflection", "mc.reflection", mc.get("reflection") in [r.value for r in Reflection],
           f"must be one of {[r.value for r in Reflection]}, got {mc.get('reflection')!r}")
    levels = mc.get("levels")
    record("Refinement levels", "mc.levels", isinstance(levels, int) and not isinstance(levels, bool) and levels >= 1,
           f"must be an integer >= 1, got {levels!r}")

    kernel = cfg["kernel"]
    direction = kernel.get("direction")
    record("Kernel direction", "kernel.direction",
           direction in ("E1", "E2") or (_is_vector(direction, 2) and np.hypot(*direction) > 0.0),
           f"must be 'E1', 'E2' or a non-zero 2-vector, got {direction!r}")
    distances = kernel.get("distances")
    if not isinstance(distances, list) or len(distances) == 0:
        record("Kernel distances", "kernel.distances", False, "must be a non-empty list")
    else:
        for i, d in enumerate(distances):
            record("Kernel distance", f"kernel.distances[{i}]", _is_number(d) and 0.0 < d < np.pi * radius,
                   f"must lie in (0, pi*R), got {d!r}")
    record("Kernel force", "kernel.force", _is_vector(kernel.get("force")), "must be a 3-vector")

    provider = cfg["provider"]
    record("Provider kind", "provider.kind", provider.get("kind") in PROVIDER_KINDS,
           f"must be one of {PROVIDER_KINDS}, got {provider.get('kind')!r}")
    if provider.get("kind") == "user_supplied":
        path = provider.get("path")
        record("Provider file", "provider.path", isinstance(path, str) and os.path.isfile(path),
               f"file not found: {path!r}")

    formats = cfg["outputs"].get("formats")
    record("Output formats", "outputs.formats",
           isinstance(formats, list) and all(f in OUTPUT_FORMATS for f in formats),
           f"must be a list drawn from {OUTPUT_FORMATS}, got {formats!r}")
    record("Output directory", "outputs.directory", isinstance(cfg["outputs"].get("directory"), str),
           "must be a path string")

    report = pd.DataFrame(checks, columns=["check", "path", "status", "message"])
    is_valid = all(check["status"] in ["PASS", "WARNING"] for check in checks)
    return is_valid, report


def load_config(source: Union[str, Dict[str, Any], None] = None) -> ExperimentConfig:
    """
    Read, merge and validate an experiment configuration.

    Args:
        source: Path to a JSON file, an already parsed dictionary, or None for defaults

    Returns:
        ExperimentConfig

    Raises:
        ConfigError: naming the first failing field, with the full report attached
    """
    path = None
    if source is None:
        raw: Dict[str, Any] = {}
    elif isinstance(source, dict):
        raw = source
    else:
        path = source
        with open(source, "r", encoding="utf-8") as handle:
            try:
                raw = json.load(handle)
            except json.JSONDecodeError as exc:
                raise ConfigError("<document>", f"invalid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("<document>", "top level must be an object")
    merged = merge_defaults(raw)
    is_valid, report = validate_config(merged)
    for _, row in report[report["status"] == "WARNING"].iterrows():
        logger.warning(f"Config {row['path']}: {row['message']}")
    if not is_valid:
        first = report[report["status"] == "ERROR"].iloc[0]
        raise ConfigError(first["path"], first["message"], report=report)
    logger.info(f"Configuration loaded from {path or 'defaults'}")
    return ExperimentConfig(raw=merged, source=path)


def load_tabulated_potential(file_path: str) -> PotentialField:
    """
    Read a tabulated potential.

    Layout: `nx ny nz`, then `xmin xmax ymin ymax zmin zmax`, then nx·ny·nz
    values with x slowest and z fastest; `#` starts a comment.

    Args:
        file_path: Path to the text file

    Returns:
        Trilinear PotentialField on the uniform grid
    """
    tokens: List[str] = []
    with open(file_path, "r", encoding="utf-8") as handle:
        for line in handle:
            tokens.extend(line.split("#", 1)[0].split())
    if len(tokens) < 9:
        raise InvalidArgumentError(f"{file_path}: header needs 9 numbers, found {len(tokens)}")
    shape = tuple(int(t) for t in tokens[:3])
    if min(shape) < 2:
        raise InvalidArgumentError(f"{file_path}: every grid dimension must be at least 2, got {shape}")
    box = [float(t) for t in tokens[3:9]]
    values = np.array([float(t) for t in tokens[9:]])
    if values.size != int(np.prod(shape)):
        raise InvalidArgumentError(f"{file_path}: expected {int(np.prod(shape))} values, found {values.size}")
    axes = tuple(np.linspace(box[2 * k], box[2 * k + 1], shape[k]) for k in range(3))
    logger.info(f"Tabulated potential {shape} loaded from {file_path}")
    return tabulated_potential(axes, values.reshape(shape))


def load_provider_file(file_path: str, radius: float = 1.0) -> UserSupplied:
    """
    Read a user-supplied Green provider.

    Records, one per line: `R x y z v`, `G x1 y1 z1 x2 y2 z2 v`, `SG x y z v`,
    `ISG v`, `IG x y z v`. Blank lines and `#` comments are ignored.
    """
    arity = {"R": 4, "G": 7, "SG": 4, "ISG": 1, "IG": 4}
    tables: Dict[str, List[Tuple[np.ndarray, float]]] = {key: [] for key in arity}
    script_integral = None
    with open(file_path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            fields = line.split("#", 1)[0].split()
            if not fields:
                continue
            tag, numbers = fields[0], fields[1:]
            if tag not in arity or len(numbers) != arity[tag]:
                raise InvalidArgumentError(f"{file_path}:{lineno}: malformed record '{line.strip()}'")
            values = [float(v) for v in numbers]
            if tag == "ISG":
                script_integral = values[0]
            else:
                tables[tag].append((np.array(values[:-1]), values[-1]))
    provider = UserSupplied(
        radius=radius,
        regular=tables["R"],
        green=tables["G"],
        script=tables["SG"],
        script_integral=script_integral,
        green_integrals=tables["IG"],
    )
    logger.info(f"Provider records from {file_path}: {provider.summary()}")
    return provider


def build_domain(config: ExperimentConfig) -> DomainModel:
    return unit_ball(float(config.section("domain")["radius"]))


def build_potential(config: ExperimentConfig) -> PotentialField:
    pot = config.section("potential")
    kind = pot["kind"]
    if kind == "zero":
        phi = zero_potential()
    elif kind == "constant":
        phi = constant_potential(pot["value"])
    elif kind == "linear_axis":
        phi = linear_axis_potential(pot["beta"], pot["axis"])
    else:
        phi = load_tabulated_potential(pot["path"])
    if pot.get("tol") is not None:
        phi = replace(phi, quadrature_tol=float(pot["tol"]))
    return phi


def build_window(config: ExperimentConfig, domain: DomainModel, eps: float, a: float) -> WindowSpec:
    center = config.section("window")["center"]
    return make_window(domain, spherical_point(domain, center["theta"], center["phi"]), eps, a)


def build_provider(config: ExperimentConfig, domain: DomainModel) -> GreenProvider:
    provider = config.section("provider")
    if provider["kind"] == "user_supplied":
        return load_provider_file(provider["path"], domain.radius)
    return ClosedFormBallNoDrift(domain)


def build_sde_config(config: ExperimentConfig, seed: Optional[int] = None) -> SDEConfig:
    mc = config.section("mc")
    start = mc["start"] if mc["start"] == UNIFORM_VOLUME else tuple(float(v) for v in mc["start"])
    return SDEConfig(
        dt=float(mc["dt"]),
        n_paths=int(mc["n_paths"]),
        seed=int(mc["seed"] if seed is None else seed),
        start=start,
        max_time=mc["max_time"],
        reflection=Reflection(mc["reflection"]),
    )


if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO)
    is_valid, validation_report = validate_config(merge_defaults({}))
    print(f"Default configuration: {'PASS' if is_valid else 'FAIL'}")
    print(validation_report)
