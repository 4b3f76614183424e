import logging
import os
import time
from dataclasses import replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.asymptotics import averaged_sojourn, build_sojourn_field, leading_term, sojourn_field
from src.data_loader import (
    ExperimentConfig,
    build_domain,
    build_potential,
    build_provider,
    build_sde_config,
    build_window,
)
from src.disk_operators import check_RF_vanishing, elliptic_Ka, integral_Ianiso, integral_Ilog
from src.errors import DomainError, NarrowEscapeError, QuadratureFailure
from src.geometry import FullyAbsorbingBoundary, boundary_frame, spherical_point
from src.green_kernel import ClosedFormBallNoDrift, SignConvention, ball_green, kernel_singular
from src.mc_escape import UNIFORM_VOLUME, dt_refinement, escape_record, estimate_mean_escape
from src.potential import zero_potential
from src.utils import save_table

logger = logging.getLogger(__name__)

CONSTANT_COLUMNS = ["eps", "a", "leading", "log_term", "constant_term", "total", "reason"]
OPERATOR_COLUMNS = ["a", "K_a", "I_log", "I_aniso", "RF_residual", "reason"]
COMPARE_COLUMNS = [
    "eps", "a", "asymptotic_avg", "asymptotic_point", "asymptotic_leading", "mc_mean", "mc_stderr",
    "rel_diff", "z_score", "n_absorbed", "n_censored", "flagged", "reason",
]
RF_FORCE = (0.3, -0.7)


def _guarded_leading(domain, phi, window) -> Tuple[float, str]:
    try:
        return leading_term(domain, phi, window), ""
    except NarrowEscapeError as exc:
        logger.warning(f"Leading term eps={window.eps}, a={window.a}: {exc}")
        return np.nan, str(exc)


def constants_table(
    config: ExperimentConfig,
    sign_convention: SignConvention = SignConvention.PLUS,
    order_doubled: bool = False,
    workers: int = 1,
) -> pd.DataFrame:
    """
    Escape-time constants for every (eps, a) pair of the configuration.

    Args:
        config: Validated experiment configuration
        sign_convention: Sign of ∂_νφ in the log coefficient
        order_doubled: Recheck the disk double integrals at doubled order
        workers: Threads for the disk quadrature

    Returns:
        DataFrame with one row per pair; rows the provider cannot serve carry NA and a reason
    """
    domain = build_domain(config)
    phi = build_potential(config)
    provider = build_provider(config, domain)
    rows = []
    for a in config.a_list:
        for eps in config.eps_list:
            window = build_window(config, domain, eps, a)
            row = {"eps": eps, "a": a, "reason": ""}
            try:
                field = build_sojourn_field(
                    domain, phi, window, provider, sign_convention, verify=order_doubled, workers=workers
                )
                row.update(field.base_expansion.as_row())
            except NarrowEscapeError as exc:
                logger.warning(f"Constants row eps={eps}, a={a}: {exc}")
                leading, reason = _guarded_leading(domain, phi, window)
                row.update({"leading": leading, "log_term": np.nan, "constant_term": np.nan, "total": np.nan,
                            "reason": "; ".join(dict.fromkeys(filter(None, [str(exc), reason])))})
            rows.append(row)
    return pd.DataFrame(rows, columns=CONSTANT_COLUMNS)


def operators_table(
    a_values: Sequence[float],
    order_doubled: bool = False,
    workers: int = 1,
    force: Tuple[float, float] = RF_FORCE,
) -> pd.DataFrame:
    """K_a, both disk double integrals and the R_F residual per aspect ratio."""
    rows = []
    for a in a_values:
        row = {"a": a, "reason": ""}
        row["K_a"] = elliptic_Ka(a).Ka
        for column, integral in (("I_log", integral_Ilog), ("I_aniso", integral_Ianiso)):
            try:
                row[column] = integral(a, verify=order_doubled, workers=workers)
            except QuadratureFailure as exc:
                logger.warning(f"Operators row a={a}: {exc}")
                row[column] = exc.partial_estimate
                row["reason"] = "; ".join(filter(None, [row["reason"], str(exc)]))
        row["RF_residual"] = check_RF_vanishing(a, *force, workers=workers)
        rows.append(row)
    return pd.DataFrame(rows, columns=OPERATOR_COLUMNS)


def _mc_estimate(domain, phi, window, sde, levels: int, workers: int, progress: bool):
    started = time.perf_counter()
    if levels >= 2:
        estimate, _ = dt_refinement(domain, phi, window, sde, levels, workers, progress)
    else:
        estimate = estimate_mean_escape(domain, phi, window, sde, workers, progress)
    return estimate, time.perf_counter() - started


def compare_table(
    config: ExperimentConfig,
    sign_convention: SignConvention = SignConvention.PLUS,
    seed: Optional[int] = None,
    workers: int = 1,
    progress: bool = False,
) -> Tuple[pd.DataFrame, List[Dict]]:
    """
    Asymptotic sojourn time against the Monte Carlo mean.

    A uniform start is compared with the averaged sojourn time, a point start
    with the sojourn field at that point (NA with a reason near the window).

    Returns:
        (comparison table, JSON-lines records); wall times only go to the records
    """
    domain = build_domain(config)
    phi = build_potential(config)
    provider = build_provider(config, domain)
    sde = build_sde_config(config, seed)
    levels = int(config.section("mc")["levels"])
    point_start = not isinstance(sde.start, str)
    rows, records = [], []
    for a in config.a_list:
        for eps in config.eps_list:
            window = build_window(config, domain, eps, a)
            leading, reason = _guarded_leading(domain, phi, window)
            row = {"eps": eps, "a": a, "reason": reason, "asymptotic_leading": leading}
            try:
                field = build_sojourn_field(domain, phi, window, provider, sign_convention)
                row["asymptotic_avg"] = averaged_sojourn(field)
            except NarrowEscapeError as exc:
                logger.warning(f"Asymptotic average eps={eps}, a={a}: {exc}")
                field = None
                row["asymptotic_avg"] = np.nan
                row["reason"] = "; ".join(filter(None, [row["reason"], str(exc)]))
            row["asymptotic_point"] = np.nan
            if point_start and field is not None:
                try:
                    row["asymptotic_point"] = sojourn_field(field, np.asarray(sde.start, dtype=float))
                except NarrowEscapeError as exc:
                    logger.warning(f"Sojourn field at start eps={eps}, a={a}: {exc}")
                    row["reason"] = "; ".join(filter(None, [row["reason"], str(exc)]))
            try:
                estimate, wall = _mc_estimate(domain, phi, window, sde, levels, workers, progress)
            except NarrowEscapeError as exc:
                logger.warning(f"Monte Carlo eps={eps}, a={a}: {exc}")
                row["reason"] = "; ".join(filter(None, [row["reason"], str(exc)]))
                rows.append(row)
                continue
            row.update({
                "mc_mean": estimate.mean,
                "mc_stderr": estimate.stderr,
                "n_absorbed": estimate.n_absorbed,
                "n_censored": estimate.n_censored,
                "flagged": estimate.flagged,
            })
            if estimate.flagged:
                row["reason"] = "; ".join(filter(None, [row["reason"], estimate.flag_reason]))
            reference = row["asymptotic_point"] if point_start else row["asymptotic_avg"]
            row["rel_diff"] = (estimate.mean - reference) / reference if np.isfinite(reference) else np.nan
            row["z_score"] = (estimate.mean - reference) / estimate.stderr if np.isfinite(reference) else np.nan
            rows.append(row)
            records.append(escape_record(estimate, sde, wall, label=f"compare eps={eps} a={a}"))
    return pd.DataFrame(rows, columns=COMPARE_COLUMNS), records


def _kernel_direction(config: ExperimentConfig, frame) -> np.ndarray:
    direction = config.section("kernel")["direction"]
    if direction == "E1":
        return frame.E1
    if direction == "E2":
        return frame.E2
    t1, t2 = direction
    v = t1 * frame.E1 + t2 * frame.E2
    return v / np.linalg.norm(v)


def kernel_table(config: ExperimentConfig, sign_convention: SignConvention = SignConvention.PLUS) -> pd.DataFrame:
    """
    Singular kernel terms along a boundary geodesic from the window centre.

    Each distance is sampled on both sides of x*, so odd terms show up as sign
    flips. For the closed-form ball provider with zero force, the boundary
    Green function and the remainder G_∂M − total_singular are added.
    """
    domain = build_domain(config)
    kernel = config.section("kernel")
    center_angles = config.section("window")["center"]
    center = spherical_point(domain, center_angles["theta"], center_angles["phi"])
    frame = boundary_frame(domain, center)
    tangent = _kernel_direction(config, frame)
    force = np.asarray(kernel["force"], dtype=float)
    with_green = isinstance(build_provider(config, domain), ClosedFormBallNoDrift) and not np.any(force)
    rows = []
    for d in kernel["distances"]:
        for side in (1.0, -1.0):
            row = {"distance": side * d}
            try:
                y = domain.exp_map(frame.point, side * d * tangent)
                terms = kernel_singular(frame.point, y, frame, force, sign_convention, domain)
                row.update({
                    "d_g": float(domain.chord_distance(frame.point, y)),
                    "d_h": float(domain.geodesic_distance(frame.point, y)),
                    "coulomb": terms.coulomb,
                    "log_term": terms.log_term,
                    "ii_difference": terms.ii_difference,
                    "drift_directional": terms.drift_directional,
                    "total_singular": terms.total_singular,
                    "reason": "",
                })
                if with_green:
                    green = float(ball_green(domain, frame.point, y))
                    row.update({"green_boundary": green, "remainder": green - terms.total_singular})
            except (DomainError, NarrowEscapeError) as exc:
                row["reason"] = str(exc)
            rows.append(row)
    columns = ["distance", "d_g", "d_h", "coulomb", "log_term", "ii_difference", "drift_directional", "total_singular"]
    if with_green:
        columns += ["green_boundary", "remainder"]
    return pd.DataFrame(rows, columns=columns + ["reason"])


def calibration_table(
    config: ExperimentConfig,
    seed: Optional[int] = None,
    workers: int = 1,
    progress: bool = False,
) -> Tuple[pd.DataFrame, List[Dict]]:
    """
    Fully absorbing sphere with φ = 0: exact means R²/6 from the centre and
    R²/15 from a uniform start.
    """
    domain = build_domain(config)
    sde = build_sde_config(config, seed)
    levels = int(config.section("mc")["levels"])
    sphere = FullyAbsorbingBoundary(domain)
    cases = [("center", (0.0, 0.0, 0.0), domain.radius ** 2 / 6.0), ("uniform_volume", UNIFORM_VOLUME, domain.radius ** 2 / 15.0)]
    rows, records = [], []
    for name, start, exact in cases:
        run_cfg = replace(sde, start=start, max_time=None)
        if levels < 2:
            single, wall = _mc_estimate(domain, zero_potential(), sphere, run_cfg, 1, workers, progress)
            rows.append(_calibration_row(name, f"{run_cfg.dt:g}", exact, single))
            records.append(escape_record(single, run_cfg, wall, label=f"calibrate {name}"))
            continue
        started = time.perf_counter()
        refined, runs = dt_refinement(domain, zero_potential(), sphere, run_cfg, levels, workers, progress)
        wall = time.perf_counter() - started
        # the coarsest refinement level is the single-dt run
        rows.append(_calibration_row(name, f"{run_cfg.dt:g}", exact, runs[0]))
        rows.append(_calibration_row(name, "extrapolated", exact, refined))
        records.append(escape_record(runs[0], run_cfg, None, label=f"calibrate {name}"))
        records.append(escape_record(refined, run_cfg, wall, label=f"calibrate {name} extrapolated"))
    return pd.DataFrame(rows), records


def _calibration_row(start: str, dt_label: str, exact: float, estimate) -> Dict:
    return {
        "start": start,
        "dt": dt_label,
        "exact": exact,
        "mc_mean": estimate.mean,
        "mc_stderr": estimate.stderr,
        "z_score": (estimate.mean - exact) / estimate.stderr,
        "n_absorbed": estimate.n_absorbed,
        "n_censored": estimate.n_censored,
        "flagged": estimate.flagged,
    }


def save_tables(tables: Dict[str, pd.DataFrame], output_dir: str) -> List[str]:
    """
    Save all result tables to CSV files.

    Args:
        tables: Dictionary of result DataFrames keyed by file stem
        output_dir: Directory to save files

    Returns:
        Paths written, in key order
    """
    os.makedirs(output_dir, exist_ok=True)
    return [save_table(df, os.path.join(output_dir, f"{name}.csv")) for name, df in tables.items()]
