"""
Monte Carlo escape times for dX = F dt + √2 dW in the ball.

The boundary reflects except on the absorbing window. Paths run in fixed
blocks of 1024, each with its own Philox stream keyed by (seed, block index),
so estimates do not depend on how blocks are scheduled over threads.
"""

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from enum import Enum
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from tqdm import tqdm

from src.errors import InvalidArgumentError, NoAbsorptionError, StepTooLargeError
from src.extrapolation import sqrt_dt_extrapolation
from src.geometry import DomainModel, FullyAbsorbingBoundary, WindowSpec
from src.potential import PotentialField, weighted_volume

logger = logging.getLogger(__name__)

BLOCK_SIZE = 1024
BUDGET_FACTOR = 100.0
CENSOR_FLAG_FRACTION = 1e-3
ESCAPE_FACTOR = 3.0

Window = Union[WindowSpec, FullyAbsorbingBoundary]


class Reflection(str, Enum):
    NORMAL_PROJECTION = "normal_projection"
    SPECULAR = "specular"


UNIFORM_VOLUME = "uniform_volume"


@dataclass(frozen=True)
class SDEConfig:
    """
    Simulation settings.

    `start` is either "uniform_volume" or a 3-vector; `max_time` None means
    100 times the analytic time scale of the window.
    """

    dt: float
    n_paths: int
    seed: int = 0
    start: Union[str, Tuple[float, float, float]] = UNIFORM_VOLUME
    max_time: Optional[float] = None
    reflection: Reflection = Reflection.NORMAL_PROJECTION

    def __post_init__(self):
        if not (np.isfinite(self.dt) and self.dt > 0.0):
            raise InvalidArgumentError(f"dt must be positive, got {self.dt}")
        if int(self.n_paths) < 1:
            raise InvalidArgumentError(f"n_paths must be at least 1, got {self.n_paths}")
        if not (0 <= int(self.seed) < 2 ** 64):
            raise InvalidArgumentError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if isinstance(self.start, str) and self.start != UNIFORM_VOLUME:
            raise InvalidArgumentError(f"Unknown start '{self.start}'")
        if self.max_time is not None and self.max_time <= 0.0:
            raise InvalidArgumentError(f"max_time must be positive, got {self.max_time}")


@dataclass(frozen=True)
class EscapeEstimate:
    mean: float
    stderr: float
    n_absorbed: int
    n_censored: int
    dt: float
    seed: int
    flagged: bool = False
    flag_reason: str = ""
    max_radius: float = 0.0

    @property
    def n_paths(self) -> int:
        return self.n_absorbed + self.n_censored


@dataclass
class _BlockResult:
    times: np.ndarray
    n_censored: int
    max_radius: float


def step(x: np.ndarray, phi: PotentialField, dt: float, noise: np.ndarray) -> np.ndarray:
    """Euler-Maruyama step x + F(x)dt + √(2dt)·noise, before boundary handling."""
    x = np.asarray(x, dtype=float)
    return x + phi.gradient(x) * dt + np.sqrt(2.0 * dt) * np.asarray(noise, dtype=float)


def _fold(x: np.ndarray, radius: float) -> np.ndarray:
    r = np.linalg.norm(x, axis=-1, keepdims=True)
    target = np.clip(2.0 * radius - r, 0.0, radius)
    scale = np.where(r > radius, target / np.where(r > 0.0, r, 1.0), 1.0)
    return x * scale


def boundary_crossing(x_old: np.ndarray, x_new: np.ndarray, radius: float) -> np.ndarray:
    """First point where the segment x_old → x_new meets the sphere (x_old inside)."""
    d = x_new - x_old
    a = np.sum(d * d, axis=-1)
    b = np.sum(x_old * d, axis=-1)
    c = np.sum(x_old * x_old, axis=-1) - radius ** 2
    with np.errstate(invalid="ignore", divide="ignore"):
        s = (-b + np.sqrt(np.maximum(b * b - a * c, 0.0))) / np.where(a > 0.0, a, 1.0)
    s = np.clip(s, 0.0, 1.0)
    point = x_old + s[..., None] * d
    return radius * point / np.linalg.norm(point, axis=-1, keepdims=True)


def reflect(
    x_new: np.ndarray,
    x_old: np.ndarray,
    domain: DomainModel,
    mode: Reflection = Reflection.NORMAL_PROJECTION,
) -> np.ndarray:
    """
    Return a step that left the ball to the closed ball.

    NORMAL_PROJECTION folds the radius to 2R − |x|; SPECULAR mirrors across the
    tangent plane at the exit point and folds whatever is still outside.

    Raises:
        StepTooLargeError: if |x_new| > 3R.
    """
    x_new = np.asarray(x_new, dtype=float)
    x_old = np.asarray(x_old, dtype=float)
    radius = domain.radius
    r = np.linalg.norm(x_new, axis=-1)
    if np.any(r > ESCAPE_FACTOR * radius):
        raise StepTooLargeError(f"Step reached |x| = {float(np.max(r)):.4g} > {ESCAPE_FACTOR:g}R; reduce dt")
    outside = r > radius
    if not np.any(outside):
        return x_new.copy()
    if mode == Reflection.SPECULAR:
        crossing = boundary_crossing(x_old, x_new, radius)
        nu = crossing / radius
        depth = np.sum((x_new - crossing) * nu, axis=-1, keepdims=True)
        mirrored = x_new - 2.0 * np.maximum(depth, 0.0) * nu
        return np.where(outside[..., None], _fold(mirrored, radius), x_new)
    return _fold(x_new, radius)


def sample_uniform_ball(domain: DomainModel, n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform points in the ball: radius R·U^{1/3}, Gaussian-normalized direction."""
    g = rng.standard_normal((n, 3))
    directions = g / np.linalg.norm(g, axis=1, keepdims=True)
    return domain.radius * np.cbrt(rng.random(n))[:, None] * directions


def block_generator(seed: int, block_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((int(seed), int(block_index)))))


def _simulate_block(
    block_index: int,
    n: int,
    domain: DomainModel,
    phi: PotentialField,
    window: Window,
    cfg: SDEConfig,
    max_time: float,
) -> _BlockResult:
    rng = block_generator(cfg.seed, block_index)
    if isinstance(cfg.start, str):
        x = sample_uniform_ball(domain, n, rng)
    else:
        x = np.tile(np.asarray(cfg.start, dtype=float), (n, 1))
    t = np.zeros(n)
    times: List[np.ndarray] = []
    alive = np.arange(n)
    n_censored = 0
    max_radius = float(np.max(np.linalg.norm(x, axis=1)))
    radius = domain.radius
    while alive.size:
        x_old = x[alive]
        x_new = step(x_old, phi, cfg.dt, rng.standard_normal((alive.size, 3)))
        t_new = t[alive] + cfg.dt
        r_new = np.linalg.norm(x_new, axis=1)
        absorbed = np.zeros(alive.size, dtype=bool)
        out = r_new > radius
        if np.any(out):
            crossing = boundary_crossing(x_old[out], x_new[out], radius)
            absorbed[out] = window.contains(crossing)
            x_new = reflect(x_new, x_old, domain, cfg.reflection)
        times.append(t_new[absorbed])
        censored = ~absorbed & (t_new >= max_time)
        n_censored += int(np.count_nonzero(censored))
        keep = ~(absorbed | censored)
        x[alive] = x_new
        t[alive] = t_new
        if keep.any():
            max_radius = max(max_radius, float(np.max(np.linalg.norm(x_new[keep], axis=1))))
        alive = alive[keep]
    return _BlockResult(times=np.concatenate(times) if times else np.empty(0), n_censored=n_censored, max_radius=max_radius)


def resolve_max_time(domain: DomainModel, phi: PotentialField, window: Window, cfg: SDEConfig) -> float:
    """Per-path budget; warns when a configured budget is below 100× the time scale."""
    if isinstance(window, FullyAbsorbingBoundary):
        scale = window.time_scale()
    else:
        scale = window.time_scale(weighted_volume(domain, phi, window.center).value)
    if cfg.max_time is None:
        return BUDGET_FACTOR * scale
    if cfg.max_time < BUDGET_FACTOR * scale:
        logger.warning(
            f"max_time {cfg.max_time:.4g} is below {BUDGET_FACTOR:g}x the time scale {scale:.4g}; expect censoring"
        )
    return cfg.max_time


def estimate_mean_escape(
    domain: DomainModel,
    phi: PotentialField,
    window: Window,
    cfg: SDEConfig,
    workers: int = 1,
    progress: bool = False,
) -> EscapeEstimate:
    """
    Mean first time the path hits the window.

    Args:
        domain: Ball domain
        phi: Potential; the drift is ∇φ
        window: Absorbing window, or FullyAbsorbingBoundary for calibration
        cfg: Simulation settings
        workers: Threads over path blocks; the result does not depend on it
        progress: Show a tqdm bar over blocks

    Returns:
        EscapeEstimate over absorbed paths, flagged when 0.1% or more are censored
    """
    max_time = resolve_max_time(domain, phi, window, cfg)
    sizes = [min(BLOCK_SIZE, cfg.n_paths - k) for k in range(0, cfg.n_paths, BLOCK_SIZE)]

    def run(block_index: int) -> _BlockResult:
        return _simulate_block(block_index, sizes[block_index], domain, phi, window, cfg, max_time)

    with ThreadPoolExecutor(max_workers=max(1, int(workers))) as pool:
        results = list(
            tqdm(pool.map(run, range(len(sizes))), total=len(sizes), disable=not progress, desc=f"MC dt={cfg.dt:g}")
        )
    times = np.concatenate([r.times for r in results])
    n_censored = sum(r.n_censored for r in results)
    max_radius = max(r.max_radius for r in results)
    if times.size == 0:
        raise NoAbsorptionError(f"All {cfg.n_paths} paths exhausted max_time={max_time:.4g} without absorption")
    mean = math.fsum(times) / times.size
    stderr = float(np.std(times, ddof=1) / np.sqrt(times.size)) if times.size > 1 else float("inf")
    flagged = n_censored / cfg.n_paths >= CENSOR_FLAG_FRACTION
    reason = f"censored {n_censored}/{cfg.n_paths}" if flagged else ""
    if flagged:
        logger.warning(f"MC dt={cfg.dt:g}: {reason} paths at max_time={max_time:.4g}")
    logger.info(f"MC dt={cfg.dt:g}, n={cfg.n_paths}: mean {mean:.6g} +- {stderr:.2g}")
    return EscapeEstimate(
        mean=mean,
        stderr=stderr,
        n_absorbed=int(times.size),
        n_censored=n_censored,
        dt=cfg.dt,
        seed=cfg.seed,
        flagged=flagged,
        flag_reason=reason,
        max_radius=max_radius,
    )


def _non_monotone(levels: List[EscapeEstimate]) -> bool:
    """True when two significant consecutive changes have opposite signs."""
    signs = []
    for coarse, fine in zip(levels, levels[1:]):
        diff = fine.mean - coarse.mean
        if abs(diff) > 2.0 * math.hypot(coarse.stderr, fine.stderr):
            signs.append(np.sign(diff))
    return len(set(signs)) > 1


def dt_refinement(
    domain: DomainModel,
    phi: PotentialField,
    window: Window,
    cfg: SDEConfig,
    levels: int,
    workers: int = 1,
    progress: bool = False,
) -> Tuple[EscapeEstimate, List[EscapeEstimate]]:
    """
    Run at dt, dt/2, ..., dt/2^(levels−1) and extrapolate linearly in √dt.

    Returns:
        (extrapolated estimate with dt = 0, per-level estimates). A sequence
        that is non-monotone beyond noise returns the finest level, flagged.
    """
    if levels < 2:
        raise InvalidArgumentError(f"dt_refinement needs at least 2 levels, got {levels}")
    runs = [
        estimate_mean_escape(domain, phi, window, replace(cfg, dt=cfg.dt / 2 ** k), workers, progress)
        for k in range(levels)
    ]
    total_absorbed = sum(r.n_absorbed for r in runs)
    total_censored = sum(r.n_censored for r in runs)
    level_flags = [r.flag_reason for r in runs if r.flagged]
    if _non_monotone(runs):
        finest = runs[-1]
        logger.warning(f"Non-monotone dt sequence {[round(r.mean, 6) for r in runs]}; reporting finest level")
        return replace(finest, flagged=True, flag_reason="non-monotone dt sequence"), runs
    intercept, intercept_se = sqrt_dt_extrapolation(
        [r.dt for r in runs], [r.mean for r in runs], [r.stderr for r in runs]
    )
    stderr = max(intercept_se, runs[-1].stderr)
    estimate = EscapeEstimate(
        mean=intercept,
        stderr=stderr,
        n_absorbed=total_absorbed,
        n_censored=total_censored,
        dt=0.0,
        seed=cfg.seed,
        flagged=bool(level_flags),
        flag_reason="; ".join(level_flags),
        max_radius=max(r.max_radius for r in runs),
    )
    logger.info(f"dt -> 0 extrapolation over {levels} levels: {intercept:.6g} +- {stderr:.2g}")
    return estimate, runs


def escape_record(estimate: EscapeEstimate, cfg: SDEConfig, wall_time: Optional[float], label: str = "") -> Dict:
    """One JSON-lines record: config echo, estimate, censor count and wall time (null when not timed alone)."""
    config = asdict(cfg)
    config["reflection"] = cfg.reflection.value
    config["start"] = cfg.start if isinstance(cfg.start, str) else list(cfg.start)
    return {
        "label": label,
        "config": config,
        "estimate": {k: v for k, v in asdict(estimate).items()},
        "n_censored": estimate.n_censored,
        "wall_time_s": wall_time,
        "finished_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
