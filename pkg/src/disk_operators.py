"""
Integral operators on the unit disk 𝔻 and the constants they produce.

Conventions, with Δ = t' − s' and |Δ|_a² = Δ₁² + a²Δ₂²:

    L_a f(t')      = a ∫ f(s') / |Δ|_a ds'
    R_log,a f(t')  = a ∫ log|Δ|_a f(s') ds'
    R_∞,a f(t')    = a ∫ (Δ₁² − a²Δ₂²) / |Δ|_a² f(s') ds'
    R_F,a f(t')    = a ∫ (F₁Δ₁ + aF₂Δ₂) / |Δ|_a f(s') ds'

Every density the escape-time constants need carries the edge weight
(1 − |s'|²)^{-1/2}; the quadrature rules below absorb it exactly.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy.special import ellipk

from src.errors import DomainError, InvalidArgumentError, QuadratureFailure

logger = logging.getLogger(__name__)

MIN_ASPECT = 1e-6
KA_TOL = 1e-13
KA_MAX_NODES = 2 ** 22

OUTER_RADIAL = 16
OUTER_ANGULAR = 32
INNER_RADIAL = 24
PANEL_NODES = 16

SmoothFactor = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class EllipticConstant:
    a: float
    Ka: float


@dataclass(frozen=True)
class DiskDensity:
    """
    A density on 𝔻 tabulated on a polar quadrature rule.

    When `carries_edge_singularity` is set, the density is
    smooth(s')·(1 − |s'|²)^{-1/2}; `values` hold the smooth factor only and
    the edge weight is folded into `node_weights`.
    """

    nodes: np.ndarray
    node_weights: np.ndarray
    values: np.ndarray
    carries_edge_singularity: bool
    smooth: SmoothFactor

    def integral(self) -> float:
        return math.fsum(self.values * self.node_weights)

    def moment(self, k: int) -> float:
        """∫ t_k · density for k in {0, 1}."""
        return math.fsum(self.nodes[:, k] * self.values * self.node_weights)


def _check_aspect(a: float) -> None:
    if not (MIN_ASPECT <= a <= 1.0):
        raise InvalidArgumentError(f"Aspect a must lie in [{MIN_ASPECT}, 1], got {a}")


@lru_cache(maxsize=None)
def _gauss_legendre_unit(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on (0, 1)."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def disk_rule(n_radial: int, n_angular: int, edge_weighted: bool = True) -> Tuple[np.ndarray, np.ndarray]:
    """
    Polar tensor rule on the open unit disk.

    With `edge_weighted`, ∫ g(s)(1 − |s|²)^{-1/2} ds is approximated: the radial
    variable q = sqrt(1 − r²) turns r dr / sqrt(1 − r²) into dq, integrated by
    Gauss-Legendre. Otherwise the plain measure r dr dθ is used. Azimuthal
    nodes are π/4 + 2πk/N, so the node set is invariant under t₁ ↔ t₂ and
    t → −t when N is a multiple of 4.

    Returns:
        (nodes of shape (n_radial·n_angular, 2), weights)
    """
    if n_angular % 4:
        raise InvalidArgumentError(f"Angular node count must be a multiple of 4, got {n_angular}")
    x, w = _gauss_legendre_unit(n_radial)
    if edge_weighted:
        r = np.sqrt(1.0 - x ** 2)
        wr = w
    else:
        r = x
        wr = w * x
    theta = np.pi / 4.0 + 2.0 * np.pi * np.arange(n_angular) / n_angular
    nodes = np.stack(
        [np.outer(r, np.cos(theta)).ravel(), np.outer(r, np.sin(theta)).ravel()], axis=1
    )
    weights = np.repeat(wr, n_angular) * (2.0 * np.pi / n_angular)
    return nodes, weights


def make_density(
    smooth: SmoothFactor,
    carries_edge_singularity: bool = True,
    n_radial: int = OUTER_RADIAL,
    n_angular: int = OUTER_ANGULAR,
) -> DiskDensity:
    """Tabulate a density given by its smooth factor on the standard disk rule."""
    nodes, weights = disk_rule(n_radial, n_angular, carries_edge_singularity)
    return DiskDensity(
        nodes=nodes,
        node_weights=weights,
        values=np.asarray(smooth(nodes), dtype=float),
        carries_edge_singularity=carries_edge_singularity,
        smooth=smooth,
    )


def linear_combination(coeffs: Sequence[float], densities: Sequence[DiskDensity]) -> DiskDensity:
    """Σ c_i f_i for densities sharing one rule and edge flag."""
    first = densities[0]
    for f in densities[1:]:
        if f.carries_edge_singularity != first.carries_edge_singularity or f.nodes.shape != first.nodes.shape:
            raise InvalidArgumentError("Densities must share quadrature rule and edge weight to be combined")
    coeffs = [float(c) for c in coeffs]
    funcs = [f.smooth for f in densities]

    def smooth(s: np.ndarray) -> np.ndarray:
        return sum(c * g(s) for c, g in zip(coeffs, funcs))

    return DiskDensity(
        nodes=first.nodes,
        node_weights=first.node_weights,
        values=sum(c * f.values for c, f in zip(coeffs, densities)),
        carries_edge_singularity=first.carries_edge_singularity,
        smooth=smooth,
    )


def elliptic_Ka(a: float) -> EllipticConstant:
    """
    K_a = (π/2) ∫_0^{2π} (cos²θ + sin²θ / a²)^{-1/2} dθ.

    Periodic trapezoid rule, doubled until successive values agree to 1e-13
    relative. The integrand peaks with width O(a), so very small a is rejected.

    Args:
        a: Aspect ratio in [1e-6, 1]

    Returns:
        EllipticConstant; K_1 = π²
    """
    _check_aspect(a)
    n = 64
    previous = None
    while n <= KA_MAX_NODES:
        theta = 2.0 * np.pi * np.arange(n) / n
        value = 0.5 * np.pi * (2.0 * np.pi / n) * math.fsum(
            1.0 / np.sqrt(np.cos(theta) ** 2 + (np.sin(theta) / a) ** 2)
        )
        if previous is not None and abs(value - previous) <= KA_TOL * value:
            return EllipticConstant(a=float(a), Ka=value)
        previous = value
        n *= 2
    raise QuadratureFailure(f"K_a did not converge for a={a}", partial_estimate=value, error_estimate=abs(value - previous))


def elliptic_Ka_closed_form(a: float) -> float:
    """K_a through the complete elliptic integral: 2πa·K(m = 1 − a²)."""
    _check_aspect(a)
    return 2.0 * np.pi * a * float(ellipk(1.0 - a * a))


def equilibrium_density(a: float, n_radial: int = OUTER_RADIAL, n_angular: int = OUTER_ANGULAR) -> DiskDensity:
    """
    L_a⁻¹1 = K_a⁻¹ (1 − |t'|²)^{-1/2}, the solution of L_a u = 1.

    Its total mass is 2π/K_a and its first moments vanish.
    """
    _check_aspect(a)
    inv_ka = 1.0 / elliptic_Ka(a).Ka
    return make_density(lambda s: np.full(s.shape[0], inv_ka), True, n_radial, n_angular)


# Kernel factors in polar coordinates about the target, s' = t' + ρ(cos θ, sin θ).
# Each returns kernel·ρ (the polar Jacobian included) on broadcast (θ, ρ) grids.

def _la_factor(a, c, s, rho):
    return np.broadcast_to(a / np.sqrt(c ** 2 + (a * s) ** 2), rho.shape)


def _rlog_factor(a, c, s, rho):
    with np.errstate(divide="ignore", invalid="ignore"):
        out = a * rho * (np.log(rho) + 0.5 * np.log(c ** 2 + (a * s) ** 2))
    return np.where(rho > 0.0, out, 0.0)


def _rinf_factor(a, c, s, rho):
    return a * rho * (c ** 2 - (a * s) ** 2) / (c ** 2 + (a * s) ** 2)


def _rf_factor(F1, F2):
    def factor(a, c, s, rho):
        # Δ = −ρ(c, s)
        return -a * rho * (F1 * c + a * F2 * s) / np.sqrt(c ** 2 + (a * s) ** 2)

    return factor


def _graded_breakpoints(width: float) -> np.ndarray:
    """Panel breakpoints on [0, π], graded geometrically toward π/2 down to `width`."""
    half = [0.0]
    d = np.pi / 4.0
    gaps = []
    while True:
        gaps.append(d)
        if d <= width or len(gaps) > 48:
            break
        d *= 0.5
    half.extend(np.pi / 2.0 - g for g in gaps)
    half.append(np.pi / 2.0)
    upper = [np.pi - b for b in reversed(half[:-1])]
    return np.array(half + upper)


@lru_cache(maxsize=4096)
def _angular_rule(theta_t: float, width: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Composite Gauss-Legendre rule in θ, symmetric about θ_t.

    For targets near the rim the radial integrals change over an angular width
    of order sqrt(1 − |t'|²) around the tangential directions θ_t ± π/2.
    """
    bps = _graded_breakpoints(width)
    x, w = np.polynomial.legendre.leggauss(PANEL_NODES)
    lo, hi = bps[:-1, None], bps[1:, None]
    alpha = (0.5 * (hi - lo) * x + 0.5 * (hi + lo)).ravel()
    weights = (0.5 * (hi - lo) * w).ravel()
    alpha = np.concatenate([-alpha[::-1], alpha])
    weights = np.concatenate([weights[::-1], weights])
    return theta_t + alpha, weights


def _polar_apply(f: DiskDensity, t: np.ndarray, a: float, factor, n_radial: int) -> float:
    t = np.asarray(t, dtype=float)
    r_t = float(np.hypot(t[0], t[1]))
    q2 = max(1.0 - r_t ** 2, 0.0)
    theta_t = float(np.arctan2(t[1], t[0])) if r_t > 0.0 else np.pi / 4.0
    width = np.sqrt(q2) / max(r_t, np.sqrt(q2), 1e-300)
    theta, w_theta = _angular_rule(round(theta_t, 15), float(width))
    c, s = np.cos(theta)[:, None], np.sin(theta)[:, None]
    proj = t[0] * c + t[1] * s
    disc = np.sqrt(proj ** 2 + q2)
    x, wx = _gauss_legendre_unit(n_radial)
    if f.carries_edge_singularity:
        # ρ = −⟨t,e⟩ + D cos ψ turns dρ / sqrt((ρ₊ − ρ)(ρ − ρ₋)) into dψ on [0, ψ₀]
        with np.errstate(invalid="ignore", divide="ignore"):
            psi0 = np.arccos(np.clip(np.where(disc > 0.0, proj / np.where(disc > 0.0, disc, 1.0), 1.0), -1.0, 1.0))
        psi = psi0 * x[None, :]
        rho = np.maximum(-proj + disc * np.cos(psi), 0.0)
        w_rad = psi0 * wx[None, :]
    else:
        rho_plus = -proj + disc
        rho = rho_plus * x[None, :]
        w_rad = rho_plus * wx[None, :]
    points = np.stack([t[0] + rho * c, t[1] + rho * s], axis=-1)
    g = np.asarray(f.smooth(points.reshape(-1, 2)), dtype=float).reshape(rho.shape)
    inner = np.sum(factor(a, c, s, rho) * g * w_rad, axis=1)
    return math.fsum(inner * w_theta)


def _check_target(t: np.ndarray, strict: bool) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    r = float(np.hypot(t[0], t[1]))
    if (strict and r >= 1.0) or (not strict and r > 1.0):
        raise DomainError(f"Target point {t.tolist()} is outside the {'open' if strict else 'closed'} unit disk")
    return t


def apply_La(f: DiskDensity, t: np.ndarray, a: float, n_radial: int = INNER_RADIAL) -> float:
    """
    (L_a f)(t') at an interior point.

    Polar coordinates about t' cancel the 1/|Δ| singularity against the
    Jacobian; the edge weight is absorbed by the Chebyshev substitution.
    """
    _check_aspect(a)
    t = _check_target(t, strict=True)
    return _polar_apply(f, t, a, _la_factor, n_radial)


def apply_Rlog(f: DiskDensity, t: np.ndarray, a: float, n_radial: int = INNER_RADIAL) -> float:
    _check_aspect(a)
    t = _check_target(t, strict=False)
    return _polar_apply(f, t, a, _rlog_factor, n_radial)


def apply_Rinfty(f: DiskDensity, t: np.ndarray, a: float, n_radial: int = INNER_RADIAL) -> float:
    _check_aspect(a)
    t = _check_target(t, strict=False)
    return _polar_apply(f, t, a, _rinf_factor, n_radial)


def apply_RF(f: DiskDensity, t: np.ndarray, a: float, F1: float, F2: float, n_radial: int = INNER_RADIAL) -> float:
    """R_F,a f(t'); the kernel is bounded by |F| and odd in Δ."""
    _check_aspect(a)
    t = _check_target(t, strict=False)
    return _polar_apply(f, t, a, _rf_factor(float(F1), float(F2)), n_radial)


def rinfty_kernel(t: np.ndarray, s: np.ndarray, a: float) -> np.ndarray:
    """Pointwise R_∞,a kernel (Δ₁² − a²Δ₂²)/(Δ₁² + a²Δ₂²), 0 on the diagonal."""
    d = np.asarray(t, dtype=float) - np.asarray(s, dtype=float)
    num = d[..., 0] ** 2 - (a * d[..., 1]) ** 2
    den = d[..., 0] ** 2 + (a * d[..., 1]) ** 2
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den > 0.0, num / np.where(den > 0.0, den, 1.0), 0.0)


def _weighted_pairing(a: float, factor, order: int, workers: int) -> float:
    """⟨w, K w⟩ for the edge weight w = (1 − |s|²)^{-1/2}, outer rule scaled by `order`."""
    unit = make_density(lambda s: np.ones(s.shape[0]), True, OUTER_RADIAL * order, OUTER_ANGULAR * order)
    n_radial = INNER_RADIAL * order

    def inner(node: np.ndarray) -> float:
        return _polar_apply(unit, node, a, factor, n_radial)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            inner_values = np.array(list(pool.map(inner, unit.nodes)))
    else:
        inner_values = np.array([inner(node) for node in unit.nodes])
    return math.fsum(inner_values * unit.values * unit.node_weights)


def _double_integral(name: str, a: float, factor, order: int, verify: bool, tol: float, workers: int) -> float:
    _check_aspect(a)
    value = _weighted_pairing(a, factor, order, workers) / a
    if verify:
        refined = _weighted_pairing(a, factor, 2 * order, workers) / a
        change = abs(refined - value)
        logger.info(f"{name}(a={a}): order {order} -> {value:.10g}, order {2 * order} -> {refined:.10g}")
        if change > tol:
            raise QuadratureFailure(
                f"{name}(a={a}) changed by {change:.2e} under order doubling (tolerance {tol})",
                partial_estimate=refined,
                error_estimate=change,
            )
        return refined
    return value


def integral_Ilog(a: float, order: int = 1, verify: bool = False, tol: float = 1e-4, workers: int = 1) -> float:
    """
    ∫_𝔻∫_𝔻 (1−|s'|²)^{-1/2} log|t'−s'|_a (1−|t'|²)^{-1/2} dt' ds'.

    At a = 1 the value is 4π²(2 log 2 − 3/2).

    Args:
        a: Aspect ratio in (0, 1]
        order: Node-count multiplier for outer and inner rules
        verify: Recompute at doubled order and fail if the change exceeds tol
        tol: Absolute tolerance for the doubling check
        workers: Threads used over outer nodes; the result does not depend on it
    """
    return _double_integral("I_log", a, _rlog_factor, order, verify, tol, workers)


def integral_Ianiso(a: float, order: int = 1, verify: bool = False, tol: float = 1e-4, workers: int = 1) -> float:
    """
    ∫_𝔻∫_𝔻 (1−|s'|²)^{-1/2} (Δ₁² − a²Δ₂²)/(Δ₁² + a²Δ₂²) (1−|t'|²)^{-1/2} dt' ds'.

    Vanishes at a = 1 by the t₁ ↔ t₂ swap symmetry, which the node layout
    preserves exactly.
    """
    return _double_integral("I_aniso", a, _rinf_factor, order, verify, tol, workers)


def check_RF_vanishing(a: float, F1: float, F2: float, order: int = 1, workers: int = 1) -> float:
    """
    Residual of ∫_𝔻 L_a⁻¹ R_F,a L_a⁻¹1 = 0.

    L_a is symmetric, so the integral is K_a⁻² ⟨w, R_F,a w⟩ with the edge weight w.
    """
    _check_aspect(a)
    ka = elliptic_Ka(a).Ka
    return _weighted_pairing(a, _rf_factor(float(F1), float(F2)), order, workers) / ka ** 2


def flat_kernel_disk_integral(a: float, delta: float) -> float:
    """∫ over the disk of radius δ about t' of a/|Δ|_a, which equals 2K_aδ/π."""
    return 2.0 * elliptic_Ka(a).Ka * delta / np.pi


def anisotropy_angular_mean(a: float) -> float:
    """∫_0^{2π} (cos²θ − a²sin²θ)/(cos²θ + a²sin²θ) dθ = 2π(1 − a)/(1 + a)."""
    return 2.0 * np.pi * (1.0 - a) / (1.0 + a)


def equilibrium_log_potential(s: np.ndarray) -> np.ndarray:
    """
    ∫_𝔻 log|t' − s'| (1 − |t'|²)^{-1/2} dt' = 2π(log(1 + q) − q), q = sqrt(1 − |s'|²).

    Closed form for a = 1.
    """
    s = np.atleast_2d(np.asarray(s, dtype=float))
    q = np.sqrt(np.clip(1.0 - np.sum(s ** 2, axis=1), 0.0, None))
    return 2.0 * np.pi * (np.log1p(q) - q)


def monte_carlo_apply(
    kernel: Callable[[np.ndarray, np.ndarray], np.ndarray],
    t: np.ndarray,
    n_samples: int,
    rng: np.random.Generator,
    smooth: Optional[SmoothFactor] = None,
    batch: int = 1_000_000,
) -> Tuple[float, float]:
    """
    Importance-sampled estimate of ∫ kernel(t', s') g(s') (1 − |s'|²)^{-1/2} ds'.

    Samples s' with density (2π)⁻¹(1 − |s'|²)^{-1/2} (q = sqrt(1 − r²)
    uniform), which cancels the edge weight.

    Returns:
        (estimate, standard error)
    """
    t = np.asarray(t, dtype=float)
    total, total_sq, done = 0.0, 0.0, 0
    while done < n_samples:
        m = min(batch, n_samples - done)
        q = rng.random(m)
        r = np.sqrt(1.0 - q ** 2)
        theta = 2.0 * np.pi * rng.random(m)
        s = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)
        vals = 2.0 * np.pi * kernel(t, s)
        if smooth is not None:
            vals = vals * smooth(s)
        total += math.fsum(vals)
        total_sq += math.fsum(vals ** 2)
        done += m
    mean = total / n_samples
    var = max(total_sq / n_samples - mean ** 2, 0.0)
    return mean, math.sqrt(var / n_samples)


def log_kernel(a: float) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """Pointwise a·log|t' − s'|_a, the R_log,a kernel."""

    def kernel(t: np.ndarray, s: np.ndarray) -> np.ndarray:
        d = t - s
        return a * 0.5 * np.log(d[..., 0] ** 2 + (a * d[..., 1]) ** 2)

    return kernel
