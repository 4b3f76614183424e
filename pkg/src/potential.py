"""
Potentials φ, force fields F = ∇φ and the weighted volume Φ(x).
"""

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional, Tuple

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from src.errors import DomainError, InvalidArgumentError, QuadratureFailure
from src.geometry import DomainModel

logger = logging.getLogger(__name__)

FD_STEP = 1e-5
MIN_ORDER = 8
MAX_ORDER = 256
DEFAULT_TOL = 1e-10
# trilinear kinks limit the product rule to algebraic convergence
TABULATED_TOL = 1e-3


class PotentialKind(str, Enum):
    ZERO = "zero"
    CONSTANT = "constant"
    LINEAR_AXIS = "linear_axis"
    TABULATED = "tabulated"


@dataclass(frozen=True)
class PotentialField:
    """
    Smooth potential φ on the closed domain.

    `offset` is added to every kind, so a constant potential is the zero
    potential shifted by c and gauge checks can shift any field.
    """

    kind: PotentialKind
    offset: float = 0.0
    beta: float = 0.0
    axis: Tuple[float, float, float] = (0.0, 0.0, 1.0)
    grid_axes: Optional[Tuple[np.ndarray, np.ndarray, np.ndarray]] = None
    grid_values: Optional[np.ndarray] = None
    quadrature_tol: Optional[float] = None
    _interpolator: Optional[RegularGridInterpolator] = field(default=None, repr=False, compare=False)

    def value(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind in (PotentialKind.ZERO, PotentialKind.CONSTANT):
            return np.full(x.shape[:-1], self.offset)
        if self.kind == PotentialKind.LINEAR_AXIS:
            return self.beta * (x @ np.asarray(self.axis)) + self.offset
        return self._interpolator(x) + self.offset

    def gradient(self, x: np.ndarray, step: float = FD_STEP) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind in (PotentialKind.ZERO, PotentialKind.CONSTANT):
            return np.zeros_like(x)
        if self.kind == PotentialKind.LINEAR_AXIS:
            return np.broadcast_to(self.beta * np.asarray(self.axis), x.shape).copy()
        # centred differences on the trilinear interpolant
        grad = np.empty_like(x)
        for k in range(3):
            shift = np.zeros(3)
            shift[k] = step
            grad[..., k] = (self._interpolator(x + shift) - self._interpolator(x - shift)) / (2.0 * step)
        return grad

    def normal_derivative(self, x: np.ndarray, nu: np.ndarray, step: float = FD_STEP) -> float:
        """∂_νφ with ν the outward normal (so F³ = −∂_νφ in inward coordinates)."""
        return float(np.dot(self.gradient(np.asarray(x, dtype=float), step), nu))

    def shifted(self, c: float) -> "PotentialField":
        return replace(self, offset=self.offset + c)

    @property
    def default_tol(self) -> float:
        """Relative tolerance for Φ when the caller gives none."""
        if self.quadrature_tol is not None:
            return self.quadrature_tol
        return TABULATED_TOL if self.kind == PotentialKind.TABULATED else DEFAULT_TOL


@dataclass(frozen=True)
class WeightedVolume:
    value: float
    base_point: np.ndarray
    quadrature_error_estimate: float


def zero_potential() -> PotentialField:
    return PotentialField(kind=PotentialKind.ZERO)


def constant_potential(c: float) -> PotentialField:
    return PotentialField(kind=PotentialKind.CONSTANT, offset=float(c))


def linear_axis_potential(beta: float, axis=(0.0, 0.0, 1.0)) -> PotentialField:
    """φ(z) = β⟨z, e⟩ for a unit axis e."""
    axis = np.asarray(axis, dtype=float)
    norm = np.linalg.norm(axis)
    if norm == 0.0:
        raise InvalidArgumentError("Potential axis must be non-zero")
    axis = axis / norm
    return PotentialField(kind=PotentialKind.LINEAR_AXIS, beta=float(beta), axis=tuple(axis.tolist()))


def tabulated_potential(grid_axes: Tuple[np.ndarray, np.ndarray, np.ndarray], values: np.ndarray) -> PotentialField:
    """
    Trilinear-interpolated potential on a rectilinear grid.

    Args:
        grid_axes: Strictly increasing node coordinates along x, y, z
        values: Array of shape (nx, ny, nz)

    Returns:
        PotentialField of kind TABULATED; points outside the box are linearly extrapolated
    """
    axes = tuple(np.asarray(g, dtype=float) for g in grid_axes)
    values = np.asarray(values, dtype=float)
    if values.shape != tuple(len(g) for g in axes):
        raise InvalidArgumentError(
            f"Tabulated values have shape {values.shape}, expected {tuple(len(g) for g in axes)}"
        )
    interp = RegularGridInterpolator(axes, values, method="linear", bounds_error=False, fill_value=None)
    return PotentialField(
        kind=PotentialKind.TABULATED, grid_axes=axes, grid_values=values, _interpolator=interp
    )


def force(phi: PotentialField, x: np.ndarray, domain: Optional[DomainModel] = None) -> np.ndarray:
    """
    Force field F = ∇φ at x.

    Args:
        phi: Potential field
        x: Point in the closed domain
        domain: When given, x is checked against it and the finite-difference
            step for tabulated fields is 1e-5·R

    Returns:
        Gradient 3-vector
    """
    x = np.asarray(x, dtype=float)
    step = FD_STEP
    if domain is not None:
        if np.any(domain.signed_distance(x) > 1e-10 * domain.radius):
            raise DomainError(f"Point {x.tolist()} lies outside the domain")
        step = FD_STEP * domain.radius
    return phi.gradient(x, step)


def _ball_product_rule(radius: float, order: int):
    """Radial Gauss-Legendre (weight r²), Gauss-Legendre in cos θ, trapezoid in azimuth."""
    r_nodes, r_weights = np.polynomial.legendre.leggauss(order)
    r = 0.5 * radius * (r_nodes + 1.0)
    wr = 0.5 * radius * r_weights * r ** 2
    mu, wmu = np.polynomial.legendre.leggauss(order)
    n_az = 2 * order
    az = 2.0 * np.pi * np.arange(n_az) / n_az
    sin_t = np.sqrt(1.0 - mu ** 2)
    directions = np.stack(
        [
            np.outer(sin_t, np.cos(az)).ravel(),
            np.outer(sin_t, np.sin(az)).ravel(),
            np.repeat(mu, n_az),
        ],
        axis=1,
    )
    w_dir = np.repeat(wmu, n_az) * (2.0 * np.pi / n_az)
    return r, wr, directions, w_dir


def _integrate_ball(domain: DomainModel, integrand, order: int) -> float:
    r, wr, directions, w_dir = _ball_product_rule(domain.radius, order)
    shells = np.empty(order)
    # one radial shell at a time keeps memory at O(order²)
    for i in range(order):
        shells[i] = np.dot(integrand(r[i] * directions), w_dir)
    return float(np.dot(shells, wr))


def integrate_over_ball(domain: DomainModel, integrand, tol: float = DEFAULT_TOL) -> Tuple[float, float]:
    """
    Adaptive product-rule integral of a smooth function over the ball.

    The order doubles from 8 until successive estimates agree to `tol`
    relative.

    Returns:
        (value, error estimate)
    """
    previous = _integrate_ball(domain, integrand, MIN_ORDER)
    order = MIN_ORDER
    while order < MAX_ORDER:
        order *= 2
        current = _integrate_ball(domain, integrand, order)
        error = abs(current - previous)
        logger.debug(f"Ball quadrature order {order}: {current:.15g} (change {error:.3e})")
        if error <= tol * abs(current):
            return current, error
        previous = current
    raise QuadratureFailure(
        f"Ball quadrature did not reach relative tolerance {tol} by order {MAX_ORDER}",
        partial_estimate=current,
        error_estimate=error,
    )


def weighted_volume(
    domain: DomainModel, phi: PotentialField, x: np.ndarray, tol: Optional[float] = None
) -> WeightedVolume:
    """
    Weighted volume Φ(x) = ∫_M e^{φ(z) − φ(x)} dz.

    Args:
        domain: Domain model
        phi: Potential field
        x: Base point (normally the window centre)
        tol: Relative tolerance in [1e-12, 1e-2]; defaults to `phi.default_tol`
            (1e-10, or 1e-3 for tabulated fields)

    Returns:
        WeightedVolume with the quadrature's change between the last two orders
        as error estimate
    """
    if tol is None:
        tol = phi.default_tol
    if not (1e-12 <= tol <= 1e-2):
        raise InvalidArgumentError(f"Quadrature tolerance must lie in [1e-12, 1e-2], got {tol}")
    x = np.asarray(x, dtype=float)
    phi_x = float(phi.value(x[None, :])[0])
    value, error = integrate_over_ball(domain, lambda z: np.exp(phi.value(z) - phi_x), tol)
    logger.info(f"Weighted volume at {np.round(x, 6).tolist()}: {value:.12g} (error {error:.2e})")
    return WeightedVolume(value=value, base_point=x, quadrature_error_estimate=error)
