"""
Neumann Green kernel: boundary singular structure, the auxiliary function 𝒢,
and providers for the regular part R(x*,x*) and the interior Green function.

Normalization: Δ_x G(x,y) = −δ_y(x), ∂_ν G = −1/|∂M| and ∫_{∂M} G(z,y) dz = 0.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np

from src.errors import DomainError, InvalidArgumentError, NotConfiguredError, SingularEvaluationError
from src.geometry import BoundaryFrame, DomainModel, boundary_frame, unit_ball

logger = logging.getLogger(__name__)

EXTRAPOLATION_DISTANCES = (1e-2, 5e-3, 2.5e-3)
LOOKUP_TOL = 1e-8


class SignConvention(str, Enum):
    """
    Two readings of the drift-dependent signs.

    PLUS: log coefficient (H + ∂_νφ), drift term −⟨F∥, v̂⟩/4π.
    MINUS: drift term +⟨F∥, v̂⟩/4π in the kernel and (H − ∂_νφ) in the
    escape-time constants.
    """

    PLUS = "plus"
    MINUS = "minus"

    @property
    def drift_sign(self) -> float:
        return -1.0 if self is SignConvention.PLUS else 1.0

    @property
    def normal_derivative_sign(self) -> float:
        return 1.0 if self is SignConvention.PLUS else -1.0


class Provenance(str, Enum):
    CLOSED_FORM_BALL_NO_DRIFT = "closed_form_ball_no_drift"
    USER_SUPPLIED = "user_supplied"


@dataclass(frozen=True)
class SingularKernelTerms:
    coulomb: float
    log_term: float
    ii_difference: float
    drift_directional: float

    @property
    def total_singular(self) -> float:
        return self.coulomb + self.log_term + self.ii_difference + self.drift_directional


@dataclass(frozen=True)
class DiagonalExtrapolation:
    """Samples of G_∂M − total_singular toward the diagonal and their limit."""

    distances: Tuple[float, ...]
    remainders: Tuple[float, ...]
    value: float
    observed_order: float


def kernel_singular(
    x: np.ndarray,
    y: np.ndarray,
    frame: BoundaryFrame,
    F: np.ndarray = (0.0, 0.0, 0.0),
    sign_convention: SignConvention = SignConvention.PLUS,
    domain: Optional[DomainModel] = None,
) -> SingularKernelTerms:
    """
    Singular terms of the boundary Green kernel G_∂M(x, y) near the diagonal.

    Args:
        x: Boundary point the frame is attached to
        y: Second boundary point, y ≠ x and not antipodal
        frame: Principal frame at x
        F: Force vector at x; ∂_νφ = ⟨F, ν⟩ with ν outward
        sign_convention: Sign of the drift-directional term
        domain: Ball the points live on; unit ball when omitted

    Returns:
        SingularKernelTerms; `total_singular` is their sum
    """
    if domain is None:
        domain = unit_ball(float(np.linalg.norm(frame.point)))
    x = domain.project_to_boundary(x)
    y = domain.project_to_boundary(y)
    if not np.allclose(frame.point, x, atol=1e-10 * domain.radius):
        raise DomainError("Frame is not attached to the first kernel argument")
    d_h = float(domain.geodesic_distance(x, y))
    if d_h == 0.0:
        raise SingularEvaluationError("Kernel evaluated on its diagonal (x = y)")
    v = domain.log_map(x, y)
    v_hat = v / np.linalg.norm(v)
    v1, v2 = frame.tangent_components(v_hat)
    F = np.asarray(F, dtype=float)
    dnu_phi = float(F @ frame.nu)
    F_par = F - dnu_phi * frame.nu

    coulomb = 1.0 / (2.0 * np.pi * float(domain.chord_distance(x, y)))
    log_term = -(frame.H + dnu_phi) / (4.0 * np.pi) * np.log(d_h)
    # II at the Hodge rotation *v̂ = (−v2, v1)
    ii_difference = (
        frame.second_fundamental_form(v1, v2) - frame.second_fundamental_form(-v2, v1)
    ) / (16.0 * np.pi)
    drift = sign_convention.drift_sign * float(F_par @ v_hat) / (4.0 * np.pi)
    return SingularKernelTerms(
        coulomb=float(coulomb),
        log_term=float(log_term),
        ii_difference=float(ii_difference),
        drift_directional=drift,
    )


def _unit_ball_green(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Neumann function of the unit ball in cancellation-free form."""
    diff2 = np.sum((x - y) ** 2, axis=-1)
    gap = (1.0 - np.sum(x ** 2, axis=-1)) * (1.0 - np.sum(y ** 2, axis=-1))
    # Q² = 1 − 2x·y + |x|²|y|² = |x − y|² + (1 − |x|²)(1 − |y|²)
    q = np.sqrt(diff2 + gap)
    one_minus_xy = 0.5 * (diff2 + (1.0 - np.sum(x ** 2, axis=-1)) + (1.0 - np.sum(y ** 2, axis=-1)))
    return (1.0 / np.sqrt(diff2) + 1.0 / q + np.log(2.0 / (one_minus_xy + q))) / (4.0 * np.pi) - 1.0 / (2.0 * np.pi)


def ball_green(domain: DomainModel, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """
    Closed-form Neumann Green function G(x, y) of the ball (F = 0).

    Symmetric in its arguments; valid on the closed ball off the diagonal.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r = domain.radius
    if np.any(np.linalg.norm(x, axis=-1) > r * (1.0 + 1e-10)) or np.any(np.linalg.norm(y, axis=-1) > r * (1.0 + 1e-10)):
        raise DomainError("Green function arguments must lie in the closed ball")
    if np.any(np.sum((x - y) ** 2, axis=-1) == 0.0):
        raise SingularEvaluationError("Green function evaluated on its diagonal")
    xs = x / r
    ys = y / r
    # clip round-off outside the sphere
    xs = xs / np.maximum(np.linalg.norm(xs, axis=-1, keepdims=True), 1.0)
    ys = ys / np.maximum(np.linalg.norm(ys, axis=-1, keepdims=True), 1.0)
    return _unit_ball_green(xs, ys) / r


def ball_script_G(x: np.ndarray, domain: Optional[DomainModel] = None) -> float:
    """𝒢(x) = (R² − |x|²)/6 for the ball with F = 0."""
    radius = 1.0 if domain is None else domain.radius
    x = np.asarray(x, dtype=float)
    r2 = float(x @ x)
    if r2 > radius ** 2 * (1.0 + 2e-10):
        raise DomainError(f"Point {x.tolist()} is outside the ball")
    return max(radius ** 2 - r2, 0.0) / 6.0


def ball_script_G_integral(domain: DomainModel) -> float:
    """∫_M 𝒢 = 4πR⁵/45."""
    return 4.0 * np.pi * domain.radius ** 5 / 45.0


def ball_regular_part_exact(domain: DomainModel) -> float:
    """Diagonal regular part of the ball, [log(2R)/(4π) − 1/(2π)]/R."""
    r = domain.radius
    return (np.log(2.0 * r) / (4.0 * np.pi) - 1.0 / (2.0 * np.pi)) / r


def diagonal_extrapolation(
    domain: DomainModel,
    x_star: np.ndarray,
    direction: str = "E1",
    distances: Tuple[float, ...] = EXTRAPOLATION_DISTANCES,
) -> DiagonalExtrapolation:
    """
    Extrapolate G_∂M(x*, y) − total_singular(x*, y) to y = x*.

    Samples at three dyadic geodesic distances (in units of R) along E1 or E2; two Richardson
    levels remove the O(d) and O(d²) terms.
    """
    frame = boundary_frame(domain, x_star)
    tangent = {"E1": frame.E1, "E2": frame.E2}.get(direction)
    if tangent is None:
        raise InvalidArgumentError(f"Direction must be 'E1' or 'E2', got {direction}")
    remainders = []
    for d in distances:
        y = domain.exp_map(frame.point, d * domain.radius * tangent)
        terms = kernel_singular(frame.point, y, frame, domain=domain)
        remainders.append(float(ball_green(domain, frame.point, y)) - terms.total_singular)
    f1, f2, f3 = remainders
    first = (2.0 * f2 - f1, 2.0 * f3 - f2)
    value = (4.0 * first[1] - first[0]) / 3.0
    with np.errstate(divide="ignore", invalid="ignore"):
        order = float(np.log2(abs(f1 - f2) / abs(f2 - f3))) if f2 != f3 else float("inf")
    logger.debug(f"Regular part along {direction}: samples {remainders}, limit {value:.12g}, order {order:.3f}")
    return DiagonalExtrapolation(
        distances=tuple(distances), remainders=tuple(remainders), value=value, observed_order=order
    )


class GreenProvider(ABC):
    """Source of R(x*,x*), G(x*,x), 𝒢 and their volume integrals."""

    provenance: Provenance

    @abstractmethod
    def regular_part_at(self, x_star: np.ndarray) -> float:
        ...

    @abstractmethod
    def interior_green(self, x_star: np.ndarray, x: np.ndarray) -> float:
        ...

    @abstractmethod
    def script_G(self, x: np.ndarray) -> float:
        ...

    @abstractmethod
    def script_G_integral(self) -> float:
        ...

    @abstractmethod
    def green_integral(self, x_star: np.ndarray) -> float:
        """∫_M G(x, x*) dx."""


@dataclass(frozen=True)
class ClosedFormBallNoDrift(GreenProvider):
    domain: DomainModel
    direction: str = "E1"
    provenance: Provenance = Provenance.CLOSED_FORM_BALL_NO_DRIFT

    def regular_part_at(self, x_star: np.ndarray) -> float:
        return diagonal_extrapolation(self.domain, x_star, self.direction).value

    def interior_green(self, x_star: np.ndarray, x: np.ndarray) -> float:
        return float(ball_green(self.domain, x_star, x))

    def script_G(self, x: np.ndarray) -> float:
        return ball_script_G(x, self.domain)

    def script_G_integral(self) -> float:
        return ball_script_G_integral(self.domain)

    def green_integral(self, x_star: np.ndarray) -> float:
        # ∫_M G(x, y) dx = 𝒢(y) by Green's second identity
        return self.script_G(x_star)


def _nearest(table: List[Tuple[np.ndarray, float]], point: np.ndarray, tol: float, what: str) -> float:
    if not table:
        raise NotConfiguredError(f"Provider has no {what} data")
    points = np.array([p for p, _ in table])
    dist = np.linalg.norm(points - np.asarray(point, dtype=float).ravel(), axis=1)
    k = int(np.argmin(dist))
    if dist[k] > tol:
        raise NotConfiguredError(f"No {what} entry within {tol:.1e} of {np.round(point, 8).tolist()}")
    return table[k][1]


@dataclass(frozen=True)
class UserSupplied(GreenProvider):
    """
    Tabulated provider values, matched to the nearest stored point within
    1e-8·R; anything else raises NotConfiguredError.
    """

    radius: float = 1.0
    regular: List[Tuple[np.ndarray, float]] = field(default_factory=list)
    green: List[Tuple[np.ndarray, float]] = field(default_factory=list)
    script: List[Tuple[np.ndarray, float]] = field(default_factory=list)
    script_integral: Optional[float] = None
    green_integrals: List[Tuple[np.ndarray, float]] = field(default_factory=list)
    provenance: Provenance = Provenance.USER_SUPPLIED

    @property
    def tol(self) -> float:
        return LOOKUP_TOL * self.radius

    def regular_part_at(self, x_star: np.ndarray) -> float:
        return _nearest(self.regular, x_star, self.tol, "regular-part")

    def interior_green(self, x_star: np.ndarray, x: np.ndarray) -> float:
        key = np.concatenate([np.asarray(x_star, dtype=float), np.asarray(x, dtype=float)])
        return _nearest(self.green, key, self.tol, "Green function")

    def script_G(self, x: np.ndarray) -> float:
        return _nearest(self.script, x, self.tol, "script-G")

    def script_G_integral(self) -> float:
        if self.script_integral is None:
            raise NotConfiguredError("Provider has no ∫𝒢 value")
        return self.script_integral

    def green_integral(self, x_star: np.ndarray) -> float:
        return _nearest(self.green_integrals, x_star, self.tol, "∫G")

    def summary(self) -> Dict[str, int]:
        return {
            "R": len(self.regular),
            "G": len(self.green),
            "SG": len(self.script),
            "ISG": int(self.script_integral is not None),
            "IG": len(self.green_integrals),
        }


def regular_part(provider: GreenProvider, x_star: np.ndarray) -> float:
    """R(x*, x*) from a configured provider."""
    value = provider.regular_part_at(np.asarray(x_star, dtype=float))
    logger.info(f"Regular part R(x*,x*) = {value:.12g} ({provider.provenance.value})")
    return value


def script_G_boundary_mean(provider: GreenProvider, domain: DomainModel, n: int = 32) -> float:
    """
    ∫_{∂M} 𝒢 dh by Gauss-Legendre in cos θ and trapezoid in azimuth.

    Vanishes for a consistent provider.
    """
    mu, w = np.polynomial.legendre.leggauss(n)
    az = 2.0 * np.pi * np.arange(2 * n) / (2 * n)
    total = 0.0
    for m, wm in zip(mu, w):
        s = np.sqrt(1.0 - m * m)
        for p in az:
            point = domain.radius * np.array([s * np.cos(p), s * np.sin(p), m])
            total += wm * provider.script_G(point)
    return total * (np.pi / n) * domain.radius ** 2
