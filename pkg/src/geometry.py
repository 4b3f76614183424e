"""
Domain models, boundary frames, geodesic ellipse windows and rescaled charts.

The canonical domain is the ball of radius R. Everything the asymptotic formulas
need from the geometry (curvatures, exponential map, distances) is closed form
there; other domains plug in through the BoundaryFrame / chart interface.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Tuple

import numpy as np

from src.errors import DomainError, InvalidArgumentError

logger = logging.getLogger(__name__)

BOUNDARY_TOL = 1e-10
TANGENT_TIE_TOL = 1e-8


class DomainKind(str, Enum):
    UNIT_BALL = "unit_ball"


@dataclass(frozen=True)
class DomainModel:
    """
    A compact 3D domain with boundary geometry queries.

    Only the ball is implemented; `radius` is its radius R.
    """

    kind: DomainKind
    radius: float

    @property
    def volume(self) -> float:
        return 4.0 / 3.0 * np.pi * self.radius ** 3

    @property
    def boundary_area(self) -> float:
        return 4.0 * np.pi * self.radius ** 2

    @property
    def injectivity_radius(self) -> float:
        # boundary sphere: exp is injective below the antipodal distance
        return np.pi * self.radius

    def signed_distance(self, x: np.ndarray) -> np.ndarray:
        """Negative inside, zero on the boundary, positive outside."""
        x = np.asarray(x, dtype=float)
        return np.linalg.norm(x, axis=-1) - self.radius

    def outward_normal(self, x: np.ndarray) -> np.ndarray:
        """Gradient of the signed distance (defined away from the centre)."""
        x = np.asarray(x, dtype=float)
        norm = np.linalg.norm(x, axis=-1, keepdims=True)
        if np.any(norm == 0.0):
            raise DomainError("Outward normal undefined at the centre of the ball")
        return x / norm

    def contains(self, x: np.ndarray, tol: float = 0.0) -> np.ndarray:
        return self.signed_distance(x) <= tol * self.radius

    def is_on_boundary(self, x: np.ndarray) -> bool:
        return bool(abs(self.signed_distance(x)) <= BOUNDARY_TOL * self.radius)

    def project_to_boundary(self, x: np.ndarray) -> np.ndarray:
        """
        Snap a point that is within tolerance of the boundary onto it.

        Raises:
            DomainError: if the point is farther than 1e-10·R from the sphere.
        """
        x = np.asarray(x, dtype=float)
        if x.shape != (3,):
            raise DomainError(f"Expected a 3-vector, got shape {x.shape}")
        if not self.is_on_boundary(x):
            raise DomainError(
                f"Point {x.tolist()} is not on the boundary "
                f"(signed distance {float(self.signed_distance(x)):.3e})"
            )
        return self.radius * x / np.linalg.norm(x)

    def geodesic_distance(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Great-circle distance d_h between boundary points."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        cos_angle = np.sum(x * y, axis=-1) / (self.radius ** 2)
        # atan2 form keeps accuracy for nearly coincident points
        cross = np.linalg.norm(np.cross(x, y), axis=-1) / (self.radius ** 2)
        return self.radius * np.arctan2(cross, cos_angle)

    def chord_distance(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Distance d_g in the ball, the straight chord between the points."""
        return np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(y, dtype=float), axis=-1)

    def exp_map(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        """
        Boundary exponential map exp_{x;h}(v) for a tangent vector v at x.

        Rotates x by the angle |v|/R toward v along the great circle.
        """
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        length = np.linalg.norm(v, axis=-1, keepdims=True)
        angle = length / self.radius
        with np.errstate(invalid="ignore", divide="ignore"):
            direction = np.where(length > 0.0, v / np.where(length > 0.0, length, 1.0), 0.0)
        return np.cos(angle) * x + self.radius * np.sin(angle) * direction

    def log_map(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """
        Inverse exponential map exp_{x;h}^{-1}(y) as a tangent vector at x.

        Raises:
            DomainError: for antipodal points, where the map is not defined.
        """
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        x_hat = x / self.radius
        tangential = y - np.sum(y * x_hat, axis=-1, keepdims=True) * x_hat
        t_norm = np.linalg.norm(tangential, axis=-1, keepdims=True)
        dist = self.geodesic_distance(x, y)[..., None]
        if np.any((t_norm <= TANGENT_TIE_TOL * self.radius) & (dist > 0.5 * np.pi * self.radius)):
            raise DomainError("Logarithm map undefined for antipodal boundary points")
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(t_norm > 0.0, tangential / np.where(t_norm > 0.0, t_norm, 1.0), 0.0)
        return dist * unit


@dataclass(frozen=True)
class BoundaryFrame:
    """Principal frame at a boundary point (inward-normal curvature convention)."""

    point: np.ndarray
    nu: np.ndarray
    E1: np.ndarray
    E2: np.ndarray
    lambda1: float
    lambda2: float

    @property
    def H(self) -> float:
        return 0.5 * (self.lambda1 + self.lambda2)

    def second_fundamental_form(self, v1: np.ndarray, v2: np.ndarray) -> np.ndarray:
        """II(V) for V = v1·E1 + v2·E2, given in frame components."""
        return self.lambda1 * np.square(v1) + self.lambda2 * np.square(v2)

    def tangent_components(self, v: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        v = np.asarray(v, dtype=float)
        return v @ self.E1, v @ self.E2


@dataclass(frozen=True)
class WindowSpec:
    """
    Absorbing geodesic ellipse Γ_ε,a centred at a boundary point.

    Semi-axes are ε along E1 and aε along E2; a = 1 is the geodesic disk.
    """

    domain: DomainModel
    center: np.ndarray
    eps: float
    a: float
    frame: BoundaryFrame

    def rescaled_coordinates(self, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Chart coordinates t' with y = exp_{x*}(ε t₁E₁ + ε t₂E₂)."""
        v = self.domain.log_map(self.center, y)
        t1, t2 = self.frame.tangent_components(v)
        return t1 / self.eps, t2 / self.eps

    def contains(self, points: np.ndarray) -> np.ndarray:
        """
        Vectorized membership test for points already on the boundary.

        No boundary check is done here; the Monte Carlo engine calls this on
        exact sphere crossings.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        x_hat = self.center / self.domain.radius
        cos_angle = np.clip(points @ x_hat / self.domain.radius, -1.0, 1.0)
        # cheap rejection: the ellipse lies inside the geodesic disk of radius eps
        near = np.arccos(cos_angle) * self.domain.radius <= self.eps * (1.0 + 1e-12)
        inside = np.zeros(points.shape[0], dtype=bool)
        if np.any(near):
            t1, t2 = self.rescaled_coordinates(points[near])
            inside[near] = t1 ** 2 + (t2 / self.a) ** 2 <= 1.0
        return inside

    def time_scale(self, weighted_volume: float) -> float:
        """Leading-order escape time K_a Φ/(4π² a ε), used to size MC budgets."""
        from src.disk_operators import elliptic_Ka

        return elliptic_Ka(self.a).Ka * weighted_volume / (4.0 * np.pi ** 2 * self.a * self.eps)


@dataclass(frozen=True)
class FullyAbsorbingBoundary:
    """The whole boundary sphere absorbs; used to calibrate the SDE engine."""

    domain: DomainModel

    def contains(self, points: np.ndarray) -> np.ndarray:
        return np.ones(np.atleast_2d(points).shape[0], dtype=bool)

    def time_scale(self, weighted_volume: float = 0.0) -> float:
        # exit time from the centre, R²/6
        return self.domain.radius ** 2 / 6.0


def unit_ball(radius: float = 1.0) -> DomainModel:
    """
    Canonical ball domain of the given radius.

    Args:
        radius: Ball radius R > 0

    Returns:
        DomainModel with closed-form volume, area and geometry queries
    """
    if not np.isfinite(radius) or radius <= 0.0:
        raise InvalidArgumentError(f"Ball radius must be positive, got {radius}")
    return DomainModel(kind=DomainKind.UNIT_BALL, radius=float(radius))


def spherical_point(domain: DomainModel, theta: float, phi: float) -> np.ndarray:
    """Boundary point at polar angle theta and azimuth phi."""
    return domain.radius * np.array(
        [np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)]
    )


def boundary_frame(domain: DomainModel, x: np.ndarray) -> BoundaryFrame:
    """
    Principal frame {E1, E2, ν} and curvatures at a boundary point.

    On the sphere every tangent direction is principal, so the tangent pair is
    chosen deterministically: E1 = ẑ × ν normalized (x̂ near the poles) and
    E2 = ν × E1, which makes E1, E2, ν positively oriented.

    Args:
        domain: Domain model
        x: Point within 1e-10·R of the boundary

    Returns:
        BoundaryFrame with λ1 = λ2 = 1/R
    """
    point = domain.project_to_boundary(x)
    nu = point / domain.radius
    e1 = np.cross(np.array([0.0, 0.0, 1.0]), nu)
    e1_norm = np.linalg.norm(e1)
    if e1_norm > TANGENT_TIE_TOL:
        e1 = e1 / e1_norm
    else:
        e1 = np.array([1.0, 0.0, 0.0])
    e2 = np.cross(nu, e1)
    curvature = 1.0 / domain.radius
    return BoundaryFrame(point=point, nu=nu, E1=e1, E2=e2, lambda1=curvature, lambda2=curvature)


def make_window(domain: DomainModel, center: np.ndarray, eps: float, a: float = 1.0) -> WindowSpec:
    """
    Build the window Γ_ε,a at a boundary point.

    Args:
        domain: Domain model
        center: Window centre x* on the boundary
        eps: Geodesic semi-major axis ε > 0
        a: Aspect ratio in (0, 1]

    Returns:
        WindowSpec, validated so the rescaled chart with |t'| <= 2 is injective
    """
    if not np.isfinite(eps) or eps <= 0.0:
        raise InvalidArgumentError(f"Window size eps must be positive, got {eps}")
    if not (0.0 < a <= 1.0):
        raise InvalidArgumentError(f"Window aspect a must lie in (0, 1], got {a}")
    if 2.0 * eps >= 0.5 * domain.injectivity_radius:
        raise InvalidArgumentError(
            f"Window size eps={eps} too large for the chart (needs 2·eps < {0.5 * domain.injectivity_radius:.4g})"
        )
    frame = boundary_frame(domain, center)
    return WindowSpec(domain=domain, center=frame.point, eps=float(eps), a=float(a), frame=frame)


def window_membership(w: WindowSpec, y: np.ndarray) -> bool:
    """True iff the boundary point y lies in the closed ellipse Γ_ε,a."""
    point = w.domain.project_to_boundary(y)
    if w.domain.geodesic_distance(w.center, point) > w.eps * (1.0 + 1e-12):
        return False
    t1, t2 = w.rescaled_coordinates(point)
    return bool(t1 ** 2 + (t2 / w.a) ** 2 <= 1.0)


def rescaled_chart(w: WindowSpec, t1: float, t2: float) -> np.ndarray:
    """
    Point exp_{x*;h}(ε t₁E₁ + ε t₂E₂) of the rescaled boundary chart.

    Raises:
        DomainError: when ε|t'| reaches the injectivity radius.
    """
    if w.eps * np.hypot(t1, t2) >= w.domain.injectivity_radius:
        raise DomainError(f"Chart coordinates ({t1}, {t2}) leave the injectivity domain")
    v = w.eps * (t1 * w.frame.E1 + t2 * w.frame.E2)
    return w.domain.exp_map(w.center, v)


def inverse_rescaled_chart(w: WindowSpec, y: np.ndarray) -> Tuple[float, float]:
    """Chart coordinates (t₁, t₂) of a boundary point in the window chart."""
    point = w.domain.project_to_boundary(y)
    t1, t2 = w.rescaled_coordinates(point)
    return float(t1), float(t2)


def rescaled_distance_residuals(w: WindowSpec, t: np.ndarray, s: np.ndarray) -> Tuple[float, float]:
    """
    Residuals of the rescaled distance expansions between chart points.

    Returns:
        (d_g⁻¹ − (εr)⁻¹, log d_h − log(εr)) with r = |t' − s'|; the first is
        O(ε) and the second O(ε²) as ε → 0.
    """
    x = rescaled_chart(w, *t)
    y = rescaled_chart(w, *s)
    r = float(np.hypot(t[0] - s[0], t[1] - s[1]))
    if r == 0.0:
        raise DomainError("Residuals need distinct chart points")
    d_g = float(w.domain.chord_distance(x, y))
    d_h = float(w.domain.geodesic_distance(x, y))
    return 1.0 / d_g - 1.0 / (w.eps * r), np.log(d_h) - np.log(w.eps * r)


def cap_area(domain: DomainModel, eps: float) -> float:
    """Area of the geodesic disk of radius eps on the boundary sphere."""
    return 2.0 * np.pi * domain.radius ** 2 * (1.0 - np.cos(eps / domain.radius))


def window_area(w: WindowSpec, n_nodes: int = 64) -> float:
    """
    Boundary area of Γ_ε,a, integrated in the rescaled chart.

    The pulled-back area element is aε²(1 + O(ε²)); for a = 1 the exact cap
    area is returned directly.
    """
    if w.a == 1.0:
        return cap_area(w.domain, w.eps)
    # geodesic polar coordinates: dA = R sin(ρ/R) dρ dθ along ρ(θ) = ε r(θ)
    theta = 2.0 * np.pi * np.arange(n_nodes) / n_nodes
    boundary_r = w.eps / np.sqrt(np.cos(theta) ** 2 + (np.sin(theta) / w.a) ** 2)
    inner = w.domain.radius ** 2 * (1.0 - np.cos(boundary_r / w.domain.radius))
    return float(np.sum(inner) * 2.0 * np.pi / n_nodes)


def equal_area_eps(a: float, eps: float) -> float:
    """Size ε' such that Γ_ε',a has the leading-order area of the disk Γ_ε."""
    if not (0.0 < a <= 1.0):
        raise InvalidArgumentError(f"Window aspect a must lie in (0, 1], got {a}")
    return eps / np.sqrt(a)


def sample_boundary(domain: DomainModel, n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform samples on the boundary sphere."""
    g = rng.standard_normal((n, 3))
    return domain.radius * g / np.linalg.norm(g, axis=1, keepdims=True)
