"""
Narrow-escape-time expansions: the disk and ellipse constants, the pointwise
sojourn field away from the window and its domain average.
"""

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Optional, Tuple

import numpy as np

from src.disk_operators import elliptic_Ka, integral_Ianiso, integral_Ilog
from src.errors import DomainError, InvalidArgumentError, NotConfiguredError
from src.geometry import DomainModel, WindowSpec
from src.green_kernel import GreenProvider, Provenance, SignConvention, regular_part
from src.potential import PotentialField, PotentialKind, weighted_volume

logger = logging.getLogger(__name__)

ERROR_ORDER = "O(eps log eps)"
DISK_LOG_CONSTANT = 2.0 * np.log(2.0) - 1.5
VALIDITY_FACTOR = 10.0


@dataclass(frozen=True)
class NETExpansion:
    leading: float
    log_term: float
    constant_term: float
    error_order: str = ERROR_ORDER
    inputs_echo: Dict[str, float] = field(default_factory=dict)

    @property
    def total(self) -> float:
        return self.leading + self.log_term + self.constant_term

    def as_row(self) -> Dict[str, float]:
        return {
            "leading": self.leading,
            "log_term": self.log_term,
            "constant_term": self.constant_term,
            "total": self.total,
        }


@dataclass(frozen=True)
class SojournField:
    base_expansion: NETExpansion
    provider: GreenProvider
    window: WindowSpec

    @property
    def weighted_volume(self) -> float:
        return self.base_expansion.inputs_echo["Phi"]


@lru_cache(maxsize=64)
def operator_constants(a: float, order: int = 1, verify: bool = False, anisotropic: bool = True, workers: int = 1) -> Tuple[float, float, Optional[float]]:
    """(K_a, I_log(a), I_aniso(a)); I_aniso is skipped for umbilic points."""
    ka = elliptic_Ka(a).Ka
    ilog = integral_Ilog(a, order=order, verify=verify, workers=workers)
    ianiso = integral_Ianiso(a, order=order, verify=verify, workers=workers) if anisotropic else None
    return ka, ilog, ianiso


def _check_provider(provider: GreenProvider, phi: PotentialField) -> None:
    if provider.provenance == Provenance.CLOSED_FORM_BALL_NO_DRIFT and phi.kind not in (
        PotentialKind.ZERO,
        PotentialKind.CONSTANT,
    ):
        raise NotConfiguredError(
            f"Closed-form ball provider has no Green function for a {phi.kind.value} potential (F != 0)"
        )


def _window_inputs(
    domain: DomainModel,
    phi: PotentialField,
    window: WindowSpec,
    provider: GreenProvider,
    sign_convention: SignConvention,
) -> Dict[str, float]:
    _check_provider(provider, phi)
    frame = window.frame
    Phi = weighted_volume(domain, phi, window.center).value
    dnu_phi = phi.normal_derivative(window.center, frame.nu, step=1e-5 * domain.radius)
    if dnu_phi != 0.0 and sign_convention == SignConvention.PLUS:
        logger.warning(
            f"Normal derivative of phi is {dnu_phi:.6g}: the log coefficient uses H + d_nu phi; "
            f"--sign-convention section4 gives H - d_nu phi"
        )
    return {
        "eps": window.eps,
        "a": window.a,
        "Phi": Phi,
        "H": frame.H,
        "dnu_phi": dnu_phi,
        "lambda1": frame.lambda1,
        "lambda2": frame.lambda2,
        "R": regular_part(provider, window.center),
        "script_G": provider.script_G(window.center),
        "log_coefficient": frame.H + sign_convention.normal_derivative_sign * dnu_phi,
    }


def leading_term(domain: DomainModel, phi: PotentialField, window: WindowSpec) -> float:
    """K_aΦ(x*)/(4π²aε); needs no Green provider, so it exists for any potential."""
    Phi = weighted_volume(domain, phi, window.center).value
    return elliptic_Ka(window.a).Ka * Phi / (4.0 * np.pi ** 2 * window.a * window.eps)


def net_constant_disk(
    domain: DomainModel,
    phi: PotentialField,
    window: WindowSpec,
    provider: GreenProvider,
    sign_convention: SignConvention = SignConvention.PLUS,
) -> NETExpansion:
    """
    C_ε for a geodesic disk window.

    Args:
        domain: Domain model
        phi: Potential field
        window: Window with a = 1
        provider: Source of R(x*,x*) and 𝒢(x*)
        sign_convention: Sign of ∂_νφ in the log coefficient

    Returns:
        NETExpansion with leading Φ/(4ε)
    """
    if window.a != 1.0:
        raise InvalidArgumentError(f"Disk constant needs a = 1, got a = {window.a}; use net_constant_ellipse")
    echo = _window_inputs(domain, phi, window, provider, sign_convention)
    Phi, eps, coeff = echo["Phi"], window.eps, echo["log_coefficient"]
    echo["Ka"] = np.pi ** 2
    leading = Phi / (4.0 * eps)
    log_term = -coeff * Phi / (4.0 * np.pi) * np.log(eps)
    constant = echo["R"] * Phi - echo["script_G"] - coeff * Phi / (4.0 * np.pi) * DISK_LOG_CONSTANT
    logger.info(f"C_eps(eps={eps}): {leading + log_term + constant:.10g}")
    return NETExpansion(leading=leading, log_term=log_term, constant_term=constant, inputs_echo=echo)


def net_constant_ellipse(
    domain: DomainModel,
    phi: PotentialField,
    window: WindowSpec,
    provider: GreenProvider,
    sign_convention: SignConvention = SignConvention.PLUS,
    order: int = 1,
    verify: bool = False,
    workers: int = 1,
) -> NETExpansion:
    """
    C_ε,a for a geodesic ellipse window.

    The disk double integrals are evaluated numerically even at a = 1, so the
    disk/ellipse agreement is a real check of the quadrature.
    """
    echo = _window_inputs(domain, phi, window, provider, sign_convention)
    Phi, eps, a, coeff = echo["Phi"], window.eps, window.a, echo["log_coefficient"]
    anisotropic = echo["lambda1"] != echo["lambda2"]
    ka, ilog, ianiso = operator_constants(a, order, verify, anisotropic, workers)
    echo.update({"Ka": ka, "I_log": ilog, "I_aniso": ianiso if ianiso is not None else 0.0})
    leading = ka * Phi / (4.0 * np.pi ** 2 * a * eps)
    log_term = -coeff * Phi / (4.0 * np.pi) * np.log(eps)
    constant = echo["R"] * Phi - echo["script_G"] - coeff * Phi / (16.0 * np.pi ** 3) * ilog
    if anisotropic:
        constant += (echo["lambda1"] - echo["lambda2"]) * Phi / (64.0 * np.pi ** 3) * ianiso
    logger.info(f"C_eps,a(eps={eps}, a={a}): {leading + log_term + constant:.10g}")
    return NETExpansion(leading=leading, log_term=log_term, constant_term=constant, inputs_echo=echo)


def build_sojourn_field(
    domain: DomainModel,
    phi: PotentialField,
    window: WindowSpec,
    provider: GreenProvider,
    sign_convention: SignConvention = SignConvention.PLUS,
    **ellipse_options,
) -> SojournField:
    """Disk constant when a = 1, ellipse constant otherwise."""
    if window.a == 1.0:
        expansion = net_constant_disk(domain, phi, window, provider, sign_convention)
    else:
        expansion = net_constant_ellipse(domain, phi, window, provider, sign_convention, **ellipse_options)
    return SojournField(base_expansion=expansion, provider=provider, window=window)


def sojourn_field(field: SojournField, x: np.ndarray) -> float:
    """
    E[τ | X₀ = x] ≈ C + 𝒢(x) − Φ(x*)G(x*, x), omitting an O(ε) remainder.

    Raises:
        DomainError: if x is within 10ε of the window centre or outside the domain.
    """
    x = np.asarray(x, dtype=float)
    w = field.window
    if float(np.linalg.norm(x)) > w.domain.radius * (1.0 + 1e-10):
        raise DomainError(f"Point {x.tolist()} lies outside the domain")
    distance = float(np.linalg.norm(x - w.center))
    if distance < VALIDITY_FACTOR * w.eps:
        raise DomainError(
            f"Sojourn field is asymptotic only at distance >= {VALIDITY_FACTOR:g}·eps from the window "
            f"(got {distance:.4g} for eps={w.eps})"
        )
    return (
        field.base_expansion.total
        + field.provider.script_G(x)
        - field.weighted_volume * field.provider.interior_green(w.center, x)
    )


def averaged_sojourn(field: SojournField) -> float:
    """(C|M| + ∫_M 𝒢 − Φ(x*)∫_M G(·, x*)) / |M|."""
    volume = field.window.domain.volume
    total = (
        field.base_expansion.total * volume
        + field.provider.script_G_integral()
        - field.weighted_volume * field.provider.green_integral(field.window.center)
    )
    return total / volume
