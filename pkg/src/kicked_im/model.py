"""Single-particle analytics of the kicked transverse-field Ising chain.

The Floquet operator is ``F = exp(iJ sum Z_j Z_{j+1}) prod_j exp(igX_j) exp(ihZ_j)``.
At ``h = 0`` it maps to free Majorana fermions with quasienergy dispersion

    cos(phi_k) = cos(2J) cos(2g) + sin(2J) sin(2g) cos(k).

Conventions: ``phi`` in [0, pi], polar angle ``eta`` in [0, pi], azimuth ``xi``
in (-pi, pi].  Quantities that need the Bloch axis are defined on the open
interval ``0 < k < pi``; within ``K_GUARD`` of an endpoint the analytic limit
is returned instead.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CriticalPointError, DegenerateAxisError, NumericalError, ValidationError

K_GUARD = 1e-9
CRITICAL_TOL = 1e-12
_AXIS_TOL = 1e-12


@dataclass(frozen=True)
class ModelParams:
    """Circuit couplings: Ising angle ``J``, transverse kick ``g``, longitudinal kick ``h``."""

    J: float
    g: float
    h: float = 0.0

    def __post_init__(self):
        for name in ("J", "g", "h"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValidationError(f"{name} must be finite, got {value!r}")
        eps = 1e-14
        if not (-eps <= self.J <= math.pi / 2 + eps and -eps <= self.g <= math.pi / 2 + eps):
            raise ValidationError(
                f"(J, g) = ({self.J}, {self.g}) outside the quadrant 0 <= J, g <= pi/2"
            )

    @property
    def integrable(self) -> bool:
        return self.h == 0.0

    def require_integrable(self) -> None:
        if not self.integrable:
            raise ValidationError(f"free-fermion analytics require h = 0, got h = {self.h}")

    def as_dict(self) -> dict:
        return {"J": self.J, "g": self.g, "h": self.h}


@dataclass(frozen=True)
class BlochPoint:
    k: float
    phi: float
    eta: float
    xi: float
    rho: complex
    C: complex

    @property
    def axis(self) -> np.ndarray:
        return np.array([
            math.sin(self.eta) * math.cos(self.xi),
            math.sin(self.eta) * math.sin(self.xi),
            math.cos(self.eta),
        ])


@dataclass
class EdgeMode:
    quasienergy: float
    lam: float
    loc_length: float
    amplitude_sq: float | None = None


class Phase(enum.Enum):
    TRIVIAL = "Trivial"
    ZERO_MODE = "ZeroMode"
    PI_MODE = "PiMode"
    ZERO_AND_PI_MODE = "ZeroAndPiMode"


@dataclass(frozen=True)
class PhaseLabel:
    phase: Phase
    band_edges: list = field(default_factory=list)


def _cos_phi(params: ModelParams, k):
    J2, g2 = 2 * params.J, 2 * params.g
    return math.cos(J2) * math.cos(g2) + math.sin(J2) * math.sin(g2) * np.cos(k)


def dispersion(params: ModelParams, k):
    """Quasienergy ``phi_k`` on the principal branch [0, pi]; accepts scalars or arrays."""
    params.require_integrable()
    c = _cos_phi(params, np.asarray(k, dtype=float))
    if np.any(np.abs(c) > 1 + 1e-12):
        raise NumericalError("|cos phi| exceeds 1; k must be real")
    phi = np.arccos(np.clip(c, -1.0, 1.0))
    return float(phi) if np.ndim(phi) == 0 else phi


def rotation_matrix(params: ModelParams, k: float) -> np.ndarray:
    """The 2x2 Bloch matrix M_k with eigenvalues exp(+-i phi_k)."""
    cJ, sJ = math.cos(2 * params.J), math.sin(2 * params.J)
    cg, sg = math.cos(2 * params.g), math.sin(2 * params.g)
    e = np.exp(-1j * k)
    return np.array([
        [cJ * cg + sJ * sg * e, -cJ * sg + sJ * cg * e],
        [cJ * sg - sJ * cg / e, cJ * cg + sJ * sg / e],
    ])


def axis_vector(params: ModelParams, k: float) -> np.ndarray:
    """Closed-form unit rotation axis n_k (undefined where sin(phi_k) = 0)."""
    phi = dispersion(params, k)
    s = math.sin(phi)
    if s < _AXIS_TOL:
        raise DegenerateAxisError(f"sin(phi_k) = {s:.3e} at k = {k}")
    cJ, sJ = math.cos(2 * params.J), math.sin(2 * params.J)
    cg, sg = math.cos(2 * params.g), math.sin(2 * params.g)
    return -np.array([
        sJ * cg * math.sin(k),
        cJ * sg - sJ * cg * math.cos(k),
        sJ * sg * math.sin(k),
    ]) / s


def _endpoint_xi(params: ModelParams, k: float) -> float:
    # n_k -> (0, +-1, 0); the sign follows from the closed form at k = 0 or pi
    if k < math.pi / 2:
        if abs(params.J - params.g) < CRITICAL_TOL:
            raise DegenerateAxisError("axis limit at k=0 is undefined on the line J = g")
        return math.pi / 2 if params.J > params.g else -math.pi / 2
    if abs(params.J + params.g - math.pi / 2) < CRITICAL_TOL:
        raise DegenerateAxisError("axis limit at k=pi is undefined on the line J + g = pi/2")
    return math.pi / 2 if params.J + params.g > math.pi / 2 else -math.pi / 2


def _at_endpoint(k: float) -> bool:
    return k < K_GUARD or k > math.pi - K_GUARD


def bloch_axis(params: ModelParams, k: float) -> tuple[float, float]:
    """Polar and azimuthal angles ``(eta, xi)`` of the rotation axis at momentum ``k``."""
    params.require_integrable()
    if _at_endpoint(k):
        return math.pi / 2, _endpoint_xi(params, k)
    n = axis_vector(params, k)
    eta = math.acos(max(-1.0, min(1.0, n[2])))
    xi = math.atan2(n[1], n[0])
    if xi == -math.pi:
        xi = math.pi
    return eta, xi


def phase_shift(params: ModelParams, k: float) -> complex:
    """Relative phase between incoming and reflected Bloch waves off the open boundary."""
    eta, xi = bloch_axis(params, k)
    if _at_endpoint(k):
        return complex(np.exp(1j * xi))
    phi = dispersion(params, k)
    omega = math.tan(eta / 2) * np.exp(1j * xi)
    a = np.exp(1j * phi) - math.cos(2 * params.g)
    s = math.sin(2 * params.g)
    den = a + s * omega
    if abs(den) < 1e-14:
        raise NumericalError(f"phase-shift denominator vanishes at k = {k}")
    return complex((a * omega - s) / den)


def boundary_coefficient(params: ModelParams, k: float) -> complex:
    """Amplitude of the boundary Majorana on the scattering mode at momentum ``k``.

    Normalised so that ``int_0^pi dk/pi |C_k|^2`` plus the edge weights is 1.
    """
    if _at_endpoint(k):
        bloch_axis(params, k)
        return 0j
    eta, xi = bloch_axis(params, k)
    rho = phase_shift(params, k)
    return complex(math.sin(eta / 2) * np.exp(1j * xi) - math.cos(eta / 2) * rho)


def bloch_point(params: ModelParams, k: float) -> BlochPoint:
    eta, xi = bloch_axis(params, k)
    return BlochPoint(
        k=k,
        phi=dispersion(params, k),
        eta=eta,
        xi=xi,
        rho=phase_shift(params, k),
        C=boundary_coefficient(params, k),
    )


def edge_eigenvalues(params: ModelParams) -> tuple[float, float]:
    """Decay eigenvalues ``(lambda_0, lambda_pi)`` of the boundary transfer matrix."""
    J, g = params.J, params.g
    with np.errstate(divide="ignore", invalid="ignore"):
        lam0 = np.float64(math.sin(g) * math.cos(J)) / np.float64(math.cos(g) * math.sin(J))
        lampi = -np.float64(math.cos(g) * math.cos(J)) / np.float64(math.sin(g) * math.sin(J))
    return float(lam0), float(lampi)


def edge_amplitude_sq(params: ModelParams, quasienergy: float) -> float:
    """Closed-form boundary weight of the semi-infinite edge eigenvector.

    The left edge mode is ``psi_cell(j) = lambda^(j-1) (alpha, beta)`` with the
    boundary fixing ``beta/alpha = -tan g`` (phi = 0) or ``cot g`` (phi = pi),
    which gives ``(1 - lambda^2) cos^2 g`` and ``(1 - lambda^2) sin^2 g``.
    Returns 0 when the mode does not exist.
    """
    params.require_integrable()
    lam0, lampi = edge_eigenvalues(params)
    if quasienergy == 0:
        lam, w = lam0, math.cos(params.g) ** 2
    else:
        lam, w = lampi, math.sin(params.g) ** 2
    if not abs(lam) < 1:
        return 0.0
    return (1 - lam * lam) * w


def edge_modes(params: ModelParams) -> list[EdgeMode]:
    """Edge modes at quasienergy 0 and/or pi; ``amplitude_sq`` is left unset."""
    params.require_integrable()
    out = []
    for phi, lam in zip((0.0, math.pi), edge_eigenvalues(params)):
        if abs(lam) < 1:
            loc = 0.0 if lam == 0 else -1.0 / math.log(abs(lam))
            out.append(EdgeMode(quasienergy=phi, lam=lam, loc_length=loc))
    return out


def band_edges(params: ModelParams) -> list[tuple[float, float]]:
    """Frequency intervals supporting the continuous spectral density."""
    J, g = params.J, params.g
    lo = 2 * abs(J - g)
    hi = 2 * (J + g) if J + g < math.pi / 2 else 2 * math.pi - 2 * (J + g)
    return [(-hi, -lo), (lo, hi)]


def is_critical(params: ModelParams, tol: float = CRITICAL_TOL) -> bool:
    return abs(params.J - params.g) < tol or abs(params.J + params.g - math.pi / 2) < tol


def phase_label(params: ModelParams) -> PhaseLabel:
    params.require_integrable()
    if is_critical(params):
        raise CriticalPointError(f"(J, g) = ({params.J}, {params.g}) lies on a critical line")
    zero = params.g < params.J
    pi = params.g > math.pi / 2 - params.J
    phase = {
        (False, False): Phase.TRIVIAL,
        (True, False): Phase.ZERO_MODE,
        (False, True): Phase.PI_MODE,
        (True, True): Phase.ZERO_AND_PI_MODE,
    }[(zero, pi)]
    return PhaseLabel(phase=phase, band_edges=band_edges(params))
