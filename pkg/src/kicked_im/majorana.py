"""Finite-chain Majorana dynamics of the kicked Ising environment.

The single-period Heisenberg map acts on the 2L boundary-ordered Majoranas as
``O = O_J O_g``.  Slot 0 is the Majorana coupled to the subsystem; the memory
kernel is ``kappa(tau) = 2 tan^2 J [O^tau]_{00}``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.integrate import quad

from . import model
from .errors import LeakageWarning, NumericalError, PairingError, QuadratureError, ValidationError
from .model import ModelParams

PAIR_TOL = 1e-8
SELF_TOL = 1e-10
EDGE_TOL = 1e-8
EDGE_L0 = 64
EDGE_LMAX = 1 << 18


@dataclass(frozen=True)
class MajoranaMap:
    L: int
    params: ModelParams
    O: np.ndarray = field(repr=False)

    def orthogonality_residual(self) -> float:
        return float(np.abs(self.O.T @ self.O - np.eye(2 * self.L)).max())


def _rotate_pairs(v, first, c, s, transpose=False):
    """Apply planar rotations [[c, -s], [s, c]] to slot pairs (first + 2j, first + 2j + 1)."""
    n = v.shape[0]
    stop = n - (n - first) % 2
    a = v[first:stop:2].copy()
    b = v[first + 1:stop:2]
    if transpose:
        v[first:stop:2] = c * a + s * b
        v[first + 1:stop:2] = -s * a + c * b
    else:
        v[first:stop:2] = c * a - s * b
        v[first + 1:stop:2] = s * a + c * b
    return v


def build_majorana_map(L: int, params: ModelParams) -> MajoranaMap:
    params.require_integrable()
    if L < 2:
        raise ValidationError(f"L must be >= 2, got {L}")
    n = 2 * L
    Og = _rotate_pairs(np.eye(n), 0, math.cos(2 * params.g), math.sin(2 * params.g))
    O = _rotate_pairs(Og, 1, math.cos(2 * params.J), math.sin(2 * params.J))
    O.setflags(write=False)
    return MajoranaMap(L=L, params=params, O=O)


def _kernel_row(params: ModelParams, tau_max: int, L: int | None = None) -> np.ndarray:
    """[O^tau]_{00} for tau = 0..tau_max via pair rotations restricted to the light cone."""
    if L is None:
        L = tau_max + 2
    n = 2 * L
    cg, sg = math.cos(2 * params.g), math.sin(2 * params.g)
    cJ, sJ = math.cos(2 * params.J), math.sin(2 * params.J)
    w = np.zeros(n)
    w[0] = 1.0
    out = np.empty(tau_max + 1)
    for tau in range(tau_max + 1):
        out[tau] = w[0]
        # row vector e_0^T O^tau -> e_0^T O^(tau+1), i.e. w <- O^T w = O_g^T O_J^T w
        m = min(n, 2 * tau + 4)
        seg = w[:m]
        _rotate_pairs(seg, 1, cJ, sJ, transpose=True)
        _rotate_pairs(seg, 0, cg, sg, transpose=True)
    return out


@dataclass
class ModeDecomposition:
    quasienergies: np.ndarray
    weights: np.ndarray
    eigenvalues: np.ndarray = field(repr=False)
    eigenvectors: np.ndarray = field(repr=False)

    def kernel(self, tau) -> np.ndarray:
        """Mode sum of weights times cos(phi tau), normalised to 1 at tau = 0."""
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        return np.cos(np.outer(tau, self.quasienergies)) @ self.weights


def diagonalize_map(mmap: MajoranaMap) -> ModeDecomposition:
    """Pair the unimodular eigenvalues of ``O`` into modes ``e^{+-i phi}``.

    The complex Schur form of a real orthogonal matrix is diagonal with
    orthonormal Schur vectors, so the boundary weight of a mode is the summed
    ``|v_0|^2`` of its two eigenvectors.
    """
    resid = mmap.orthogonality_residual()
    if resid > 1e-10:
        raise NumericalError(f"map is not orthogonal (residual {resid:.2e})")
    T, Z = sla.schur(mmap.O.astype(complex), output="complex")
    lam = np.diag(T)
    if np.abs(np.abs(lam) - 1).max() > PAIR_TOL:
        raise PairingError("eigenvalues of the orthogonal map are not unimodular")
    theta = np.angle(lam)
    w = np.abs(Z[0]) ** 2
    pos = np.flatnonzero(theta > SELF_TOL)
    neg = np.flatnonzero(theta < -SELF_TOL)
    near0 = np.flatnonzero(np.abs(theta) <= SELF_TOL)
    nearpi = np.setdiff1d(np.arange(theta.size), np.concatenate([pos, neg, near0]))
    # theta = +-pi both land in pos/neg; move them into the pi cluster
    pi_mask = np.abs(np.abs(theta) - math.pi) <= SELF_TOL
    nearpi = np.union1d(nearpi, np.flatnonzero(pi_mask))
    pos = np.setdiff1d(pos, nearpi)
    neg = np.setdiff1d(neg, nearpi)
    if pos.size != neg.size or near0.size % 2 or nearpi.size % 2:
        raise PairingError(
            f"unbalanced spectrum: {pos.size} positive, {neg.size} negative, "
            f"{near0.size} at 0, {nearpi.size} at pi"
        )
    pos = pos[np.argsort(theta[pos])]
    neg = neg[np.argsort(-theta[neg])]
    mismatch = np.abs(theta[pos] + theta[neg]).max(initial=0.0)
    if mismatch > PAIR_TOL:
        raise PairingError(f"conjugate-pair mismatch {mismatch:.2e}")
    phis = [0.5 * (theta[pos] - theta[neg])]
    weights = [w[pos] + w[neg]]
    for cluster, value in ((near0, 0.0), (nearpi, math.pi)):
        if cluster.size:
            ws = w[cluster]
            phis.append(np.full(cluster.size // 2, value))
            weights.append(ws[0::2] + ws[1::2])
    phi = np.concatenate(phis)
    weight = np.concatenate(weights)
    order = np.argsort(phi, kind="stable")
    total = weight.sum()
    if abs(total - 1) > 1e-10:
        raise NumericalError(f"boundary weights sum to {total!r}, expected 1")
    return ModeDecomposition(
        quasienergies=phi[order], weights=weight[order], eigenvalues=lam, eigenvectors=Z
    )


def _sparse_map(params: ModelParams, L: int) -> sp.csr_matrix:
    n = 2 * L
    cg, sg = math.cos(2 * params.g), math.sin(2 * params.g)
    cJ, sJ = math.cos(2 * params.J), math.sin(2 * params.J)
    Rg = sp.block_diag([np.array([[cg, -sg], [sg, cg]])] * L)
    RJ = sp.block_diag([np.eye(1)] + [np.array([[cJ, -sJ], [sJ, cJ]])] * (L - 1) + [np.eye(1)])
    return (RJ @ Rg).tocsr()


def _edge_weights_at(params: ModelParams, L: int) -> tuple[float, float]:
    """Boundary weight in the in-gap eigenspaces of O + O^T near quasienergy 0 and pi.

    For orthogonal O the eigenspace of O + O^T at 2 cos(phi) is the span of the
    e^{+-i phi} eigenvectors of O, so its projector gives the mode weight.
    """
    O = _sparse_map(params, L)
    S = (O + O.T).todia()
    n = 2 * L
    ab = np.zeros((3, n))
    for d in range(3):
        ab[d, : n - d] = S.diagonal(-d)
    phi_lo = abs(2 * params.J - 2 * params.g)
    jg = 2 * (params.J + params.g)
    phi_hi = jg if jg <= math.pi else 2 * math.pi - jg
    out = []
    for lo, hi in ((2 * math.cos(phi_lo / 2), 2.5), (-2.5, 2 * math.cos((math.pi + phi_hi) / 2))):
        if lo >= hi:
            out.append(0.0)
            continue
        vals, vecs = sla.eig_banded(ab, lower=True, select="v", select_range=(lo, hi))
        out.append(float(np.sum(vecs[0] ** 2)) if vals.size else 0.0)
    return out[0], out[1]


def edge_weights(params: ModelParams, tol: float = EDGE_TOL) -> tuple[float, float]:
    """L-converged boundary weights ``(|C_e0|^2, |C_epi|^2)`` of the edge eigenvectors.

    The chain length is doubled from ``EDGE_L0`` until both weights change by
    less than ``tol``.
    """
    params.require_integrable()
    L = EDGE_L0
    prev = _edge_weights_at(params, L)
    while L < EDGE_LMAX:
        L *= 2
        cur = _edge_weights_at(params, L)
        if max(abs(a - b) for a, b in zip(cur, prev)) < tol:
            return cur
        prev = cur
    raise NumericalError(f"edge weights not converged at L = {L}")


@dataclass
class KappaKernel:
    params: ModelParams
    values: np.ndarray

    @property
    def tau_max(self) -> int:
        return self.values.size - 1

    @property
    def prefactor(self) -> float:
        return 2 * math.tan(self.params.J) ** 2

    @cached_property
    def _edges(self) -> tuple[float, float]:
        return edge_weights(self.params)

    @property
    def edge_zero_sq(self) -> float:
        return self._edges[0]

    @property
    def edge_pi_sq(self) -> float:
        return self._edges[1]

    def edge_part(self, tau) -> np.ndarray:
        tau = np.asarray(tau)
        sign = np.where(tau % 2 == 0, 1.0, -1.0)
        return self.prefactor * (self.edge_zero_sq + sign * self.edge_pi_sq)

    def continuum(self) -> np.ndarray:
        return self.values - self.edge_part(np.arange(self.values.size))

    def truncated(self, tau_max: int) -> "KappaKernel":
        if tau_max > self.tau_max:
            raise ValidationError(f"kernel horizon {self.tau_max} < requested {tau_max}")
        k = KappaKernel(self.params, self.values[: tau_max + 1].copy())
        if "_edges" in self.__dict__:
            k.__dict__["_edges"] = self._edges
        return k


def kappa_exact(params: ModelParams, tau_max: int, L: int | None = None) -> KappaKernel:
    """Exact kernel from the light-cone-sized chain (``L = tau_max + 2`` by default)."""
    params.require_integrable()
    if tau_max < 0:
        raise ValidationError(f"tau_max must be >= 0, got {tau_max}")
    if L is not None and L < tau_max + 2:
        raise ValidationError(f"L = {L} is inside the light cone of tau_max = {tau_max}")
    row = _kernel_row(params, tau_max, L)
    return KappaKernel(params, 2 * math.tan(params.J) ** 2 * row)


def kappa_mode_sum(params: ModelParams, tau_max: int) -> np.ndarray:
    """Kernel rebuilt from the diagonalised map of the light-cone-sized chain."""
    modes = diagonalize_map(build_majorana_map(tau_max + 2, params))
    return 2 * math.tan(params.J) ** 2 * modes.kernel(np.arange(tau_max + 1))


def kappa_quadrature(params: ModelParams, tau: int, rtol: float = 1e-8) -> float:
    """Kernel from the momentum integral plus closed-form edge terms.

    On critical lines the edge modes are absent and only the integral remains.
    """
    params.require_integrable()
    lo, hi = 2 * model.K_GUARD, math.pi - 2 * model.K_GUARD

    def integrand(k):
        # the endpoints carry zero measure; keep the axis away from its undefined limits
        c = model.boundary_coefficient(params, min(max(k, lo), hi))
        return (c.real ** 2 + c.imag ** 2) * math.cos(model.dispersion(params, k) * tau)

    e0 = model.edge_amplitude_sq(params, 0.0)
    epi = model.edge_amplitude_sq(params, math.pi)
    # the continuum carries weight 1 - e0 - epi; it sets the scale when the integral cancels
    scale = max(abs(1.0 - e0 - epi) * math.pi, 1e-300)
    limit = max(200, 8 * tau)
    tol = rtol * scale

    def run(shrink):
        res = quad(integrand, 0.0, math.pi, epsabs=tol / shrink, epsrel=rtol / shrink,
                   limit=shrink * limit, full_output=1)
        # quad appends a message when it fails to meet the tolerance
        if len(res) > 3 or res[1] > 10 * max(tol, rtol * abs(res[0])):
            raise QuadratureError(f"quadrature did not converge at tau = {tau} (error {res[1]:.2e})")
        return res[0]

    # quad's error estimate can miss features narrower than its first subdivision, as
    # near a critical line; a refined second pass must agree
    val = run(1)
    if abs(run(100) - val) > 10 * tol:
        raise QuadratureError(f"quadrature unstable under refinement at tau = {tau}")
    edges = e0 + (-1) ** tau * epi
    return 2 * math.tan(params.J) ** 2 * (val / math.pi + edges)


@dataclass
class SpectralDensity:
    omega: np.ndarray
    JR: np.ndarray
    JI: np.ndarray
    delta_weights: dict
    window: int
    taper_fraction: float
    leakage: float

    @property
    def metadata(self) -> dict:
        return {
            "window": self.window,
            "taper": "cosine",
            "taper_fraction": self.taper_fraction,
            "leakage": self.leakage,
            "delta_weights": self.delta_weights,
        }


def taper(window: int, fraction: float = 0.1) -> np.ndarray:
    """Weights for tau = 0..window: flat, then a half-cosine over the last ``fraction``."""
    tau = np.arange(window + 1, dtype=float)
    start = (1 - fraction) * window
    w = np.ones(window + 1)
    tail = tau > start
    w[tail] = 0.5 * (1 + np.cos(math.pi * (tau[tail] - start) / (window - start)))
    return w


def spectral_density(
    params: ModelParams,
    n_omega: int = 16384,
    window: int = 8192,
    taper_fraction: float = 0.1,
    kernel: KappaKernel | None = None,
) -> SpectralDensity:
    """Windowed Fourier transform of the continuum kernel and its periodic Hilbert partner.

    ``JR(w) = kappa_c(0) + 2 sum_tau taper(tau) kappa_c(tau) cos(w tau)`` on the grid
    ``w_n = -pi + 2 pi (n + 1) / N``.  ``JI`` is the discrete cotangent (periodic
    Hilbert) transform of ``JR`` plus the principal-value images of the edge deltas.
    """
    params.require_integrable()
    # the taper vanishes at |tau| = window, so 2 * window grid points resolve it without aliasing
    min_n = 2 * window if taper_fraction > 0 else 2 * window + 1
    if n_omega < min_n:
        raise ValidationError(f"n_omega = {n_omega} must be at least {min_n} for window {window}")
    if kernel is None or kernel.tau_max < window:
        kernel = kappa_exact(params, window)
    else:
        kernel = kernel.truncated(window)
    kc = kernel.continuum()
    c = kc * taper(window, taper_fraction)
    N = n_omega
    tau = np.arange(-window, window + 1)
    a = np.zeros(N)
    np.add.at(a, tau % N, c[np.abs(tau)] * np.where(tau % 2 == 0, 1.0, -1.0))
    X = np.fft.fft(a)
    idx = (np.arange(N) + 1) % N
    JR = X.real[idx]
    # periodic Hilbert transform: multiply Fourier coefficients by -i sign(tau)
    m = np.fft.fftfreq(N, 1.0 / N)
    JI = np.fft.fft(a * (-1j * np.sign(m)))[idx].real
    omega = -math.pi + 2 * math.pi * (np.arange(N) + 1) / N
    pref = kernel.prefactor
    w0 = pref * kernel.edge_zero_sq
    wpi = pref * kernel.edge_pi_sq
    with np.errstate(divide="ignore", invalid="ignore"):
        if w0:
            JI = JI - w0 / np.tan(omega / 2)
        if wpi:
            JI = JI + wpi * np.tan(omega / 2)
    leak = _leakage(params, omega, JR, window)
    if leak > 1e-4:
        warnings.warn(f"spectral window leakage {leak:.2e} exceeds 1e-4 of peak", LeakageWarning)
    return SpectralDensity(
        omega=omega, JR=JR, JI=JI, delta_weights={"0": w0, "pi": wpi},
        window=window, taper_fraction=taper_fraction, leakage=leak,
    )


def _leakage(params, omega, JR, window) -> float:
    peak = np.abs(JR).max()
    if peak == 0:
        return 0.0
    margin = 2 * math.pi * 20 / window
    inside = np.zeros(omega.size, dtype=bool)
    for lo, hi in model.band_edges(params):
        inside |= (omega > lo - margin) & (omega < hi + margin)
    if inside.all():
        return 0.0
    return float(np.abs(JR[~inside]).max() / peak)
