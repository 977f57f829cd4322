"""Exact influence matrix as a fermionic Gaussian pairing state.

Temporal modes are ordered time-major, ``mode = 4 * tau + flavor`` with flavors
(up+, down+, up-, down-) and ``tau = 0..t-1``.  The state is

    |I> = exp(1/2 sum_ij A_ij f_i^dag f_j^dag) |0>,   A = -A^T real,

so that ``f_i - sum_j A_ij f_j^dag`` annihilates it.  With ``K = A^T A`` and
``M = (1 + K)^-1`` the normalised correlators are ``<f_i^dag f_j> = (1 - M)_ij``
and ``<f_i f_j> = -(A M)_ij``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import NumericalError, ValidationError
from .majorana import KappaKernel, kappa_exact
from .model import ModelParams

UP_P, DN_P, UP_M, DN_M = range(4)
FLAVORS = ("up+", "down+", "up-", "down-")
COND_MAX = 1e12
P_CLIP = 1e-14


def mode(flavor: int, tau: int) -> int:
    return 4 * tau + flavor


@dataclass(frozen=True)
class GaussianIM:
    t: int
    A: np.ndarray

    @property
    def n_modes(self) -> int:
        return 4 * self.t


def build_pairing_matrix(kernel: KappaKernel | np.ndarray, t: int) -> GaussianIM:
    """Antisymmetric pairing matrix of the exact IM over ``t`` periods.

    Each ordered pair of the unsymmetrised exponent with coefficient ``c`` sets
    ``A[i, j] = c`` and ``A[j, i] = -c``.
    """
    kap = np.asarray(kernel.values if isinstance(kernel, KappaKernel) else kernel, dtype=float)
    if t < 1:
        raise ValidationError(f"t must be >= 1, got {t}")
    if kap.size < t:
        raise ValidationError(f"kernel horizon {kap.size - 1} < t - 1 = {t - 1}")
    n = 4 * t
    U = np.zeros((n, n))
    taus = np.arange(t)
    up_p = 4 * taus + UP_P
    up_m = 4 * taus + UP_M
    U[up_p, 4 * taus + DN_P] = 1.0
    U[up_m, 4 * taus + DN_M] = -1.0
    lag = taus[None, :] - taus[:, None]
    U[np.ix_(up_p, up_m)] = kap[np.abs(lag)]
    later = lag > 0
    same = np.where(later, kap[np.abs(lag)], 0.0)
    U[np.ix_(up_p, up_p)] += same
    U[np.ix_(up_m, up_m)] -= same
    A = U - U.T
    A.setflags(write=False)
    return GaussianIM(t=t, A=A)


@dataclass(frozen=True)
class CorrelationMatrix:
    """Normalised two-point blocks over ``subset``.

    ``ffd[i, j] = <f_i f_j^dag>``, ``ff[i, j] = <f_i f_j>``,
    ``fdfd[i, j] = <f_i^dag f_j^dag>``, ``fdf[i, j] = <f_i^dag f_j>``.
    """

    subset: np.ndarray
    ffd: np.ndarray
    ff: np.ndarray
    fdfd: np.ndarray
    fdf: np.ndarray

    def matrix(self) -> np.ndarray:
        return np.block([[self.ffd, self.ff], [self.fdfd, self.fdf]])


def _condition_bound(A: np.ndarray) -> float:
    # cond(1 + A^T A) <= 1 + ||A||_2^2 <= 1 + ||A||_1 ||A||_inf
    return 1.0 + np.abs(A).sum(axis=0).max() * np.abs(A).sum(axis=1).max()


def correlations(im: GaussianIM, subset=None) -> CorrelationMatrix:
    """Correlation blocks restricted to ``subset`` (all modes when omitted)."""
    n = im.n_modes
    S = np.arange(n) if subset is None else np.asarray(subset, dtype=int)
    if S.size == 0:
        raise ValidationError("subset must be non-empty")
    if S.min() < 0 or S.max() >= n:
        raise ValidationError(f"subset indices outside 0..{n - 1}")
    A = im.A
    cond = _condition_bound(A)
    if cond > COND_MAX:
        raise NumericalError(f"pairing system ill-conditioned (bound {cond:.2e})")
    K = A.T @ A
    K[np.diag_indices(n)] += 1.0
    rhs = np.zeros((n, S.size))
    rhs[S, np.arange(S.size)] = 1.0
    MS = sla.cho_solve(sla.cho_factor(K, lower=True), rhs)
    M = MS[S]
    F = -(A[S] @ MS)
    G = np.eye(S.size) - M
    return CorrelationMatrix(subset=S, ffd=np.eye(S.size) - G.T, ff=F, fdfd=-F.conj(), fdf=G)


@dataclass(frozen=True)
class EntropySpectrum:
    probabilities: np.ndarray
    entropy: float
    unit: str = "nats"

    def in_bits(self) -> float:
        return self.entropy / math.log(2)


def entropy_from_correlations(C: np.ndarray) -> EntropySpectrum:
    ev = np.linalg.eigvalsh(0.5 * (C + C.conj().T))
    if ev.min() < -1e-8 or ev.max() > 1 + 1e-8:
        raise NumericalError(f"correlation eigenvalues outside [0, 1]: [{ev.min()}, {ev.max()}]")
    pair_err = np.abs(ev + ev[::-1] - 1).max()
    if pair_err > 1e-8:
        raise NumericalError(f"eigenvalues do not pair as (p, 1 - p): error {pair_err:.2e}")
    p = np.clip(ev[: ev.size // 2], P_CLIP, 1 - P_CLIP)
    s = -np.sum(p * np.log(p) + (1 - p) * np.log1p(-p))
    return EntropySpectrum(probabilities=p, entropy=float(max(s, 0.0)))


def entanglement_entropy(im: GaussianIM, cut: int) -> EntropySpectrum:
    """Entropy of temporal sites ``0..cut-1`` (all four flavours) against the rest."""
    if not 1 <= cut < im.t:
        raise ValidationError(f"cut must satisfy 1 <= cut < t = {im.t}, got {cut}")
    return entropy_from_correlations(correlations(im, np.arange(4 * cut)).matrix())


def te_entropy_curve(params: ModelParams, t_list, cut_fraction: float = 0.5,
                     kernel: KappaKernel | None = None) -> list[tuple[int, float]]:
    """Entropy at cut ``floor(cut_fraction * t)`` for each t; a zero cut gives 0."""
    params.require_integrable()
    t_list = [int(t) for t in t_list]
    if not t_list:
        return []
    if min(t_list) < 1:
        raise ValidationError("all t must be >= 1")
    if not 0 < cut_fraction < 1:
        raise ValidationError(f"cut_fraction must lie in (0, 1), got {cut_fraction}")
    if kernel is None or kernel.tau_max < max(t_list) - 1:
        kernel = kappa_exact(params, max(t_list))
    out = []
    for t in t_list:
        cut = int(math.floor(cut_fraction * t))
        if cut == 0:
            out.append((t, 0.0))
            continue
        im = build_pairing_matrix(kernel, t)
        out.append((t, entanglement_entropy(im, cut).entropy))
    return out


# ----------------------------------------------------------------------------
# Dense Fock-space oracle

DENSE_T_MAX = 4


def fock_annihilators(n: int) -> list[sp.csr_matrix]:
    """Jordan-Wigner annihilators on ``2**n`` states; mode 0 is the most significant bit."""
    a = sp.csr_matrix(np.array([[0.0, 1.0], [0.0, 0.0]]))
    z = sp.diags([1.0, -1.0])
    eye = sp.identity(2, format="csr")
    ops = []
    for i in range(n):
        factors = [z] * i + [a] + [eye] * (n - i - 1)
        op = factors[0]
        for f in factors[1:]:
            op = sp.kron(op, f, format="csr")
        ops.append(op)
    return ops


def dense_fock_oracle(im: GaussianIM, normalize: bool = True) -> np.ndarray:
    """Expand ``prod_{i<j} (1 + A_ij f_i^dag f_j^dag)|0>`` explicitly.

    The pair operators commute and square to zero, so the product equals the
    exponential of the pairing form.
    """
    if im.t > DENSE_T_MAX:
        raise ValidationError(f"dense oracle limited to t <= {DENSE_T_MAX}, got {im.t}")
    n = im.n_modes
    cs = fock_annihilators(n)
    cd = [c.T.tocsr() for c in cs]
    psi = np.zeros(2 ** n)
    psi[0] = 1.0
    for i in range(n):
        for j in range(i + 1, n):
            if im.A[i, j] != 0.0:
                psi = psi + im.A[i, j] * (cd[i] @ (cd[j] @ psi))
    if normalize:
        psi = psi / np.linalg.norm(psi)
    return psi


def dense_correlations(psi: np.ndarray, n: int) -> CorrelationMatrix:
    """Correlation blocks of a normalised Fock vector by direct operator application."""
    cs = fock_annihilators(n)
    a_psi = np.array([c @ psi for c in cs])
    ad_psi = np.array([c.T @ psi for c in cs])
    # <f_i X> = (f_i^dag psi)^dag X psi
    fdf = a_psi.conj() @ a_psi.T
    ffd = ad_psi.conj() @ ad_psi.T
    ff = ad_psi.conj() @ a_psi.T
    fdfd = a_psi.conj() @ ad_psi.T
    return CorrelationMatrix(subset=np.arange(n), ffd=ffd, ff=ff, fdfd=fdfd, fdf=fdf)


def dense_entropy(psi: np.ndarray, n: int, n_left: int) -> float:
    """Entropy of the leading ``n_left`` modes from the Schmidt values of ``psi``."""
    s = np.linalg.svd(psi.reshape(2 ** n_left, 2 ** (n - n_left)), compute_uv=False) ** 2
    s = s[s > 1e-300] / s.sum()
    return float(-np.sum(s * np.log(s)))
