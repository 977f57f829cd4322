"""Dense spin-basis oracles for finite kicked Ising chains.

Qubit 0 is the most significant bit of a basis index and ``Z|0> = +|0>``.
One period is ``F = exp(iJ sum_j Z_j Z_{j+1}) prod_j exp(igX_j) exp(ihZ_j)``
with open boundaries: every site is kicked first, then all Ising phases act.
"""
from __future__ import annotations

import itertools
import math
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FiniteSizeWarning, ValidationError
from .model import ModelParams

DENSE_L_MAX = 12
BATCH_L_MAX = 16
IM_T_MAX = 4

# folded basis (++, +-, -+, --): index = 2 b(sigma+) + b(sigma-), b(+1) = 0
SIGMA_PLUS = np.array([1.0, 1.0, -1.0, -1.0])
SIGMA_MINUS = np.array([1.0, -1.0, 1.0, -1.0])


def kick_matrix(params: ModelParams) -> np.ndarray:
    """Single-site kick ``exp(igX) exp(ihZ)``."""
    c, s = math.cos(params.g), math.sin(params.g)
    eh = np.exp(1j * params.h)
    return np.array([[c * eh, 1j * s / eh], [1j * s * eh, c / eh]])


def z_values(L: int, site: int) -> np.ndarray:
    """Eigenvalue of Z_site on every basis index."""
    bits = (np.arange(2 ** L) >> (L - 1 - site)) & 1
    return 1.0 - 2.0 * bits


def ising_phase(L: int, J: float) -> np.ndarray:
    zz = np.zeros(2 ** L)
    for j in range(L - 1):
        zz += z_values(L, j) * z_values(L, j + 1)
    return np.exp(1j * J * zz)


@dataclass(frozen=True)
class DenseFloquet:
    L: int
    params: ModelParams
    U: np.ndarray

    def unitarity_residual(self) -> float:
        return float(np.abs(self.U.conj().T @ self.U - np.eye(2 ** self.L)).max())


def build_floquet(L: int, params: ModelParams) -> DenseFloquet:
    if not 1 <= L <= DENSE_L_MAX:
        raise ValidationError(f"dense Floquet operator needs 1 <= L <= {DENSE_L_MAX}, got {L}")
    K = kick_matrix(params)
    U = np.ones((1, 1), dtype=complex)
    for _ in range(L):
        U = np.kron(U, K)
    U = ising_phase(L, params.J)[:, None] * U
    return DenseFloquet(L=L, params=params, U=U)


def kick_blocks(L: int, K: np.ndarray, group: int = 5) -> list[np.ndarray]:
    """``K^{(x)L}`` split into Kronecker blocks of at most ``group`` qubits."""
    blocks = []
    j = 0
    while j < L:
        m = min(group, L - j)
        Km = K
        for _ in range(m - 1):
            Km = np.kron(Km, K)
        blocks.append(Km)
        j += m
    return blocks


def apply_period(psi: np.ndarray, blocks: list[np.ndarray], phase: np.ndarray) -> np.ndarray:
    """Apply one Floquet period to the columns of ``psi`` (shape ``(2**L, B)``)."""
    dim, B = psi.shape
    lead = 1
    for Km in blocks:
        m = Km.shape[0]
        psi = np.matmul(Km, psi.reshape(lead, m, -1)).reshape(dim, B)
        lead *= m
    psi *= phase[:, None]
    return psi


def _autocorrelation(L: int, params: ModelParams, site: int, t_max: int,
                     batch: int = 512) -> np.ndarray:
    """``Tr[F^-t Z_s F^t Z_s] / 2^L`` for t = 0..t_max.

    Since ``Tr[F^-t Z_s F^t] = 0`` the trace equals ``2 Tr[F^-t Z_s F^t P_s]`` with
    ``P_s`` the projector on ``Z_s = +1``, so only half of the basis states are evolved.
    """
    if L > BATCH_L_MAX:
        raise ValidationError(f"L = {L} exceeds the batched ED limit {BATCH_L_MAX}")
    dim = 2 ** L
    blocks = kick_blocks(L, kick_matrix(params))
    phase = ising_phase(L, params.J)
    z = z_values(L, site)
    up = np.flatnonzero(z > 0)
    acc = np.zeros(t_max + 1)
    for start in range(0, up.size, batch):
        cols = up[start:start + batch]
        psi = np.zeros((dim, cols.size), dtype=complex)
        psi[cols, np.arange(cols.size)] = 1.0
        for t in range(t_max + 1):
            if t:
                psi = apply_period(psi, blocks, phase)
            acc[t] += z @ (psi.real ** 2 + psi.imag ** 2).sum(axis=1)
    return 2 * acc / dim


def heisenberg_kappa(L: int, params: ModelParams, tau_max: int) -> np.ndarray:
    """Kernel ``2 tan^2 J Tr[F^-tau Z_0 F^tau Z_0] / 2^L`` from the spin chain."""
    params.require_integrable()
    if tau_max < 0:
        raise ValidationError("tau_max must be >= 0")
    if tau_max > L - 2:
        raise ValidationError(f"tau_max = {tau_max} beyond light-cone validity L - 2 = {L - 2}")
    return 2 * math.tan(params.J) ** 2 * _autocorrelation(L, params, 0, tau_max)


def center_site(L: int) -> int:
    """0-based index of site ceil(L / 2) in 1-based counting."""
    return (L + 1) // 2 - 1


def czz_ed(L: int, params: ModelParams, t_max: int) -> np.ndarray:
    """Infinite-temperature autocorrelation of Z at the central site, t = 0..t_max."""
    if t_max < 0:
        raise ValidationError("t_max must be >= 0")
    if 2 * t_max > L - 1:
        warnings.warn(
            f"t_max = {t_max} exceeds the light-cone bound (L - 1) / 2 = {(L - 1) / 2}; "
            "values carry finite-size effects",
            FiniteSizeWarning,
        )
    return _autocorrelation(L, params, center_site(L), t_max)


# ----------------------------------------------------------------------------
# Influence-matrix tensors

_MAGIC = b"KIMT"
_VERSION = 1
_HEADER = struct.Struct("<4sIII3d")


@dataclass
class IMTensor:
    """Spin-basis IM over ``t`` periods, 16 entries per period.

    Axis ``tau`` carries ``b(sigma+) + 2 b(s+) + 4 b(sigma-) + 8 b(s-)`` where
    sigma enters the coupling gate and s leaves it; ``b(+1) = 0``, ``b(-1) = 1``.
    """

    t: int
    L: int
    params: ModelParams
    data: np.ndarray

    @staticmethod
    def from_folded(folded: np.ndarray, L: int, params: ModelParams) -> "IMTensor":
        """Embed a folded ``(4,)*t`` IM; the diagonal coupling forces ``s = sigma``."""
        t = folded.ndim
        emb = np.zeros((16, 4))
        for f in range(4):
            bp, bm = f >> 1, f & 1
            emb[bp + 2 * bp + 4 * bm + 8 * bm, f] = 1.0
        data = folded
        for ax in range(t):
            data = np.tensordot(data, emb, axes=([0], [1]))
        return IMTensor(t=t, L=L, params=params, data=data)

    def folded(self) -> np.ndarray:
        """Restriction to ``s = sigma`` in the folded (4,)*t basis."""
        sel = [bp + 2 * bp + 4 * bm + 8 * bm for bp in (0, 1) for bm in (0, 1)]
        return self.data[np.ix_(*([sel] * self.t))]

    def keldysh_trace(self, rho_s=None, gate=None) -> complex:
        """Contract with subsystem gates ``gate`` (identity by default), initial ``rho_s``
        (maximally mixed by default) and a final trace over the last outgoing spin."""
        rho = np.eye(2) / 2 if rho_s is None else np.asarray(rho_s, dtype=complex)
        U = np.eye(2) if gate is None else np.asarray(gate, dtype=complex)
        G = np.einsum("ab,cd->acbd", U, U.conj())
        d = self.data.reshape((2,) * (4 * self.t), order="F")
        E = np.einsum("pm,pqmn...->qn...", rho, d)
        for _ in range(1, self.t):
            E = np.einsum("PMqn,qn...->PM...", G, E)
            E = np.einsum("pmpqmn...->qn...", E)
        return complex(np.trace(E))

    def hermiticity_residual(self) -> float:
        """``|| I(+,-) - conj(I(-,+)) ||`` with branches swapped per period."""
        d = self.data.reshape((4, 4) * self.t, order="F")
        perm = []
        for tau in range(self.t):
            perm += [2 * tau + 1, 2 * tau]
        swapped = np.transpose(d, perm)
        return float(np.abs(d - swapped.conj()).max())

    def save(self, path) -> None:
        header = _HEADER.pack(_MAGIC, _VERSION, self.t, self.L, self.params.J, self.params.g, self.params.h)
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(np.ascontiguousarray(self.data.ravel(order="F"), dtype="<c16").tobytes())

    @staticmethod
    def load(path) -> "IMTensor":
        raw = Path(path).read_bytes()
        magic, version, t, L, J, g, h = _HEADER.unpack_from(raw)
        if magic != _MAGIC or version != _VERSION:
            raise ValidationError(f"{path}: not an IM tensor file (magic {magic!r}, version {version})")
        flat = np.frombuffer(raw, dtype="<c16", offset=_HEADER.size)
        if flat.size != 16 ** t:
            raise ValidationError(f"{path}: expected {16 ** t} entries, found {flat.size}")
        data = flat.reshape((16,) * t, order="F").astype(complex)
        return IMTensor(t=t, L=L, params=ModelParams(J, g, h), data=data)


def _coupled_site(L: int, side: str) -> int:
    if side == "right":
        return 0
    if side == "left":
        return L - 1
    raise ValidationError(f"side must be 'right' or 'left', got {side!r}")


def im_folded_ed(L: int, params: ModelParams, t: int, side: str = "right") -> np.ndarray:
    """Folded IM ``Tr[A(sigma-)^dag A(sigma+)] / 2^L`` with
    ``A(sigma) = prod_tau exp(iJ sigma_tau Z_c) F_E`` for an environment of L sites.

    ``side='right'`` puts the environment to the right of the subsystem (coupled to
    its first site); ``'left'`` couples through its last site.
    """
    if not 1 <= t <= IM_T_MAX:
        raise ValidationError(f"dense IM limited to 1 <= t <= {IM_T_MAX}, got {t}")
    if L < t + 1:
        raise ValidationError(f"L = {L} < t + 1 breaks light-cone exactness")
    U = build_floquet(L, params).U
    zc = z_values(L, _coupled_site(L, side))
    couple = {s: np.exp(1j * params.J * s * zc)[:, None] for s in (1, -1)}
    trajs = list(itertools.product((1, -1), repeat=t))
    mats = []
    for traj in trajs:
        M = np.eye(2 ** L, dtype=complex)
        for s in traj:
            M = couple[s] * (U @ M)
        mats.append(M.reshape(-1))
    mats = np.array(mats)
    gram = mats.conj() @ mats.T / 2 ** L  # gram[b, a] = Tr(A_b^dag A_a) / 2^L
    out = np.zeros((4,) * t, dtype=complex)
    for a, tp in enumerate(trajs):
        for b, tm in enumerate(trajs):
            idx = tuple(2 * (p < 0) + (m < 0) for p, m in zip(tp, tm))
            out[idx] = gram[b, a]
    return out


def im_tensor_ed(L: int, params: ModelParams, t: int, side: str = "right") -> IMTensor:
    return IMTensor.from_folded(im_folded_ed(L, params, t, side), L, params)


def perfect_dephaser_folded(t: int) -> np.ndarray:
    """Product IM ``prod_tau delta(sigma+_tau, sigma-_tau)`` in the folded basis."""
    site = np.array([1.0, 0.0, 0.0, 1.0], dtype=complex)
    out = np.ones((), dtype=complex)
    for _ in range(t):
        out = np.multiply.outer(out, site)
    return out


def folded_kick(params: ModelParams) -> np.ndarray:
    """Kick acting on a folded spin, ``K (x) conj(K)`` in the (++, +-, -+, --) basis."""
    K = kick_matrix(params)
    return np.kron(K, K.conj())


def coupling_phase(J: float) -> np.ndarray:
    """``ph[x, z] = exp(iJ (x+ z+ - x- z-))`` between two folded spins."""
    return np.exp(1j * J * (np.outer(SIGMA_PLUS, SIGMA_PLUS) - np.outer(SIGMA_MINUS, SIGMA_MINUS)))


def dual_transfer_dense(folded: np.ndarray, params: ModelParams) -> np.ndarray:
    """Grow a folded IM by one environment site, enumerating the new site's trajectories.

    The new site starts maximally mixed, is kicked, couples to the outer IM
    ``folded`` and to the subsystem, and is traced out at the end.
    """
    t = folded.ndim
    Kf = folded_kick(params)
    ph = coupling_phase(params.J)
    out = np.zeros(4 ** t, dtype=complex)
    start = np.array([0.5, 0.0, 0.0, 0.5], dtype=complex)
    for zt in itertools.product(range(4), repeat=t):
        if zt[-1] not in (0, 3):
            continue
        w = 1.0 + 0j
        b = start
        for z in zt:
            w *= (Kf @ b)[z]
            b = np.zeros(4, dtype=complex)
            b[z] = 1.0
        if w == 0 or folded[zt] == 0:
            continue
        P = np.ones(1, dtype=complex)
        for z in zt:
            P = np.kron(P, ph[:, z])
        out += w * folded[zt] * P
    return out.reshape((4,) * t)
