"""Matrix-product influence matrices in the folded spin basis.

One MPS site per Floquet period carries the folded subsystem spin (local
dimension 4, basis ++, +-, -+, --).  The coupling gate is diagonal in Z, so the
spin entering and leaving it coincide and a single folded leg per period holds
the whole IM.

The dual transfer matrix adds one environment site next to the subsystem.  Its
MPO tensor at period tau is

    W[a, b, x, z] = Kf[z, a] D[b, z] P[x, z]

where ``a, b`` are the folded states of the new site before and after the
period, ``z`` is the leg contracted with the old IM, ``x`` is the new physical
leg, ``Kf = K (x) conj(K)`` is the folded kick and ``P`` the folded Ising phase.
``D`` is the identity in the bulk and the trace vector (1, 0, 0, 1) on the last
period; the maximally mixed start state is folded into the first kick.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import TruncationBreakdown, ValidationError
from .model import ModelParams
from .spin_ed import coupling_phase, folded_kick

SV_FLOOR = 1e-12
TRACE_VEC = np.array([1.0, 0.0, 0.0, 1.0])
MIXED_VEC = np.array([0.5, 0.0, 0.0, 0.5])
Z_FORWARD = np.array([1.0, 1.0, -1.0, -1.0])
Z_FOLDED_OP = np.array([1.0, 0.0, 0.0, -1.0])


@dataclass
class TemporalMPS:
    """IM as ``exp(log_scale) * A_0 A_1 ... A_{t-1}`` with ``A_k`` of shape (Dl, 4, Dr).

    When ``canonical`` is set, sites 1..t-1 are right isometries, site 0 holds
    the unit-norm centre and ``schmidt[b - 1]`` are the normalised Schmidt
    values across bond ``b`` (between periods b - 1 and b).
    """

    tensors: list
    log_scale: float = 0.0
    canonical: bool = False
    schmidt: list = field(default_factory=list)

    @property
    def t(self) -> int:
        return len(self.tensors)

    @property
    def bond_dims(self) -> list[int]:
        return [A.shape[2] for A in self.tensors[:-1]]

    def copy(self) -> "TemporalMPS":
        return TemporalMPS([A.copy() for A in self.tensors], self.log_scale, self.canonical,
                           [s.copy() for s in self.schmidt])

    def to_dense(self) -> np.ndarray:
        out = self.tensors[0]
        for A in self.tensors[1:]:
            out = np.tensordot(out, A, axes=([-1], [0]))
        return math.exp(self.log_scale) * out.reshape((4,) * self.t)

    @staticmethod
    def from_dense(folded: np.ndarray, chi: int | None = None) -> "TemporalMPS":
        """Exact (or chi-truncated) MPS of a dense folded tensor by successive SVDs."""
        t = folded.ndim
        norm = np.linalg.norm(folded)
        if norm == 0:
            raise TruncationBreakdown("cannot factorise the zero tensor")
        rest = (folded / norm).reshape(1, -1)
        tensors = []
        for _ in range(t - 1):
            Dl = rest.shape[0]
            m = rest.reshape(Dl * 4, -1)
            U, s, Vh = np.linalg.svd(m, full_matrices=False)
            keep = _keep_count(s, chi)
            tensors.append(U[:, :keep].reshape(Dl, 4, keep))
            rest = s[:keep, None] * Vh[:keep]
        tensors.append(rest.reshape(rest.shape[0], 4, 1))
        mps = TemporalMPS(tensors, math.log(norm))
        return canonicalize(mps)

    def isometry_residual(self) -> float:
        """Deviation of sites 1..t-1 from right isometries."""
        worst = 0.0
        for A in self.tensors[1:]:
            m = A.reshape(A.shape[0], -1)
            worst = max(worst, float(np.abs(m @ m.conj().T - np.eye(A.shape[0])).max()))
        return worst

    def keldysh_trace(self) -> complex:
        """Contraction with identity subsystem gates, maximally mixed start and final trace."""
        out = 0j
        for f in (0, 3):
            v = np.ones(1, dtype=complex)
            for A in self.tensors:
                v = v @ A[:, f, :]
            out += 0.5 * v[0]
        return out * math.exp(self.log_scale)

    def save(self, path) -> None:
        """Checkpoint as ``.npz`` with a format tag, the scale and all site tensors."""
        arrays = {f"site{k}": A for k, A in enumerate(self.tensors)}
        np.savez(path, format=np.array("kicked-im-mps-v1"), t=self.t, log_scale=self.log_scale,
                 canonical=self.canonical, **arrays)

    @staticmethod
    def load(path) -> "TemporalMPS":
        with np.load(path) as z:
            if str(z["format"]) != "kicked-im-mps-v1":
                raise ValidationError(f"{path}: unknown MPS checkpoint format")
            tensors = [z[f"site{k}"] for k in range(int(z["t"]))]
            mps = TemporalMPS(tensors, float(z["log_scale"]))
            canonical = bool(z["canonical"])
        return canonicalize(mps) if canonical else mps


@dataclass(frozen=True)
class TransferMPO:
    """Dual transfer matrix over ``t`` periods in factorised form (see module docstring)."""

    kicks: tuple
    links: tuple
    phase: np.ndarray

    @property
    def t(self) -> int:
        return len(self.kicks)

    def tensors(self) -> list[np.ndarray]:
        """Explicit MPO tensors ``W[a, b, x, z]``; bulk bond dimension 4."""
        return [np.einsum("za,bz,xz->abxz", K, D, self.phase) for K, D in zip(self.kicks, self.links)]

    @property
    def bond_dims(self) -> list[int]:
        return [D.shape[0] for D in self.links[:-1]]


def build_dual_mpo(params: ModelParams, t: int) -> TransferMPO:
    if t < 1:
        raise ValidationError(f"t must be >= 1, got {t}")
    Kf = folded_kick(params)
    kicks = [Kf] * t
    kicks[0] = (Kf @ MIXED_VEC)[:, None]
    links = [np.eye(4)] * t
    links[-1] = TRACE_VEC[None, :]
    return TransferMPO(kicks=tuple(kicks), links=tuple(links), phase=coupling_phase(params.J))


def identity_mpo(t: int) -> TransferMPO:
    """Bond-1 MPO acting as the identity on the physical legs."""
    if t < 1:
        raise ValidationError(f"t must be >= 1, got {t}")
    return TransferMPO(kicks=(np.ones((4, 1)),) * t, links=(np.ones((1, 4)),) * t, phase=np.eye(4))


def apply_mpo_dense(mpo: TransferMPO, folded: np.ndarray) -> np.ndarray:
    """Reference contraction of the MPO with a dense folded IM (small t only)."""
    t = folded.ndim
    op = np.ones((1, 1, 1))
    for W in mpo.tensors():
        # op[a, X, Z] with a the open left bond
        op = np.einsum("aXZ,abxz->bXxZz", op, W)
        op = op.reshape(op.shape[0], op.shape[1] * 4, op.shape[3] * 4)
    return (op[0] @ folded.reshape(-1)).reshape((4,) * t)


def perfect_dephaser_im(t: int) -> TemporalMPS:
    """Product IM with site vector (1, 0, 0, 1): forward and backward spins agree."""
    if t < 1:
        raise ValidationError(f"t must be >= 1, got {t}")
    site = TRACE_VEC.astype(complex).reshape(1, 4, 1)
    tensors = [site / math.sqrt(2)] * t
    mps = TemporalMPS([A.copy() for A in tensors], 0.5 * t * math.log(2), canonical=True,
                      schmidt=[np.ones(1) for _ in range(t - 1)])
    return mps


@dataclass
class TruncationReport:
    discarded_weight: list = field(default_factory=list)
    max_bond: int = 0
    iterations: int = 0
    chi: int = 0
    sv_floor: float = SV_FLOOR
    trace_drift: list = field(default_factory=list)

    @property
    def total_discarded(self) -> float:
        return float(sum(self.discarded_weight))

    def merge(self, other: "TruncationReport") -> None:
        self.discarded_weight.extend(other.discarded_weight)
        self.max_bond = max(self.max_bond, other.max_bond)
        self.iterations += other.iterations
        self.trace_drift.extend(other.trace_drift)


def _keep_count(s: np.ndarray, chi: int | None) -> int:
    if s.size == 0 or s[0] < 1e-300:
        raise TruncationBreakdown("all singular values underflowed")
    keep = int(np.count_nonzero(s > SV_FLOOR * s[0]))
    if chi is not None:
        keep = min(keep, chi)
    return max(keep, 1)


def canonicalize(mps: TemporalMPS, chi: int | None = None) -> TemporalMPS:
    """Right-to-left SVD sweep (after a left QR sweep) giving the canonical form."""
    tensors = [A.astype(complex) for A in mps.tensors]
    log_scale = mps.log_scale
    # left QR sweep
    for k in range(len(tensors) - 1):
        A = tensors[k]
        Dl, d, Dr = A.shape
        Q, R = np.linalg.qr(A.reshape(Dl * d, Dr))
        tensors[k] = Q.reshape(Dl, d, Q.shape[1])
        tensors[k + 1] = np.tensordot(R, tensors[k + 1], axes=([1], [0]))
    tensors, log_scale, schmidt, _ = _svd_sweep(tensors, log_scale, chi)
    return TemporalMPS(tensors, log_scale, canonical=True, schmidt=schmidt)


def _svd_sweep(tensors, log_scale, chi):
    """Right-to-left truncating SVD sweep over a left-canonical chain."""
    t = len(tensors)
    C = tensors[-1]
    schmidt = [None] * (t - 1)
    discarded = 0.0
    for k in range(t - 1, 0, -1):
        Dl, d, Dr = C.shape
        U, s, Vh = np.linalg.svd(C.reshape(Dl, d * Dr), full_matrices=False)
        keep = _keep_count(s, chi)
        w = s ** 2
        total = w.sum()
        discarded += float(w[keep:].sum() / total)
        s_kept = s[:keep]
        tensors[k] = Vh[:keep].reshape(keep, d, Dr)
        schmidt[k - 1] = s_kept / np.linalg.norm(s_kept)
        C = np.tensordot(tensors[k - 1], U[:, :keep] * s_kept, axes=([2], [0]))
    norm = np.linalg.norm(C)
    if not norm > 0:
        raise TruncationBreakdown("state collapsed to zero norm")
    tensors[0] = C / norm
    return tensors, log_scale + math.log(norm), schmidt, discarded


def _gram_chain(mps: TemporalMPS, mpo: TransferMPO) -> list[np.ndarray]:
    """Right Gram matrices of MPO x MPS; ``G[k]`` lives on the bond right of site k."""
    t = mps.t
    Pi = mpo.phase.T @ mpo.phase.conj()  # Pi[z, w] = sum_x P[x, z] conj(P[x, w])
    G = [None] * t
    G[t - 1] = np.ones((1, 1, 1, 1), dtype=complex)
    for k in range(t - 1, 0, -1):
        M = mps.tensors[k]
        K = mpo.kicks[k]
        D = mpo.links[k]
        Gk = G[k]
        # Gk[b, beta, b', beta'] -> GG[z, w, beta, beta'] through the link maps
        GG = np.einsum("bz,bpcq,cw->zwpq", D, Gk, D.conj(), optimize=True)
        # T[z, w] = M_z GG[z, w] M_w^dag
        T = (M.transpose(1, 0, 2)[:, None] @ GG) @ M.conj().transpose(1, 2, 0)[None]
        Gn = np.einsum("za,wc,zw,zwib->aicb", K, K.conj(), Pi, T, optimize=True)
        nrm = np.abs(Gn).max()
        G[k - 1] = Gn / (nrm if nrm > 0 else 1.0)
    return G


def apply_and_truncate(mps: TemporalMPS, mpo: TransferMPO, chi: int, normalize_trace: bool = True):
    """Apply the MPO and compress to bond dimension ``chi``.

    Scheme: a left-to-right density-matrix sweep projects each bond of the exact
    product (bond 4 chi) onto the dominant ``chi`` eigenvectors of its reduced
    density matrix, built from the right Gram matrices; a right-to-left SVD
    sweep then fixes the canonical form, the exact Schmidt values, the chi cap
    and the relative singular-value floor.

    Truncation does not preserve the Keldysh trace exactly; its relative change
    is recorded in ``report.trace_drift`` and, with ``normalize_trace``, the
    output is rescaled to unit trace.
    """
    if mps.t != mpo.t:
        raise ValidationError(f"MPS has {mps.t} sites, MPO has {mpo.t}")
    if chi < 1:
        raise ValidationError("chi must be >= 1")
    t = mps.t
    G = _gram_chain(mps, mpo)
    X = np.ones((1, mpo.kicks[0].shape[1], mps.tensors[0].shape[0]), dtype=complex)
    log_scale = mps.log_scale
    tensors = []
    discarded = []
    for k in range(t):
        M = mps.tensors[k]
        K = mpo.kicks[k]
        D = mpo.links[k]
        S = np.tensordot(K, X, axes=([1], [1]))  # (z, i, p)
        U = S @ M.transpose(1, 0, 2)  # (z, i, q)
        PD = mpo.phase[:, None, :] * D[None]  # (x, b, z)
        Y = np.tensordot(PD, U, axes=([2], [0])).transpose(2, 0, 1, 3)
        nrm = np.abs(Y).max()
        if not nrm > 0:
            raise TruncationBreakdown("MPO application annihilated the state")
        Y = Y / nrm
        log_scale += math.log(nrm)
        i, x, b, q = Y.shape
        if k == t - 1:
            tensors.append(Y.reshape(i, x, b * q))
            break
        Ym = Y.reshape(i * x, b * q)
        Gm = G[k].reshape(b * q, b * q)
        rho = Ym @ Gm @ Ym.conj().T
        rho = 0.5 * (rho + rho.conj().T)
        n = rho.shape[0]
        keep = min(chi, n)
        lam, V = sla.eigh(rho, subset_by_index=(n - keep, n - 1), check_finite=False)
        lam_all = np.trace(rho).real
        lam, V = lam[::-1], V[:, ::-1]
        if lam_all <= 0 or lam[0] <= 0:
            raise TruncationBreakdown(f"reduced density matrix vanished at bond {k + 1}")
        keep = max(1, int(np.count_nonzero(lam > SV_FLOOR ** 2 * lam[0])))
        lam, V = lam[:keep], V[:, :keep]
        discarded.append(max(0.0, 1.0 - lam.sum() / lam_all))
        tensors.append(V.reshape(i, x, keep))
        X = (V.conj().T @ Ym).reshape(keep, b, q)
    tensors, log_scale, schmidt, disc2 = _svd_sweep(tensors, log_scale, chi)
    out = TemporalMPS(tensors, log_scale, canonical=True, schmidt=schmidt)
    tr_in, tr_out = mps.keldysh_trace(), out.keldysh_trace()
    drift = abs(tr_out / tr_in - 1) if abs(tr_in) > 0 else float("nan")
    if normalize_trace:
        if not abs(tr_out) > 0:
            raise TruncationBreakdown("Keldysh trace vanished after truncation")
        out.tensors[0] = out.tensors[0] * (abs(tr_out) / tr_out)
        out.log_scale -= math.log(abs(tr_out))
    report = TruncationReport(discarded_weight=[float(sum(discarded)) + disc2],
                              max_bond=max(out.bond_dims, default=1), iterations=1, chi=chi,
                              trace_drift=[drift])
    return out, report


def fixed_point_im(params: ModelParams, t: int, chi: int, iterations: int | None = None,
                   boundary: TemporalMPS | None = None, callback=None):
    """Thermodynamic IM: ``iterations`` (default t) MPO applications to the perfect dephaser."""
    if t < 1 or chi < 1:
        raise ValidationError(f"need t >= 1 and chi >= 1, got t = {t}, chi = {chi}")
    n_iter = t if iterations is None else iterations
    mpo = build_dual_mpo(params, t)
    mps = perfect_dephaser_im(t) if boundary is None else boundary
    report = TruncationReport(chi=chi)
    for it in range(n_iter):
        mps, rep = apply_and_truncate(mps, mpo, chi)
        report.merge(rep)
        if callback is not None:
            callback(it, mps, rep)
    return mps, report


def mps_entropy(mps: TemporalMPS, bond: int) -> float:
    """Von Neumann entropy (nats) across ``bond`` (between periods bond-1 and bond)."""
    if not mps.canonical:
        raise ValidationError("entropy requires a canonical MPS")
    if not 1 <= bond < mps.t:
        raise ValidationError(f"bond must satisfy 1 <= bond < t = {mps.t}")
    p = mps.schmidt[bond - 1] ** 2
    p = p[p > 0]
    return max(0.0, float(-np.sum(p * np.log(p))))


def restrict(mps: TemporalMPS, t_new: int) -> TemporalMPS:
    """IM of a shorter horizon by fixing later periods to equal forward/backward spins.

    Identical spins on both branches after ``t_new`` cancel by unitarity, so any
    diagonal folded state projects the IM onto its first ``t_new`` periods; the
    mixed state ``(1, 0, 0, 1) / 2`` is used here.
    """
    if not 1 <= t_new <= mps.t:
        raise ValidationError(f"t_new must lie in 1..{mps.t}")
    tail = np.ones((1,), dtype=complex)
    for A in reversed(mps.tensors[t_new:]):
        tail = np.tensordot(A, tail, axes=([2], [0])) @ MIXED_VEC
    tensors = [A.copy() for A in mps.tensors[:t_new]]
    tensors[-1] = np.tensordot(tensors[-1], tail, axes=([2], [0]))[:, :, None]
    return canonicalize(TemporalMPS(tensors, mps.log_scale))


def _forward(E: np.ndarray, L: np.ndarray, R: np.ndarray, Kf: np.ndarray) -> np.ndarray:
    """One period of the subsystem zipper: kick, then couple to both IM sites."""
    E = (E @ Kf.T).transpose(2, 0, 1)  # (u, i, j)
    E = L.transpose(1, 2, 0) @ E @ R.transpose(1, 0, 2)  # (u, a, b)
    return E.transpose(1, 2, 0)


def _backward(F: np.ndarray, L: np.ndarray, R: np.ndarray, Kf: np.ndarray) -> np.ndarray:
    """Transpose of ``_forward`` acting on a right environment."""
    F = L.transpose(1, 0, 2) @ F.transpose(2, 0, 1) @ R.transpose(1, 2, 0)  # (u, i, j)
    return F.transpose(1, 2, 0) @ Kf


def czz_series(im_left: TemporalMPS, im_right: TemporalMPS, params: ModelParams) -> np.ndarray:
    """``<Z(t) Z(0)>`` of a subsystem spin for t = 0..horizon from one pair of IMs.

    Z(0) enters through the initial folded state and Z(t) is applied to the
    forward branch after period t; the network then runs to the IM horizon,
    where the final trace removes the later periods.  Each value is divided by
    the network without insertions.  For the reflection-symmetric chain the
    right IM serves as the left IM unchanged.
    """
    if im_left.t != im_right.t:
        raise ValidationError(f"IM horizons differ: {im_left.t} vs {im_right.t}")
    t = im_right.t
    Kf = folded_kick(params)
    Ls, Rs = im_left.tensors, im_right.tensors
    # right environments, each rescaled; the scale cancels in the ratio at fixed t
    envs = [None] * (t + 1)
    F = TRACE_VEC.astype(complex)[None, None, :]
    envs[t] = F
    for k in range(t - 1, -1, -1):
        F = _backward(F, Ls[k], Rs[k], Kf)
        F = F / np.abs(F).max()
        envs[k] = F
    Ez = (0.5 * Z_FOLDED_OP).astype(complex)[None, None, :]
    E1 = (0.5 * TRACE_VEC).astype(complex)[None, None, :]
    out = np.empty(t + 1)
    out[0] = 1.0
    for k in range(t):
        Ez = _forward(Ez, Ls[k], Rs[k], Kf)
        E1 = _forward(E1, Ls[k], Rs[k], Kf)
        scale = np.abs(E1).max()
        if not scale > 0:
            raise TruncationBreakdown(f"normalisation network vanished at period {k + 1}")
        Ez, E1 = Ez / scale, E1 / scale
        num = np.sum(Ez * Z_FORWARD * envs[k + 1])
        den = np.sum(E1 * envs[k + 1])
        out[k + 1] = (num / den).real
    return out


def czz_from_im(im_left: TemporalMPS, im_right: TemporalMPS, params: ModelParams, t: int) -> float:
    """Single value of ``czz_series``."""
    if not 0 <= t <= im_right.t:
        raise ValidationError(f"t must lie in 0..{im_right.t}")
    return float(czz_series(im_left, im_right, params)[t])
