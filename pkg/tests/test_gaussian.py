import itertools
import math
from functools import lru_cache

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kicked_im.errors import ValidationError
from kicked_im.gaussian import (
    GaussianIM,
    build_pairing_matrix,
    correlations,
    dense_correlations,
    dense_entropy,
    dense_fock_oracle,
    entanglement_entropy,
    entropy_from_correlations,
    te_entropy_curve,
)
from kicked_im.majorana import KappaKernel, kappa_exact
from kicked_im.model import ModelParams

Q = math.pi / 4


def pfaffian(M: np.ndarray) -> float:
    """Expansion along the first row; fine for the small blocks used here."""
    n = M.shape[0]

    @lru_cache(maxsize=None)
    def pf(idx: tuple) -> float:
        if not idx:
            return 1.0
        i, rest = idx[0], idx[1:]
        total = 0.0
        for pos, j in enumerate(rest):
            if M[i, j] != 0:
                total += (-1) ** pos * M[i, j] * pf(rest[:pos] + rest[pos + 1:])
        return total

    return pf(tuple(range(n)))


# --- pairing matrix --------------------------------------------------------------


def test_single_period_matrix_by_hand():
    k0 = 2 * math.tan(0.31) ** 2
    A = build_pairing_matrix(np.array([k0]), 1).A
    expected = np.array([
        [0, 1, k0, 0],
        [-1, 0, 0, 0],
        [-k0, 0, 0, -1],
        [0, 0, 1, 0],
    ])
    assert np.array_equal(A, expected)


def test_self_dual_matrix_is_local_in_time():
    im = build_pairing_matrix(kappa_exact(ModelParams(Q, Q), 4), 5)
    A = im.A
    for tau in range(5):
        b = 4 * tau
        assert A[b, b + 1] == 1 and A[b + 2, b + 3] == -1
        assert A[b, b + 2] == pytest.approx(2.0, abs=1e-14)
    mask = np.zeros_like(A, dtype=bool)
    for tau in range(5):
        mask[4 * tau:4 * tau + 4, 4 * tau:4 * tau + 4] = True
    assert np.abs(A[~mask]).max() < 1e-10


def test_block_rules():
    kap = np.array([0.5, 0.2, -0.1])
    A = build_pairing_matrix(kap, 3).A
    assert np.array_equal(A, -A.T)
    up_p, dn_p, up_m, dn_m = (np.arange(3) * 4 + f for f in range(4))
    for a in range(3):
        for b in range(3):
            assert A[up_p[a], up_m[b]] == kap[abs(b - a)]
            if a < b:
                assert A[up_p[a], up_p[b]] == kap[b - a]
                assert A[up_m[a], up_m[b]] == -kap[b - a]
            assert A[dn_p[a], dn_m[b]] == 0 and A[up_p[a], dn_m[b]] == 0
            if a != b:
                assert A[dn_p[a], dn_p[b]] == 0 and A[up_p[a], dn_p[b]] == 0


def test_pairing_matrix_rejects_short_kernel():
    with pytest.raises(ValidationError):
        build_pairing_matrix(np.array([1.0, 0.2]), 3)


# --- dense Fock oracle ------------------------------------------------------------


def test_vacuum_for_zero_pairing():
    psi = dense_fock_oracle(GaussianIM(t=1, A=np.zeros((4, 4))))
    assert psi[0] == 1.0 and np.count_nonzero(psi) == 1


def test_single_period_amplitudes_by_hand():
    # (1 + f0+ f1+)(1 - f2+ f3+)(1 + 2 f0+ f2+)|0>, mode 0 most significant
    psi = dense_fock_oracle(build_pairing_matrix(np.array([2.0]), 1))
    expected = np.zeros(16)
    expected[[0b0000, 0b1100, 0b0011, 0b1010, 0b1111]] = [1, 1, -1, 2, -1]
    assert np.allclose(psi, expected / np.linalg.norm(expected), atol=1e-15)


def test_dense_oracle_amplitudes_are_pfaffians():
    im = build_pairing_matrix(kappa_exact(ModelParams(0.31, 0.5), 2), 3)
    psi = dense_fock_oracle(im, normalize=False)
    n = im.n_modes
    for occ in itertools.product((0, 1), repeat=n):
        S = [i for i in range(n) if occ[i]]
        idx = int("".join(map(str, occ)), 2)
        if len(S) % 2:
            assert psi[idx] == 0
        elif len(S) <= 6:
            assert psi[idx] == pytest.approx(pfaffian(im.A[np.ix_(S, S)]), abs=1e-12)


def test_dense_oracle_size_limit():
    with pytest.raises(ValidationError):
        dense_fock_oracle(GaussianIM(t=5, A=np.zeros((20, 20))))


# --- correlations ------------------------------------------------------------------


def test_vacuum_correlations():
    C = correlations(GaussianIM(t=2, A=np.zeros((8, 8))))
    assert np.array_equal(C.ffd, np.eye(8))
    for blk in (C.ff, C.fdfd, C.fdf):
        assert np.abs(blk).max() == 0


@pytest.mark.parametrize("J,g", [(0.31, 0.5), (0.31, Q), (Q, 0.31), (1.2, 0.9)])
@pytest.mark.parametrize("t", [1, 2, 3])
def test_correlations_match_dense_oracle(J, g, t):
    im = build_pairing_matrix(kappa_exact(ModelParams(J, g), t), t)
    C = correlations(im)
    D = dense_correlations(dense_fock_oracle(im), im.n_modes)
    for name in ("ffd", "ff", "fdfd", "fdf"):
        assert np.abs(getattr(C, name) - getattr(D, name)).max() < 1e-10, name


@settings(max_examples=20, deadline=None)
@given(st.floats(0.05, 1.5), st.floats(0.05, 1.5), st.integers(2, 12))
def test_correlation_matrix_structure(J, g, t):
    im = build_pairing_matrix(kappa_exact(ModelParams(J, g), t), t)
    C = correlations(im)
    M = C.matrix()
    n = im.n_modes
    assert np.abs(M - M.conj().T).max() < 1e-10
    assert np.abs(C.ffd + C.fdf.T - np.eye(n)).max() < 1e-10
    assert np.abs(M @ M - M).max() < 1e-8
    A = im.A
    # annihilators f_i - sum_j A_ij f_j^dag: moving them to the right of a partner operator
    assert np.abs(C.fdf - C.fdfd @ A.T).max() < 1e-10
    assert np.abs(C.ff - C.ffd @ A.T).max() < 1e-10


def test_subset_correlations_are_restrictions():
    im = build_pairing_matrix(kappa_exact(ModelParams(0.31, 0.5), 6), 6)
    full = correlations(im)
    sub = np.array([1, 4, 7, 10, 17])
    part = correlations(im, sub)
    assert np.abs(part.fdf - full.fdf[np.ix_(sub, sub)]).max() < 1e-13
    assert np.abs(part.ff - full.ff[np.ix_(sub, sub)]).max() < 1e-13


def test_correlations_reject_bad_subset():
    im = build_pairing_matrix(np.array([1.0]), 1)
    with pytest.raises(ValidationError):
        correlations(im, [])
    with pytest.raises(ValidationError):
        correlations(im, [7])


# --- entropy -------------------------------------------------------------------------


def test_entropy_matches_dense_reduced_state():
    im = build_pairing_matrix(kappa_exact(ModelParams(0.31, Q), 3), 3)
    psi = dense_fock_oracle(im)
    for cut in (1, 2):
        S = entanglement_entropy(im, cut).entropy
        assert S == pytest.approx(dense_entropy(psi, 12, 4 * cut), abs=1e-10)


def test_self_dual_entropy_vanishes():
    im = build_pairing_matrix(kappa_exact(ModelParams(Q, Q), 4), 4)
    for cut in (1, 2, 3):
        assert entanglement_entropy(im, cut).entropy < 1e-10
    assert all(s < 1e-10 for _, s in te_entropy_curve(ModelParams(Q, Q), [2, 5, 9]))


@pytest.mark.parametrize("J,g", [(0.31, 0.5), (Q, 0.31)])
def test_entropy_of_complement_agrees(J, g):
    t = 20
    im = build_pairing_matrix(kappa_exact(ModelParams(J, g), t), t)
    for cut in (5, 10, 13):
        left = entanglement_entropy(im, cut).entropy
        rest = np.arange(4 * cut, 4 * t)
        right = entropy_from_correlations(correlations(im, rest).matrix()).entropy
        assert left == pytest.approx(right, abs=1e-8)


def test_entropy_spectrum_pairs_and_units():
    im = build_pairing_matrix(kappa_exact(ModelParams(0.31, 0.5), 10), 10)
    spec = entanglement_entropy(im, 5)
    assert np.all((spec.probabilities >= 0) & (spec.probabilities <= 0.5 + 1e-12))
    assert spec.in_bits() == pytest.approx(spec.entropy / math.log(2))


def test_entropy_rejects_bad_cut():
    im = build_pairing_matrix(np.array([1.0, 0.1]), 2)
    with pytest.raises(ValidationError):
        entanglement_entropy(im, 0)
    with pytest.raises(ValidationError):
        entanglement_entropy(im, 2)


def test_entropy_curve_zero_cut_and_validation():
    curve = te_entropy_curve(ModelParams(0.31, 0.5), [1, 4])
    assert curve[0] == (1, 0.0) and curve[1][1] > 0
    with pytest.raises(ValidationError):
        te_entropy_curve(ModelParams(0.31, 0.5, 0.1), [4])
    with pytest.raises(ValidationError):
        te_entropy_curve(ModelParams(0.31, 0.5), [4], cut_fraction=1.0)


def _S150(J, g):
    return te_entropy_curve(ModelParams(J, g), [150])[0][1]


def _swap_ratio(x, d, control=(0.8, 0.5)):
    # control: same displacement, centred where S is flattest away from both critical lines
    jump = abs(_S150(x - d, x + d) - _S150(x + d, x - d))
    J0, g0 = control
    return jump / abs(_S150(J0 - d, g0 + d) - _S150(J0 + d, g0 - d))


def test_jump_across_critical_line_at_wide_offset():
    assert _swap_ratio(0.31, 0.05) > 10


def test_jump_across_critical_line_at_narrow_offset():
    assert _swap_ratio(0.31, 0.02) > 10


def test_jump_is_the_same_on_both_critical_lines():
    x, d = 0.31, 0.05
    a = abs(_S150(x - d, x + d) - _S150(x + d, x - d))
    y = math.pi / 2 - x
    b = abs(_S150(x - d, y - d) - _S150(x + d, y + d))
    assert a == pytest.approx(b, abs=1e-9)


def test_edge_terms_change_entropy_by_bounded_amount():
    p = ModelParams(Q, 0.31)
    full = kappa_exact(p, 150)
    bare = KappaKernel(p, full.continuum())
    gaps = []
    for t in (50, 100, 150):
        a = entanglement_entropy(build_pairing_matrix(full, t), t // 2).entropy
        b = entanglement_entropy(build_pairing_matrix(bare, t), t // 2).entropy
        gaps.append(a - b)
    assert abs(gaps[2] - gaps[1]) < 0.02 and abs(gaps[1] - gaps[0]) < 0.05
