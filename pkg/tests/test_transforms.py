import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import crandn
from ris_chest.transforms import (
    DftBasis,
    ImplicitOperator,
    UpaBasis,
    basis_s_apply,
    column_norms,
    dft_forward,
    dft_matrix,
    dictionary_apply,
    upa_apply,
)


def explicit_dft(n):
    # straight from the definition, independent of dft_matrix
    out = np.empty((n, n), dtype=complex)
    for m in range(n):
        for k in range(n):
            out[m, k] = np.exp(-2j * np.pi * m * k / n) / np.sqrt(n)
    return out


def rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


def test_dft_impulse_and_constant():
    b = DftBasis(4)
    np.testing.assert_allclose(dft_forward(np.eye(4)[0], b), np.full(4, 0.5), atol=1e-15)
    np.testing.assert_allclose(dft_forward(np.ones(4), b), [2, 0, 0, 0], atol=1e-15)


def test_dft_matches_explicit_matrix(rng):
    v = crandn(rng, 8)
    assert rel(dft_forward(v, DftBasis(8)), explicit_dft(8) @ v) < 1e-12
    np.testing.assert_allclose(dft_matrix(8), explicit_dft(8), atol=1e-14)


@given(st.integers(1, 64), st.integers(0, 2**32 - 1))
def test_dft_unitary(n, seed):
    v = crandn(np.random.default_rng(seed), n)
    b = DftBasis(n)
    w = b.forward(v)
    assert abs(np.linalg.norm(w) - np.linalg.norm(v)) <= 1e-10 * np.linalg.norm(v)
    assert rel(b.adjoint(w), v) < 1e-10


def test_dft_length_mismatch():
    with pytest.raises(ValueError):
        DftBasis(4).forward(np.ones(5))


def test_upa_impulse():
    out = upa_apply(np.eye(4)[0], UpaBasis(2, 2))
    np.testing.assert_allclose(out, np.full(4, 0.5), atol=1e-15)


def test_upa_matches_kronecker(rng):
    b = UpaBasis(2, 4)
    v = crandn(rng, 8)
    dense = np.kron(explicit_dft(2), explicit_dft(4))
    assert rel(upa_apply(v, b), dense @ v) < 1e-10
    assert rel(upa_apply(v, b, adjoint=True), dense.conj().T @ v) < 1e-10


def test_upa_column_major_equivalence(rng):
    # the column-major reading D_v (x) D_h acting on the transposed grid is
    # the same map as kron(D_h, D_v) on the row-major grid
    n_h, n_v = 3, 4
    grid = crandn(rng, n_h, n_v)
    colmajor = np.kron(explicit_dft(n_v), explicit_dft(n_h)) @ grid.ravel(order="F")
    rowmajor = upa_apply(grid.ravel(), UpaBasis(n_h, n_v))
    np.testing.assert_allclose(colmajor.reshape(n_h, n_v, order="F").ravel(), rowmajor, atol=1e-12)


@given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_upa_roundtrip(n_h, n_v, seed):
    b = UpaBasis(n_h, n_v)
    v = crandn(np.random.default_rng(seed), n_h * n_v)
    assert rel(upa_apply(upa_apply(v, b), b, adjoint=True), v) < 1e-10
    assert rel(b.matrix() @ v, upa_apply(v, b)) < 1e-10


def test_upa_length_mismatch():
    with pytest.raises(ValueError):
        UpaBasis(2, 2).forward(np.ones(5))


def explicit_psi(n_k, rx, tx, pilots):
    d_k = explicit_dft(n_k)
    b_r = np.kron(explicit_dft(rx[0]), explicit_dft(rx[1]))
    b_t = np.kron(explicit_dft(tx[0]), explicit_dft(tx[1]))
    s = np.kron(np.kron(d_k, b_r), b_t.conj())
    # Z[k, r, p] = sum_t H[k, r, t] T[t, p],  H = S^H x
    mix = np.kron(np.eye(n_k * rx[0] * rx[1]), pilots.T)
    return mix @ s.conj().T, s


# every (n_k, rx, tx, n_p) with total explicit size <= 256 x 256
SHAPES = [
    (n_k, rx, tx, n_p)
    for n_k, rx, tx, n_p in itertools.product(
        (1, 2, 3), ((1, 1), (2, 1), (2, 2), (1, 3)), ((1, 1), (2, 1), (1, 2)), (1, 2, 3)
    )
]


@pytest.mark.parametrize("n_k,rx,tx,n_p", SHAPES)
def test_operator_matches_explicit_kronecker(n_k, rx, tx, n_p):
    rng = np.random.default_rng(n_k * 100 + n_p)
    n_t = tx[0] * tx[1]
    pilots = crandn(rng, n_t, n_p)
    op = ImplicitOperator(n_k, UpaBasis(*rx), UpaBasis(*tx), pilots)
    psi, s = explicit_psi(n_k, rx, tx, pilots)
    x = crandn(rng, op.shape[1])
    z = crandn(rng, op.shape[0])
    assert rel(dictionary_apply(x, op), psi @ x) < 1e-10
    assert rel(dictionary_apply(z, op, adjoint=True), psi.conj().T @ z) < 1e-10
    assert rel(basis_s_apply(x, op), s @ x) < 1e-10
    assert rel(basis_s_apply(x, op, adjoint=True), s.conj().T @ x) < 1e-10
    np.testing.assert_allclose(op.explicit(), psi, atol=1e-12)
    np.testing.assert_allclose(op.with_mode("basis").explicit(), s, atol=1e-12)


def test_column_major_dictionary_form(rng):
    # psi x = vec((B_r (x) D_k) X C) in the column-major convention with C = conj(B_t) T
    n_k, rx, tx, n_p = 2, (2, 1), (2, 1), 2
    n_r, n_t = 2, 2
    pilots = crandn(rng, n_t, n_p)
    op = ImplicitOperator(n_k, UpaBasis(*rx), UpaBasis(*tx), pilots)
    h = crandn(rng, n_k, n_r, n_t)
    z = np.einsum("krt,tp->krp", h, pilots)
    x = basis_s_apply(h.ravel(), op)
    np.testing.assert_allclose(dictionary_apply(x, op), z.ravel(), atol=1e-12)


@given(st.integers(0, 2**32 - 1), st.sampled_from(["dictionary", "basis"]))
def test_adjoint_identity(seed, mode):
    rng = np.random.default_rng(seed)
    pilots = crandn(rng, 8, 5)
    op = ImplicitOperator(3, UpaBasis(4, 2), UpaBasis(4, 2), pilots, mode)
    u = crandn(rng, op.shape[1])
    v = crandn(rng, op.shape[0])
    lhs = np.vdot(v, op.forward(u))
    rhs = np.vdot(op.adjoint(v), u)
    assert abs(lhs - rhs) <= 1e-8 * np.linalg.norm(u) * np.linalg.norm(v)


@given(st.integers(0, 2**32 - 1), st.complex_numbers(max_magnitude=10), st.complex_numbers(max_magnitude=10))
def test_linearity(seed, a, b):
    rng = np.random.default_rng(seed)
    op = ImplicitOperator(2, UpaBasis(2, 2), UpaBasis(2, 1), crandn(rng, 2, 3))
    u, v = crandn(rng, op.shape[1]), crandn(rng, op.shape[1])
    lhs = op.forward(a * u + b * v)
    rhs = a * op.forward(u) + b * op.forward(v)
    assert np.linalg.norm(lhs - rhs) <= 1e-10 * max(1.0, np.linalg.norm(rhs))


@given(st.integers(0, 2**32 - 1))
def test_s_unitary(seed):
    rng = np.random.default_rng(seed)
    op = ImplicitOperator(4, UpaBasis(4, 4), UpaBasis(2, 2), mode="basis")
    h = crandn(rng, op.n_coeffs)
    x = basis_s_apply(h, op)
    assert abs(np.linalg.norm(x) - np.linalg.norm(h)) <= 1e-10 * np.linalg.norm(h)
    assert rel(basis_s_apply(x, op, adjoint=True), h) < 1e-10


def test_zero_maps_to_zero(rng):
    op = ImplicitOperator(2, UpaBasis(2, 2), UpaBasis(2, 1), crandn(rng, 2, 2))
    assert not np.any(dictionary_apply(np.zeros(op.shape[1], complex), op))


def test_errors(rng):
    with pytest.raises(ValueError):
        ImplicitOperator(2, UpaBasis(2, 2), UpaBasis(2, 1))  # no pilots
    op = ImplicitOperator(2, UpaBasis(2, 2), UpaBasis(2, 1), mode="basis")
    with pytest.raises(ValueError):
        op.psi_forward(np.zeros(op.n_coeffs))
    op = ImplicitOperator(2, UpaBasis(2, 2), UpaBasis(2, 1), crandn(rng, 2, 2))
    with pytest.raises(ValueError):
        op.forward(np.zeros(op.shape[1] + 1))
    with pytest.raises(ValueError):
        ImplicitOperator(2, UpaBasis(2, 2), UpaBasis(2, 1), crandn(rng, 3, 2))


def test_norms_and_frobenius(rng):
    op = ImplicitOperator(2, UpaBasis(2, 2), UpaBasis(2, 1), crandn(rng, 2, 3))
    dense = op.explicit()
    np.testing.assert_allclose(column_norms(op), np.linalg.norm(dense, axis=0), rtol=1e-12)
    assert op.frobenius_norm_sq == pytest.approx(np.sum(np.abs(dense) ** 2), rel=1e-12)
    assert op.spectral_norm(200) == pytest.approx(np.linalg.norm(dense, 2), rel=1e-6)
    lin = op.aslinearoperator()
    x = crandn(rng, op.shape[1])
    np.testing.assert_allclose(lin.matvec(x), dense @ x, atol=1e-12)
