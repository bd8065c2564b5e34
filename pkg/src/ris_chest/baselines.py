"""Oracle-sparsity baselines: OMP and quantized iterative hard thresholding."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .observation import quantize_1bit
from .transforms import ImplicitOperator, column_norms

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BaselineConfig:
    k: int
    step: float | None = None
    max_iter: int = 100
    tol: float = 1e-6

    def __post_init__(self):
        if self.k < 0:
            raise ValueError("sparsity must be nonnegative")
        if self.step is not None and self.step < 0:
            raise ValueError("step must be nonnegative")


class _Dense:
    """Dense-matrix adapter with the operator interface."""

    def __init__(self, a):
        self.a = np.asarray(a)
        self.shape = self.a.shape

    def forward(self, x):
        return self.a @ x

    def adjoint(self, z):
        return self.a.conj().T @ z


def as_operator(op):
    return _Dense(op) if isinstance(op, np.ndarray) else op


def _column(op, j):
    if isinstance(op, _Dense):
        return op.a[:, j]
    e = np.zeros(op.shape[1], dtype=complex)
    e[j] = 1.0
    return op.forward(e)


def sparsity_from_energy(x, fraction: float = 0.99) -> int:
    """Smallest number of entries of ``x`` holding ``fraction`` of its energy."""
    e = np.sort(np.abs(np.asarray(x)) ** 2)[::-1]
    if e.sum() == 0:
        return 0
    return int(np.searchsorted(np.cumsum(e) / e.sum(), fraction - 1e-12) + 1)


@dataclass
class OmpResult:
    x: np.ndarray
    support: list
    residual_norms: list


def omp(y, op, k: int, tol: float = 0.0) -> OmpResult:
    """Orthogonal matching pursuit with ``k`` atoms.

    Atoms are chosen by normalized adjoint correlation with the residual; the
    least-squares refit over the active set is maintained through an
    incrementally orthogonalized basis (two Gram-Schmidt passes), so each
    round costs one adjoint application plus ``O(M k)``.
    """
    a = as_operator(op)
    y = np.asarray(y, dtype=complex)
    m, n = a.shape
    if k > n:
        raise ValueError(f"sparsity {k} exceeds dictionary size {n}")
    x = np.zeros(n, dtype=complex)
    if k <= 0:
        return OmpResult(x, [], [float(np.linalg.norm(y))])
    norms = column_norms(op if isinstance(op, (np.ndarray, ImplicitOperator)) else a)
    norms = np.where(norms > 0, norms, np.inf)
    # rows hold the conjugated orthonormal basis, so both Gram-Schmidt
    # products are copy-free matrix-vector products
    basis_c = np.empty((k, m), dtype=complex)
    r_mat = np.zeros((k, k), dtype=complex)
    support: list[int] = []
    banned = np.zeros(n, dtype=bool)
    residual = y.copy()
    history = [float(np.linalg.norm(residual))]
    while len(support) < k:
        corr = np.abs(a.adjoint(residual)) / norms
        corr[banned] = -1.0
        j = int(np.argmax(corr))
        if corr[j] <= 0:
            break
        col = _column(a, j)
        i = len(support)
        q = col.copy()
        coef = np.zeros(k, dtype=complex)
        col_norm = np.linalg.norm(col)
        qn = col_norm
        for _ in range(2):
            proj = basis_c[:i] @ q
            q -= np.conj(proj.conj() @ basis_c[:i])
            coef[:i] += proj
            prev, qn = qn, np.linalg.norm(q)
            # a second pass is only needed after heavy cancellation
            if qn > 0.5 * prev:
                break
        banned[j] = True
        if qn <= 1e-10 * col_norm:
            warnings.warn(f"OMP: atom {j} is linearly dependent on the active set; skipped")
            continue
        q /= qn
        basis_c[i] = q.conj()
        coef[i] = qn
        r_mat[:, i] = coef
        support.append(j)
        residual = residual - q * (basis_c[i] @ residual)
        history.append(float(np.linalg.norm(residual)))
        if history[-1] <= tol:
            break
    s = len(support)
    if s:
        rhs = basis_c[:s] @ y
        x[support] = np.linalg.solve(np.triu(r_mat[:s, :s]), rhs)
    return OmpResult(x, support, history)


def hard_threshold(x, k: int) -> np.ndarray:
    """Keep the ``k`` largest-modulus entries (ties broken by index)."""
    out = np.zeros_like(x)
    if k <= 0:
        return out
    if k >= x.size:
        return x.copy()
    idx = np.argpartition(np.abs(x), x.size - k)[x.size - k:]
    out[idx] = x[idx]
    return out


def consistency(y, z) -> float:
    """Fraction of real/imaginary signs of ``z`` agreeing with ``y``."""
    q = quantize_1bit(z)
    return 0.5 * (np.mean(q.real == np.asarray(y).real) + np.mean(q.imag == np.asarray(y).imag))


@dataclass
class QihtResult:
    x: np.ndarray
    consistency: float
    iterations: int
    best_iteration: int


def qiht(y, op, k: int, step: float | None = None, iters: int = 100, x0=None) -> QihtResult:
    """Quantized (binary) iterative hard thresholding.

    ``x <- H_k(x + step * A^H (y - Q(A x)))``; returns the most sign-consistent
    iterate, scaled to unit norm.  ``step`` defaults to ``1 / ||A||_2``.
    """
    a = as_operator(op)
    y = np.asarray(y)
    if k < 1:
        raise ValueError("QIHT needs k >= 1")
    if step is None:
        step = 1.0 / spectral_norm(op)
    x = np.zeros(a.shape[1], dtype=complex) if x0 is None else np.asarray(x0, complex).copy()
    best, best_score, best_it = x.copy(), -1.0, 0
    it = 0
    z = a.forward(x)
    for it in range(1, iters + 1):
        if step == 0:
            break
        x = hard_threshold(x + step * a.adjoint(y - quantize_1bit(z)), k)
        z = a.forward(x)
        score = consistency(y, z)
        if score > best_score:
            best, best_score, best_it = x.copy(), score, it
        if score == 1.0:
            break
    if best_score < 0:
        best = x
        best_score = consistency(y, a.forward(x)) if np.any(x) else 0.0
    nrm = np.linalg.norm(best)
    if nrm > 0:
        best = best / nrm
    return QihtResult(best, float(best_score), it, best_it)


def spectral_norm(op, iters: int = 30) -> float:
    if isinstance(op, ImplicitOperator):
        return op.spectral_norm(iters)
    if isinstance(op, np.ndarray):
        return float(np.linalg.norm(op, 2))
    a = as_operator(op)
    rng = np.random.default_rng(0)
    v = rng.standard_normal(a.shape[1]) + 0j
    v /= np.linalg.norm(v)
    s = 0.0
    for _ in range(iters):
        w = a.adjoint(a.forward(v))
        s = np.linalg.norm(w)
        v = w / s
    return float(np.sqrt(s))


def single_subcarrier_operator(op: ImplicitOperator) -> ImplicitOperator:
    """Dictionary for one subcarrier: angular coefficients
    ``(B_r (x) conj(B_t)) vec(H[f_k])`` to that subcarrier's received block."""
    return ImplicitOperator(1, op.rx, op.tx, op.pilots, "dictionary")


def subcarrier_rows(z_block, k: int, n_k: int, n_r: int) -> np.ndarray:
    """Entries of subcarrier ``k`` from a flattened ``(N_k, N_r, N_p)`` block."""
    return np.asarray(z_block).reshape(n_k, n_r, -1)[k].ravel()
