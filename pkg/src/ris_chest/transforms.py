"""Matrix-free unitary transforms: DFT, UPA Kronecker bases, the joint
angular-delay basis ``S`` and the pilot dictionary ``psi``.

Vectors are flattened in numpy (C, row-major) order throughout.  A UPA with
``n_h`` horizontal and ``n_v`` vertical elements stores element ``(h, v)`` at
index ``h * n_v + v``, which is the ordering of ``kron(a_h, a_v)``.  Under this
convention the planar basis is ``kron(D_h, D_v)`` and is applied as a 2-D FFT
of the ``(n_h, n_v)`` reshape.

The wideband channel is a ``(n_k, n_r, n_t)`` array ``H[k, r, t]`` and

    x = S vec(H),   S = D_k (x) B_r (x) conj(B_t)

so ``H = S^H x``.  The dictionary maps coefficients to the noiseless received
block ``Z[k, r, p] = sum_t H[k, r, t] T[t, p]``, i.e.

    psi = (D_k^H (x) B_r^H) (x) C^T,   C = B_t T.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
from scipy.sparse.linalg import LinearOperator

MODES = ("dictionary", "basis")
MAX_EXPLICIT_ENTRIES = 256 * 256


def dft_matrix(n: int) -> np.ndarray:
    """Explicit unitary DFT matrix ``D[m, n] = exp(-2j*pi*m*n/N)/sqrt(N)``."""
    idx = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(idx, idx) / n) / np.sqrt(n)


def _check_length(v: np.ndarray, n: int, what: str) -> np.ndarray:
    v = np.asarray(v)
    if v.ndim != 1 or v.shape[0] != n:
        raise ValueError(f"{what}: expected vector of length {n}, got shape {v.shape}")
    return v


@dataclass(frozen=True)
class DftBasis:
    """Unitary DFT of size ``size`` (scaling ``1/sqrt(N)``)."""

    size: int

    def __post_init__(self):
        if int(self.size) < 1:
            raise ValueError("DFT size must be positive")

    def forward(self, v):
        return np.fft.fft(_check_length(v, self.size, "dft"), norm="ortho")

    def adjoint(self, v):
        return np.fft.ifft(_check_length(v, self.size, "dft"), norm="ortho")

    def matrix(self) -> np.ndarray:
        return dft_matrix(self.size)


@dataclass(frozen=True)
class UpaBasis:
    """Planar DFT basis ``B = D_h (x) D_v`` for an ``n_h x n_v`` array.

    Equivalent to the column-major form ``D_v (x) D_h`` acting on the
    transposed element grid; both are a 2-D FFT of the element grid.
    """

    n_h: int
    n_v: int

    def __post_init__(self):
        if int(self.n_h) < 1 or int(self.n_v) < 1:
            raise ValueError("UPA dimensions must be positive")

    @property
    def size(self) -> int:
        return self.n_h * self.n_v

    def forward(self, v):
        v = _check_length(v, self.size, "upa")
        return np.fft.fft2(v.reshape(self.n_h, self.n_v), norm="ortho").ravel()

    def adjoint(self, v):
        v = _check_length(v, self.size, "upa")
        return np.fft.ifft2(v.reshape(self.n_h, self.n_v), norm="ortho").ravel()

    def matrix(self) -> np.ndarray:
        return np.kron(dft_matrix(self.n_h), dft_matrix(self.n_v))


def dft_forward(v, basis: DftBasis):
    """Unitary DFT of ``v`` in ``O(N log N)``."""
    return basis.forward(v)


def upa_apply(v, basis: UpaBasis, adjoint: bool = False):
    """Apply the planar basis (or its adjoint) through a 2-D FFT."""
    return basis.adjoint(v) if adjoint else basis.forward(v)


def _upa_dims(n: int, n_h: int | None, n_v: int | None) -> tuple[int, int]:
    if n_h is None and n_v is None:
        return n, 1
    if n_h is None:
        n_h = n // n_v
    if n_v is None:
        n_v = n // n_h
    if n_h * n_v != n:
        raise ValueError(f"UPA {n_h}x{n_v} does not factor {n} elements")
    return n_h, n_v


@dataclass(frozen=True, eq=False)
class ImplicitOperator:
    """FFT-backed dictionary ``psi`` or joint basis ``S``.

    Parameters
    ----------
    n_k : int
        Number of subcarriers / sub-bands.
    rx : UpaBasis
        Receive (RIS) planar basis, ``N_r = rx.size``.
    tx : UpaBasis
        Transmit (UE) planar basis, ``N_t = tx.size``.
    pilots : ndarray, shape (N_t, N_p), optional
        Pilot block ``T``.  Required in ``"dictionary"`` mode.
    mode : {"dictionary", "basis"}
    """

    n_k: int
    rx: UpaBasis
    tx: UpaBasis
    pilots: np.ndarray | None = None
    mode: str = "dictionary"
    _c: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.pilots is not None:
            t = np.array(self.pilots, dtype=complex)
            if t.ndim != 2 or t.shape[0] != self.tx.size:
                raise ValueError(
                    f"pilot block must be ({self.tx.size}, N_p), got {t.shape}"
                )
            t.setflags(write=False)
            object.__setattr__(self, "pilots", t)
            # C = B_t T, columns transformed by the transmit basis
            c = np.stack([self.tx.forward(col) for col in t.T], axis=1)
            c.setflags(write=False)
            object.__setattr__(self, "_c", c)
            object.__setattr__(self, "_c_h", np.ascontiguousarray(c.conj().T))
        elif self.mode == "dictionary":
            raise ValueError("dictionary mode needs a pilot block")

    @classmethod
    def from_config(cls, config, pilots=None, mode="dictionary"):
        return cls(
            n_k=config.n_k,
            rx=UpaBasis(config.rx_h, config.rx_v),
            tx=UpaBasis(config.tx_h, config.tx_v),
            pilots=pilots,
            mode=mode,
        )

    def with_mode(self, mode: str) -> "ImplicitOperator":
        return ImplicitOperator(self.n_k, self.rx, self.tx, self.pilots, mode)

    @property
    def n_r(self) -> int:
        return self.rx.size

    @property
    def n_t(self) -> int:
        return self.tx.size

    @property
    def n_p(self) -> int:
        if self.pilots is None:
            raise ValueError("pilot block not set")
        return self.pilots.shape[1]

    @property
    def effective_pilots(self) -> np.ndarray:
        """``C = B_t T`` of shape ``(N_t, N_p)``."""
        if self._c is None:
            raise ValueError("pilot block not set")
        return self._c

    @property
    def n_coeffs(self) -> int:
        return self.n_k * self.n_r * self.n_t

    @property
    def shape(self) -> tuple[int, int]:
        if self.mode == "basis":
            return self.n_coeffs, self.n_coeffs
        return self.n_k * self.n_r * self.n_p, self.n_coeffs

    @property
    def frobenius_norm_sq(self) -> float:
        """``||A||_F^2`` without forming ``A``."""
        if self.mode == "basis":
            return float(self.n_coeffs)
        return float(self.n_k * self.n_r * np.sum(np.abs(self.pilots) ** 2))

    # joint basis S --------------------------------------------------------

    def _grid(self, v):
        return v.reshape(self.n_k, self.rx.n_h, self.rx.n_v, self.tx.n_h, self.tx.n_v)

    def s_forward(self, h):
        g = self._grid(_check_length(h, self.n_coeffs, "S"))
        g = sfft.fftn(g, axes=(0, 1, 2), norm="ortho")
        g = sfft.ifftn(g, axes=(3, 4), norm="ortho", overwrite_x=True)
        return g.ravel()

    def s_adjoint(self, x):
        g = self._grid(_check_length(x, self.n_coeffs, "S^H"))
        g = sfft.ifftn(g, axes=(0, 1, 2), norm="ortho")
        g = sfft.fftn(g, axes=(3, 4), norm="ortho", overwrite_x=True)
        return g.ravel()

    # dictionary psi -------------------------------------------------------

    # The transmit-side FFT is folded into C = B_t T, so only the delay and
    # receive axes are transformed here.

    def psi_forward(self, x):
        if self.pilots is None:
            raise ValueError("pilot block not set")
        g = self._grid(_check_length(x, self.n_coeffs, "psi"))
        g = sfft.ifftn(g, axes=(0, 1, 2), norm="ortho")
        return (g.reshape(-1, self.n_t) @ self._c).ravel()

    def psi_adjoint(self, z):
        if self.pilots is None:
            raise ValueError("pilot block not set")
        n_z = self.n_k * self.n_r * self.n_p
        z = _check_length(z, n_z, "psi^H").reshape(-1, self.n_p)
        g = self._grid(z @ self._c_h)
        g = sfft.fftn(g, axes=(0, 1, 2), norm="ortho", overwrite_x=True)
        return g.ravel()

    def forward(self, v):
        return self.s_forward(v) if self.mode == "basis" else self.psi_forward(v)

    def adjoint(self, v):
        return self.s_adjoint(v) if self.mode == "basis" else self.psi_adjoint(v)

    def aslinearoperator(self) -> LinearOperator:
        return LinearOperator(
            self.shape, matvec=self.forward, rmatvec=self.adjoint, dtype=complex
        )

    def spectral_norm(self, iters: int = 50, seed: int = 0) -> float:
        """Largest singular value by power iteration on ``A^H A``."""
        rng = np.random.default_rng(seed)
        v = rng.standard_normal(self.shape[1]) + 1j * rng.standard_normal(self.shape[1])
        v /= np.linalg.norm(v)
        s = 0.0
        for _ in range(iters):
            w = self.adjoint(self.forward(v))
            s = np.linalg.norm(w)
            if s == 0:
                return 0.0
            v = w / s
        return float(np.sqrt(s))

    def explicit(self) -> np.ndarray:
        """Dense matrix, for test oracles on tiny instances only."""
        m, n = self.shape
        if m * n > MAX_EXPLICIT_ENTRIES:
            raise ValueError(f"explicit operator limited to {MAX_EXPLICIT_ENTRIES} entries")
        d_k = dft_matrix(self.n_k)
        b_r = self.rx.matrix()
        b_t = self.tx.matrix()
        if self.mode == "basis":
            return np.kron(np.kron(d_k, b_r), b_t.conj())
        c = b_t @ self.pilots
        return np.kron(np.kron(d_k.conj().T, b_r.conj().T), c.T)


def dictionary_apply(x, op: ImplicitOperator, adjoint: bool = False):
    """Apply ``psi`` (or ``psi^H``) without materialising it."""
    return op.psi_adjoint(x) if adjoint else op.psi_forward(x)


def basis_s_apply(h, op: ImplicitOperator, adjoint: bool = False):
    """Apply the joint spatial-frequency basis ``S`` (or ``S^H``)."""
    return op.s_adjoint(h) if adjoint else op.s_forward(h)


def column_norms(op) -> np.ndarray:
    """Euclidean norm of every column of ``op`` (dense array or operator)."""
    if isinstance(op, np.ndarray):
        return np.linalg.norm(op, axis=0)
    if isinstance(op, ImplicitOperator):
        if op.mode == "basis":
            return np.ones(op.n_coeffs)
        per_tx = np.linalg.norm(op.effective_pilots, axis=1)
        return np.tile(per_tx, op.n_k * op.n_r)
    n = op.shape[1]
    out = np.empty(n)
    for j in range(n):
        e = np.zeros(n, dtype=complex)
        e[j] = 1.0
        out[j] = np.linalg.norm(op.forward(e))
    return out
