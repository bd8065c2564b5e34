"""Pilot blocks, noiseless received signal, AWGN, 1-bit quantization and
random spatial sampling of the RIS receive units.

Binary observation layout (all little-endian)::

    magic       8 bytes   b"RISOBS1\\0"
    n_r, n_p, n_k         3 x uint32
    noise_var             float64
    mask                  ceil(n_r*n_p/8) bytes, np.packbits(row-major, 'little')
    samples               float64 (re, im) pairs, one per observed entry of
                          the (n_r, n_p*n_k) matrix in row-major order
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .config import SystemConfig
from .transforms import ImplicitOperator, dictionary_apply

ONE_BIT_SCALE = 1 / math.sqrt(2)
_MAGIC = b"RISOBS1\0"
_HEADER = struct.Struct("<8sIIId")


def zadoff_chu(length: int, root: int = 1) -> np.ndarray:
    """Zadoff-Chu sequence ``exp(-1j*pi*u*n*(n + N mod 2)/N)``."""
    if length < 1:
        raise ValueError("ZC length must be positive")
    if math.gcd(root, length) != 1:
        raise ValueError(f"root {root} is not coprime to length {length}")
    n = np.arange(length)
    return np.exp(-1j * np.pi * root * n * (n + length % 2) / length)


def zc_length(n_t: int, n_p: int) -> int:
    n = max(n_t, n_p)
    return n if n % 2 else n + 1


@dataclass(frozen=True, eq=False)
class PilotBlock:
    pilots: np.ndarray  # T, shape (N_t, N_p)
    effective: np.ndarray  # C = B_t T


def zc_pilot_block(config: SystemConfig, n_zc: int | None = None, root: int = 1) -> PilotBlock:
    """Pilot block whose column ``p`` is the ZC sequence cyclically shifted by
    ``p`` and truncated to the ``N_t`` transmit elements."""
    n_zc = zc_length(config.n_t, config.n_p) if n_zc is None else n_zc
    if n_zc < max(config.n_t, config.n_p):
        raise ValueError("ZC length must cover both N_t and N_p")
    seq = zadoff_chu(n_zc, root)
    rows = np.arange(config.n_t)[:, None]
    shifts = np.arange(config.n_p)[None, :]
    t = seq[(rows + shifts) % n_zc]
    op = ImplicitOperator.from_config(config, t)
    return PilotBlock(t, op.effective_pilots)


def noiseless_block(x, op: ImplicitOperator) -> np.ndarray:
    """``Z = unvec(psi x)`` as an ``(N_k N_r, N_p)`` matrix, subcarrier-major rows."""
    return dictionary_apply(x, op).reshape(op.n_k * op.n_r, op.n_p)


def to_rx_matrix(z, n_k: int, n_r: int, n_p: int) -> np.ndarray:
    """Reshape a received block to ``(N_r, N_p N_k)``; column ``p*N_k + k``."""
    return np.asarray(z).reshape(n_k, n_r, n_p).transpose(1, 2, 0).reshape(n_r, n_p * n_k)


def from_rx_matrix(y, n_k: int, n_r: int, n_p: int) -> np.ndarray:
    """Inverse of :func:`to_rx_matrix`, back to ``(N_k N_r, N_p)``."""
    return np.asarray(y).reshape(n_r, n_p, n_k).transpose(2, 0, 1).reshape(n_k * n_r, n_p)


def add_awgn(z, snr_db: float, rng: np.random.Generator):
    """Add circular complex Gaussian noise at ``SNR = ||Z||^2 / E||W||^2``.

    ``snr_db = inf`` returns ``Z`` unchanged with zero noise variance.
    """
    z = np.asarray(z)
    if math.isinf(snr_db) and snr_db > 0:
        return z.copy(), 0.0
    power = np.sum(np.abs(z) ** 2) / z.size
    if power == 0:
        raise ValueError("cannot set an SNR for an all-zero signal")
    noise_var = power / 10 ** (snr_db / 10)
    w = rng.standard_normal(z.shape) + 1j * rng.standard_normal(z.shape)
    return z + w * np.sqrt(noise_var / 2), float(noise_var)


def quantize_1bit(m) -> np.ndarray:
    """``(sign(Re m) + 1j*sign(Im m))/sqrt(2)`` with ``sign(0) = +1``."""
    m = np.asarray(m)
    if m.dtype.kind not in "fc":
        m = m.astype(float)
    return _kernels.quantize(m)


@dataclass(frozen=True, eq=False)
class SamplingMask:
    """Boolean ``(N_r, N_p)`` matrix: element ``r`` is wired to a receive unit
    during pilot symbol ``p``."""

    omega: np.ndarray

    @property
    def shape(self):
        return self.omega.shape

    def expand(self, n_k: int) -> np.ndarray:
        """Mask of the ``(N_r, N_p N_k)`` receive matrix."""
        return np.repeat(self.omega, n_k, axis=1)


def draw_mask(n_r: int, n_p: int, per_symbol: int, rng: np.random.Generator) -> SamplingMask:
    """Independent uniformly random ``per_symbol``-subset of elements per symbol."""
    if not 1 <= per_symbol <= n_r:
        raise ValueError("per-symbol sample count must be in [1, N_r]")
    omega = np.zeros((n_r, n_p), dtype=bool)
    for p in range(n_p):
        omega[rng.choice(n_r, per_symbol, replace=False), p] = True
    return SamplingMask(omega)


def mask_for(config: SystemConfig, rng: np.random.Generator, rho: float | None = None) -> SamplingMask:
    rho = config.rho if rho is None else rho
    return draw_mask(config.n_r, config.n_p, max(1, int(round(rho * config.n_r))), rng)


@dataclass(frozen=True, eq=False)
class Observation:
    """Partially observed 1-bit receive matrix.

    ``y`` has shape ``(N_r, N_p N_k)``; unobserved entries are zero and
    ``observed`` flags the rest.
    """

    y: np.ndarray
    observed: np.ndarray
    mask: SamplingMask
    noise_var: float
    n_k: int

    @property
    def n_r(self) -> int:
        return self.y.shape[0]

    @property
    def n_p(self) -> int:
        return self.mask.shape[1]

    @property
    def fraction(self) -> float:
        return float(self.observed.mean())

    def to_bytes(self) -> bytes:
        header = _HEADER.pack(_MAGIC, self.n_r, self.n_p, self.n_k, float(self.noise_var))
        bits = np.packbits(self.mask.omega.ravel(), bitorder="little").tobytes()
        samples = self.y[self.observed]
        pairs = np.empty(2 * samples.size, dtype="<f8")
        pairs[0::2], pairs[1::2] = samples.real, samples.imag
        return header + bits + pairs.tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "Observation":
        magic, n_r, n_p, n_k, noise_var = _HEADER.unpack_from(blob)
        if magic != _MAGIC:
            raise ValueError("not an observation record")
        off = _HEADER.size
        n_bytes = (n_r * n_p + 7) // 8
        bits = np.frombuffer(blob, np.uint8, n_bytes, off)
        omega = np.unpackbits(bits, count=n_r * n_p, bitorder="little").astype(bool)
        mask = SamplingMask(omega.reshape(n_r, n_p))
        observed = mask.expand(n_k)
        pairs = np.frombuffer(blob, "<f8", offset=off + n_bytes)
        if pairs.size != 2 * observed.sum():
            raise ValueError("sample count does not match the mask")
        y = np.zeros((n_r, n_p * n_k), dtype=complex)
        y[observed] = pairs[0::2] + 1j * pairs[1::2]
        return cls(y, observed, mask, noise_var, n_k)


def sample(qz, mask: SamplingMask, n_k: int, noise_var: float = 0.0) -> Observation:
    """Keep entry ``(r, k, p)`` of a quantized block iff ``mask[r, p]``.

    ``qz`` is either the ``(N_k N_r, N_p)`` block or already reshaped to
    ``(N_r, N_p N_k)``.
    """
    qz = np.asarray(qz)
    n_r, n_p = mask.shape
    if qz.shape == (n_k * n_r, n_p):
        qz = to_rx_matrix(qz, n_k, n_r, n_p)
    elif qz.shape != (n_r, n_p * n_k):
        raise ValueError(f"block shape {qz.shape} does not match mask {mask.shape} x {n_k}")
    observed = mask.expand(n_k)
    return Observation(np.where(observed, qz, 0), observed, mask, noise_var, n_k)
